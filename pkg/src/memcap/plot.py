from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from memcap.models import CapacitanceTrace  # noqa: E402


def plot_confusion(
    confusion: np.ndarray,
    classes: Sequence,
    path: str,
    title: str = "Confusion Matrix",
    show: bool = False,
) -> plt.Figure:
    """
    Plot a confusion matrix as an annotated heatmap and save it.

    :param confusion: Counts, rows = true class, columns = predicted class
    :param classes: Class labels in matrix order
    :param path: Filepath to save the PNG
    :param show: Whether to display the plot interactively
    :return: Matplotlib Figure object
    """
    cm = np.asarray(confusion)
    fig, ax = plt.subplots()
    cax = ax.imshow(cm, interpolation="nearest", aspect="auto", cmap="Blues")
    fig.colorbar(cax, ax=ax)
    ticks = np.arange(len(classes))
    ax.set_xticks(ticks)
    ax.set_xticklabels([str(c) for c in classes])
    ax.set_yticks(ticks)
    ax.set_yticklabels([str(c) for c in classes])
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, str(cm[i, j]), ha="center", va="center", fontsize=8)
    ax.set_xlabel("Predicted class")
    ax.set_ylabel("True class")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    if show:
        plt.show()
    plt.close(fig)
    return fig


def plot_series(
    y_true: Sequence[float],
    y_pred: Sequence[float],
    path: str,
    title: str = "Predicted vs target",
    show: bool = False,
) -> plt.Figure:
    """Target and readout output over frames."""
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(np.asarray(y_true), label="target", linewidth=1.5)
    ax.plot(np.asarray(y_pred), "--", label="prediction", linewidth=1.0)
    ax.set_xlabel("Time frame")
    ax.set_ylabel("y")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    if show:
        plt.show()
    plt.close(fig)
    return fig


def plot_hysteresis(
    trace: CapacitanceTrace,
    path: str,
    title: Optional[str] = None,
    show: bool = False,
) -> plt.Figure:
    """C/C0 against applied voltage (mV); the initial rest sample is skipped."""
    fig, ax = plt.subplots()
    ax.plot(trace.voltage[1:] * 1e3, trace.normalized[1:], linewidth=1.0)
    ax.set_xlabel("Voltage (mV)")
    ax.set_ylabel("C / C0")
    ax.set_title(title or "C-V hysteresis")
    fig.tight_layout()
    fig.savefig(path)
    if show:
        plt.show()
    plt.close(fig)
    return fig
