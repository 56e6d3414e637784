"""
Virtual-node reservoir built from simulated memcapacitors.

Each (example, device, encoding) combination is one integration lane. Lanes are
independent and are batched through `core.integrate_lanes`; results are always put
together in the fixed device-major, encoding-minor column order.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import truncnorm

from memcap.config import substream
from memcap.core import (
    DEFAULT_DT,
    DEFAULT_W_FLOOR,
    LaneResult,
    ParamsLike,
    as_param_list,
    integrate_lanes,
    normalized_capacitance,
)
from memcap.energy import edge_energies
from memcap.errors import InvalidInputError
from memcap.models import MemcapacitorParams, MemcapacitorState, PulseTrain

logger = logging.getLogger(__name__)

MIN_RATIO = 1e-6

Encoder = Callable[[object], PulseTrain]
NodeFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DeviceBank:
    """Nominally identical devices whose R0 and W0 carry a small seeded spread."""

    devices: Tuple[MemcapacitorParams, ...]
    seed: int
    rel_sigma: float

    def __post_init__(self):
        if len(self.devices) == 0:
            raise InvalidInputError("a device bank needs at least one device")

    def __len__(self):
        return len(self.devices)

    def __iter__(self):
        return iter(self.devices)

    def __getitem__(self, i):
        return self.devices[i]


def make_device_bank(
    base: MemcapacitorParams, n: int, rel_sigma: float = 0.02, seed: int = 0
) -> DeviceBank:
    """
    n copies of `base` with R0 and W0 scaled by independent (1 + rel_sigma*g) factors,
    g ~ standard normal truncated to +-3.
    """
    if n < 1:
        raise InvalidInputError(f"bank size must be >= 1, got {n}")
    if rel_sigma < 0:
        raise InvalidInputError(f"rel_sigma must be >= 0, got {rel_sigma}")
    g = truncnorm.rvs(-3.0, 3.0, size=(n, 2), random_state=substream(seed, "bank"))
    factors = 1.0 + rel_sigma * g
    if np.any(factors <= 0):
        raise InvalidInputError(
            f"rel_sigma={rel_sigma} produces nonpositive R0/W0; use a smaller spread"
        )
    devices = tuple(base.scaled(float(fr), float(fw)) for fr, fw in factors)
    return DeviceBank(devices=devices, seed=seed, rel_sigma=rel_sigma)


@dataclass
class ReservoirRun:
    """
    Response of one device to one pulse train.

    `samples` holds C/C0 at the end of every on-segment; `boundary_capacitance` holds C
    (F) at t0 followed by C at the end of every segment, so entry j is the capacitance
    just before segment j starts.
    """

    samples: np.ndarray
    boundary_capacitance: np.ndarray
    amplitudes: np.ndarray
    on_mask: np.ndarray
    final_state: MemcapacitorState
    floor_hit: bool = False

    def edge_energies(self, charge_factor: float = 1.0) -> np.ndarray:
        """Energy charged at the start of each segment, J (zero for falling edges)."""
        return edge_energies(
            self.amplitudes, self.boundary_capacitance[:-1], charge_factor
        )

    def energy(self, charge_factor: float = 1.0) -> float:
        return float(self.edge_energies(charge_factor).sum())


def _integrate_chunk(args) -> List[LaneResult]:
    trains, params, dt, initial, w_floor = args
    return integrate_lanes(trains, params, dt, initial=initial, w_floor=w_floor)


def _integrate(trains, plist, dt, initial, w_floor, jobs) -> List[LaneResult]:
    n = len(trains)
    if jobs <= 1 or n < 2 * jobs:
        return integrate_lanes(trains, plist, dt, initial=initial, w_floor=w_floor)
    bounds = np.linspace(0, n, jobs + 1).astype(int)
    chunks = [
        (trains[a:b], plist[a:b], dt, initial[a:b], w_floor)
        for a, b in zip(bounds[:-1], bounds[1:])
        if b > a
    ]
    logger.debug("integrating %d lanes in %d worker chunks", n, len(chunks))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_integrate_chunk, chunks))
    return [lane for part in parts for lane in part]


def run_reservoir_batch(
    trains: Sequence[PulseTrain],
    params: ParamsLike,
    dt: float = DEFAULT_DT,
    initial: Optional[Sequence[Optional[MemcapacitorState]]] = None,
    w_floor: float = DEFAULT_W_FLOOR,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    jobs: int = 1,
) -> List[ReservoirRun]:
    """
    Drive one device per train and sample C/C0 at the end of each on-pulse.

    A non-zero `noise_sigma` adds seeded Gaussian noise to the sampled C/C0 only; the
    integrated state and the capacitances used for energy stay noise-free.
    """
    trains = list(trains)
    if not trains:
        return []
    plist = as_param_list(params, len(trains))
    if initial is None:
        initial = [None] * len(trains)
    initial = list(initial)
    if noise_sigma < 0:
        raise InvalidInputError("noise_sigma must be >= 0")
    if noise_sigma > 0 and rng is None:
        raise InvalidInputError("a seeded generator is required when noise is on")

    lanes = _integrate(trains, plist, dt, initial, w_floor, jobs)
    runs = []
    for train, p, lane in zip(trains, plist, lanes):
        R, W = lane.segment_boundary_states()
        ratio = normalized_capacitance(R, W, p)
        on = train.on_mask
        samples = ratio[1:][on]
        if noise_sigma > 0:
            samples = samples + rng.normal(0.0, noise_sigma, samples.shape)
            samples = np.maximum(samples, MIN_RATIO)
        runs.append(
            ReservoirRun(
                samples=samples,
                boundary_capacitance=ratio * p.c0,
                amplitudes=train.amplitudes,
                on_mask=on,
                final_state=lane.final_state(),
                floor_hit=lane.floor_hit,
            )
        )
    return runs


def run_reservoir(
    train: PulseTrain,
    params: MemcapacitorParams,
    dt: float = DEFAULT_DT,
    initial: Optional[MemcapacitorState] = None,
    w_floor: float = DEFAULT_W_FLOOR,
) -> ReservoirRun:
    """C/C0 at the end of every on-pulse of `train`, from rest unless `initial` is given."""
    return run_reservoir_batch([train], params, dt, [initial], w_floor)[0]


def select_virtual_nodes(seq: Sequence[float], every_k: int) -> np.ndarray:
    """
    End-of-interval sampling: elements every_k-1, 2*every_k-1, ...

    :param seq: Per-pulse samples
    :param every_k: Interval length; must divide len(seq)
    :return: len(seq) // every_k virtual-node features
    """
    arr = np.asarray(seq, dtype=float)
    if every_k < 1:
        raise InvalidInputError(f"every_k must be >= 1, got {every_k}")
    if arr.size % every_k:
        raise InvalidInputError(
            f"sequence length {arr.size} is not divisible by every_k={every_k}"
        )
    return arr[every_k - 1 :: every_k]


def _windows(arr: np.ndarray, window: int) -> np.ndarray:
    if window <= 0:
        raise InvalidInputError(f"window must be > 0, got {window}")
    if arr.size < window:
        raise InvalidInputError(f"sequence of {arr.size} is shorter than window {window}")
    n = arr.size // window
    dropped = arr.size - n * window
    if dropped:
        logger.debug("dropping %d trailing samples after %d windows", dropped, n)
    return arr[: n * window].reshape(n, window)


def integrate_features(
    seq: Sequence[float], window: int, period: float = 1.0
) -> np.ndarray:
    """Rectangular-rule integral of seq over consecutive windows: sum * period."""
    return _windows(np.asarray(seq, dtype=float), window).sum(axis=1) * period


def window_end_nodes(seq: Sequence[float], window: int) -> np.ndarray:
    """Last sample of each complete window (virtual nodes without integration)."""
    return _windows(np.asarray(seq, dtype=float), window)[:, -1]


def column_names(n_devices: int, n_encodings: int, n_nodes: int) -> List[str]:
    return [
        f"d{d}_e{e}_n{k}"
        for d in range(n_devices)
        for e in range(n_encodings)
        for k in range(n_nodes)
    ]


@dataclass
class StateMatrix:
    """
    Reservoir features: one row per example (or time frame), one column per virtual node.

    `row_energy` is the reservoir energy spent producing each row, J.
    """

    values: np.ndarray
    columns: List[str]
    row_labels: Optional[np.ndarray] = None
    row_energy: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise InvalidInputError("state matrix must be 2-D")
        if self.values.shape[1] != len(self.columns):
            raise InvalidInputError(
                f"{self.values.shape[1]} columns but {len(self.columns)} names"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("state matrix contains non-finite entries")
        for name in ("row_labels", "row_energy"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != self.values.shape[0]:
                raise InvalidInputError(f"{name} length does not match the row count")

    @property
    def shape(self):
        return self.values.shape

    def take(self, rows) -> "StateMatrix":
        rows = np.asarray(rows)
        return StateMatrix(
            values=self.values[rows],
            columns=list(self.columns),
            row_labels=None if self.row_labels is None else np.asarray(self.row_labels)[rows],
            row_energy=None if self.row_energy is None else self.row_energy[rows],
            meta=dict(self.meta),
        )


def build_state_matrix(
    examples: Sequence,
    bank: DeviceBank,
    encoders: Sequence[Encoder],
    nodes: Optional[NodeFn] = None,
    dt: float = DEFAULT_DT,
    streaming: bool = False,
    row_labels: Optional[Sequence] = None,
    charge_factor: float = 1.0,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    jobs: int = 1,
    w_floor: float = DEFAULT_W_FLOOR,
) -> StateMatrix:
    """
    Run every example through every (device, encoding) pair and concatenate features.

    Columns are ordered device-major, encoding-minor, then by node index. Without
    `streaming` each example is an independent run from rest and `nodes` turns its
    per-pulse samples into features. With `streaming`, `examples` is a single input
    series: each (device, encoding) lane runs through the whole series with state
    carried across frames, and row i holds the sample at the end of frame i.
    """
    if not encoders:
        raise InvalidInputError("at least one encoder is required")
    n_dev, n_enc = len(bank), len(encoders)
    inputs = [examples] if streaming else list(examples)
    if not inputs:
        raise InvalidInputError("no examples to run")

    trains, plist = [], []
    for x in inputs:
        for device in bank:
            for encode in encoders:
                trains.append(encode(x))
                plist.append(device)
    runs = run_reservoir_batch(
        trains, plist, dt, w_floor=w_floor, noise_sigma=noise_sigma, rng=rng, jobs=jobs
    )
    if any(r.floor_hit for r in runs):
        logger.warning("W floor was hit in %d run(s)", sum(r.floor_hit for r in runs))

    if streaming:
        lengths = {r.samples.size for r in runs}
        if len(lengths) != 1:
            raise InvalidInputError(f"encoders produced ragged frame counts {lengths}")
        values = np.column_stack([r.samples for r in runs])
        energy = np.zeros(values.shape[0])
        for r in runs:
            frame = np.maximum(np.cumsum(r.on_mask) - 1, 0)
            energy += np.bincount(
                frame, weights=r.edge_energies(charge_factor), minlength=energy.size
            )
        columns = column_names(n_dev, n_enc, 1)
    else:
        node_fn = nodes or (lambda s: s)
        per_lane = [np.asarray(node_fn(r.samples), dtype=float) for r in runs]
        widths = {f.size for f in per_lane}
        if len(widths) != 1:
            raise InvalidInputError(f"ragged feature counts across runs: {sorted(widths)}")
        width = n_dev * n_enc
        values = np.vstack(
            [
                np.concatenate(per_lane[i * width : (i + 1) * width])
                for i in range(len(inputs))
            ]
        )
        energy = np.array(
            [
                sum(r.energy(charge_factor) for r in runs[i * width : (i + 1) * width])
                for i in range(len(inputs))
            ]
        )
        columns = column_names(n_dev, n_enc, widths.pop())

    labels = None if row_labels is None else np.asarray(row_labels)
    return StateMatrix(
        values=values,
        columns=columns,
        row_labels=labels,
        row_energy=energy,
        meta={"dt": dt, "devices": n_dev, "encodings": n_enc, "streaming": streaming},
    )
