import configparser
import csv
import io as _io
import json
import os
import tempfile
from dataclasses import fields
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from memcap.errors import ConfigError, DatasetError
from memcap.models import CapacitanceTrace, MemcapacitorParams, PulseTrain

TRACE_HEADER = ["t_s", "v_V", "R_m", "W_m", "A_m2", "C_F", "C_over_C0"]
PARAMS_SECTION = "memcapacitor"


def atomic_write_text(path: str, text: str) -> None:
    """
    Write `text` to `path` through a temporary file in the same directory and an
    atomic rename, so readers never observe a half-written file.
    Parameters
    ----------
    path : str
        Destination file; parent directories are created.
    text : str
        Full file contents.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def to_json(data: Dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n"


def write_json(path: str, data: Dict) -> None:
    """
    Write the dict `data` out as pretty JSON (sorted keys, numpy values converted).
    Parameters
    ----------
    path
        The path to write the JSON to.
    data
        The data to write.
    """
    atomic_write_text(path, to_json(data))


def read_json(path: str) -> Dict:
    with open(path) as f:
        return json.load(f)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def read_params_file(path: str) -> MemcapacitorParams:
    """
    Read a flat key-value device parameter file.

    Keys are exactly the MemcapacitorParams field names in SI units. A `[memcapacitor]`
    section header is optional.
    Parameters
    ----------
    path : str
        Path to the parameter file.
    Returns
    -------
    MemcapacitorParams
    Raises
    ------
    ConfigError
        If the file is missing, has unknown or missing keys, or a non-numeric value.
    """
    try:
        with open(path) as f:
            text = f.read()
    except FileNotFoundError:
        raise ConfigError(f"device parameter file not found: {path}")
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not text.lstrip().startswith("["):
        text = f"[{PARAMS_SECTION}]\n" + text
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}")
    section = parser[parser.sections()[0]] if parser.sections() else {}
    known = {f.name for f in fields(MemcapacitorParams)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"{path}: unknown parameter keys {sorted(unknown)}")
    missing = known - set(section) - {"eps0"}
    if missing:
        raise ConfigError(f"{path}: missing parameter keys {sorted(missing)}")
    try:
        values = {key: float(section[key]) for key in section}
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")
    return MemcapacitorParams(**values)


def format_params_file(params: MemcapacitorParams, comments: Sequence[str] = ()) -> str:
    lines = [f"# {c}" for c in comments]
    lines += [f"{key} = {value!r}" for key, value in params.as_dict().items()]
    return "\n".join(lines) + "\n"


def write_params_file(
    path: str, params: MemcapacitorParams, comments: Sequence[str] = ()
) -> None:
    atomic_write_text(path, format_params_file(params, comments))


def write_trace_csv(path: str, trace: CapacitanceTrace) -> None:
    """
    Write a capacitance trace with header `t_s,v_V,R_m,W_m,A_m2,C_F,C_over_C0`.
    Parameters
    ----------
    path : str
        The path to the CSV file.
    trace : CapacitanceTrace
        Trace to export, one row per sample.
    """
    rows = zip(
        trace.times,
        trace.voltage,
        trace.radius,
        trace.thickness,
        trace.area,
        trace.capacitance,
        trace.normalized,
    )
    atomic_write_text(path, _csv_text(TRACE_HEADER, rows))


def _common_step(spacings: np.ndarray, path: str, max_divisor: int = 1000) -> float:
    # largest dt, up to min(spacings)/max_divisor, that divides every spacing
    base = float(spacings.min())
    for m in range(1, max_divisor + 1):
        q = spacings / (base / m)
        if np.all(np.abs(q - np.rint(q)) < 1e-6):
            return base / m
    raise DatasetError(
        "sample spacings share no common integration step; pass dt explicitly", path
    )


def read_trace_csv(path: str, dt: Optional[float] = None) -> CapacitanceTrace:
    """
    Read a trace written by `write_trace_csv`.

    C0 is recovered from the C_F and C_over_C0 columns. When dt is not given it is taken
    as the largest step that divides every sample spacing: the spacing itself for
    every-step traces, a common divisor of the segment widths for segment-end traces.
    """
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            rows = [r for r in reader if r]
    except FileNotFoundError:
        raise DatasetError("trace file not found", path)
    if header != TRACE_HEADER:
        raise DatasetError(f"expected header {','.join(TRACE_HEADER)}", path)
    try:
        data = np.array(rows, dtype=float)
    except ValueError as exc:
        raise DatasetError(f"non-numeric trace value: {exc}", path)
    if data.ndim != 2 or data.shape[0] < 2:
        raise DatasetError("trace needs at least two samples", path)
    t, v, R, W, A, C, norm = data.T
    spacings = np.diff(t)
    if not np.all(spacings > 0):
        raise DatasetError("sample times must increase", path)
    if dt is None:
        dt = _common_step(spacings, path)
    return CapacitanceTrace(
        times=t,
        voltage=v,
        radius=R,
        thickness=W,
        area=A,
        capacitance=C,
        c0=float(C[0] / norm[0]),
        dt=dt,
    )


def train_from_trace(trace: CapacitanceTrace) -> PulseTrain:
    """
    Rebuild the piecewise-constant train that produced a trace from its v_V column.

    Consecutive samples with equal voltage are merged into one segment; the initial
    sample only anchors t0.
    """
    v = trace.voltage[1:]
    t = trace.times
    if v.size == 0:
        raise DatasetError("trace has no samples after t0")
    change = np.flatnonzero(np.diff(v) != 0) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [v.size]))
    amplitudes = v[starts]
    durations = t[ends] - t[starts]
    return PulseTrain.from_arrays(amplitudes, durations)


def write_state_matrix_csv(
    path: str,
    values: np.ndarray,
    columns: Sequence[str],
    row_labels: Optional[Sequence] = None,
) -> None:
    """
    Write a state matrix with a header row naming columns `d<device>_e<encoding>_n<node>`.
    A trailing `label` column is added when row labels are given.
    """
    header = list(columns)
    rows = [list(r) for r in np.asarray(values)]
    if row_labels is not None:
        header.append("label")
        rows = [r + [lab] for r, lab in zip(rows, row_labels)]
    atomic_write_text(path, _csv_text(header, rows))


def read_state_matrix_csv(path: str):
    """Return (values, columns, row_labels or None) from `write_state_matrix_csv` output."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [r for r in reader if r]
    labels = None
    if header and header[-1] == "label":
        labels = [r[-1] for r in rows]
        rows = [r[:-1] for r in rows]
        header = header[:-1]
    values = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return values, header, labels


def write_columns_csv(path: str, columns: Mapping[str, Sequence]) -> None:
    """Write equal-length named columns, e.g. predicted vs truth series."""
    names = list(columns)
    lengths = {len(columns[n]) for n in names}
    if len(lengths) > 1:
        raise ValueError(f"columns have unequal lengths {sorted(lengths)}")
    rows = zip(*(columns[n] for n in names))
    atomic_write_text(path, _csv_text(names, rows))


def write_matrix(path: str, matrix: List[List]) -> None:
    """
    Write a plain numeric matrix to CSV, one row per line, no header.
    Parameters
    ----------
    path : str
        The path to the file to write the matrix to.
    matrix : list[list]
        Rows to write.
    """
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in matrix:
        writer.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_matrix(path: str) -> np.ndarray:
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r]
    return np.array(rows, dtype=float)
