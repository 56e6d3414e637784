from typing import Optional


class MemcapError(Exception):
    """Base class for every error raised by the memcap package."""


class InvalidInputError(MemcapError, ValueError):
    """A value violates the documented preconditions of an operation."""


class ConfigError(MemcapError, ValueError):
    """An experiment or parameter file is malformed or references missing paths."""


class IntegrationDivergedError(MemcapError, ArithmeticError):
    """The RK4 integrator produced a non-finite state."""

    def __init__(self, t: float, dt: float, detail: str = ""):
        self.t = t
        self.dt = dt
        msg = f"integration diverged at t={t:.6g} s (dt={dt:.3g} s)"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class SolverFailedError(MemcapError, RuntimeError):
    """The steady-state solver did not converge."""


class NonphysicalRootError(SolverFailedError):
    """No steady state with 0 < W <= W0 exists (electrocompression pull-in)."""


class SingularSystemError(MemcapError, ArithmeticError):
    """The least-squares normal matrix is singular."""


class MisalignedTraceError(MemcapError, ValueError):
    """A capacitance trace does not line up with the pulse train it came from."""


class DatasetError(MemcapError, ValueError):
    """A dataset file or directory does not follow the documented layout."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class CochleogramParseError(DatasetError):
    """A cochleogram CSV has the wrong shape or non-binary entries."""


class EegRecordError(DatasetError):
    """An EEG record does not have exactly 4097 samples."""
