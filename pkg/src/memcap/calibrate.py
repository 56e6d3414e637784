"""
Analytic calibration of the device constants from steady-state and relaxation targets.

Given the geometry (a, eps, R0, W0), a target steady-state ratio C_ss/C0 and a fractional
compression of W at a reference voltage, the steady-state balances fix k_ew and k_ec in
closed form. Dampings follow from the relaxation times, zeta = tau * k.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np
from scipy.optimize import brentq

from memcap.core import normalized_capacitance, steady_state
from memcap.errors import InvalidInputError, SolverFailedError
from memcap.models import EPS0, MemcapacitorParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CalibrationTargets:
    a: float = 1.0
    eps: float = 2.2
    R0: float = 35e-6
    W0: float = 4e-9
    ratio: float = 2.0
    v_ref: float = 0.15
    compression: float = 1e-4
    tau_ew: float = 0.32
    tau_ec: float = 0.05

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value > 0):
                raise InvalidInputError(f"calibration target {name} must be > 0")
        if self.compression >= 1:
            raise InvalidInputError("compression must be a fraction below 1")
        if self.ratio * (1 - self.compression) <= 1:
            raise InvalidInputError(
                "ratio and compression leave no room for electrowetting growth"
            )


def calibrate_params(targets: CalibrationTargets = CalibrationTargets()) -> MemcapacitorParams:
    """
    Solve the steady-state balances at `targets.v_ref` for the two stiffnesses.

    With y = W_ss/W0 and x = R_ss/R0 = sqrt(ratio * y):

        k_ew = a*eps*eps0*v^2 / (2 * W0*y * R0*(x - 1))
        k_ec = a*eps*eps0*pi*R0^2*x^2*v^2 / (2 * W0^3 * y^2 * d)
    """
    t = targets
    d = t.compression
    y = 1.0 - d
    x = math.sqrt(t.ratio * y)
    aee = t.a * t.eps * EPS0
    v2 = t.v_ref**2
    k_ew = aee * v2 / (2.0 * t.W0 * y * t.R0 * (x - 1.0))
    k_ec = aee * math.pi * t.R0**2 * x**2 * v2 / (2.0 * t.W0**3 * y**2 * d)
    params = MemcapacitorParams(
        a=t.a,
        eps=t.eps,
        R0=t.R0,
        W0=t.W0,
        zeta_ew=t.tau_ew * k_ew,
        k_ew=k_ew,
        zeta_ec=t.tau_ec * k_ec,
        k_ec=k_ec,
    )
    R, W = steady_state(t.v_ref, params)
    achieved = float(normalized_capacitance(R, W, params))
    if not math.isclose(achieved, t.ratio, rel_tol=1e-6):
        # the closed-form point lies past the stable branch (pull-in side)
        raise SolverFailedError(
            f"calibrated point is not the stable steady state: ratio {achieved:.4g} "
            f"instead of {t.ratio}; lower the compression target"
        )
    logger.info(
        "calibrated k_ew=%.6g N/m^2, k_ec=%.6g N/m (C0=%.4g F)", k_ew, k_ec, params.c0
    )
    return params


def relaxation_ratio(t, R1: float, W1: float, params: MemcapacitorParams):
    """
    C/C0 at time t after the voltage is removed from state (R1, W1).

    At v = 0 the state equations decouple and each variable relaxes exponentially.
    """
    R = params.R0 + (R1 - params.R0) * np.exp(-np.asarray(t) / params.tau_ew)
    W = params.W0 + (W1 - params.W0) * np.exp(-np.asarray(t) / params.tau_ec)
    return normalized_capacitance(R, W, params)


def decay_time(
    params: MemcapacitorParams, v: float = 0.15, tolerance: float = 0.01
) -> float:
    """
    Time for C/C0 to come back within `tolerance` of 1 after a long pulse at `v`.
    """
    R1, W1 = steady_state(v, params)

    def excess(t):
        return abs(float(relaxation_ratio(t, R1, W1, params)) - 1.0) - tolerance

    if excess(0.0) <= 0:
        return 0.0
    horizon = 50.0 * max(params.tau_ew, params.tau_ec)
    return brentq(excess, 0.0, horizon, xtol=1e-9)


def calibration_summary(
    params: MemcapacitorParams, voltages: Sequence[float] = (0.15, 0.175, 0.2)
) -> Dict:
    """Headline numbers of a parameter set: C0, specific capacitance, C_ss/C0, decay time."""
    ratios = {}
    for v in voltages:
        R, W = steady_state(v, params)
        ratios[f"{v * 1000:g}mV"] = float(normalized_capacitance(R, W, params))
    return {
        "c0_F": params.c0,
        # F/m^2 -> uF/cm^2
        "specific_capacitance_uF_cm2": params.specific_capacitance * 100.0,
        "tau_ew_s": params.tau_ew,
        "tau_ec_s": params.tau_ec,
        "steady_state_ratio": ratios,
        "decay_to_1pct_s": decay_time(params),
    }
