"""Innovation statistics: interval cross/auto-correlation, curve-error sign
inference, and convergence detection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

POSITIVE_G = "positive-g"
NEGATIVE_G = "negative-g"
INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class IntervalInnovations:
    """Innovation vector of one interval plus the filter context that
    produced it (measurement row, last prior covariance, meas. variance)."""

    interval_index: int
    values: np.ndarray
    h_used: np.ndarray
    p_minus_last: np.ndarray
    r: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if not np.all(np.isfinite(v)):
            raise ValueError("innovations must be finite")

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.values ** 2)))


@dataclass(frozen=True)
class ErrorSignVerdict:
    sign: str
    ccm_value: float
    acm_ratio: float


def interval_ccm(prev: IntervalInnovations, curr: IntervalInnovations) -> float:
    """Mean product of matching-offset innovations of two adjacent intervals,
    estimating the lag-L cross-correlation at the interval ends."""
    if len(prev.values) != len(curr.values):
        raise ValueError("interval lengths differ: "
                         f"{len(prev.values)} vs {len(curr.values)}")
    return float(np.mean(prev.values * curr.values))


def empirical_acm(curr: IntervalInnovations) -> float:
    if len(curr.values) < 2:
        raise ValueError("need at least 2 innovations")
    return float(np.mean(curr.values ** 2))


def theoretical_acm(h: np.ndarray, p_minus: np.ndarray, r: float) -> float:
    out = float(np.asarray(h) @ np.asarray(p_minus) @ np.asarray(h)) + r
    if out < 0:
        raise ValueError(f"negative theoretical ACM {out}")
    return out


@dataclass(frozen=True)
class CcmThresholds:
    floor: float = 1e-8
    acm_fraction: float = 0.05

    def threshold(self, acm_emp: float) -> float:
        return max(self.floor, self.acm_fraction * acm_emp)


def infer_error_sign(ccm: float, acm_ratio: float,
                     thresholds: CcmThresholds = CcmThresholds(),
                     acm_emp: float = 0.0) -> ErrorSignVerdict:
    """Positive CCM implies the filter curve sits above the actual one
    (negative gap); negative CCM the reverse; small |CCM| is indeterminate."""
    tau = thresholds.threshold(acm_emp)
    if ccm > tau:
        sign = NEGATIVE_G
    elif ccm < -tau:
        sign = POSITIVE_G
    else:
        sign = INDETERMINATE
    return ErrorSignVerdict(sign, ccm, acm_ratio)


@dataclass(frozen=True)
class ConvergenceConfig:
    window: int = 3
    rms_ratio: float = 0.2
    flat_tol: float = 0.1
    noise_floor_mult: float = 1.5


def detect_convergence(history, cfg: ConvergenceConfig = ConvergenceConfig(),
                       noise_std: float | None = None) -> bool:
    """True once the rolling interval-RMS has either dropped below rms_ratio
    times its initial value while flat (relative spread < flat_tol) over the
    trailing window, or reached the measurement-noise floor (a run that
    starts converged never crosses the ratio threshold)."""
    if len(history) < 2:
        return False
    rms = np.array([iv.rms() for iv in history])
    w = min(cfg.window, len(rms))
    recent = rms[-w:]
    mean = float(np.mean(recent))
    if noise_std is not None and mean <= cfg.noise_floor_mult * noise_std:
        return True
    if mean == 0.0:
        return True
    if mean >= cfg.rms_ratio * rms[0]:
        return False
    return float((np.max(recent) - np.min(recent)) / mean) < cfg.flat_tol
