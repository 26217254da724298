"""Online circuit-parameter identification by recursive least squares with
an SOC-feedback adaptive forgetting factor.

The regression works on first differences of terminal voltage and current:
dUt(k) = th1*dUt(k-1) + th2*dIl(k) + th3*dIl(k-1), with
th1 = exp(-dt/tau), th2 = -R0, th3 = th1*R0 - (1 - th1)*Rp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ecm import EcmParams, Trace


class NumericalDegeneracyError(RuntimeError):
    pass


class PhysicalityError(ValueError):
    """Extracted circuit parameters are outside the physical region."""


@dataclass(frozen=True)
class RegressorSample:
    a_row: np.ndarray  # (dUt(k-1), dIl(k), dIl(k-1))
    y: float           # dUt(k)

    def __post_init__(self):
        a = np.asarray(self.a_row, dtype=float)
        object.__setattr__(self, "a_row", a)
        if a.shape != (3,) or not np.all(np.isfinite(a)) or not math.isfinite(self.y):
            raise ValueError("sample entries must be finite, a_row of length 3")


@dataclass
class RegressorState:
    theta: np.ndarray
    p: np.ndarray
    a: float = 0.1  # forgetting-factor gain
    degenerate_input: bool = False

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.theta.shape != (3,) or self.p.shape != (3, 3):
            raise ValueError("theta must be length 3, p 3x3")
        if np.max(np.abs(self.p - self.p.T)) > 1e-9:
            raise ValueError("p must be symmetric")


@dataclass(frozen=True)
class RlsConfig:
    a: float = 0.1
    lambda_min: float = 0.95
    eps_soc: float = 0.01
    p0_scale: float = 1e3
    theta0: tuple = (0.99, -0.05, 0.04)
    warmup: int = 100
    # identify only while SOC feedback is inside the flat region, where the
    # open-circuit-voltage change is negligible and the difference model holds
    plateau_only_identification: bool = False
    plateau_lo: float = 0.2
    plateau_hi: float = 0.8


def initial_state(cfg: RlsConfig = RlsConfig()) -> RegressorState:
    return RegressorState(np.array(cfg.theta0), cfg.p0_scale * np.eye(3), a=cfg.a)


def build_sample(ut_k, ut_km1, ut_km2, il_k, il_km1, il_km2) -> RegressorSample:
    """Assemble one difference-equation sample from three consecutive
    uniformly spaced measurements."""
    return RegressorSample(
        a_row=np.array([ut_km1 - ut_km2, il_k - il_km1, il_km1 - il_km2]),
        y=float(ut_k - ut_km1))


def forgetting_factor(soc_km1: float, soc_km2: float, a: float,
                      cfg: RlsConfig = RlsConfig()) -> tuple[float, bool]:
    """lambda = 1 - a*|soc(k-1) - 1/2|*soc(k-1)/soc(k-2), clamped to
    [lambda_min, 1]. Returns (lambda, degenerate-denominator flag)."""
    if a < 0:
        raise ValueError("a must be >= 0")
    if soc_km2 <= cfg.eps_soc:
        return cfg.lambda_min, True
    lam = 1.0 - a * abs(soc_km1 - 0.5) * (soc_km1 / soc_km2)
    return min(1.0, max(cfg.lambda_min, lam)), False


def rls_step(state: RegressorState, sample: RegressorSample,
             lam: float) -> RegressorState:
    """One gain/covariance/parameter update with forgetting factor `lam`."""
    if not 0 < lam <= 1:
        raise ValueError(f"lambda must be in (0, 1], got {lam}")
    a_row = sample.a_row
    denom = lam + float(a_row @ state.p @ a_row)
    if denom < 1e-15:
        raise NumericalDegeneracyError(f"gain denominator {denom} ~ 0")
    gain = (state.p @ a_row) / denom
    theta = state.theta + gain * (sample.y - float(a_row @ state.theta))
    p = (np.eye(3) - np.outer(gain, a_row)) @ state.p / lam
    p = 0.5 * (p + p.T)
    return RegressorState(theta, p, a=state.a)


def circuit_to_theta(params: EcmParams, dt: float) -> np.ndarray:
    """Forward map from circuit parameters to regression coefficients."""
    th1 = math.exp(-dt / params.tau)
    th2 = -params.r0
    th3 = th1 * params.r0 - (1.0 - th1) * params.rp
    return np.array([th1, th2, th3])


def theta_to_circuit(theta, dt: float) -> EcmParams:
    """Inverse map; raises unless 0 < th1 < 1 and the result is physical."""
    th1, th2, th3 = (float(v) for v in np.asarray(theta, dtype=float))
    if not 0.0 < th1 < 1.0:
        raise PhysicalityError(f"theta1 {th1} outside (0, 1): no valid time constant")
    num = th1 * th2 + th3
    if num == 0.0:
        raise PhysicalityError("theta1*theta2 + theta3 == 0")
    r0 = -th2
    rp = num / (th1 - 1.0)
    cp = (1.0 - th1) * dt / (math.log(th1) * num)
    if r0 <= 0 or rp <= 0 or cp <= 0:
        raise PhysicalityError(f"non-physical parameters r0={r0} rp={rp} cp={cp}")
    return EcmParams(r0, rp, cp)


@dataclass
class IdentifiedPoint:
    t: float
    params: EcmParams | None
    lam: float
    degenerate: bool = False


def identify_stream(trace: Trace, soc_feedback=None,
                    cfg: RlsConfig = RlsConfig()) -> list[IdentifiedPoint]:
    """Run the adaptive RLS over a trace.

    `soc_feedback` is an optional per-step posterior SOC sequence driving the
    forgetting factor; without it lambda stays at 1. Parameters are emitted
    only after `cfg.warmup` accepted samples, holding the last physical value
    when extraction preconditions fail.
    """
    state = initial_state(cfg)
    out: list[IdentifiedPoint] = []
    last_params: EcmParams | None = None
    accepted = 0
    ut, il, t = trace.voltage_v, trace.current_a, trace.t
    for k in range(2, len(trace)):
        if (cfg.plateau_only_identification and soc_feedback is not None
                and not cfg.plateau_lo <= soc_feedback[k - 1] <= cfg.plateau_hi):
            out.append(IdentifiedPoint(float(t[k]), last_params, 1.0, False))
            continue
        sample = build_sample(ut[k], ut[k - 1], ut[k - 2],
                              il[k], il[k - 1], il[k - 2])
        if soc_feedback is not None and k >= 2:
            lam, lam_degen = forgetting_factor(soc_feedback[k - 1],
                                               soc_feedback[k - 2], cfg.a, cfg)
        else:
            lam, lam_degen = 1.0, False
        degenerate = lam_degen
        try:
            state = rls_step(state, sample, lam)
            accepted += 1
        except NumericalDegeneracyError:
            degenerate = True
        if accepted >= cfg.warmup:
            try:
                last_params = theta_to_circuit(state.theta, trace.dt)
            except PhysicalityError:
                pass  # hold the previous physical estimate
        out.append(IdentifiedPoint(float(t[k]), last_params, lam, degenerate))
    return out
