"""Extended Kalman filter for SOC estimation over an OCV-SOC curve.

The same filter doubles as a bank member: when `slope_override` is set the
measurement is the affine model anchored at the interval start (state
`anchor`), with a fixed slope instead of the local curve slope.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .curve import OcvCurve
from .ecm import BatteryState, EcmParams, SimConfig, Trace


class FilterDegeneracyError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseConfig:
    """Process covariance (2x2) and scalar measurement variance."""

    q: np.ndarray
    r: float

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "q", q)
        if q.shape != (2, 2):
            raise ValueError("q must be 2x2")
        if not np.allclose(q, q.T):
            raise ValueError("q must be symmetric")
        if np.any(np.linalg.eigvalsh(q) < -1e-15):
            raise ValueError("q must be positive semidefinite")
        if not self.r > 0:
            raise ValueError("r must be > 0")

    @classmethod
    def default(cls, r: float = 1e-4) -> "NoiseConfig":
        return cls(q=np.diag([1e-10, 1e-6]), r=r)


@dataclass
class KfState:
    """One filter: posterior state, covariance, noise, curve and options."""

    x: BatteryState
    p: np.ndarray
    noise: NoiseConfig
    curve: OcvCurve
    slope_override: float | None = None
    anchor: BatteryState | None = None
    anchor_ocv: float | None = None  # carried-over corrected model value

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.shape != (2, 2):
            raise ValueError("p must be 2x2")
        if not np.allclose(self.p, self.p.T, atol=1e-9):
            raise ValueError("p must be symmetric")
        if self.slope_override is not None and self.anchor is None:
            raise ValueError("slope_override requires an anchor state")


@dataclass(frozen=True)
class StepOutput:
    prior: BatteryState
    prior_p: np.ndarray
    posterior: BatteryState
    posterior_p: np.ndarray
    innovation: float
    innovation_variance: float
    gain: np.ndarray
    soc_clamped: bool = False


def transition_matrices(params: EcmParams, cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    decay = np.exp(-cfg.dt / params.tau)
    f = np.array([[1.0, 0.0], [0.0, decay]])
    g = np.array([-cfg.dt / cfg.capacity_as, params.rp * (1.0 - decay)])
    return f, g


def predict(state: KfState, params: EcmParams, current: float,
            cfg: SimConfig) -> tuple[BatteryState, np.ndarray]:
    """Prior state and covariance for the next step, driven by `current`."""
    f, g = transition_matrices(params, cfg)
    xv = f @ state.x.as_vector() + g * current
    p_minus = f @ state.p @ f.T + state.noise.q
    return BatteryState(float(xv[0]), float(xv[1])), p_minus


def measurement_jacobian(state: KfState, prior: BatteryState) -> np.ndarray:
    """H = [dOCV/dSOC at the prior (or the override slope), -1]."""
    if state.slope_override is not None:
        s = state.slope_override
    else:
        s = state.curve.slope(prior.soc)
    return np.array([s, -1.0])


def predicted_voltage(state: KfState, prior: BatteryState, current: float,
                      params: EcmParams) -> float:
    """Measurement prediction h(x-) + D*u; affine about the anchor when a
    slope override is active."""
    if state.slope_override is None:
        h = state.curve.ocv(min(max(prior.soc, state.curve.soc_min),
                                state.curve.soc_max)) - prior.up
    else:
        a = state.anchor
        if state.anchor_ocv is not None:
            v0 = state.anchor_ocv
        else:
            v0 = state.curve.ocv(min(max(a.soc, state.curve.soc_min),
                                     state.curve.soc_max))
        h = v0 + state.slope_override * (prior.soc - a.soc) - prior.up
    return h - params.r0 * current


def update(state: KfState, prior: BatteryState, prior_p: np.ndarray,
           measured_ut: float, current: float, params: EcmParams) -> StepOutput:
    """Measurement update; returns the full step record and mutates nothing."""
    h_row = measurement_jacobian(state, prior)
    innovation = measured_ut - predicted_voltage(state, prior, current, params)
    s_var = float(h_row @ prior_p @ h_row) + state.noise.r
    if s_var <= 0:
        raise FilterDegeneracyError(f"innovation variance {s_var} <= 0")
    gain = (prior_p @ h_row) / s_var
    xv = prior.as_vector() + gain * innovation
    p_post = (np.eye(2) - np.outer(gain, h_row)) @ prior_p
    p_post = 0.5 * (p_post + p_post.T)
    soc = float(xv[0])
    clamped = soc < 0.0 or soc > 1.0
    soc = min(1.0, max(0.0, soc))
    posterior = BatteryState(soc, float(xv[1]))
    return StepOutput(prior, prior_p, posterior, p_post,
                      float(innovation), s_var, gain, clamped)


def step(state: KfState, params: EcmParams, prev_current: float,
         measured_ut: float, current: float, cfg: SimConfig,
         first: bool = False) -> tuple[KfState, StepOutput]:
    """Predict (unless `first`) then update; returns the advanced filter."""
    if first:
        prior, prior_p = state.x, state.p
    else:
        prior, prior_p = predict(state, params, prev_current, cfg)
    out = update(state, prior, prior_p, measured_ut, current, params)
    new_state = replace(state, x=out.posterior, p=out.posterior_p)
    return new_state, out


def run_ekf(initial: KfState, params, trace: Trace,
            cfg: SimConfig) -> list[StepOutput]:
    """Run the filter over a measured trace.

    `params` is either a single EcmParams or a per-step sequence.
    """
    n = len(trace)
    per_step = not isinstance(params, EcmParams)
    state = initial
    outputs = []
    for k in range(n):
        pk = params[k] if per_step else params
        prev_i = trace.current_a[k - 1] if k > 0 else 0.0
        try:
            state, out = step(state, pk, prev_i, trace.voltage_v[k],
                              trace.current_a[k], cfg, first=(k == 0))
        except FilterDegeneracyError as exc:
            raise FilterDegeneracyError(f"step {k}: {exc}") from exc
        outputs.append(out)
    return outputs
