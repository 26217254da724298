"""Adaptive multi-model filter bank: per-interval slope sets, Bayesian
model probabilities, optimal-filter selection, and corrected-curve output."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import ekf, innovation
from .curve import OcvCurve
from .ecm import BatteryState, EcmParams, SimConfig, Trace
from .ekf import KfState, NoiseConfig
from .innovation import (ConvergenceConfig, CcmThresholds, ErrorSignVerdict,
                         IntervalInnovations, INDETERMINATE, NEGATIVE_G,
                         POSITIVE_G)

DISCHARGE = "discharge"
CHARGE = "charge"


@dataclass(frozen=True)
class BankConfig:
    n: int = 7
    interval_len: int = 20
    spread: float = 2.0
    slope_floor: float = 1e-4
    prob_floor: float = 1e-6
    ccm_thresholds: CcmThresholds = field(default_factory=CcmThresholds)
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)

    def __post_init__(self):
        if self.n < 1 or (self.n > 1 and self.n % 2 == 0):
            raise ValueError("filter count must be odd (or 1 for testing)")
        if self.interval_len < 5:
            raise ValueError("interval_len must be >= 5")
        if not self.spread > 1:
            raise ValueError("spread must be > 1")
        if not self.slope_floor > 0:
            raise ValueError("slope_floor must be > 0")


def build_slope_set(base_slope: float, verdict: ErrorSignVerdict | None,
                    mode: str, cfg: BankConfig) -> np.ndarray:
    """Geometrically spaced candidate measurement slopes around the base.

    Discharge with a negative curve gap wants larger slopes, a positive gap
    smaller ones; charge mirrors this. Indeterminate spans both sides. The
    base slope is always a member; everything is floored at slope_floor.
    """
    if cfg.n == 1:
        return np.array([max(base_slope, cfg.slope_floor)])
    sign = INDETERMINATE if verdict is None else verdict.sign
    if sign != INDETERMINATE and mode == CHARGE:
        sign = POSITIVE_G if sign == NEGATIVE_G else NEGATIVE_G
    if sign == NEGATIVE_G:
        exponents = np.linspace(0.0, 1.0, cfg.n)
    elif sign == POSITIVE_G:
        exponents = np.linspace(-1.0, 0.0, cfg.n)
    else:
        exponents = np.linspace(-1.0, 1.0, cfg.n)
    slopes = base_slope * cfg.spread ** exponents
    return np.maximum(slopes, cfg.slope_floor)


def likelihood(y: float, mean: float, s: float) -> float:
    """Gaussian density of the measured voltage under one filter's
    predicted-voltage distribution."""
    if s <= 0:
        raise ValueError(f"variance must be > 0, got {s}")
    return math.exp(-((y - mean) ** 2) / (2.0 * s)) / math.sqrt(2.0 * math.pi * s)


def update_probabilities(probs: np.ndarray, densities: np.ndarray,
                         floor: float = 1e-6) -> tuple[np.ndarray, bool]:
    """Bayes update: elementwise product, renormalized, floored. Returns the
    new simplex vector and an underflow flag (reset to uniform)."""
    probs = np.asarray(probs, dtype=float)
    densities = np.asarray(densities, dtype=float)
    post = probs * densities
    total = post.sum()
    if total <= 0.0 or not np.isfinite(total):
        n = len(probs)
        return np.full(n, 1.0 / n), True
    post = post / total
    post = np.maximum(post, floor)
    return post / post.sum(), False


@dataclass
class FilterBank:
    filters: list[KfState]
    probabilities: np.ndarray
    interval_index: int = 0

    @property
    def n(self) -> int:
        return len(self.filters)


@dataclass
class IntervalResult:
    interval_index: int
    optimal_index: int
    soc_trace: np.ndarray
    up_trace: np.ndarray
    innovations: IntervalInnovations
    corrected_points: list
    final_state: BatteryState
    final_p: np.ndarray
    probabilities: np.ndarray
    final_model_ocv: float | None = None
    underflow: bool = False


def make_bank(anchor: BatteryState, anchor_p: np.ndarray, noise: NoiseConfig,
              curve: OcvCurve, slopes: np.ndarray, interval_index: int,
              anchor_ocv: float | None = None) -> FilterBank:
    """All filters share the interval-start state/covariance, curve and
    anchored model value, and differ only in measurement slope; uniform
    prior probabilities."""
    if len(slopes) == 1:
        # degenerate bank: a single plain filter on the curve itself
        filters = [KfState(anchor, anchor_p.copy(), noise, curve)]
    else:
        filters = [KfState(anchor, anchor_p.copy(), noise, curve,
                           slope_override=float(s), anchor=anchor,
                           anchor_ocv=anchor_ocv)
                   for s in slopes]
    n = len(filters)
    return FilterBank(filters, np.full(n, 1.0 / n), interval_index)


def run_interval(bank: FilterBank, params, trace: Trace, start: int, length: int,
                 cfg: SimConfig, bank_cfg: BankConfig,
                 schedule: str = "sequential") -> IntervalResult:
    """Step every filter through L samples, updating model probabilities per
    step from each filter's predicted-voltage likelihood, then select the
    most probable filter (ties to the lowest index).

    `schedule` only permutes the per-step filter evaluation order; results
    must be identical because filters are data-independent.
    """
    per_step = not isinstance(params, EcmParams)
    n = bank.n
    probs = bank.probabilities.copy()
    states = list(bank.filters)
    innovs = [[] for _ in range(n)]
    socs = [[] for _ in range(n)]
    ups = [[] for _ in range(n)]
    last_s_var = [None] * n
    last_prior_p = [None] * n
    underflow = False
    order = list(range(n)) if schedule == "sequential" else list(range(n))[::-1]
    for j, k in enumerate(range(start, start + length)):
        pk = params[k] if per_step else params
        prev_i = trace.current_a[k - 1] if k > 0 else 0.0
        densities = np.empty(n)
        outs: list = [None] * n
        for i in order:
            st, out = ekf.step(states[i], pk, prev_i, trace.voltage_v[k],
                               trace.current_a[k], cfg, first=(k == 0))
            states[i] = st
            outs[i] = out
            # mean of the predicted-voltage distribution = measured - innovation
            densities[i] = likelihood(trace.voltage_v[k],
                                      trace.voltage_v[k] - out.innovation,
                                      out.innovation_variance)
        for i in range(n):
            innovs[i].append(outs[i].innovation)
            socs[i].append(outs[i].posterior.soc)
            ups[i].append(outs[i].posterior.up)
            last_s_var[i] = outs[i].innovation_variance
            last_prior_p[i] = outs[i].prior_p
        probs, uf = update_probabilities(probs, densities, bank_cfg.prob_floor)
        underflow = underflow or uf
    opt = int(np.argmax(probs))  # argmax ties break to lowest index
    opt_state = states[opt]
    soc_arr = np.array(socs[opt])
    if opt_state.slope_override is None:
        h_used = np.array([opt_state.curve.slope(
            min(max(soc_arr[-1], opt_state.curve.soc_min),
                opt_state.curve.soc_max)), -1.0])
        corrected = []
    else:
        h_used = np.array([opt_state.slope_override, -1.0])
        anchor = opt_state.anchor
        if opt_state.anchor_ocv is not None:
            anchor_ocv = opt_state.anchor_ocv
        else:
            anchor_ocv = opt_state.curve.ocv(
                min(max(anchor.soc, opt_state.curve.soc_min), opt_state.curve.soc_max))
        corrected = [(float(s),
                      float(anchor_ocv + opt_state.slope_override * (s - anchor.soc)),
                      bank.interval_index) for s in soc_arr]
    iv = IntervalInnovations(bank.interval_index, np.array(innovs[opt]),
                             h_used, last_prior_p[opt], opt_state.noise.r)
    final_model_ocv = corrected[-1][1] if corrected else None
    return IntervalResult(bank.interval_index, opt, soc_arr, np.array(ups[opt]),
                          iv, corrected, opt_state.x, opt_state.p, probs,
                          final_model_ocv, underflow)


@dataclass
class IntervalDiagnostics:
    interval_index: int
    ccm: float
    acm_emp: float
    acm_theo: float
    verdict: str
    optimal_index: int
    prob_max: float
    mode: str


@dataclass
class AmmkfResult:
    soc: np.ndarray
    up: np.ndarray
    corrected_points: list
    diagnostics: list
    convergence_step: int | None
    innovations: np.ndarray


def run_ammkf(trace: Trace, original_curve: OcvCurve, params,
              initial: BatteryState, initial_p: np.ndarray, noise: NoiseConfig,
              cfg: SimConfig, bank_cfg: BankConfig = BankConfig(),
              schedule: str = "sequential",
              bank_noise: NoiseConfig | None = None) -> AmmkfResult:
    """Two-phase estimation over a measured trace.

    Phase 1 runs a single filter on the original curve until its interval
    innovation RMS converges. Phase 2 then runs, per interval, a bank of
    filters with slopes chosen from the inferred sign of the curve error
    (cross-correlation of the previous two intervals' innovations), selects
    the most probable filter and carries its state forward.
    """
    if bank_noise is None:
        bank_noise = noise
    L = bank_cfg.interval_len
    n_steps = len(trace)
    if n_steps < 2 * L:
        raise ValueError(f"trace length {n_steps} < 2*interval_len {2 * L}")
    per_step = not isinstance(params, EcmParams)
    soc_est = np.empty(n_steps)
    up_est = np.empty(n_steps)
    innov_all = np.empty(n_steps)
    corrected_points: list = []
    diagnostics: list = []
    history: list[IntervalInnovations] = []
    # phase 1: plain EKF on the original curve, interval by interval
    state = KfState(initial, np.asarray(initial_p, dtype=float), noise, original_curve)
    k = 0
    interval_index = 0
    converged_at = None
    while k + L <= n_steps and converged_at is None:
        vals = []
        last_prior_p = None
        last_h = None
        for j in range(L):
            idx = k + j
            pk = params[idx] if per_step else params
            prev_i = trace.current_a[idx - 1] if idx > 0 else 0.0
            state, out = ekf.step(state, pk, prev_i, trace.voltage_v[idx],
                                  trace.current_a[idx], cfg, first=(idx == 0))
            soc_est[idx] = out.posterior.soc
            up_est[idx] = out.posterior.up
            innov_all[idx] = out.innovation
            vals.append(out.innovation)
            last_prior_p = out.prior_p
            last_h = ekf.measurement_jacobian(state, out.prior)
        history.append(IntervalInnovations(interval_index, np.array(vals),
                                           last_h, last_prior_p, noise.r))
        k += L
        interval_index += 1
        if innovation.detect_convergence(history, bank_cfg.convergence,
                                         noise_std=math.sqrt(noise.r)):
            converged_at = k
    # phase 2: per-interval bank runs; the corrected measurement-model value
    # chains across intervals (only the first anchors on the original curve)
    anchor, anchor_p = state.x, state.p
    anchor_ocv: float | None = None
    while k + L <= n_steps:
        if len(history) >= 2 and bank_cfg.n > 1:
            ccm = innovation.interval_ccm(history[-2], history[-1])
            acm_emp = innovation.empirical_acm(history[-1])
            acm_theo = innovation.theoretical_acm(history[-1].h_used,
                                                 history[-1].p_minus_last,
                                                 history[-1].r)
            ratio = acm_emp / acm_theo if acm_theo > 0 else float("inf")
            verdict = innovation.infer_error_sign(ccm, ratio,
                                                  bank_cfg.ccm_thresholds, acm_emp)
        else:
            ccm, acm_emp, acm_theo = 0.0, 0.0, noise.r
            verdict = ErrorSignVerdict(INDETERMINATE, 0.0, 1.0)
        seg_current = trace.current_a[k:k + L]
        mode = DISCHARGE if float(np.mean(seg_current)) >= 0 else CHARGE
        anchor_soc = min(max(anchor.soc, original_curve.soc_min), original_curve.soc_max)
        base_slope = original_curve.slope(anchor_soc)
        slopes = build_slope_set(base_slope, verdict, mode, bank_cfg)
        bank = make_bank(anchor, anchor_p, bank_noise, original_curve, slopes,
                         interval_index, anchor_ocv=anchor_ocv)
        res = run_interval(bank, params, trace, k, L, cfg, bank_cfg, schedule)
        soc_est[k:k + L] = res.soc_trace
        up_est[k:k + L] = res.up_trace
        innov_all[k:k + L] = res.innovations.values
        corrected_points.extend(res.corrected_points)
        diagnostics.append(IntervalDiagnostics(
            interval_index, ccm, acm_emp, acm_theo, verdict.sign,
            res.optimal_index, float(res.probabilities.max()), mode))
        history.append(res.innovations)
        anchor, anchor_p = res.final_state, res.final_p
        if res.final_model_ocv is not None:
            anchor_ocv = res.final_model_ocv
        k += L
        interval_index += 1
    # tail shorter than one interval: plain filter continuation on the curve
    if k < n_steps:
        tail_state = KfState(anchor, anchor_p, noise, original_curve)
        for idx in range(k, n_steps):
            pk = params[idx] if per_step else params
            prev_i = trace.current_a[idx - 1] if idx > 0 else 0.0
            tail_state, out = ekf.step(tail_state, pk, prev_i,
                                       trace.voltage_v[idx],
                                       trace.current_a[idx], cfg,
                                       first=(idx == 0))
            soc_est[idx] = out.posterior.soc
            up_est[idx] = out.posterior.up
            innov_all[idx] = out.innovation
    return AmmkfResult(soc_est, up_est, corrected_points, diagnostics,
                       converged_at, innov_all)
