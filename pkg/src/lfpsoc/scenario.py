"""Scenario orchestration: one config in, both estimators out, with CSV
artifacts, a metrics summary, and threshold checks for scripted runs."""

from __future__ import annotations

import concurrent.futures
import csv
import math
import os
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from .curve import OcvCurve, default_lifepo4_curve, plateau_offset
from .ecm import BatteryState, EcmParams, SimConfig, Trace, simulate_profile
from .ekf import KfState, NoiseConfig, run_ekf
from .innovation import CcmThresholds, ConvergenceConfig
from .metrics import Metrics, compute_metrics
from .multimodel import BankConfig, run_ammkf
from .profiles import generate_profile
from .rls import RlsConfig, identify_stream
from .traceio import read_config, write_config, write_trace


class ScenarioConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one experiment needs; every field has a flat-file key."""

    # curves: a path, "default", or "offset:<volts>[:<lo>:<hi>:<ramp>]"
    # (the offset form transforms the other curve; only one side may use it)
    true_curve: str = "offset:0.02:0.2:0.8:0.15"
    filter_curve: str = "default"
    # drive profile
    profile_kind: str = "dst-like"
    profile_steps: int = 7200
    profile_amp: float = 1.0
    profile_target_ah: float = 1.0
    # battery and simulation
    capacity_ah: float = 1.063
    dt: float = 1.0
    r0: float = 0.07
    rp: float = 0.04
    cp: float = 1000.0
    initial_soc_true: float = 0.95
    initial_soc_error: float = 0.0
    sigma_v: float = 0.001
    sigma_i: float = 0.0
    identify_online: bool = False
    # estimator noise: the baseline filter (also phase 1) and the bank
    q00: float = 1e-7
    q11: float = 1e-6
    r: float = 1e-6
    bank_q00: float = 1e-11
    bank_q11: float = 1e-6
    p0_soc: float = 1e-4
    p0_up: float = 1e-4
    # bank shape
    n: int = 7
    interval_len: int = 20
    spread: float = 6.0
    slope_floor: float = 1e-4
    prob_floor: float = 1e-6
    seed: int = 42
    # optional pass/fail thresholds (negative = disabled)
    max_ammkf_rmse: float = -1.0
    require_ordering: bool = False

    def ecm_params(self) -> EcmParams:
        return EcmParams(r0=self.r0, rp=self.rp, cp=self.cp)

    def sim_config(self) -> SimConfig:
        return SimConfig(capacity_ah=self.capacity_ah, dt=self.dt,
                         voltage_noise_sigma=self.sigma_v,
                         current_noise_sigma=self.sigma_i,
                         rng_seed=self.seed)

    def filter_noise(self) -> NoiseConfig:
        return NoiseConfig(q=np.diag([self.q00, self.q11]), r=self.r)

    def bank_noise(self) -> NoiseConfig:
        return NoiseConfig(q=np.diag([self.bank_q00, self.bank_q11]), r=self.r)

    def bank_config(self) -> BankConfig:
        return BankConfig(n=self.n, interval_len=self.interval_len,
                          spread=self.spread, slope_floor=self.slope_floor,
                          prob_floor=self.prob_floor)


_BOOL_KEYS = {"identify_online", "require_ordering"}
_STR_KEYS = {"true_curve", "filter_curve", "profile_kind"}
_INT_KEYS = {"profile_steps", "n", "interval_len", "seed"}


def scenario_from_mapping(mapping: dict) -> ScenarioConfig:
    """Build a config from flat string key=value pairs; unknown keys error."""
    kwargs = {}
    valid = ScenarioConfig.__dataclass_fields__
    for key, raw in mapping.items():
        if key not in valid:
            raise ScenarioConfigError(f"unknown config key: {key!r}")
        if key in _STR_KEYS:
            kwargs[key] = str(raw)
        elif key in _BOOL_KEYS:
            text = str(raw).strip().lower()
            if text not in ("true", "false", "1", "0", "yes", "no"):
                raise ScenarioConfigError(f"{key}: not a boolean: {raw!r}")
            kwargs[key] = text in ("true", "1", "yes")
        elif key in _INT_KEYS:
            kwargs[key] = int(raw)
        else:
            kwargs[key] = float(raw)
    return ScenarioConfig(**kwargs)


def load_scenario(path: str) -> ScenarioConfig:
    return scenario_from_mapping(read_config(path))


def _parse_offset_spec(spec: str) -> tuple[float, float, float, float]:
    parts = spec.split(":")[1:]
    if not parts:
        raise ScenarioConfigError(f"bad offset spec: {spec!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise ScenarioConfigError(f"bad offset spec: {spec!r}") from exc
    offset = vals[0]
    lo, hi, ramp = 0.2, 0.8, 0.1
    if len(vals) >= 4:
        lo, hi, ramp = vals[1], vals[2], vals[3]
    elif len(vals) != 1:
        raise ScenarioConfigError(
            f"offset spec needs 1 or 4 numbers: {spec!r}")
    return offset, lo, hi, ramp


def resolve_curves(cfg: ScenarioConfig) -> tuple[OcvCurve, OcvCurve]:
    """Return (true_curve, filter_curve); at most one side may be an
    offset transform of the other."""
    def load(spec: str) -> OcvCurve | None:
        if spec.startswith("offset:"):
            return None
        if spec == "default":
            return default_lifepo4_curve()
        return OcvCurve.from_csv(spec)

    true_c = load(cfg.true_curve)
    filt_c = load(cfg.filter_curve)
    if true_c is None and filt_c is None:
        raise ScenarioConfigError(
            "true_curve and filter_curve cannot both be offset transforms")
    if true_c is None:
        off, lo, hi, ramp = _parse_offset_spec(cfg.true_curve)
        true_c = plateau_offset(filt_c, off, lo=lo, hi=hi, ramp=ramp)
    if filt_c is None:
        off, lo, hi, ramp = _parse_offset_spec(cfg.filter_curve)
        filt_c = plateau_offset(true_c, off, lo=lo, hi=hi, ramp=ramp)
    return true_c, filt_c


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    trace: Trace
    metrics: dict
    soc_ekf: np.ndarray
    soc_ammkf: np.ndarray
    corrected_points: list
    diagnostics: list
    violations: list


def _estimator_params(cfg: ScenarioConfig, trace: Trace):
    """Constant ECM params, or a per-step sequence from online RLS
    identification (config values fill the warmup)."""
    if not cfg.identify_online:
        return cfg.ecm_params()
    soc0 = min(1.0, max(0.0, cfg.initial_soc_true + cfg.initial_soc_error))
    # coulomb-counted SOC from the measured current drives the forgetting
    # factor (the estimator has no access to the true SOC)
    soc_cc = soc0 - np.cumsum(trace.current_a) * cfg.dt / (3600.0 * cfg.capacity_ah)
    soc_cc = np.clip(soc_cc, 0.0, 1.0)
    points = identify_stream(trace, soc_feedback=soc_cc, cfg=RlsConfig())
    fallback = cfg.ecm_params()
    seq = [fallback, fallback]
    seq.extend(p.params if p.params is not None else fallback for p in points)
    return seq


def run_scenario(cfg: ScenarioConfig, out_dir: str | None = None) -> ScenarioResult:
    """Simulate truth, run the baseline filter and the multi-model filter
    against the (possibly wrong) filter curve, and collect metrics."""
    true_curve, filter_curve = resolve_curves(cfg)
    params = cfg.ecm_params()
    sim = cfg.sim_config()
    profile = generate_profile(cfg.profile_kind, cfg.profile_steps, dt=cfg.dt,
                               seed=cfg.seed, amp=cfg.profile_amp,
                               target_discharge_ah=cfg.profile_target_ah)
    truth0 = BatteryState(cfg.initial_soc_true, 0.0)
    trace = simulate_profile(truth0, params, true_curve, profile.samples, sim)

    est_soc0 = min(1.0, max(0.0, cfg.initial_soc_true + cfg.initial_soc_error))
    x0 = BatteryState(est_soc0, 0.0)
    p0 = np.diag([cfg.p0_soc, cfg.p0_up])
    noise = cfg.filter_noise()
    est_params = _estimator_params(cfg, trace)

    ekf_outs = run_ekf(KfState(x0, p0, noise, filter_curve), est_params,
                       trace, sim)
    soc_ekf = np.array([o.posterior.soc for o in ekf_outs])
    am = run_ammkf(trace, filter_curve, est_params, x0, p0, noise, sim,
                   cfg.bank_config(), bank_noise=cfg.bank_noise())

    metrics = {
        "ekf-baseline": compute_metrics(soc_ekf, trace.true_soc, cfg.dt),
        "ammkf": compute_metrics(am.soc, trace.true_soc, cfg.dt),
    }
    violations = []
    if cfg.max_ammkf_rmse >= 0 and metrics["ammkf"].rmse > cfg.max_ammkf_rmse:
        violations.append(
            f"ammkf rmse {metrics['ammkf'].rmse:.4f} > {cfg.max_ammkf_rmse}")
    if cfg.require_ordering and \
            metrics["ammkf"].rmse >= metrics["ekf-baseline"].rmse:
        violations.append(
            f"ammkf rmse {metrics['ammkf'].rmse:.4f} not below baseline "
            f"{metrics['ekf-baseline'].rmse:.4f}")

    result = ScenarioResult(cfg, trace, metrics, soc_ekf, am.soc,
                            am.corrected_points, am.diagnostics, violations)
    if out_dir is not None:
        write_artifacts(result, out_dir, true_curve, filter_curve)
    return result


def write_soc_csv(path: str, dt: float, est: np.ndarray, truth: np.ndarray):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "soc", "true_soc", "error"])
        for k, (e, s) in enumerate(zip(est, truth)):
            w.writerow([f"{k * dt:.6g}", f"{e:.9f}", f"{s:.9f}",
                        f"{e - s:.9f}"])


def write_corrected_csv(path: str, points: list):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["soc", "ocv_v", "interval"])
        for soc, ocv, interval in points:
            w.writerow([f"{soc:.9f}", f"{ocv:.9f}", interval])


def write_diagnostics_csv(path: str, diagnostics: list):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["interval", "ccm", "acm_emp", "acm_theo", "verdict",
                    "optimal_index", "prob_max", "mode"])
        for d in diagnostics:
            w.writerow([d.interval_index, f"{d.ccm:.9e}", f"{d.acm_emp:.9e}",
                        f"{d.acm_theo:.9e}", d.verdict, d.optimal_index,
                        f"{d.prob_max:.6f}", d.mode])


def write_metrics_csv(path: str, metrics: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "rmse", "mae", "max_abs_error",
                    "convergence_time_s", "final_quarter_rmse"])
        for method, m in metrics.items():
            conv = "" if m.convergence_time_s is None \
                else f"{m.convergence_time_s:.6g}"
            w.writerow([method, f"{m.rmse:.6f}", f"{m.mae:.6f}",
                        f"{m.max_abs_error:.6f}", conv,
                        f"{m.final_quarter_rmse:.6f}"])


def write_manifest(path: str, cfg: ScenarioConfig):
    write_config({k: v for k, v in asdict(cfg).items()}, path)


def write_artifacts(result: ScenarioResult, out_dir: str,
                    true_curve: OcvCurve, filter_curve: OcvCurve):
    os.makedirs(out_dir, exist_ok=True)
    cfg = result.config
    write_trace(result.trace, os.path.join(out_dir, "trace.csv"))
    write_soc_csv(os.path.join(out_dir, "soc_ekf.csv"), cfg.dt,
                  result.soc_ekf, result.trace.true_soc)
    write_soc_csv(os.path.join(out_dir, "soc_ammkf.csv"), cfg.dt,
                  result.soc_ammkf, result.trace.true_soc)
    write_corrected_csv(os.path.join(out_dir, "corrected_osc.csv"),
                        result.corrected_points)
    write_diagnostics_csv(os.path.join(out_dir, "diagnostics.csv"),
                          result.diagnostics)
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), result.metrics)
    true_curve.to_csv(os.path.join(out_dir, "true_curve.csv"))
    filter_curve.to_csv(os.path.join(out_dir, "filter_curve.csv"))
    write_manifest(os.path.join(out_dir, "run-manifest.txt"), cfg)


def run_sweep(base_cfg: ScenarioConfig, overrides: list[dict],
              out_dir: str | None = None,
              parallel: bool = False) -> list[ScenarioResult]:
    """Run one scenario per override mapping; each gets its own seed-derived
    output directory and is fully independent of the others."""
    cfgs = [replace(base_cfg, **ov) for ov in overrides]
    dirs = [os.path.join(out_dir, f"run-{i:03d}") if out_dir else None
            for i in range(len(cfgs))]
    if parallel:
        with concurrent.futures.ThreadPoolExecutor() as pool:
            return list(pool.map(run_scenario, cfgs, dirs))
    return [run_scenario(c, d) for c, d in zip(cfgs, dirs)]
