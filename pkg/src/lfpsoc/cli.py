"""Command-line interface: simulate, identify, estimate, analyze, scenario,
and sweep subcommands over CSV artifacts and flat key=value configs."""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import innovation
from .ecm import BatteryState, simulate_profile
from .ekf import KfState, run_ekf
from .innovation import IntervalInnovations
from .metrics import compute_metrics
from .multimodel import run_ammkf
from .profiles import generate_profile
from .rls import RlsConfig, identify_stream
from .scenario import (ScenarioConfig, ScenarioConfigError, load_scenario,
                       resolve_curves, run_scenario, run_sweep,
                       scenario_from_mapping, write_corrected_csv,
                       write_diagnostics_csv, write_manifest, write_soc_csv)
from .traceio import ingest_trace, read_config, write_trace


def _load_cfg(args) -> ScenarioConfig:
    mapping = read_config(args.config) if args.config else {}
    cfg = scenario_from_mapping(mapping)
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out_dir(args) -> str:
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    true_curve, _ = resolve_curves(cfg)
    profile = generate_profile(cfg.profile_kind, cfg.profile_steps, dt=cfg.dt,
                               seed=cfg.seed, amp=cfg.profile_amp,
                               target_discharge_ah=cfg.profile_target_ah)
    trace = simulate_profile(BatteryState(cfg.initial_soc_true, 0.0),
                             cfg.ecm_params(), true_curve, profile.samples,
                             cfg.sim_config())
    write_trace(trace, os.path.join(out, "trace.csv"))
    true_curve.to_csv(os.path.join(out, "true_curve.csv"))
    write_manifest(os.path.join(out, "run-manifest.txt"), cfg)
    print(f"simulated {len(trace)} steps -> {out}/trace.csv")
    return 0


def cmd_identify(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    trace = ingest_trace(args.trace, strict=args.strict)
    soc_fb = None
    if trace.true_soc is not None:
        soc_fb = trace.true_soc
    points = identify_stream(trace, soc_feedback=soc_fb, cfg=RlsConfig())
    path = os.path.join(out, "identified_params.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "r0_ohm", "rp_ohm", "cp_f", "lambda"])
        for p in points:
            if p.params is None:
                w.writerow([f"{p.t:.6g}", "", "", "", f"{p.lam:.6f}"])
            else:
                w.writerow([f"{p.t:.6g}", f"{p.params.r0:.8g}",
                            f"{p.params.rp:.8g}", f"{p.params.cp:.8g}",
                            f"{p.lam:.6f}"])
    write_manifest(os.path.join(out, "run-manifest.txt"), cfg)
    final = next((p.params for p in reversed(points) if p.params is not None),
                 None)
    if final is not None:
        print(f"final estimate: r0={final.r0:.5g} rp={final.rp:.5g} "
              f"cp={final.cp:.6g} -> {path}")
    else:
        print(f"no physical estimate reached -> {path}")
    return 0


def cmd_estimate(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    trace = ingest_trace(args.trace, strict=args.strict)
    _, filter_curve = resolve_curves(cfg)
    x0 = BatteryState(
        min(1.0, max(0.0, cfg.initial_soc_true + cfg.initial_soc_error)), 0.0)
    p0 = np.diag([cfg.p0_soc, cfg.p0_up])
    sim = cfg.sim_config()
    params = cfg.ecm_params()
    if args.method == "ekf":
        outs = run_ekf(KfState(x0, p0, cfg.filter_noise(), filter_curve),
                       params, trace, sim)
        soc = np.array([o.posterior.soc for o in outs])
        with open(os.path.join(out, "estimate_ekf.csv"), "w",
                  newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "soc_est", "up_est", "innovation_v",
                        "p00", "p11"])
            for k, o in enumerate(outs):
                w.writerow([f"{k * trace.dt:.6g}", f"{o.posterior.soc:.9f}",
                            f"{o.posterior.up:.9f}", f"{o.innovation:.9e}",
                            f"{o.posterior_p[0, 0]:.9e}",
                            f"{o.posterior_p[1, 1]:.9e}"])
    else:
        res = run_ammkf(trace, filter_curve, params, x0, p0,
                        cfg.filter_noise(), sim, cfg.bank_config(),
                        bank_noise=cfg.bank_noise())
        soc = res.soc
        write_corrected_csv(os.path.join(out, "corrected_osc.csv"),
                            res.corrected_points)
        write_diagnostics_csv(os.path.join(out, "diagnostics.csv"),
                              res.diagnostics)
    truth = trace.true_soc if trace.true_soc is not None \
        else np.full(len(trace), np.nan)
    write_soc_csv(os.path.join(out, f"soc_{args.method}.csv"), trace.dt,
                  soc, truth)
    write_manifest(os.path.join(out, "run-manifest.txt"), cfg)
    if trace.true_soc is not None:
        m = compute_metrics(soc, trace.true_soc, trace.dt)
        print(f"{args.method}: rmse={m.rmse:.4f} mae={m.mae:.4f} "
              f"max={m.max_abs_error:.4f}")
    else:
        print(f"{args.method}: {len(soc)} estimates (no ground truth in trace)")
    return 0


def _analyze_innovation_log(args, cfg: ScenarioConfig, out: str) -> int:
    """Interval statistics from a pre-recorded innovation log
    (`interval,step,innovation_v`). Without covariance information the
    theoretical auto-correlation is approximated by the configured
    measurement variance."""
    groups: dict[int, list[float]] = {}
    with open(args.trace, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row:
                groups.setdefault(int(row[0]), []).append(float(row[2]))
    path = os.path.join(out, "analysis.csv")
    h = np.array([0.0, -1.0])
    p_zero = np.zeros((2, 2))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "ccm", "acm_emp", "acm_theo", "verdict"])
        prev = None
        for m in sorted(groups):
            iv = IntervalInnovations(m, np.array(groups[m]), h, p_zero, cfg.r)
            acm_emp = innovation.empirical_acm(iv)
            acm_theo = cfg.r
            if prev is not None and len(prev.values) == len(iv.values):
                ccm = innovation.interval_ccm(prev, iv)
                verdict = innovation.infer_error_sign(
                    ccm, acm_emp / acm_theo, acm_emp=acm_emp).sign
            else:
                ccm, verdict = 0.0, "indeterminate"
            w.writerow([m, f"{ccm:.9e}", f"{acm_emp:.9e}",
                        f"{acm_theo:.9e}", verdict])
            prev = iv
    print(f"{len(groups)} intervals -> {path}")
    return 0


def cmd_analyze(args) -> int:
    """Report interval innovation statistics (cross/auto-correlation and the
    inferred curve-error sign), either by running the baseline filter over a
    trace CSV or directly from an innovation log CSV."""
    cfg = _load_cfg(args)
    out = _out_dir(args)
    with open(args.trace, newline="") as fh:
        header = fh.readline().strip()
    if header.startswith("interval,step,innovation_v"):
        return _analyze_innovation_log(args, cfg, out)
    trace = ingest_trace(args.trace, strict=args.strict)
    _, filter_curve = resolve_curves(cfg)
    x0 = BatteryState(
        min(1.0, max(0.0, cfg.initial_soc_true + cfg.initial_soc_error)), 0.0)
    outs = run_ekf(KfState(x0, np.diag([cfg.p0_soc, cfg.p0_up]),
                           cfg.filter_noise(), filter_curve),
                   cfg.ecm_params(), trace, cfg.sim_config())
    innov = np.array([o.innovation for o in outs])
    L = cfg.interval_len
    n_int = len(innov) // L
    path = os.path.join(out, "analysis.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["interval", "ccm", "acm_emp", "acm_theo", "verdict"])
        prev = None
        for m in range(n_int):
            vals = innov[m * L:(m + 1) * L]
            last = outs[(m + 1) * L - 1]
            h = np.array([filter_curve.slope(
                min(max(last.posterior.soc, filter_curve.soc_min),
                    filter_curve.soc_max)), -1.0])
            iv = IntervalInnovations(m, vals, h, last.prior_p, cfg.r)
            acm_emp = innovation.empirical_acm(iv)
            acm_theo = innovation.theoretical_acm(h, last.prior_p, cfg.r)
            if prev is not None:
                ccm = innovation.interval_ccm(prev, iv)
                verdict = innovation.infer_error_sign(
                    ccm, acm_emp / acm_theo, acm_emp=acm_emp).sign
            else:
                ccm, verdict = 0.0, "indeterminate"
            w.writerow([m, f"{ccm:.9e}", f"{acm_emp:.9e}",
                        f"{acm_theo:.9e}", verdict])
            prev = iv
    v = innov[len(innov) // 2:]
    v = v - v.mean()
    denom = float(np.sum(v * v))
    band = 2.0 / np.sqrt(len(v))
    inside = sum(abs(float(np.sum(v[:-k] * v[k:])) / denom) <= band
                 for k in range(1, 21))
    print(f"{n_int} intervals -> {path}; second-half whiteness: "
          f"{inside}/20 autocorrelation lags inside +-{band:.4f}")
    return 0


def cmd_scenario(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    res = run_scenario(cfg, out)
    for method, m in res.metrics.items():
        print(f"{method}: rmse={m.rmse:.4f} mae={m.mae:.4f} "
              f"max={m.max_abs_error:.4f} "
              f"conv={m.convergence_time_s} final_q={m.final_quarter_rmse:.4f}")
    for v in res.violations:
        print(f"THRESHOLD VIOLATION: {v}", file=sys.stderr)
    return 1 if res.violations else 0


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    values = [float(v) for v in args.values.split(",")]
    key = args.key
    if key not in ScenarioConfig.__dataclass_fields__:
        raise ScenarioConfigError(f"unknown sweep key: {key!r}")
    overrides = [{key: v} for v in values]
    results = run_sweep(cfg, overrides, out, parallel=args.parallel)
    failed = 0
    for v, r in zip(values, results):
        m = r.metrics["ammkf"]
        print(f"{key}={v}: ammkf rmse={m.rmse:.4f} "
              f"conv={m.convergence_time_s} final_q={m.final_quarter_rmse:.4f}"
              + (f"  VIOLATIONS: {r.violations}" if r.violations else ""))
        failed += bool(r.violations)
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lfpsoc",
        description="SOC estimation toolkit robust to OCV-curve error")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--out", help="output directory (default: ./out)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--strict", action="store_true",
                        help="reject non-uniform input instead of resampling")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", help="generate a synthetic ground-truth trace")
    p = sub.add_parser("identify", help="RLS circuit-parameter identification")
    p.add_argument("--trace", required=True, help="input trace CSV")
    p = sub.add_parser("estimate", help="run an SOC estimator over a trace")
    p.add_argument("--trace", required=True, help="input trace CSV")
    p.add_argument("--method", choices=["ekf", "ammkf"], default="ammkf")
    p = sub.add_parser("analyze", help="innovation statistics of a trace")
    p.add_argument("--trace", required=True, help="input trace CSV")
    sub.add_parser("scenario", help="run one full scenario (both estimators)")
    p = sub.add_parser("sweep", help="run a scenario per swept config value")
    p.add_argument("--key", required=True, help="config field to sweep")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--parallel", action="store_true")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "identify": cmd_identify,
    "estimate": cmd_estimate,
    "analyze": cmd_analyze,
    "scenario": cmd_scenario,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ScenarioConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
