#!/usr/bin/env python3
"""Initial-SOC-error robustness sweep on the plateau-offset scenario.

Starts the estimator with -20/-10/+10/+20 percentage-point SOC errors and
reports whether each run converges into and stays inside the 5% band.

Usage: python scripts/run_initial_error_sweep.py [out_dir]
"""
import sys

from lfpsoc import ScenarioConfig, run_sweep


def main() -> int:
    out = sys.argv[1] if len(sys.argv) > 1 else "out/initial-error-sweep"
    base = ScenarioConfig(p0_soc=1e-2)  # wide initial SOC uncertainty
    errors = [-0.20, -0.10, 0.10, 0.20]
    results = run_sweep(base, [{"initial_soc_error": e} for e in errors], out)
    ok = True
    for e, r in zip(errors, results):
        m = r.metrics["ammkf"]
        conv = m.convergence_time_s
        good = conv is not None and m.final_quarter_rmse < 0.05
        ok &= good
        print(f"  initial error {e:+.0%}: convergence at t={conv}s, "
              f"final-quarter rmse={m.final_quarter_rmse:.4f} "
              f"[{'ok' if good else 'FAIL'}]")
    print(f"artifacts in {out}/")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
