#!/usr/bin/env python3
"""Headline experiment: +20 mV plateau-offset scenario.

Runs the baseline EKF (stuck with the wrong curve) and the multi-model
filter on the same trace, prints the accuracy comparison, and reports how
far the corrected OCV point cloud moved toward the battery's actual curve.

Usage: python scripts/run_headline.py [out_dir]
"""
import sys

import numpy as np

from lfpsoc import ScenarioConfig, resolve_curves, run_scenario


def main() -> int:
    out = sys.argv[1] if len(sys.argv) > 1 else "out/headline"
    cfg = ScenarioConfig()  # defaults are the +20 mV plateau-offset scenario
    res = run_scenario(cfg, out)
    true_curve, filter_curve = resolve_curves(cfg)

    print(f"scenario: {cfg.true_curve} vs filter '{cfg.filter_curve}', "
          f"seed={cfg.seed}")
    for method, m in res.metrics.items():
        print(f"  {method:12s} rmse={m.rmse:7.4f}  mae={m.mae:7.4f}  "
              f"max={m.max_abs_error:7.4f}")

    pts = np.array([(s, v) for s, v, _ in res.corrected_points])
    ok = (pts[:, 0] >= true_curve.soc_min) & (pts[:, 0] <= true_curve.soc_max)
    soc, ocv = pts[ok, 0], pts[ok, 1]
    mae_corrected = float(np.mean(np.abs(ocv - true_curve.ocv(soc))))
    mae_original = float(np.mean(np.abs(filter_curve.ocv(soc) -
                                        true_curve.ocv(soc))))
    print(f"  corrected-curve cloud MAE: {mae_corrected * 1e3:.2f} mV "
          f"(original curve was {mae_original * 1e3:.2f} mV off)")
    print(f"artifacts in {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
