"""SOC estimation toolkit for LiFePO4 batteries that stays accurate under
OCV-SOC curve error: ECM simulator, adaptive RLS identification, EKF
baseline, innovation diagnostics, and a multi-model filter bank."""

from .curve import (CurveTransform, OcvCurve, apply_transform, curve_error,
                    default_lifepo4_curve, plateau_offset)
from .ecm import (BatteryState, EcmParams, SimConfig, Trace, simulate_profile,
                  step_state, terminal_voltage)
from .ekf import KfState, NoiseConfig, StepOutput, run_ekf
from .innovation import (ErrorSignVerdict, IntervalInnovations, detect_convergence,
                         empirical_acm, infer_error_sign, interval_ccm,
                         theoretical_acm)
from .metrics import Metrics, compute_metrics
from .multimodel import AmmkfResult, BankConfig, build_slope_set, run_ammkf
from .profiles import DriveProfile, generate_profile
from .rls import (RlsConfig, build_sample, circuit_to_theta, forgetting_factor,
                  identify_stream, rls_step, theta_to_circuit)
from .scenario import (ScenarioConfig, ScenarioResult, load_scenario,
                       resolve_curves, run_scenario, run_sweep)

__all__ = [n for n in dir() if not n.startswith("_")]
__version__ = "0.1.0"
