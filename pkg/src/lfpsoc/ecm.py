"""First-order Thevenin equivalent-circuit battery simulator.

Sign convention: discharge current is positive. A positive current drains
SOC, charges the polarization voltage Up, and drops the terminal voltage by
R0*I. Terminal voltage is Ut = OCV(soc) - Up - R0*I.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curve import OcvCurve


class InvalidInputError(ValueError):
    pass


@dataclass(frozen=True)
class EcmParams:
    """Ohmic resistance, polarization resistance and capacitance (ohm/ohm/F)."""

    r0: float
    rp: float
    cp: float

    def __post_init__(self):
        for name in ("r0", "rp", "cp"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")

    @property
    def tau(self) -> float:
        return self.rp * self.cp


@dataclass(frozen=True)
class BatteryState:
    """Filter/simulator state: (SOC fraction, polarization voltage)."""

    soc: float
    up: float = 0.0

    def as_vector(self) -> np.ndarray:
        return np.array([self.soc, self.up], dtype=float)


@dataclass(frozen=True)
class SimConfig:
    capacity_ah: float = 1.063
    coulombic_efficiency: float = 1.0
    dt: float = 1.0
    voltage_noise_sigma: float = 0.0
    current_noise_sigma: float = 0.0
    rng_seed: int = 0
    cutoff_low_v: float = 2.0
    cutoff_high_v: float = 3.6

    def __post_init__(self):
        if not self.capacity_ah > 0:
            raise ValueError("capacity_ah must be > 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not 0 < self.coulombic_efficiency <= 1:
            raise ValueError("coulombic_efficiency must be in (0, 1]")
        if self.voltage_noise_sigma < 0 or self.current_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")

    @property
    def capacity_as(self) -> float:
        """Capacity in ampere-seconds."""
        return 3600.0 * self.capacity_ah


@dataclass
class Trace:
    """Uniformly sampled (t, current, terminal voltage) with ground truth."""

    t: np.ndarray
    current_a: np.ndarray
    voltage_v: np.ndarray
    true_soc: np.ndarray | None = None
    true_up_v: np.ndarray | None = None
    dt: float = 1.0
    cutoff_index: int | None = None
    clamp_steps: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)


def step_state(state: BatteryState, params: EcmParams, current: float,
               cfg: SimConfig) -> tuple[BatteryState, bool]:
    """One exact-discretization step; returns (new state, soc-clamped flag)."""
    if not all(math.isfinite(v) for v in (state.soc, state.up, current)):
        raise InvalidInputError("non-finite state or current")
    decay = math.exp(-cfg.dt / params.tau)
    up = decay * state.up + (1.0 - decay) * params.rp * current
    soc_raw = state.soc - cfg.coulombic_efficiency * cfg.dt * current / cfg.capacity_as
    soc = min(1.0, max(0.0, soc_raw))
    return BatteryState(soc, up), soc != soc_raw


def terminal_voltage(state: BatteryState, params: EcmParams, current: float,
                     curve: OcvCurve) -> float:
    """Ut = OCV(soc) - Up - R0*I (discharge-positive current)."""
    return curve.ocv(state.soc) - state.up - params.r0 * current


def simulate_profile(initial: BatteryState, params: EcmParams, curve: OcvCurve,
                     profile, cfg: SimConfig) -> Trace:
    """Iterate the ECM over a current profile, recording noisy measurements.

    States evolve noise-free; Gaussian noise is added to the recorded voltage
    and current only. Stops early (marking cutoff_index) if the clean terminal
    voltage crosses either cutoff. Deterministic for a given rng_seed.
    """
    profile = np.asarray(profile, dtype=float)
    if profile.size == 0:
        raise InvalidInputError("profile must be non-empty")
    if not np.all(np.isfinite(profile)):
        raise InvalidInputError("profile must be finite")
    rng = np.random.default_rng(cfg.rng_seed)
    n = profile.size
    t = np.arange(n) * cfg.dt
    v_meas = np.empty(n)
    i_meas = np.empty(n)
    soc = np.empty(n)
    up = np.empty(n)
    clamp_steps = []
    cutoff_index = None
    state = initial
    count = 0
    for k in range(n):
        i_k = profile[k]
        v_clean = terminal_voltage(state, params, i_k, curve)
        soc[k] = state.soc
        up[k] = state.up
        v_meas[k] = v_clean + (rng.normal(0.0, cfg.voltage_noise_sigma)
                              if cfg.voltage_noise_sigma > 0 else 0.0)
        i_meas[k] = i_k + (rng.normal(0.0, cfg.current_noise_sigma)
                          if cfg.current_noise_sigma > 0 else 0.0)
        count = k + 1
        if v_clean < cfg.cutoff_low_v or v_clean > cfg.cutoff_high_v:
            cutoff_index = k
            break
        state, clamped = step_state(state, params, i_k, cfg)
        if clamped:
            clamp_steps.append(k + 1)
    c = count
    return Trace(t[:c], i_meas[:c], v_meas[:c], soc[:c], up[:c],
                 dt=cfg.dt, cutoff_index=cutoff_index, clamp_steps=clamp_steps)
