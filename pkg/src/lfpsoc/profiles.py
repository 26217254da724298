"""Synthetic drive-cycle current profiles (discharge-positive amperes)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ProfileConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DriveProfile:
    name: str
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", s)
        if s.size == 0 or not np.all(np.isfinite(s)):
            raise ProfileConfigError("profile must be non-empty and finite")

    def __len__(self) -> int:
        return len(self.samples)

    def net_discharge_ah(self, dt: float = 1.0) -> float:
        return float(np.sum(self.samples) * dt / 3600.0)


# One dynamic-stress block: mixed charge/discharge pulses (relative levels)
# with a net-discharge bias, loosely shaped like standard cycling tests.
_DST_BLOCK = np.array([
    0.5, 0.5, 1.0, 1.0, 2.0, 2.0, 1.0, -0.5, -0.5, 0.25,
    0.25, 1.5, 1.5, 3.0, 1.0, 1.0, -1.0, -1.0, 0.5, 0.5,
])


def generate_profile(kind: str, n_steps: int, dt: float = 1.0, seed: int = 0,
                     amp: float = 1.0, target_discharge_ah: float | None = None,
                     step_sigma: float = 0.05) -> DriveProfile:
    """Build a deterministic current profile.

    kinds: 'constant' (amp everywhere), 'pulse' (amp/rest alternation),
    'dst-like' (repeating mixed charge/discharge blocks, optionally scaled so
    the net discharge over the profile equals target_discharge_ah),
    'random-walk' (seeded, clipped to +-amp).
    """
    if n_steps <= 0:
        raise ProfileConfigError("n_steps must be > 0")
    if kind == "constant":
        samples = np.full(n_steps, amp)
    elif kind == "pulse":
        block = np.concatenate([np.full(30, amp), np.zeros(30)])
        samples = np.tile(block, n_steps // len(block) + 1)[:n_steps]
    elif kind == "dst-like":
        # stretch each pulse level over several seconds
        stretch = 18
        block = np.repeat(_DST_BLOCK, stretch)
        samples = amp * np.tile(block, n_steps // len(block) + 1)[:n_steps]
        if target_discharge_ah is not None:
            net = np.sum(samples) * dt / 3600.0
            if net <= 0:
                raise ProfileConfigError("profile has no net discharge to scale")
            samples = samples * (target_discharge_ah / net)
    elif kind == "random-walk":
        rng = np.random.default_rng(seed)
        samples = np.clip(np.cumsum(rng.normal(0.0, step_sigma, n_steps)),
                          -amp, amp)
    else:
        raise ProfileConfigError(f"unknown profile kind {kind!r}")
    return DriveProfile(kind, samples)
