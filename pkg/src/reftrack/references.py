"""Seeded generators for the input-speed reference classes.

Three classes of reference trajectories drive the experiments: random
smooth splines, splines with periodic square-wave jumps, and splines
shifted by a randomly chosen speed offset. Generator configs are stated
in rpm (the reporting unit); trajectories are stored in rad/s (the
simulation unit). Every generator is a pure function of (config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "SMOOTH",
    "DISCONTINUOUS",
    "OFFSET",
    "DEFAULT_OFFSETS_RPM",
    "ReferenceGenConfig",
    "ReferenceTrajectory",
    "rpm_to_rad_s",
    "rad_s_to_rpm",
    "cubic_spline_eval",
    "gen_smooth",
    "gen_discontinuous",
    "gen_offset",
    "lookup",
    "lookup_window",
]

SMOOTH = "smooth"
DISCONTINUOUS = "discontinuous"
OFFSET = "offset"

RAD_S_PER_RPM = math.pi / 30.0

# Calibrated so the pooled samples of the offset class span roughly
# 1040..4880 rpm (measured over 10,000 seeds with the default generator).
DEFAULT_OFFSETS_RPM = (5.0, 470.0, 935.0, 1400.0, 1865.0)


def rpm_to_rad_s(value):
    return value * RAD_S_PER_RPM


def rad_s_to_rpm(value):
    return value / RAD_S_PER_RPM


@dataclass(frozen=True)
class ReferenceGenConfig:
    """Knobs of the reference generators (speeds in rpm)."""

    episode_len: int = 100
    horizon_pad: int = 3
    mean_rpm: float = 2000.0
    knot_count: int = 8
    knot_spread_rpm: float = 750.0
    jump_count_min: int = 1
    jump_count_max: int = 19
    square_amp_rpm: float = 150.0
    offsets_rpm: tuple[float, ...] = DEFAULT_OFFSETS_RPM

    def __post_init__(self) -> None:
        if self.episode_len < 2 or self.horizon_pad < 0:
            raise ValueError("episode_len must be >= 2 and horizon_pad >= 0")
        if self.knot_count < 2:
            raise ValueError("need at least two spline knots")
        if not (1 <= self.jump_count_min <= self.jump_count_max <= 19):
            raise ValueError("jump count range must lie within [1, 19]")
        if len(self.offsets_rpm) == 0:
            raise ValueError("offsets_rpm must not be empty")

    @property
    def total_len(self) -> int:
        return self.episode_len + self.horizon_pad


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Sampled input-speed reference in rad/s, one value per time step.

    Covers the episode plus the lookahead padding; reads past the end
    clamp to the final sample.
    """

    values: np.ndarray
    class_tag: str
    seed: int

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("reference values must be a 1-d sequence")
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise ValueError("reference values must be finite and positive")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


def cubic_spline_eval(knots, t):
    """Evaluate the natural cubic spline through (time, value) knots at t.

    Natural boundary conditions (zero second derivative at both ends);
    for two knots this degenerates to linear interpolation.
    """
    knots = list(knots)
    if len(knots) < 2:
        raise ValueError("need at least two knots")
    times = np.asarray([k[0] for k in knots], dtype=float)
    values = np.asarray([k[1] for k in knots], dtype=float)
    if np.any(np.diff(times) <= 0.0):
        raise ValueError("knot times must be strictly increasing")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < times[0]) or np.any(t_arr > times[-1]):
        raise ValueError("evaluation point outside the knot range")
    out = _natural_spline(times, values)(t_arr)
    return float(out) if out.ndim == 0 else out


def _natural_spline(times, values):
    # for 2 knots the natural boundary conditions reduce this to the line
    return CubicSpline(times, values, bc_type="natural")


def _smooth_rpm(cfg: ReferenceGenConfig, rng: np.random.Generator) -> np.ndarray:
    """Spline samples (rpm) at every step of the padded episode."""
    lo = cfg.mean_rpm - cfg.knot_spread_rpm
    hi = cfg.mean_rpm + cfg.knot_spread_rpm
    knot_values = rng.uniform(lo, hi, cfg.knot_count)
    knot_times = np.linspace(0.0, cfg.total_len - 1.0, cfg.knot_count)
    return _natural_spline(knot_times, knot_values)(np.arange(cfg.total_len, dtype=float))


def gen_smooth(cfg: ReferenceGenConfig, seed: int) -> ReferenceTrajectory:
    """Random spline around the configured mean speed."""
    rng = np.random.default_rng(seed)
    return ReferenceTrajectory(rpm_to_rad_s(_smooth_rpm(cfg, rng)), SMOOTH, seed)


def gen_discontinuous(cfg: ReferenceGenConfig, seed: int) -> ReferenceTrajectory:
    """Smooth spline plus a periodic square wave.

    The half-period (in steps) is drawn so that the number of level
    changes inside the episode falls in the configured jump-count range;
    the wave alternates between +amp and -amp and keeps running through
    the lookahead padding.
    """
    rng = np.random.default_rng(seed)
    base = _smooth_rpm(cfg, rng)

    last = cfg.episode_len - 1  # level changes are counted on steps 1..last
    half_periods = np.arange(1, cfg.episode_len)
    counts = last // half_periods
    usable = (counts >= cfg.jump_count_min) & (counts <= cfg.jump_count_max)
    if not usable.any():
        raise ValueError("jump count range unreachable for this episode length")
    target = rng.choice(np.unique(counts[usable]))
    half_period = int(rng.choice(half_periods[usable & (counts == target)]))
    level0 = 1.0 if rng.random() < 0.5 else -1.0

    phase = (np.arange(cfg.total_len) // half_period) % 2
    wave = cfg.square_amp_rpm * level0 * np.where(phase == 0, 1.0, -1.0)
    return ReferenceTrajectory(rpm_to_rad_s(base + wave), DISCONTINUOUS, seed)


def gen_offset(cfg: ReferenceGenConfig, seed: int) -> ReferenceTrajectory:
    """Smooth spline shifted by one randomly chosen offset."""
    rng = np.random.default_rng(seed)
    base = _smooth_rpm(cfg, rng)
    offset = float(rng.choice(np.asarray(cfg.offsets_rpm, dtype=float)))
    return ReferenceTrajectory(rpm_to_rad_s(base + offset), OFFSET, seed)


def lookup(traj: ReferenceTrajectory, k: int) -> float:
    """Reference value at step k; reads past the end return the last value."""
    if k < 0:
        raise IndexError("step index must be nonnegative")
    return float(traj.values[min(k, len(traj) - 1)])


def lookup_window(traj: ReferenceTrajectory, k: int, horizon: int) -> np.ndarray:
    """Clamped slice values[k .. k+horizon] as an array of horizon+1 entries."""
    if k < 0 or horizon < 0:
        raise IndexError("step index and horizon must be nonnegative")
    idx = np.minimum(np.arange(k, k + horizon + 1), len(traj) - 1)
    return traj.values[idx]
