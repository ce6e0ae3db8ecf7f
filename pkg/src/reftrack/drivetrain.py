"""Discrete-time simulation of a friction clutch with gearbox.

The plant couples an input shaft (motor side) to an output shaft (wheel
side) through a friction clutch. The clutch transmits at most a capacity
torque; the torque direction follows the speed difference across the
plates, so the clutch can only pull both sides together. An optional
first-order lag models the actuation path of the control input.

All quantities are SI (rad/s, N m, s). The continuous dynamics

    j_in  * d(omega_in)/dt  = -t_cl + t_in
    j_out * d(omega_out)/dt =  ratio * t_cl - eta * omega_out

are never integrated at runtime; `discretize` solves them exactly for one
sampling interval and `step` applies the resulting affine update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "DriveTrainParams",
    "DiscreteModel",
    "DriveTrainState",
    "Pt1Filter",
    "discretize",
    "slip",
    "clutch_torque",
    "step",
    "make_pt1",
    "pt1_apply",
]


@dataclass(frozen=True)
class DriveTrainParams:
    """Physical constants of the drive train."""

    j_in: float = 0.209      # input-side inertia, kg m^2
    j_out: float = 86.6033   # output-side inertia, kg m^2
    ratio: float = 10.02     # gearbox transmission ratio
    t_in: float = 20.0       # constant drive torque on the input shaft, N m
    eta: float = 2.0         # speed-proportional output load, N m s/rad
    dt: float = 0.01         # sampling interval, s

    def __post_init__(self) -> None:
        for name in ("j_in", "j_out", "ratio", "t_in", "eta", "dt"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(
                    f"drive train parameter {name} must be finite and > 0, got {value!r}"
                )


@dataclass(frozen=True)
class DiscreteModel:
    """One-step transition coefficients: x' = A x + b1 t_cl + b2 t_in."""

    a11: float
    a22: float
    b1: tuple[float, float]
    b2: tuple[float, float]


@dataclass(frozen=True)
class DriveTrainState:
    """Input/output shaft speeds in rad/s.

    Fields are plain floats in scalar simulation; batched rollouts store
    equal-length ndarrays and every operation broadcasts elementwise.
    """

    omega_in: float
    omega_out: float


@dataclass(frozen=True)
class Pt1Filter:
    """First-order lag on the applied control torque.

    a_coef = exp(-2*pi*cutoff_hz*dt); prev_output is the last filter
    output (an ndarray in batched rollouts).
    """

    cutoff_hz: float
    a_coef: float
    prev_output: float = 0.0
    initialized: bool = False


def discretize(params: DriveTrainParams) -> DiscreteModel:
    """Exact zero-order-hold discretization of the clutch dynamics.

    omega_in integrates the constant torque difference; omega_out decays
    toward its torque-dependent equilibrium with rate eta/j_out.
    """
    a22 = math.exp(-params.eta * params.dt / params.j_out)
    b1 = (-params.dt / params.j_in, (params.ratio / params.eta) * (1.0 - a22))
    b2 = (params.dt / params.j_in, 0.0)
    return DiscreteModel(a11=1.0, a22=a22, b1=b1, b2=b2)


def slip(state: DriveTrainState, ratio: float):
    """Speed difference across the clutch plates, omega_in - ratio*omega_out."""
    return state.omega_in - ratio * state.omega_out


def clutch_torque(t_cap, state: DriveTrainState, ratio: float):
    """Signed torque transmitted by the clutch for a given capacity torque.

    The friction torque drags the faster side toward the slower one:
    t_cl = t_cap * sign(slip), with sign(0) taken as +1.
    """
    t_cap = np.asarray(t_cap, dtype=float)
    if np.any(t_cap < 0.0):
        raise ValueError("capacity torque must be nonnegative")
    s = slip(state, ratio)
    out = t_cap * np.where(np.asarray(s) >= 0.0, 1.0, -1.0)
    return float(out) if out.ndim == 0 else out


def step(model: DiscreteModel, state: DriveTrainState, t_cl, t_in) -> DriveTrainState:
    """Advance the state by one sampling interval under constant torques.

    Torque contributions are summed before being added to the state so
    that t_cl == t_in leaves omega_in bit-identical (b1[0] == -b2[0]).
    """
    _require_finite(state.omega_in, state.omega_out, t_cl, t_in)
    omega_in = model.a11 * state.omega_in + (model.b1[0] * t_cl + model.b2[0] * t_in)
    omega_out = model.a22 * state.omega_out + (model.b1[1] * t_cl + model.b2[1] * t_in)
    return DriveTrainState(omega_in, omega_out)


def make_pt1(cutoff_hz: float, dt: float, initial_output=None) -> Pt1Filter:
    """Build the lag filter; initial_output seeds prev_output (typically t_in)."""
    if not (cutoff_hz > 0.0 and dt > 0.0):
        raise ValueError("cutoff_hz and dt must be positive")
    a_coef = math.exp(-2.0 * math.pi * cutoff_hz * dt)
    if initial_output is None:
        return Pt1Filter(cutoff_hz, a_coef)
    return Pt1Filter(cutoff_hz, a_coef, prev_output=initial_output, initialized=True)


def pt1_apply(filt: Pt1Filter, t_cl_commanded):
    """Low-pass the commanded torque; returns (applied torque, new filter).

    An uninitialized filter passes the first command through unchanged.
    """
    _require_finite(t_cl_commanded)
    if not filt.initialized:
        return t_cl_commanded, replace(
            filt, prev_output=t_cl_commanded, initialized=True
        )
    prev, a = filt.prev_output, filt.a_coef
    cmd = np.asarray(t_cl_commanded, dtype=float)
    out = np.where(cmd > prev, (cmd - prev) * (1.0 - a) + prev, (prev - cmd) * a + cmd)
    out = float(out) if out.ndim == 0 else out
    return out, replace(filt, prev_output=out)


def _require_finite(*values) -> None:
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite value in drive train update: {v!r}")
