"""Actor/critic input vectors and the tracking reward.

Three layouts of the input vector ("argument") are supported:

    current   [w_out, w_in, ref_k - w_in]
    global    [w_out, w_in, ref_k, ref_{k+1}, ..., ref_{k+N}]
    residual  [w_out, ref_k - w_in, ref_{k+1} - w_in, ..., ref_{k+N} - w_in]

All components are divided by a speed scale so that networks with tanh
hidden layers see O(1) inputs. The residual layout is invariant under a
common shift of w_in and the reference, which is what lets one policy
serve every speed range.

This module also owns the shared closed-loop plumbing (EnvConfig,
initial_state, apply_control) used by both the learning controllers and
the PI baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .drivetrain import (
    DiscreteModel,
    DriveTrainParams,
    DriveTrainState,
    Pt1Filter,
    clutch_torque,
    discretize,
    make_pt1,
    pt1_apply,
    step,
)
from .references import ReferenceTrajectory, lookup, lookup_window

__all__ = [
    "CURRENT",
    "GLOBAL",
    "RESIDUAL",
    "SPEED_SCALE_DEFAULT",
    "ACTION_SCALE_DEFAULT",
    "ArgumentSpec",
    "Argument",
    "RewardParams",
    "EnvConfig",
    "make_env",
    "build_argument",
    "build_argument_batch",
    "reward",
    "reward_terms",
    "initial_state",
    "apply_control",
]

CURRENT = "current"
GLOBAL = "global"
RESIDUAL = "residual"

# rad/s per argument unit; the reward's tracking term uses the same scale.
SPEED_SCALE_DEFAULT = 100.0
# N m of capacity torque per actor output unit.
ACTION_SCALE_DEFAULT = 150.0


@dataclass(frozen=True)
class ArgumentSpec:
    """Layout of the actor/critic input: variant plus lookahead horizon N."""

    variant: str
    horizon: int = 0

    def __post_init__(self) -> None:
        if self.variant not in (CURRENT, GLOBAL, RESIDUAL):
            raise ValueError(f"unknown argument variant {self.variant!r}")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")

    @property
    def dimension(self) -> int:
        if self.variant == CURRENT:
            return 3
        if self.variant == GLOBAL:
            return 3 + self.horizon
        return 2 + self.horizon


@dataclass(frozen=True)
class Argument:
    """Normalized input vector for actor and critic."""

    data: np.ndarray
    spec: ArgumentSpec


@dataclass(frozen=True)
class RewardParams:
    """Weights and normalization of the step reward.

    The reward is -(tracking error / speed_scale)^2
    - beta * ((t_cl - t_in) / torque_scale)^2, always <= 0.
    """

    beta: float = 0.0
    speed_scale: float = SPEED_SCALE_DEFAULT
    torque_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")
        if self.speed_scale <= 0.0 or self.torque_scale <= 0.0:
            raise ValueError("normalization scales must be positive")


def build_argument(
    spec: ArgumentSpec,
    state: DriveTrainState,
    traj: ReferenceTrajectory,
    k: int,
    speed_scale: float = SPEED_SCALE_DEFAULT,
) -> Argument:
    """Assemble the argument vector for step k (lookups clamp past the end)."""
    w_in = state.omega_in
    w_out = state.omega_out
    if not (np.all(np.isfinite(w_in)) and np.all(np.isfinite(w_out))):
        raise ValueError("non-finite state in argument construction")
    if spec.variant == CURRENT:
        data = np.array([w_out, w_in, lookup(traj, k) - w_in], dtype=float)
    elif spec.variant == GLOBAL:
        window = lookup_window(traj, k, spec.horizon)
        data = np.concatenate(([w_out, w_in], window))
    else:
        window = lookup_window(traj, k, spec.horizon)
        data = np.concatenate(([w_out], window - w_in))
    return Argument(data / speed_scale, spec)


def build_argument_batch(
    spec: ArgumentSpec,
    omega_in: np.ndarray,
    omega_out: np.ndarray,
    ref_values: np.ndarray,
    k: int,
    speed_scale: float = SPEED_SCALE_DEFAULT,
) -> np.ndarray:
    """Vectorized argument construction for R simultaneous rollouts.

    ref_values has shape (R, T) with one stored trajectory per row; the
    result has shape (R, spec.dimension).
    """
    n_rows, n_cols = ref_values.shape
    idx = np.minimum(np.arange(k, k + spec.horizon + 1), n_cols - 1)
    window = ref_values[:, idx]
    if spec.variant == CURRENT:
        ref_k = ref_values[:, min(k, n_cols - 1)]
        data = np.column_stack([omega_out, omega_in, ref_k - omega_in])
    elif spec.variant == GLOBAL:
        data = np.column_stack([omega_out, omega_in, window])
    else:
        data = np.column_stack([omega_out, window - omega_in[:, None]])
    return data / speed_scale


def reward_terms(omega_in_next, ref_next, t_cl, t_in, params: RewardParams):
    """Step reward from raw quantities; broadcasts over arrays."""
    err = (omega_in_next - ref_next) / params.speed_scale
    ctrl = (t_cl - t_in) / params.torque_scale
    return -(err * err) - params.beta * (ctrl * ctrl)


def reward(
    next_state: DriveTrainState,
    traj: ReferenceTrajectory,
    k: int,
    t_cl,
    t_in,
    params: RewardParams,
):
    """Reward for the transition taken at step k (evaluated at step k+1)."""
    out = reward_terms(next_state.omega_in, lookup(traj, k + 1), t_cl, t_in, params)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class EnvConfig:
    """Everything a closed-loop rollout needs besides the controller."""

    params: DriveTrainParams
    model: DiscreteModel
    reward: RewardParams
    speed_scale: float = SPEED_SCALE_DEFAULT
    action_scale: float = ACTION_SCALE_DEFAULT
    use_pt1: bool = False
    pt1_cutoff_hz: float = 100.0
    # omega_out starts at this fraction of the synchronous speed, leaving
    # the remaining fraction as positive slip. The clutch can only drag
    # omega_in down to ratio*omega_out, so a large slip reserve keeps the
    # whole reference band reachable.
    initial_out_speed_factor: float = 0.1


def make_env(
    params: DriveTrainParams | None = None,
    reward_params: RewardParams | None = None,
    **kwargs,
) -> EnvConfig:
    params = params if params is not None else DriveTrainParams()
    reward_params = reward_params if reward_params is not None else RewardParams()
    return EnvConfig(params=params, model=discretize(params), reward=reward_params, **kwargs)


def initial_state(env: EnvConfig, traj: ReferenceTrajectory) -> DriveTrainState:
    """Episode start: on-reference input speed, output speed below sync."""
    w0 = lookup(traj, 0)
    return DriveTrainState(w0, env.initial_out_speed_factor * w0 / env.params.ratio)


def make_episode_filter(env: EnvConfig):
    """Lag filter primed with the neutral command (t_in) for a fresh episode."""
    if not env.use_pt1:
        return None
    return make_pt1(env.pt1_cutoff_hz, env.params.dt, initial_output=env.params.t_in)


def apply_control(env: EnvConfig, state: DriveTrainState, pt1: Pt1Filter | None, t_cap):
    """Run one plant update for a capacity-torque command.

    Pipeline: sign law -> optional lag filter -> state update. Returns
    (next state, applied clutch torque, advanced filter); the applied
    torque is what the reward penalizes.
    """
    t_cl = clutch_torque(t_cap, state, env.params.ratio)
    if pt1 is not None:
        t_cl, pt1 = pt1_apply(pt1, t_cl)
    next_state = step(env.model, state, t_cl, env.params.t_in)
    return next_state, t_cl, pt1
