"""Discrete PI controller on the input-speed error, with automated tuning.

The PI law produces a signed clutch-torque request from the error
omega_in - omega_ref (positive when the input shaft runs too fast, so a
positive request brakes). The clutch can only realize a torque whose
sign matches the slip, so by default the request maps to a capacity
torque only when the signs agree and to zero otherwise; a simpler
clamp-negative-to-zero mapping is selectable.

Tuning minimizes the mean episodic cost (negated episodic reward) over a
set of reference trajectories: a coarse grid search locates the basin,
then a BFGS refinement with central finite-difference gradients polishes
the optimum. Refinement never regresses; if it fails to improve on the
grid the grid optimum is returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .drivetrain import DriveTrainState, make_pt1, slip
from .references import ReferenceTrajectory
from .tracking import EnvConfig, apply_control, reward_terms

__all__ = [
    "SIGN_MATCH",
    "CLAMP",
    "PiGains",
    "PiState",
    "GridSpec",
    "RefineSpec",
    "TuneResult",
    "pi_step",
    "request_to_capacity",
    "pi_rollout",
    "episodic_cost",
    "minimize_cost_2d",
    "tune",
]

SIGN_MATCH = "sign-match"
CLAMP = "clamp"


@dataclass(frozen=True)
class PiGains:
    k_p: float
    k_i: float


@dataclass(frozen=True)
class PiState:
    """Accumulated error * time; reset to zero at episode start."""

    error_integral: float = 0.0


@dataclass(frozen=True)
class GridSpec:
    """Search box for the coarse grid (nonnegative gains)."""

    kp_min: float = 0.0
    kp_max: float = 50.0
    ki_min: float = 0.0
    ki_max: float = 25.0
    kp_points: int = 20
    ki_points: int = 20

    def __post_init__(self) -> None:
        if self.kp_min < 0 or self.ki_min < 0:
            raise ValueError("gain search box must be nonnegative")
        if self.kp_max <= self.kp_min or self.ki_max <= self.ki_min:
            raise ValueError("grid box must have positive extent")
        if self.kp_points < 2 or self.ki_points < 2:
            raise ValueError("need at least 2 grid points per axis")


@dataclass(frozen=True)
class RefineSpec:
    enabled: bool = True
    fd_step: float = 1e-3
    max_iter: int = 100


@dataclass
class TuneResult:
    gains: PiGains
    cost: float
    grid_kp: np.ndarray
    grid_ki: np.ndarray
    grid_costs: np.ndarray
    grid_best: PiGains
    grid_best_cost: float
    refine_path: list
    fell_back: bool

    def to_report(self) -> dict:
        return {
            "gains": {"k_p": self.gains.k_p, "k_i": self.gains.k_i},
            "cost": self.cost,
            "grid_kp": self.grid_kp.tolist(),
            "grid_ki": self.grid_ki.tolist(),
            "grid_costs": self.grid_costs.tolist(),
            "grid_best": {"k_p": self.grid_best.k_p, "k_i": self.grid_best.k_i},
            "grid_best_cost": self.grid_best_cost,
            "refine_path": self.refine_path,
            "fell_back": self.fell_back,
        }


def pi_step(state: PiState, error, gains: PiGains, dt: float):
    """Advance the integrator and emit the signed torque request."""
    integral = state.error_integral + error * dt
    command = gains.k_p * error + gains.k_i * integral
    return command, PiState(integral)


def request_to_capacity(request, slip_value, mode: str = SIGN_MATCH):
    """Map a signed torque request onto the nonnegative capacity torque.

    sign-match: realize the request exactly when its sign agrees with
    the slip (sign(0) counts as positive), otherwise disengage.
    clamp: treat max(request, 0) directly as the capacity torque.
    """
    request = np.asarray(request, dtype=float)
    if mode == SIGN_MATCH:
        slip_sign = np.where(np.asarray(slip_value) >= 0.0, 1.0, -1.0)
        out = np.where(request * slip_sign > 0.0, np.abs(request), 0.0)
    elif mode == CLAMP:
        out = np.maximum(request, 0.0)
    else:
        raise ValueError(f"unknown request mapping {mode!r}")
    return float(out) if out.ndim == 0 else out


def pi_rollout(
    env: EnvConfig,
    gains: PiGains,
    trajs,
    n_steps: int,
    mode: str = SIGN_MATCH,
    record: bool = False,
):
    """Closed-loop PI rollout, vectorized over a list of references.

    Returns (episodic rewards, trace); the trace holds per-step arrays
    (omega_in, ref, t_cl) when record is set, else None. Unstable gains
    may overflow to huge costs, which is the desired tuning signal.
    """
    trajs = list(trajs)
    ref = np.stack([t.values for t in trajs])  # (R, T)
    n_rows, n_cols = ref.shape
    state = DriveTrainState(
        ref[:, 0].copy(),
        env.initial_out_speed_factor * ref[:, 0] / env.params.ratio,
    )
    pist = PiState(np.zeros(n_rows))
    pt1 = None
    if env.use_pt1:
        pt1 = make_pt1(
            env.pt1_cutoff_hz,
            env.params.dt,
            initial_output=np.full(n_rows, env.params.t_in),
        )
    totals = np.zeros(n_rows)
    trace = {"omega_in": [], "ref": [], "t_cl": []} if record else None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            error = state.omega_in - ref[:, min(k, n_cols - 1)]
            request, pist = pi_step(pist, error, gains, env.params.dt)
            t_cap = request_to_capacity(request, slip(state, env.params.ratio), mode)
            state, t_cl, pt1 = apply_control(env, state, pt1, t_cap)
            ref_next = ref[:, min(k + 1, n_cols - 1)]
            totals += reward_terms(state.omega_in, ref_next, t_cl, env.params.t_in, env.reward)
            if record:
                trace["omega_in"].append(state.omega_in.copy())
                trace["ref"].append(ref[:, min(k, n_cols - 1)].copy())
                trace["t_cl"].append(np.asarray(t_cl).copy())
    if record:
        trace = {key: np.stack(val) for key, val in trace.items()}
    return totals, trace


def episodic_cost(
    gains: PiGains,
    refs,
    env: EnvConfig,
    n_steps: int,
    mode: str = SIGN_MATCH,
) -> float:
    """Mean over references of the negated episodic reward (lower is better)."""
    refs = list(refs)
    if not refs:
        raise ValueError("need at least one reference")
    rewards, _ = pi_rollout(env, gains, refs, n_steps, mode)
    cost = float(np.mean(-rewards))
    return cost if np.isfinite(cost) else 1e300


def _central_diff_grad(fun, h: float):
    def grad(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h
            g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
        return g

    return grad


def minimize_cost_2d(cost_fn, grid: GridSpec, refine: RefineSpec):
    """Grid search over the box, then BFGS from the best vertex.

    cost_fn maps (k_p, k_i) to a scalar cost. Returns (best point as an
    array, info dict with the grid, the refinement path, and a fallback
    flag set when refinement did not improve on the grid).
    """
    kp = np.linspace(grid.kp_min, grid.kp_max, grid.kp_points)
    ki = np.linspace(grid.ki_min, grid.ki_max, grid.ki_points)
    costs = np.array([[cost_fn((p, i)) for i in ki] for p in kp])
    i0, j0 = np.unravel_index(np.argmin(costs), costs.shape)
    x0 = np.array([kp[i0], ki[j0]])
    c0 = costs[i0, j0]
    info = {
        "grid_kp": kp,
        "grid_ki": ki,
        "grid_costs": costs,
        "grid_best": x0.copy(),
        "grid_best_cost": float(c0),
        "path": [x0.tolist()],
        "fell_back": False,
    }
    if not refine.enabled:
        info["cost"] = float(c0)
        return x0, info

    def guarded(x):
        value = cost_fn(tuple(x))
        return value if np.isfinite(value) else 1e300

    result = scipy_minimize(
        guarded,
        x0,
        jac=_central_diff_grad(guarded, refine.fd_step),
        method="BFGS",
        callback=lambda xk: info["path"].append(np.asarray(xk).tolist()),
        options={"maxiter": refine.max_iter},
    )
    if np.isfinite(result.fun) and result.fun <= c0:
        info["cost"] = float(result.fun)
        return np.asarray(result.x, dtype=float), info
    info["fell_back"] = True
    info["cost"] = float(c0)
    return x0, info


def tune(
    refs,
    env: EnvConfig,
    grid: GridSpec | None = None,
    refine: RefineSpec | None = None,
    n_steps: int = 100,
    mode: str = SIGN_MATCH,
) -> TuneResult:
    """Fit PI gains by episodic-cost minimization over the given references."""
    grid = grid if grid is not None else GridSpec()
    refine = refine if refine is not None else RefineSpec()
    refs = list(refs)
    best, info = minimize_cost_2d(
        lambda xy: episodic_cost(PiGains(xy[0], xy[1]), refs, env, n_steps, mode),
        grid,
        refine,
    )
    return TuneResult(
        gains=PiGains(float(best[0]), float(best[1])),
        cost=info["cost"],
        grid_kp=info["grid_kp"],
        grid_ki=info["grid_ki"],
        grid_costs=info["grid_costs"],
        grid_best=PiGains(float(info["grid_best"][0]), float(info["grid_best"][1])),
        grid_best_cost=info["grid_best_cost"],
        refine_path=info["path"],
        fell_back=info["fell_back"],
    )
