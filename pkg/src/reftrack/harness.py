"""Experiment orchestration and persistence.

Runs the benchmark protocol: for each controller variant, several
independent training simulations on a shared stream of training
references, periodic scoring on one held-out evaluation reference,
selection of the best actor, and a final deterministic evaluation on a
shared set of test references. Results are exported as CSV files plus a
JSON manifest.

Seed discipline: all randomness derives from the master seed through
disjoint integer subranges,

    base       = master_seed * 10_000_000
    training   = base + episode                (one reference per episode,
                                                shared by all simulations)
    evaluation = base + 2_000_000
    test       = base + 3_000_000 + ref_index
    simulation = base + 4_000_000 + sim_index  (network init and sampling)

so no trajectory can appear in two sets and identical master seeds give
byte-identical exports.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .drivetrain import DriveTrainParams, DriveTrainState, make_pt1
from .neuralnet import GaussianPolicy, forward, load_actor, save_actor
from .pi_baseline import (
    SIGN_MATCH,
    GridSpec,
    PiGains,
    RefineSpec,
    TuneResult,
    pi_rollout,
    tune,
)
from .ppo import PpoConfig, TrainingDiverged, train
from .references import (
    DISCONTINUOUS,
    OFFSET,
    SMOOTH,
    ReferenceGenConfig,
    ReferenceTrajectory,
    gen_discontinuous,
    gen_offset,
    gen_smooth,
    rad_s_to_rpm,
)
from .tracking import (
    ACTION_SCALE_DEFAULT,
    SPEED_SCALE_DEFAULT,
    ArgumentSpec,
    EnvConfig,
    RewardParams,
    apply_control,
    build_argument_batch,
    make_env,
    reward_terms,
)

__all__ = [
    "PI_VARIANT",
    "VARIANT_SPECS",
    "BETA_DISCONTINUOUS",
    "ExperimentConfig",
    "SeedPlan",
    "RunResult",
    "derive_seeds",
    "make_reference",
    "env_for",
    "rollout_batch",
    "evaluate_actor",
    "run_variant",
    "run_experiment",
    "export",
    "export_references",
    "apply_preset",
    "config_to_flat",
    "config_from_flat",
    "save_config",
    "load_config",
]

PI_VARIANT = "PI"

VARIANT_SPECS = {
    "CPPO": ArgumentSpec("current", 0),
    "GPPO1": ArgumentSpec("global", 1),
    "GPPO3": ArgumentSpec("global", 3),
    "RPPO1": ArgumentSpec("residual", 1),
    "RPPO3": ArgumentSpec("residual", 3),
}

EXPERIMENT_ALIASES = {"jumps": DISCONTINUOUS}
GENERATORS = {SMOOTH: gen_smooth, DISCONTINUOUS: gen_discontinuous, OFFSET: gen_offset}

# Control-effort weight used only for the discontinuity experiment.
BETA_DISCONTINUOUS = 1.0 / 3000.0

_SEED_SPAN = 10_000_000
_EVAL_OFFSET = 2_000_000
_TEST_OFFSET = 3_000_000
_SIM_OFFSET = 4_000_000


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one experiment run."""

    experiment: str = SMOOTH
    variants: tuple[str, ...] = ("CPPO", "GPPO1", "RPPO1", "PI")
    seeds: int = 15
    eval_every: int = 10
    test_refs: int = 100
    master_seed: int = 0
    jobs: int = 1
    save_all_checkpoints: bool = False
    drive: DriveTrainParams = field(default_factory=DriveTrainParams)
    refgen: ReferenceGenConfig = field(default_factory=ReferenceGenConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    speed_scale: float = SPEED_SCALE_DEFAULT
    action_scale: float = ACTION_SCALE_DEFAULT
    torque_scale: float = 1.0
    initial_out_speed_factor: float = 0.1
    pt1_cutoff_hz: float = 100.0
    pi_grid: GridSpec = field(default_factory=GridSpec)
    pi_refine: RefineSpec = field(default_factory=RefineSpec)
    pi_mode: str = SIGN_MATCH

    def __post_init__(self) -> None:
        experiment = EXPERIMENT_ALIASES.get(self.experiment, self.experiment)
        if experiment not in GENERATORS:
            raise ValueError(f"unknown experiment class {self.experiment!r}")
        object.__setattr__(self, "experiment", experiment)
        for variant in self.variants:
            if variant != PI_VARIANT and variant not in VARIANT_SPECS:
                raise ValueError(f"unknown variant {variant!r}")
        if len(set(self.variants)) != len(self.variants):
            raise ValueError("duplicate variants")
        if self.seeds < 1 or self.test_refs < 1 or self.eval_every < 1 or self.jobs < 1:
            raise ValueError("seeds, test_refs, eval_every and jobs must be >= 1")
        if self.seeds > 1_000_000 or self.test_refs > 1_000_000:
            raise ValueError("seed subranges support at most 1e6 entries")
        if self.ppo.episodes > 1_000_000:
            raise ValueError("seed subranges support at most 1e6 episodes")

    def resolved_refgen(self) -> ReferenceGenConfig:
        """Reference generator aligned with the episode length and horizons."""
        horizons = [
            VARIANT_SPECS[v].horizon for v in self.variants if v != PI_VARIANT
        ]
        pad = max([self.refgen.horizon_pad, *horizons, 1])
        return replace(
            self.refgen,
            episode_len=self.ppo.steps_per_episode,
            horizon_pad=pad,
        )


@dataclass(frozen=True)
class SeedPlan:
    train_seeds: tuple[int, ...]
    eval_seed: int
    test_seeds: tuple[int, ...]
    sim_seeds: tuple[int, ...]

    def all_disjoint(self) -> bool:
        groups = [set(self.train_seeds), {self.eval_seed}, set(self.test_seeds), set(self.sim_seeds)]
        total = sum(len(g) for g in groups)
        return len(set().union(*groups)) == total


def derive_seeds(cfg: ExperimentConfig) -> SeedPlan:
    base = cfg.master_seed * _SEED_SPAN
    plan = SeedPlan(
        train_seeds=tuple(base + e for e in range(cfg.ppo.episodes)),
        eval_seed=base + _EVAL_OFFSET,
        test_seeds=tuple(base + _TEST_OFFSET + j for j in range(cfg.test_refs)),
        sim_seeds=tuple(base + _SIM_OFFSET + i for i in range(cfg.seeds)),
    )
    assert plan.all_disjoint()
    return plan


def make_reference(cfg: ExperimentConfig, seed: int) -> ReferenceTrajectory:
    return GENERATORS[cfg.experiment](cfg.resolved_refgen(), seed)


def env_for(cfg: ExperimentConfig) -> EnvConfig:
    """Environment with the class-dependent reward weight and lag filter."""
    jumps = cfg.experiment == DISCONTINUOUS
    reward_params = RewardParams(
        beta=BETA_DISCONTINUOUS if jumps else 0.0,
        speed_scale=cfg.speed_scale,
        torque_scale=cfg.torque_scale,
    )
    return make_env(
        params=cfg.drive,
        reward_params=reward_params,
        speed_scale=cfg.speed_scale,
        action_scale=cfg.action_scale,
        use_pt1=jumps,
        pt1_cutoff_hz=cfg.pt1_cutoff_hz,
        initial_out_speed_factor=cfg.initial_out_speed_factor,
    )


def rollout_batch(
    env: EnvConfig,
    policy: GaussianPolicy,
    spec: ArgumentSpec,
    trajs,
    n_steps: int,
    record: bool = False,
):
    """Deterministic mean-action rollouts over several references at once.

    Returns (episodic rewards (R,), trace). The trace, when recorded,
    holds (n_steps, R) arrays for omega_in, the reference, and the
    applied clutch torque.
    """
    trajs = list(trajs)
    ref = np.stack([t.values for t in trajs])
    n_rows, n_cols = ref.shape
    state = DriveTrainState(
        ref[:, 0].copy(),
        env.initial_out_speed_factor * ref[:, 0] / env.params.ratio,
    )
    pt1 = None
    if env.use_pt1:
        pt1 = make_pt1(
            env.pt1_cutoff_hz,
            env.params.dt,
            initial_output=np.full(n_rows, env.params.t_in),
        )
    totals = np.zeros(n_rows)
    trace = {"omega_in": [], "ref": [], "t_cl": []} if record else None
    for k in range(n_steps):
        args = build_argument_batch(
            spec, state.omega_in, state.omega_out, ref, k, env.speed_scale
        )
        mean = forward(policy.mean_net, args)[0][:, 0]
        t_cap = env.action_scale * mean
        state, t_cl, pt1 = apply_control(env, state, pt1, t_cap)
        ref_next = ref[:, min(k + 1, n_cols - 1)]
        totals += reward_terms(state.omega_in, ref_next, t_cl, env.params.t_in, env.reward)
        if record:
            trace["omega_in"].append(state.omega_in.copy())
            trace["ref"].append(ref[:, min(k, n_cols - 1)].copy())
            trace["t_cl"].append(np.asarray(t_cl, dtype=float).copy())
    if record:
        trace = {key: np.stack(val) for key, val in trace.items()}
    return totals, trace


def evaluate_actor(
    actor,
    spec: ArgumentSpec,
    test_trajs,
    env: EnvConfig,
    n_steps: int,
) -> np.ndarray:
    """Episodic rewards of a trained actor (or checkpoint path) per reference."""
    policy = load_actor(actor) if isinstance(actor, (str, os.PathLike)) else actor
    if policy.mean_net.in_dim != spec.dimension:
        raise ValueError(
            f"checkpoint input dimension {policy.mean_net.in_dim} does not match "
            f"argument dimension {spec.dimension}"
        )
    with threadpool_limits(limits=1):
        rewards, _ = rollout_batch(env, policy, spec, test_trajs, n_steps)
    return rewards


@dataclass
class RunResult:
    """Outcome of one variant on one experiment."""

    variant: str
    experiment: str
    per_seed_curves: dict
    best_episodes: dict
    per_seed_test: dict
    failed_seeds: list
    mean: float
    std: float
    median: float
    pi_gains: PiGains | None = None
    pi_report: dict | None = None
    checkpoints: dict = field(default_factory=dict)

    @property
    def n_seeds_ok(self) -> int:
        return len(self.per_seed_test)

    def pooled_test_rewards(self) -> np.ndarray:
        keys = sorted(self.per_seed_test)
        return np.concatenate([self.per_seed_test[k] for k in keys])

    def recompute_summary(self) -> tuple[float, float, float]:
        pooled = self.pooled_test_rewards()
        return float(pooled.mean()), float(pooled.std()), float(np.median(pooled))


def _summarize(variant, experiment, curves, bests, tests, failed, **kw) -> RunResult:
    pooled = np.concatenate([tests[k] for k in sorted(tests)]) if tests else np.array([np.nan])
    return RunResult(
        variant=variant,
        experiment=experiment,
        per_seed_curves=curves,
        best_episodes=bests,
        per_seed_test=tests,
        failed_seeds=failed,
        mean=float(pooled.mean()),
        std=float(pooled.std()),
        median=float(np.median(pooled)),
        **kw,
    )


@dataclass
class _SeedOutcome:
    sim_index: int
    curve: list
    best_episode: int
    best_actor: GaussianPolicy | None
    test_rewards: np.ndarray | None
    error: str | None = None


def _ppo_seed_job(args) -> _SeedOutcome:
    cfg, variant, sim_index, out_dir = args
    spec = VARIANT_SPECS[variant]
    env = env_for(cfg)
    plan = derive_seeds(cfg)
    rng = np.random.default_rng(plan.sim_seeds[sim_index])
    eval_traj = make_reference(cfg, plan.eval_seed)
    refs = (make_reference(cfg, s) for s in plan.train_seeds)

    on_eval = None
    if out_dir is not None and cfg.save_all_checkpoints:
        def on_eval(episode, score, policy):
            path = os.path.join(
                out_dir, f"checkpoint_{variant}_seed{sim_index}_ep{episode}.npz"
            )
            save_actor(path, policy)

    with threadpool_limits(limits=1):
        try:
            run = train(
                cfg.ppo,
                spec,
                env,
                refs,
                rng,
                eval_traj=eval_traj,
                eval_every=cfg.eval_every,
                on_eval=on_eval,
            )
        except TrainingDiverged as exc:
            return _SeedOutcome(sim_index, [], 0, None, None, error=str(exc))
        test_trajs = [make_reference(cfg, s) for s in plan.test_seeds]
        rewards, _ = rollout_batch(
            env, run.best_actor, spec, test_trajs, cfg.ppo.steps_per_episode
        )
    return _SeedOutcome(sim_index, run.curve, run.best_episode, run.best_actor, rewards)


def _run_ppo_variant(cfg: ExperimentConfig, variant: str, out_dir) -> RunResult:
    jobs = [(cfg, variant, i, out_dir) for i in range(cfg.seeds)]
    workers = min(cfg.jobs, cfg.seeds)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_ppo_seed_job, jobs))
    else:
        outcomes = [_ppo_seed_job(job) for job in jobs]
    outcomes.sort(key=lambda o: o.sim_index)

    curves, bests, tests, failed, checkpoints = {}, {}, {}, [], {}
    for out in outcomes:
        if out.error is not None:
            failed.append(out.sim_index)
            continue
        curves[out.sim_index] = out.curve
        bests[out.sim_index] = out.best_episode
        tests[out.sim_index] = out.test_rewards
        if out_dir is not None:
            path = os.path.join(out_dir, f"best_actor_{variant}_seed{out.sim_index}.npz")
            save_actor(path, out.best_actor)
            checkpoints[out.sim_index] = path
    if not tests:
        raise TrainingDiverged(0, f"every seed of variant {variant} diverged")
    return _summarize(
        variant, cfg.experiment, curves, bests, tests, failed, checkpoints=checkpoints
    )


def _run_pi_variant(cfg: ExperimentConfig, variant: str, out_dir) -> RunResult:
    env = env_for(cfg)
    plan = derive_seeds(cfg)
    steps = cfg.ppo.steps_per_episode
    with threadpool_limits(limits=1):
        train_trajs = [make_reference(cfg, s) for s in plan.train_seeds]
        result = tune(train_trajs, env, cfg.pi_grid, cfg.pi_refine, steps, cfg.pi_mode)
        test_trajs = [make_reference(cfg, s) for s in plan.test_seeds]
        rewards, _ = pi_rollout(env, result.gains, test_trajs, steps, cfg.pi_mode)
    return _summarize(
        variant,
        cfg.experiment,
        {},
        {},
        {0: rewards},
        [],
        pi_gains=result.gains,
        pi_report=result.to_report(),
    )


def run_variant(cfg: ExperimentConfig, variant: str, out_dir=None) -> RunResult:
    """Full protocol for one variant: train/tune, select, test, summarize."""
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    if variant == PI_VARIANT:
        return _run_pi_variant(cfg, variant, out_dir)
    return _run_ppo_variant(cfg, variant, out_dir)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> list[RunResult]:
    """Run every configured variant and export the results."""
    results = [run_variant(cfg, v, out_dir) for v in cfg.variants]
    if out_dir is not None:
        export(results, cfg, out_dir)
    return results


# ---------------------------------------------------------------------------
# export


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def export(results, cfg: ExperimentConfig, out_dir) -> dict:
    """Write summary, learning curves, trajectory dumps, and the manifest.

    Returns the paths of the written files keyed by kind.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    summary_path = os.path.join(out_dir, "summary.csv")
    lines = ["variant,mean_episodic_reward,std_episodic_reward,median_episodic_reward,n_test_rewards,n_seeds_ok,n_seeds_failed"]
    for res in results:
        pooled = res.pooled_test_rewards()
        lines.append(
            ",".join(
                [
                    res.variant,
                    _fmt(res.mean),
                    _fmt(res.std),
                    _fmt(res.median),
                    str(pooled.size),
                    str(res.n_seeds_ok),
                    str(len(res.failed_seeds)),
                ]
            )
        )
    _write_text(summary_path, lines)
    paths["summary"] = summary_path

    for res in results:
        for sim_index, curve in res.per_seed_curves.items():
            curve_path = os.path.join(
                out_dir, f"curve_{res.variant}_seed{sim_index}.csv"
            )
            rows = ["episode,eval_reward"]
            rows += [f"{ep},{_fmt(score)}" for ep, score in curve]
            _write_text(curve_path, rows)
            paths[f"curve_{res.variant}_{sim_index}"] = curve_path

    trajectory_paths = _export_trajectories(results, cfg, out_dir)
    paths.update(trajectory_paths)

    for res in results:
        if res.pi_report is not None:
            report_path = os.path.join(out_dir, f"pi_tuning_{cfg.experiment}.json")
            with open(report_path, "w") as fh:
                json.dump(res.pi_report, fh, indent=2, sort_keys=True)
            paths["pi_report"] = report_path

    manifest_path = os.path.join(out_dir, "manifest.json")
    plan = derive_seeds(cfg)
    manifest = {
        "version": __version__,
        "config": config_to_flat(cfg),
        "seed_plan": {
            "train_seeds": [plan.train_seeds[0], plan.train_seeds[-1]],
            "eval_seed": plan.eval_seed,
            "test_seeds": [plan.test_seeds[0], plan.test_seeds[-1]],
            "sim_seeds": [plan.sim_seeds[0], plan.sim_seeds[-1]],
        },
        "results": {
            res.variant: {
                "mean": res.mean,
                "std": res.std,
                "median": res.median,
                "n_seeds_ok": res.n_seeds_ok,
                "failed_seeds": res.failed_seeds,
                "best_episodes": res.best_episodes,
            }
            for res in results
        },
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    paths["manifest"] = manifest_path
    return paths


def _export_trajectories(results, cfg: ExperimentConfig, out_dir) -> dict:
    """Dump one illustrative test rollout (first test reference) per variant."""
    env = env_for(cfg)
    plan = derive_seeds(cfg)
    first_test = make_reference(cfg, plan.test_seeds[0])
    steps = cfg.ppo.steps_per_episode
    paths = {}
    for res in results:
        if res.variant == PI_VARIANT:
            if res.pi_gains is None:
                continue
            _, trace = pi_rollout(
                env, res.pi_gains, [first_test], steps, cfg.pi_mode, record=True
            )
        else:
            seeds_ok = sorted(res.per_seed_test)
            if not seeds_ok or not res.checkpoints:
                continue
            actor = load_actor(res.checkpoints[seeds_ok[0]])
            _, trace = rollout_batch(
                env, actor, VARIANT_SPECS[res.variant], [first_test], steps, record=True
            )
        rows = ["step,omega_in_rpm,ref_rpm,t_cl_nm"]
        for k in range(steps):
            rows.append(
                f"{k},{_fmt(rad_s_to_rpm(trace['omega_in'][k, 0]))},"
                f"{_fmt(rad_s_to_rpm(trace['ref'][k, 0]))},{_fmt(trace['t_cl'][k, 0])}"
            )
        path = os.path.join(out_dir, f"trajectory_{res.variant}.csv")
        _write_text(path, rows)
        paths[f"trajectory_{res.variant}"] = path
    return paths


def export_references(cfg: ExperimentConfig, count: int, path) -> None:
    """Write `count` seeded references of the configured class as CSV."""
    plan = derive_seeds(cfg)
    rows = ["ref_seed,step,rpm"]
    for seed in plan.test_seeds[:count]:
        traj = make_reference(cfg, seed)
        for k, value in enumerate(traj.values):
            rows.append(f"{seed},{k},{_fmt(rad_s_to_rpm(value))}")
    _write_text(path, rows)


def _write_text(path, lines) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# configuration files (flat YAML key/value document)


def apply_preset(cfg: ExperimentConfig, preset: str) -> ExperimentConfig:
    """desk: CI-sized protocol; full: the complete benchmark protocol."""
    if preset == "desk":
        return replace(
            cfg,
            seeds=3,
            ppo=replace(cfg.ppo, episodes=500, epochs_per_episode=50),
        )
    if preset == "full":
        return replace(
            cfg,
            seeds=15,
            ppo=replace(cfg.ppo, episodes=2000, epochs_per_episode=100),
        )
    raise ValueError(f"unknown preset {preset!r}")


def config_to_flat(cfg: ExperimentConfig) -> dict:
    """Flatten the nested config into scalar-valued keys."""
    return {
        "experiment": cfg.experiment,
        "variants": list(cfg.variants),
        "seeds": cfg.seeds,
        "eval_every": cfg.eval_every,
        "test_refs": cfg.test_refs,
        "master_seed": cfg.master_seed,
        "jobs": cfg.jobs,
        "save_all_checkpoints": cfg.save_all_checkpoints,
        # drive train
        "j_in": cfg.drive.j_in,
        "j_out": cfg.drive.j_out,
        "ratio": cfg.drive.ratio,
        "t_in": cfg.drive.t_in,
        "eta": cfg.drive.eta,
        "dt": cfg.drive.dt,
        # reference generators
        "horizon_pad": cfg.refgen.horizon_pad,
        "mean_rpm": cfg.refgen.mean_rpm,
        "knot_count": cfg.refgen.knot_count,
        "knot_spread_rpm": cfg.refgen.knot_spread_rpm,
        "jump_count_min": cfg.refgen.jump_count_min,
        "jump_count_max": cfg.refgen.jump_count_max,
        "square_amp_rpm": cfg.refgen.square_amp_rpm,
        "offsets_rpm": list(cfg.refgen.offsets_rpm),
        # training
        "gamma": cfg.ppo.gamma,
        "gae_lambda": cfg.ppo.gae_lambda,
        "clip": cfg.ppo.clip,
        "entropy_coef": cfg.ppo.entropy_coef,
        "lr_actor": cfg.ppo.lr_actor,
        "lr_critic": cfg.ppo.lr_critic,
        "batch_size": cfg.ppo.batch_size,
        "buffer_capacity": cfg.ppo.buffer_capacity,
        "target_tau": cfg.ppo.target_tau,
        "target_period": cfg.ppo.target_period,
        "episodes": cfg.ppo.episodes,
        "steps_per_episode": cfg.ppo.steps_per_episode,
        "epochs_per_episode": cfg.ppo.epochs_per_episode,
        "hidden_sizes": list(cfg.ppo.hidden_sizes),
        "initial_std_nm": cfg.ppo.initial_std_nm,
        "advantage_norm": cfg.ppo.advantage_norm,
        "bootstrap_time_limit": cfg.ppo.bootstrap_time_limit,
        # normalization / environment
        "speed_scale": cfg.speed_scale,
        "action_scale": cfg.action_scale,
        "torque_scale": cfg.torque_scale,
        "initial_out_speed_factor": cfg.initial_out_speed_factor,
        "pt1_cutoff_hz": cfg.pt1_cutoff_hz,
        # PI tuning
        "pi_kp_min": cfg.pi_grid.kp_min,
        "pi_kp_max": cfg.pi_grid.kp_max,
        "pi_ki_min": cfg.pi_grid.ki_min,
        "pi_ki_max": cfg.pi_grid.ki_max,
        "pi_kp_points": cfg.pi_grid.kp_points,
        "pi_ki_points": cfg.pi_grid.ki_points,
        "pi_refine_enabled": cfg.pi_refine.enabled,
        "pi_fd_step": cfg.pi_refine.fd_step,
        "pi_refine_max_iter": cfg.pi_refine.max_iter,
        "pi_mode": cfg.pi_mode,
    }


def config_from_flat(flat: dict) -> ExperimentConfig:
    """Inverse of config_to_flat; unknown keys are an error."""
    known = set(config_to_flat(ExperimentConfig()))
    unknown = set(flat) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    def get(key, default):
        return flat.get(key, default)

    base = ExperimentConfig()
    drive = DriveTrainParams(
        j_in=get("j_in", base.drive.j_in),
        j_out=get("j_out", base.drive.j_out),
        ratio=get("ratio", base.drive.ratio),
        t_in=get("t_in", base.drive.t_in),
        eta=get("eta", base.drive.eta),
        dt=get("dt", base.drive.dt),
    )
    refgen = ReferenceGenConfig(
        episode_len=get("steps_per_episode", base.ppo.steps_per_episode),
        horizon_pad=get("horizon_pad", base.refgen.horizon_pad),
        mean_rpm=get("mean_rpm", base.refgen.mean_rpm),
        knot_count=get("knot_count", base.refgen.knot_count),
        knot_spread_rpm=get("knot_spread_rpm", base.refgen.knot_spread_rpm),
        jump_count_min=get("jump_count_min", base.refgen.jump_count_min),
        jump_count_max=get("jump_count_max", base.refgen.jump_count_max),
        square_amp_rpm=get("square_amp_rpm", base.refgen.square_amp_rpm),
        offsets_rpm=tuple(get("offsets_rpm", base.refgen.offsets_rpm)),
    )
    ppo = PpoConfig(
        gamma=get("gamma", base.ppo.gamma),
        gae_lambda=get("gae_lambda", base.ppo.gae_lambda),
        clip=get("clip", base.ppo.clip),
        entropy_coef=get("entropy_coef", base.ppo.entropy_coef),
        lr_actor=get("lr_actor", base.ppo.lr_actor),
        lr_critic=get("lr_critic", base.ppo.lr_critic),
        batch_size=get("batch_size", base.ppo.batch_size),
        buffer_capacity=get("buffer_capacity", base.ppo.buffer_capacity),
        target_tau=get("target_tau", base.ppo.target_tau),
        target_period=get("target_period", base.ppo.target_period),
        episodes=get("episodes", base.ppo.episodes),
        steps_per_episode=get("steps_per_episode", base.ppo.steps_per_episode),
        epochs_per_episode=get("epochs_per_episode", base.ppo.epochs_per_episode),
        hidden_sizes=tuple(get("hidden_sizes", base.ppo.hidden_sizes)),
        initial_std_nm=get("initial_std_nm", base.ppo.initial_std_nm),
        advantage_norm=get("advantage_norm", base.ppo.advantage_norm),
        bootstrap_time_limit=get("bootstrap_time_limit", base.ppo.bootstrap_time_limit),
    )
    return ExperimentConfig(
        experiment=get("experiment", base.experiment),
        variants=tuple(get("variants", base.variants)),
        seeds=get("seeds", base.seeds),
        eval_every=get("eval_every", base.eval_every),
        test_refs=get("test_refs", base.test_refs),
        master_seed=get("master_seed", base.master_seed),
        jobs=get("jobs", base.jobs),
        save_all_checkpoints=get("save_all_checkpoints", base.save_all_checkpoints),
        drive=drive,
        refgen=refgen,
        ppo=ppo,
        speed_scale=get("speed_scale", base.speed_scale),
        action_scale=get("action_scale", base.action_scale),
        torque_scale=get("torque_scale", base.torque_scale),
        initial_out_speed_factor=get(
            "initial_out_speed_factor", base.initial_out_speed_factor
        ),
        pt1_cutoff_hz=get("pt1_cutoff_hz", base.pt1_cutoff_hz),
        pi_grid=GridSpec(
            kp_min=get("pi_kp_min", base.pi_grid.kp_min),
            kp_max=get("pi_kp_max", base.pi_grid.kp_max),
            ki_min=get("pi_ki_min", base.pi_grid.ki_min),
            ki_max=get("pi_ki_max", base.pi_grid.ki_max),
            kp_points=get("pi_kp_points", base.pi_grid.kp_points),
            ki_points=get("pi_ki_points", base.pi_grid.ki_points),
        ),
        pi_refine=RefineSpec(
            enabled=get("pi_refine_enabled", base.pi_refine.enabled),
            fd_step=get("pi_fd_step", base.pi_refine.fd_step),
            max_iter=get("pi_refine_max_iter", base.pi_refine.max_iter),
        ),
        pi_mode=get("pi_mode", base.pi_mode),
    )


def save_config(cfg: ExperimentConfig, path) -> None:
    import yaml

    with open(path, "w") as fh:
        fh.write("# reftrack experiment configuration (flat key/value document)\n")
        fh.write("# the reward weight beta and the lag filter are forced by the\n")
        fh.write("# experiment class: jumps -> beta=1/3000 and the filter on,\n")
        fh.write("# smooth/offset -> beta=0 and the filter off.\n")
        yaml.safe_dump(config_to_flat(cfg), fh, sort_keys=False)


def load_config(path) -> ExperimentConfig:
    import yaml

    with open(path) as fh:
        flat = yaml.safe_load(fh)
    if flat is None:
        flat = {}
    if not isinstance(flat, dict):
        raise ValueError(f"config file {path} must hold a flat mapping")
    return config_from_flat(flat)
