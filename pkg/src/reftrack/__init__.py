"""Reference-tracking control laboratory.

A clutch drive-train simulator, policy-gradient controllers whose inputs
carry future reference information (in global or residual form), an
auto-tuned PI baseline, and a seeded experiment harness that benchmarks
them against each other on three reference classes.
"""

__version__ = "0.1.0"

from .drivetrain import (
    DiscreteModel,
    DriveTrainParams,
    DriveTrainState,
    Pt1Filter,
    clutch_torque,
    discretize,
    make_pt1,
    pt1_apply,
    slip,
    step,
)
from .references import (
    ReferenceGenConfig,
    ReferenceTrajectory,
    cubic_spline_eval,
    gen_discontinuous,
    gen_offset,
    gen_smooth,
    lookup,
    rad_s_to_rpm,
    rpm_to_rad_s,
)
from .tracking import (
    Argument,
    ArgumentSpec,
    EnvConfig,
    RewardParams,
    build_argument,
    make_env,
    reward,
)
from .neuralnet import (
    GaussianPolicy,
    Mlp,
    backward,
    forward,
    load_actor,
    make_policy,
    policy_entropy,
    policy_logprob,
    policy_sample,
    save_actor,
    sgd_ascend,
)
from .ppo import (
    PpoConfig,
    ReplayBuffer,
    TrainingDiverged,
    Transition,
    collect_episode,
    clipped_surrogate,
    critic_update,
    gae,
    rollout_episode,
    target_soft_update,
    td_error,
    train,
)
from .pi_baseline import GridSpec, PiGains, PiState, RefineSpec, episodic_cost, pi_step, tune
from .harness import (
    ExperimentConfig,
    RunResult,
    apply_preset,
    evaluate_actor,
    export,
    load_config,
    run_experiment,
    run_variant,
    save_config,
)
