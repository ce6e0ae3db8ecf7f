"""Clipped-surrogate policy optimization with a replay buffer.

Training follows a fixed cadence: collect one episode with the current
stochastic policy, then run a number of epochs, each sampling a batch
from the replay buffer and performing, in order, one critic regression
step against a slowly tracking target critic, a fresh TD(0)/GAE
advantage computation with the just-updated critic, and one ascent step
on the clipped surrogate with entropy bonus. The target critic is
blended toward the critic every `target_period` epochs.

Buffered samples keep the behavior policy's log-probability from
collection time; the probability ratio in the surrogate is measured
against it, and clipping bounds how far replayed (possibly stale)
samples can push the policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .neuralnet import (
    GaussianPolicy,
    Mlp,
    MlpGrads,
    backward,
    forward,
    make_critic_net,
    make_policy,
    policy_entropy,
    policy_mean,
    policy_sample_logprob,
    sgd_ascend,
)
from .references import ReferenceTrajectory
from .tracking import (
    ArgumentSpec,
    EnvConfig,
    build_argument,
    initial_state,
    make_episode_filter,
    apply_control,
    reward,
)

__all__ = [
    "Transition",
    "ReplayBuffer",
    "Batch",
    "PpoConfig",
    "TrainingRun",
    "TrainingDiverged",
    "td_error",
    "gae",
    "clipped_surrogate",
    "critic_update",
    "target_soft_update",
    "collect_episode",
    "rollout_episode",
    "train",
]


@dataclass(frozen=True)
class Transition:
    """One step of experience; `s` and `s_next` are argument vectors."""

    s: np.ndarray
    u: float
    r: float
    s_next: np.ndarray
    logp_old: float
    done: bool


@dataclass
class Batch:
    """Column view of sampled transitions."""

    s: np.ndarray        # (L, d)
    u: np.ndarray        # (L,)
    r: np.ndarray        # (L,)
    s_next: np.ndarray   # (L, d)
    logp_old: np.ndarray # (L,)
    done: np.ndarray     # (L,) float mask, 1.0 at episode-final steps

    def __len__(self) -> int:
        return self.u.size


class ReplayBuffer:
    """Fixed-capacity ring of transitions with FIFO eviction."""

    def __init__(self, capacity: int = 10000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._arrays = None
        self._head = 0
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def push(self, tr: Transition) -> None:
        if not math.isfinite(tr.logp_old):
            raise ValueError("transition log-probability must be finite")
        if tr.r > 0.0:
            raise ValueError("rewards are nonpositive by construction")
        if self._arrays is None:
            d = tr.s.size
            self._arrays = {
                "s": np.empty((self.capacity, d)),
                "u": np.empty(self.capacity),
                "r": np.empty(self.capacity),
                "s_next": np.empty((self.capacity, d)),
                "logp_old": np.empty(self.capacity),
                "done": np.empty(self.capacity),
            }
        a = self._arrays
        i = self._head
        a["s"][i] = tr.s
        a["u"][i] = tr.u
        a["r"][i] = tr.r
        a["s_next"][i] = tr.s_next
        a["logp_old"][i] = tr.logp_old
        a["done"][i] = 1.0 if tr.done else 0.0
        self._head = (i + 1) % self.capacity
        self._count = min(self._count + 1, self.capacity)

    def extend(self, transitions) -> None:
        for tr in transitions:
            self.push(tr)

    def sample(self, rng: np.random.Generator, batch_size: int) -> Batch:
        """Uniform sample without replacement, at most the stored count."""
        if self._count == 0:
            raise ValueError("cannot sample from an empty buffer")
        size = min(batch_size, self._count)
        idx = rng.choice(self._count, size=size, replace=False)
        a = self._arrays
        return Batch(
            s=a["s"][idx].copy(),
            u=a["u"][idx].copy(),
            r=a["r"][idx].copy(),
            s_next=a["s_next"][idx].copy(),
            logp_old=a["logp_old"][idx].copy(),
            done=a["done"][idx].copy(),
        )


@dataclass(frozen=True)
class PpoConfig:
    """Training constants; defaults mirror the reference configuration."""

    gamma: float = 0.7
    gae_lambda: float = 0.0
    clip: float = 0.1
    entropy_coef: float = 0.01
    lr_actor: float = 5e-5
    lr_critic: float = 1.5e-3
    batch_size: int = 100
    buffer_capacity: int = 10000
    target_tau: float = 0.001
    target_period: int = 2
    episodes: int = 2000
    steps_per_episode: int = 100
    epochs_per_episode: int = 100
    hidden_sizes: tuple[int, int] = (400, 300)
    initial_std_nm: float = 10.0
    advantage_norm: bool = False
    bootstrap_time_limit: bool = False

    def __post_init__(self) -> None:
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.clip <= 0.0 or self.clip >= 1.0:
            raise ValueError("clip must lie in (0, 1)")
        for name in ("lr_actor", "lr_critic", "initial_std_nm"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        for name in (
            "batch_size",
            "buffer_capacity",
            "target_period",
            "episodes",
            "steps_per_episode",
            "epochs_per_episode",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


class TrainingDiverged(RuntimeError):
    """Raised when network parameters stop being finite."""

    def __init__(self, episode: int, detail: str):
        super().__init__(f"training diverged at episode {episode}: {detail}")
        self.episode = episode


# Output-head initialization: shrink the last layer and bias the actor
# onto the neutral command and the critic onto the live (negative) side
# of its one-sided activation; see neuralnet._with_head.
HEAD_SCALE = 0.1
CRITIC_HEAD_BIAS = -0.05


def td_error(r, v_next, v, gamma: float, done):
    """One-step value residual r + gamma*v_next*(1-done) - v."""
    mask = 1.0 - np.asarray(done, dtype=float)
    out = np.asarray(r, dtype=float) + gamma * np.asarray(v_next, dtype=float) * mask - v
    return float(out) if np.ndim(out) == 0 else out


def gae(deltas, gamma: float, lam: float) -> np.ndarray:
    """Exponentially weighted TD errors over one ordered segment.

    A_k = sum_l (gamma*lam)^l delta_{k+l}, truncated at the segment end.
    For lam == 0 this is the input unchanged.
    """
    deltas = np.asarray(deltas, dtype=float)
    if lam == 0.0:
        return deltas.copy()
    out = np.empty_like(deltas)
    acc = 0.0
    for k in range(deltas.size - 1, -1, -1):
        acc = deltas[k] + gamma * lam * acc
        out[k] = acc
    return out


def clipped_surrogate(
    batch: Batch,
    policy: GaussianPolicy,
    old_logps: np.ndarray,
    advantages: np.ndarray,
    c: float,
    mu: float,
):
    """Objective and exact parameter gradients of the clipped surrogate.

    Returns (objective value, mean-net gradients, log_std gradient).
    Per sample the objective is min(p*A, clip(p, 1-c, 1+c)*A) with
    p = exp(logp_new - logp_old); gradients flow through p only where the
    min selects the unclipped branch (ties included, which covers clip's
    pass-through region). The entropy bonus mu*S adds a constant +mu to
    the log_std gradient.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    mean_out, cache = forward(policy.mean_net, batch.s)
    mean = mean_out[:, 0]
    std = policy.std
    z = (batch.u - mean) / std
    logp_new = -0.5 * z * z - policy.log_std - 0.5 * math.log(2.0 * math.pi)
    p = np.exp(logp_new - old_logps)
    clipped_p = np.clip(p, 1.0 - c, 1.0 + c)
    unclipped = p * advantages
    clipped = clipped_p * advantages
    objective = float(np.mean(np.minimum(unclipped, clipped))) + mu * policy_entropy(policy)

    L = len(batch)
    use_unclipped = unclipped <= clipped
    coeff = np.where(use_unclipped, unclipped, 0.0) / L  # d objective / d logp_new
    # logp gradients: d/d mean = z/std, d/d log_std = z^2 - 1
    grad_mean = coeff * z / std
    grads, _ = backward(policy.mean_net, cache, grad_mean[:, None])
    grad_log_std = float(np.sum(coeff * (z * z - 1.0))) + mu
    return objective, grads, grad_log_std


def critic_update(
    batch: Batch,
    critic: Mlp,
    target_critic: Mlp,
    gamma: float,
    alpha_c: float,
):
    """One descent step on the mean squared TD error; targets stay fixed.

    Returns (updated critic, loss before the step).
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    v_out, cache = forward(critic, batch.s)
    v = v_out[:, 0]
    v_next = forward(target_critic, batch.s_next)[0][:, 0]
    target = batch.r + gamma * v_next * (1.0 - batch.done)
    resid = target - v
    loss = float(np.mean(resid * resid))
    # ascend on -loss: d(-loss)/dv = 2*resid/L
    grad_v = (2.0 / len(batch)) * resid
    grads, _ = backward(critic, cache, grad_v[:, None])
    return sgd_ascend(critic, grads, alpha_c), loss


def target_soft_update(target: Mlp, source: Mlp, tau: float) -> Mlp:
    """Convex blend target <- (1-tau)*target + tau*source."""
    if len(target.weights) != len(source.weights):
        raise ValueError("network layer count mismatch")
    new_w, new_b = [], []
    for tw, sw in zip(target.weights, source.weights):
        if tw.shape != sw.shape:
            raise ValueError("network shape mismatch")
        new_w.append((1.0 - tau) * tw + tau * sw)
    for tb, sb in zip(target.biases, source.biases):
        if tb.shape != sb.shape:
            raise ValueError("network shape mismatch")
        new_b.append((1.0 - tau) * tb + tau * sb)
    return Mlp(new_w, new_b, target.activations)


def collect_episode(
    env: EnvConfig,
    policy: GaussianPolicy,
    spec: ArgumentSpec,
    traj: ReferenceTrajectory,
    n_steps: int,
    rng: np.random.Generator,
) -> list[Transition]:
    """Roll the stochastic policy for n_steps and package the transitions."""
    state = initial_state(env, traj)
    pt1 = make_episode_filter(env)
    out = []
    arg = build_argument(spec, state, traj, 0, env.speed_scale)
    for k in range(n_steps):
        u, logp = policy_sample_logprob(policy, arg.data, rng)
        t_cap = env.action_scale * u
        next_state, t_cl, pt1 = apply_control(env, state, pt1, t_cap)
        r = reward(next_state, traj, k, t_cl, env.params.t_in, env.reward)
        next_arg = build_argument(spec, next_state, traj, k + 1, env.speed_scale)
        out.append(
            Transition(arg.data, u, r, next_arg.data, logp, done=(k == n_steps - 1))
        )
        state, arg = next_state, next_arg
    return out


def rollout_episode(
    env: EnvConfig,
    policy: GaussianPolicy,
    spec: ArgumentSpec,
    traj: ReferenceTrajectory,
    n_steps: int,
) -> float:
    """Deterministic (mean-action) rollout; returns the episodic reward."""
    state = initial_state(env, traj)
    pt1 = make_episode_filter(env)
    total = 0.0
    for k in range(n_steps):
        arg = build_argument(spec, state, traj, k, env.speed_scale)
        t_cap = env.action_scale * policy_mean(policy, arg.data)
        state, t_cl, pt1 = apply_control(env, state, pt1, t_cap)
        total += reward(state, traj, k, t_cl, env.params.t_in, env.reward)
    return total


@dataclass
class TrainingRun:
    """Everything a training produces: learning curve and actors."""

    curve: list[tuple[int, float]] = field(default_factory=list)
    best_episode: int = 0
    best_eval_reward: float = -math.inf
    best_actor: GaussianPolicy | None = None
    final_actor: GaussianPolicy | None = None
    final_critic: Mlp | None = None


def train(
    config: PpoConfig,
    spec: ArgumentSpec,
    env: EnvConfig,
    ref_stream,
    rng: np.random.Generator,
    eval_traj: ReferenceTrajectory | None = None,
    eval_every: int = 10,
    on_eval=None,
) -> TrainingRun:
    """Run the full episode/epoch loop.

    ref_stream yields one training reference per episode. When eval_traj
    is given, the deterministic policy is scored on it every eval_every
    episodes; on_eval(episode, reward, policy) fires at each such point.
    Raises TrainingDiverged if any parameter stops being finite.
    """
    init_std = config.initial_std_nm / env.action_scale
    neutral = env.params.t_in / env.action_scale
    actor = make_policy(
        spec.dimension, rng, init_std, config.hidden_sizes,
        head_bias=neutral, head_scale=HEAD_SCALE,
    )
    critic = make_critic_net(
        spec.dimension, rng, config.hidden_sizes,
        head_bias=CRITIC_HEAD_BIAS, head_scale=HEAD_SCALE,
    )
    target = critic.copy()
    buffer = ReplayBuffer(config.buffer_capacity)
    run = TrainingRun()
    refs = iter(ref_stream)
    h = 0

    for episode in range(1, config.episodes + 1):
        try:
            traj = next(refs)
        except StopIteration:
            raise ValueError(
                f"reference stream exhausted at episode {episode} of {config.episodes}"
            ) from None
        buffer.extend(
            collect_episode(env, actor, spec, traj, config.steps_per_episode, rng)
        )

        for _ in range(config.epochs_per_episode):
            batch = buffer.sample(rng, config.batch_size)
            critic, _ = critic_update(
                batch, critic, target, config.gamma, config.lr_critic
            )
            v = forward(critic, batch.s)[0][:, 0]
            v_next = forward(target, batch.s_next)[0][:, 0]
            done = batch.done if not config.bootstrap_time_limit else np.zeros_like(batch.done)
            deltas = td_error(batch.r, v_next, v, config.gamma, done)
            adv = gae(deltas, config.gamma, config.gae_lambda)
            if config.advantage_norm:
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            _, grads, grad_log_std = clipped_surrogate(
                batch, actor, batch.logp_old, adv, config.clip, config.entropy_coef
            )
            actor = GaussianPolicy(
                sgd_ascend(actor.mean_net, grads, config.lr_actor),
                actor.log_std + config.lr_actor * grad_log_std,
            )
            h += 1
            if h % config.target_period == 0:
                target = target_soft_update(target, critic, config.target_tau)

        if not (actor.all_finite() and critic.all_finite()):
            raise TrainingDiverged(episode, "non-finite actor or critic parameters")

        if eval_traj is not None and episode % eval_every == 0:
            score = rollout_episode(env, actor, spec, eval_traj, config.steps_per_episode)
            run.curve.append((episode, score))
            if score > run.best_eval_reward:
                run.best_eval_reward = score
                run.best_episode = episode
                run.best_actor = actor.copy()
            if on_eval is not None:
                on_eval(episode, score, actor)

    run.final_actor = actor
    run.final_critic = critic
    if run.best_actor is None:
        run.best_actor = actor.copy()
        run.best_episode = config.episodes
    return run
