"""Dense feed-forward networks with hand-written backpropagation.

Two fixed activation schedules are used by the controllers: the actor
ends in relu (nonnegative capacity torque) and the critic ends in
neg_relu, min(0, z), so predicted values share the sign of the
everywhere-nonpositive reward. The Gaussian action head keeps a single
trainable log standard deviation that is independent of the input.

Checkpoint format (version 1): a .npz archive with one entry per layer,
``w0, b0, w1, b1, ...`` (float64 arrays, weights shaped (fan_out,
fan_in)), plus ``meta`` holding a JSON string with the format version,
the activation schedule, and log_std. The layout is stable across runs
so trained actors can be reloaded for evaluation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ACTOR_ACTIVATIONS",
    "CRITIC_ACTIVATIONS",
    "HIDDEN_SIZES_DEFAULT",
    "Mlp",
    "MlpGrads",
    "GaussianPolicy",
    "forward",
    "backward",
    "sgd_ascend",
    "make_actor_net",
    "make_critic_net",
    "make_policy",
    "policy_mean",
    "policy_sample",
    "policy_logprob",
    "policy_entropy",
    "save_actor",
    "load_actor",
]

ACTOR_ACTIVATIONS = ("tanh", "tanh", "relu")
CRITIC_ACTIVATIONS = ("tanh", "tanh", "neg_relu")
HIDDEN_SIZES_DEFAULT = (400, 300)

CHECKPOINT_VERSION = 1

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _tanh(z):
    return np.tanh(z)


def _relu(z):
    return np.maximum(z, 0.0)


def _neg_relu(z):
    return np.minimum(z, 0.0)


def _identity(z):
    return z


_ACTIVATIONS = {
    "tanh": _tanh,
    "relu": _relu,
    "neg_relu": _neg_relu,
    "identity": _identity,
}


def _activation_grad(name, z, a):
    # derivative of the activation w.r.t. its pre-activation z
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "neg_relu":
        return (z < 0.0).astype(z.dtype)
    return np.ones_like(z)


class Mlp:
    """Fully connected network; weights[i] has shape (fan_out, fan_in)."""

    __slots__ = ("weights", "biases", "activations")

    def __init__(self, weights, biases, activations):
        if not (len(weights) == len(biases) == len(activations)):
            raise ValueError("layer count mismatch between weights/biases/activations")
        for name in activations:
            if name not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {name!r}")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"bad shapes in layer {i}: {w.shape} / {b.shape}")
            if i > 0 and w.shape[1] != weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input dim does not chain")
        self.weights = list(weights)
        self.biases = list(biases)
        self.activations = tuple(activations)

    @classmethod
    def create(cls, layer_sizes, activations, rng: np.random.Generator) -> "Mlp":
        """Seeded init, uniform in +-1/sqrt(fan_in) per layer."""
        if len(layer_sizes) != len(activations) + 1:
            raise ValueError("need one activation per layer")
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases, activations)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "Mlp":
        return Mlp(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activations,
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights) and all(
            np.all(np.isfinite(b)) for b in self.biases
        )


@dataclass
class MlpGrads:
    """Parameter gradients, same shapes as the network they came from."""

    weights: list
    biases: list


@dataclass
class _Cache:
    net: Mlp
    inputs: list
    zs: list
    acts: list
    single: bool


def forward(net: Mlp, x):
    """Evaluate the network; returns (output, cache for backward).

    Accepts a single vector (d,) or a batch (B, d); the output matches.
    """
    arr = np.asarray(getattr(x, "data", x), dtype=float)
    single = arr.ndim == 1
    a = arr[None, :] if single else arr
    if a.ndim != 2 or a.shape[1] != net.in_dim:
        raise ValueError(f"input dimension {arr.shape} does not match net ({net.in_dim})")
    inputs, zs, acts = [], [], []
    for w, b, name in zip(net.weights, net.biases, net.activations):
        inputs.append(a)
        z = a @ w.T + b
        a = _ACTIVATIONS[name](z)
        zs.append(z)
        acts.append(a)
    out = a[0] if single else a
    return out, _Cache(net, inputs, zs, acts, single)


def backward(net: Mlp, cache: _Cache, grad_output):
    """Exact chain-rule gradients of sum(grad_output * output).

    Parameter gradients accumulate over the batch dimension; the caller
    scales grad_output (e.g. by 1/L) to obtain batch means. Returns
    (MlpGrads, gradient w.r.t. the input).
    """
    if cache.net is not net:
        raise ValueError("cache does not belong to this network (stale cache)")
    g = np.asarray(grad_output, dtype=float)
    if cache.single:
        g = g[None, :]
    if g.shape != cache.acts[-1].shape:
        raise ValueError("grad_output shape does not match the forward output")
    grad_w = [None] * len(net.weights)
    grad_b = [None] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        dz = g * _activation_grad(net.activations[i], cache.zs[i], cache.acts[i])
        grad_w[i] = dz.T @ cache.inputs[i]
        grad_b[i] = dz.sum(axis=0)
        g = dz @ net.weights[i]
    grad_input = g[0] if cache.single else g
    return MlpGrads(grad_w, grad_b), grad_input


def sgd_ascend(net: Mlp, grads: MlpGrads, lr: float) -> Mlp:
    """Plain first-order ascent step: params + lr * grads."""
    if len(grads.weights) != len(net.weights):
        raise ValueError("gradient layer count mismatch")
    new_w, new_b = [], []
    for w, b, gw, gb in zip(net.weights, net.biases, grads.weights, grads.biases):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise ValueError("gradient shape mismatch")
        new_w.append(w + lr * gw)
        new_b.append(b + lr * gb)
    return Mlp(new_w, new_b, net.activations)


def make_actor_net(
    in_dim, rng, hidden=HIDDEN_SIZES_DEFAULT, head_bias=0.0, head_scale=1.0
) -> Mlp:
    return _with_head(
        Mlp.create((in_dim, *hidden, 1), ACTOR_ACTIVATIONS, rng), head_bias, head_scale
    )


def make_critic_net(
    in_dim, rng, hidden=HIDDEN_SIZES_DEFAULT, head_bias=0.0, head_scale=1.0
) -> Mlp:
    return _with_head(
        Mlp.create((in_dim, *hidden, 1), CRITIC_ACTIVATIONS, rng), head_bias, head_scale
    )


def _with_head(net: Mlp, head_bias: float, head_scale: float) -> Mlp:
    """Rescale and shift the output layer.

    The one-sided output activations (relu actor, neg_relu critic) have a
    dead half-plane; with the default init the scalar head lands there
    for about half the seeds and can never recover. A small head scale
    shrinks the initial output spread and the bias places the head on
    the live side (actor: neutral torque, critic: slightly negative).
    """
    net.weights[-1] *= head_scale
    net.biases[-1] *= head_scale
    net.biases[-1] += head_bias
    return net


@dataclass
class GaussianPolicy:
    """Gaussian action head: state-dependent mean, global log_std."""

    mean_net: Mlp
    log_std: float

    @property
    def std(self) -> float:
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_std))

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.mean_net.copy(), self.log_std)

    def all_finite(self) -> bool:
        # log_std beyond ~709 makes std overflow, which is as fatal as a nan
        return (
            self.mean_net.all_finite()
            and math.isfinite(self.log_std)
            and self.log_std < 709.0
        )


def make_policy(
    in_dim, rng, init_std, hidden=HIDDEN_SIZES_DEFAULT, head_bias=0.0, head_scale=1.0
) -> GaussianPolicy:
    if init_std <= 0.0:
        raise ValueError("initial standard deviation must be positive")
    net = make_actor_net(in_dim, rng, hidden, head_bias, head_scale)
    return GaussianPolicy(net, math.log(init_std))


def policy_mean(policy: GaussianPolicy, s):
    """Deterministic action(s): the relu-bounded network mean."""
    out, _ = forward(policy.mean_net, s)
    return float(out[0]) if out.ndim == 1 else out[:, 0]


def policy_sample(policy: GaussianPolicy, s, rng: np.random.Generator) -> float:
    """Draw one action; negative raw draws clamp to zero (t_cap >= 0)."""
    mean = policy_mean(policy, s)
    raw = mean + policy.std * rng.standard_normal()
    return max(0.0, raw)


def policy_sample_logprob(policy: GaussianPolicy, s, rng: np.random.Generator):
    """Sample one action and its log density with a single net evaluation.

    The density is that of the pre-clamp Gaussian evaluated at the
    clamped action, matching policy_sample followed by policy_logprob.
    """
    mean = policy_mean(policy, s)
    u = max(0.0, mean + policy.std * rng.standard_normal())
    z = (u - mean) / policy.std
    return u, -0.5 * z * z - policy.log_std - LOG_SQRT_2PI


def policy_logprob(policy: GaussianPolicy, s, u):
    """Log density of the (pre-clamp) Gaussian at u; broadcasts over batches."""
    mean = policy_mean(policy, s)
    z = (np.asarray(u, dtype=float) - mean) / policy.std
    out = -0.5 * z * z - policy.log_std - LOG_SQRT_2PI
    return float(out) if np.ndim(out) == 0 else out


def policy_entropy(policy: GaussianPolicy) -> float:
    """Differential entropy 0.5*log(2*pi*e*std^2)."""
    return 0.5 * math.log(2.0 * math.pi * math.e) + policy.log_std


def save_actor(path, policy: GaussianPolicy) -> None:
    """Write a version-1 actor checkpoint (see module docstring)."""
    arrays = {}
    for i, (w, b) in enumerate(zip(policy.mean_net.weights, policy.mean_net.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": "gaussian_actor",
        "activations": list(policy.mean_net.activations),
        "log_std": policy.log_std,
        "n_layers": len(policy.mean_net.weights),
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_actor(path) -> GaussianPolicy:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION or meta.get("kind") != "gaussian_actor":
            raise ValueError(f"unsupported checkpoint format in {path}")
        n = meta["n_layers"]
        weights = [data[f"w{i}"] for i in range(n)]
        biases = [data[f"b{i}"] for i in range(n)]
    net = Mlp(weights, biases, tuple(meta["activations"]))
    return GaussianPolicy(net, float(meta["log_std"]))
