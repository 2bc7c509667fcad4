"""Phase-competition Q-network with explicit reverse-mode gradients.

One shared embedding maps each movement's (demand, green flag) pair to a
feature vector; a phase is the mean of its movements' features; a shared
competition layer scores every ordered phase pair; a phase's Q-value is
the sum of its scores against all rivals.  Because every layer is shared
across movements and pairs, the network has no notion of movement
identity: relabeling phases permutes the Q-values and nothing else.

Parameters use value semantics: updates return new objects and never
mutate their inputs, which keeps meta-learning bookkeeping honest.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .intersection import IntersectionConfig, Observation
from .seeding import spawn_rng

DEFAULT_EMBED_DIM = 16
DEFAULT_COMPETE_DIM = 16

PARAM_FIELDS = ("W_e", "b_e", "W_c", "b_c", "w_r", "b_r")

CHECKPOINT_SCHEMA = "# schema=1"


@dataclass
class QNetworkParams:
    """All weights of the Q-network (shared across movements and pairs)."""

    W_e: np.ndarray   # (embed_dim, 2) movement embedding
    b_e: np.ndarray   # (embed_dim,)
    W_c: np.ndarray   # (compete_dim, 2*embed_dim) pair competition
    b_c: np.ndarray   # (compete_dim,)
    w_r: np.ndarray   # (compete_dim,) readout
    b_r: np.ndarray   # () readout bias
    embed_dim: int = DEFAULT_EMBED_DIM
    compete_dim: int = DEFAULT_COMPETE_DIM


@dataclass
class GradientSet:
    """Loss gradients, one array per parameter tensor (same shapes)."""

    W_e: np.ndarray
    b_e: np.ndarray
    W_c: np.ndarray
    b_c: np.ndarray
    w_r: np.ndarray
    b_r: np.ndarray


@dataclass
class QValues:
    q: np.ndarray  # one value per phase


def init_params(dims: tuple[int, int] = (DEFAULT_EMBED_DIM, DEFAULT_COMPETE_DIM),
                seed: int = 0) -> QNetworkParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    embed_dim, compete_dim = (int(d) for d in dims)
    if embed_dim <= 0 or compete_dim <= 0:
        raise ValueError("network dimensions must be positive")
    rng = spawn_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return QNetworkParams(
        W_e=uniform((embed_dim, 2), 2),
        b_e=np.zeros(embed_dim),
        W_c=uniform((compete_dim, 2 * embed_dim), 2 * embed_dim),
        b_c=np.zeros(compete_dim),
        w_r=uniform((compete_dim,), compete_dim),
        b_r=np.zeros(()),
        embed_dim=embed_dim,
        compete_dim=compete_dim,
    )


@lru_cache(maxsize=64)
def _phase_structs(config: IntersectionConfig):
    """Membership/pair matrices used by the batched forward/backward."""
    n_phases, n_mov = config.n_phases, config.n_movements
    mem_norm = np.zeros((n_phases, n_mov))
    for p, movements in enumerate(config.phases):
        mem_norm[p, list(movements)] = 1.0 / len(movements)
    pairs = [(p, q) for p in range(n_phases) for q in range(n_phases) if q != p]
    p_idx = np.array([p for p, _ in pairs])
    q_idx = np.array([q for _, q in pairs])
    agg_p = np.zeros((n_phases, len(pairs)))
    agg_q = np.zeros((n_phases, len(pairs)))
    agg_p[p_idx, np.arange(len(pairs))] = 1.0
    agg_q[q_idx, np.arange(len(pairs))] = 1.0
    return mem_norm, p_idx, q_idx, agg_p, agg_q


def _forward_batch(params: QNetworkParams, demands: np.ndarray, greens: np.ndarray,
                   config: IntersectionConfig):
    """Q-values (B, n_phases) plus the cache needed for the backward pass."""
    mem_norm, p_idx, q_idx, agg_p, _ = _phase_structs(config)
    x = np.stack([demands, greens], axis=-1)                  # (B, M, 2)
    z_e = x @ params.W_e.T + params.b_e                       # (B, M, E)
    e = np.maximum(z_e, 0.0)
    rho = mem_norm @ e                                        # (B, P, E)
    u = np.concatenate([rho[:, p_idx, :], rho[:, q_idx, :]], axis=-1)  # (B, K, 2E)
    z_c = u @ params.W_c.T + params.b_c                       # (B, K, C)
    c = np.maximum(z_c, 0.0)
    s = c @ params.w_r + params.b_r                           # (B, K)
    q_values = s @ agg_p.T                                    # (B, P)
    cache = (x, z_e, rho, u, z_c, c)
    return q_values, cache


def _backward_batch(params: QNetworkParams, cache, d_q: np.ndarray,
                    config: IntersectionConfig) -> GradientSet:
    """Reverse-mode accumulation of d(loss)/d(params) given d(loss)/dQ."""
    mem_norm, _, _, agg_p, agg_q = _phase_structs(config)
    x, z_e, _, u, z_c, c = cache

    d_s = d_q @ agg_p                                         # (B, K)
    g_b_r = d_s.sum()
    g_w_r = np.tensordot(d_s, c, axes=([0, 1], [0, 1]))
    d_c = d_s[..., None] * params.w_r                         # (B, K, C)
    d_z_c = d_c * (z_c > 0.0)
    g_W_c = np.tensordot(d_z_c, u, axes=([0, 1], [0, 1]))
    g_b_c = d_z_c.sum(axis=(0, 1))
    d_u = d_z_c @ params.W_c                                  # (B, K, 2E)
    embed = params.embed_dim
    d_rho = agg_p @ d_u[..., :embed] + agg_q @ d_u[..., embed:]  # (B, P, E)
    d_e = mem_norm.T @ d_rho                                  # (B, M, E)
    d_z_e = d_e * (z_e > 0.0)
    g_W_e = np.tensordot(d_z_e, x, axes=([0, 1], [0, 1]))
    g_b_e = d_z_e.sum(axis=(0, 1))
    return GradientSet(g_W_e, g_b_e, g_W_c, g_b_c, g_w_r, np.asarray(g_b_r))


def _obs_arrays(observations) -> tuple[np.ndarray, np.ndarray]:
    demands = np.array([o.queue_counts for o in observations], dtype=np.float64)
    greens = np.array([o.green_flags for o in observations], dtype=np.float64)
    return demands, greens


def frap_forward(params: QNetworkParams, obs: Observation,
                 config: IntersectionConfig) -> QValues:
    """Q-value per phase for a single observation."""
    if len(obs.queue_counts) != config.n_movements:
        raise ValueError("observation/config movement count mismatch")
    demands, greens = _obs_arrays([obs])
    q_values, _ = _forward_batch(params, demands, greens, config)
    q = q_values[0]
    if not np.all(np.isfinite(q)):
        raise FloatingPointError("non-finite Q-values")
    return QValues(q)


def bellman_grads(params: QNetworkParams, batch, target_params: QNetworkParams,
                  gamma: float, config: IntersectionConfig) -> tuple[float, GradientSet]:
    """Squared TD loss over a batch of transitions and its gradients.

    Targets r + gamma * max_a' Q_target(s', a') are computed with
    `target_params` and treated as constants; only Q(s, a) is
    differentiated.
    """
    if not batch:
        raise ValueError("empty transition batch")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    batch = list(batch)
    n = len(batch)
    demands, greens = _obs_arrays([t.s for t in batch])
    q_values, cache = _forward_batch(params, demands, greens, config)
    actions = np.array([t.a for t in batch])
    rewards = np.array([t.r for t in batch], dtype=np.float64)

    next_demands, next_greens = _obs_arrays([t.s_next for t in batch])
    q_next, _ = _forward_batch(target_params, next_demands, next_greens, config)
    targets = rewards + gamma * q_next.max(axis=1)

    rows = np.arange(n)
    diff = q_values[rows, actions] - targets
    loss = float(np.mean(diff ** 2))
    d_q = np.zeros_like(q_values)
    d_q[rows, actions] = 2.0 * diff / n
    return loss, _backward_batch(params, cache, d_q, config)


def _check_congruent(params: QNetworkParams, grads: GradientSet) -> None:
    for name in PARAM_FIELDS:
        p, g = getattr(params, name), getattr(grads, name)
        if np.shape(p) != np.shape(g):
            raise ValueError(f"shape mismatch on {name}: {np.shape(p)} vs {np.shape(g)}")


def sgd_step(params: QNetworkParams, grads: GradientSet, lr: float) -> QNetworkParams:
    """One gradient-descent update; returns fresh params, inputs untouched."""
    _check_congruent(params, grads)
    updated = {name: getattr(params, name) - lr * getattr(grads, name)
               for name in PARAM_FIELDS}
    return QNetworkParams(**updated, embed_dim=params.embed_dim,
                          compete_dim=params.compete_dim)


def zero_grads(params: QNetworkParams) -> GradientSet:
    return GradientSet(**{name: np.zeros_like(getattr(params, name))
                          for name in PARAM_FIELDS})


def grad_norm(grads: GradientSet) -> float:
    return float(np.sqrt(sum(float(np.sum(getattr(grads, name) ** 2))
                             for name in PARAM_FIELDS)))


def clip_gradients(grads: GradientSet, max_norm: float) -> GradientSet:
    """Rescale so the global norm is at most max_norm; max_norm<=0 disables.

    TD errors early in training can reach the hundreds (the reward is a raw
    queue count), and unclipped squared-loss steps at the default learning
    rate diverge; clipping caps the step size without biasing its direction.
    """
    if max_norm <= 0:
        return grads
    total = grad_norm(grads)
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return GradientSet(**{name: getattr(grads, name) * scale
                          for name in PARAM_FIELDS})


def add_grads(a: GradientSet, b: GradientSet) -> GradientSet:
    return GradientSet(**{name: getattr(a, name) + getattr(b, name)
                          for name in PARAM_FIELDS})


def params_equal(a: QNetworkParams, b: QNetworkParams) -> bool:
    return all(np.array_equal(getattr(a, name), getattr(b, name))
               for name in PARAM_FIELDS)


def copy_params(params: QNetworkParams) -> QNetworkParams:
    return QNetworkParams(
        **{name: np.array(getattr(params, name), copy=True) for name in PARAM_FIELDS},
        embed_dim=params.embed_dim, compete_dim=params.compete_dim)


# ---------------------------------------------------------------------------
# Checkpoint file: textual, hex-encoded float64 payload, bit-exact round-trip.

def params_to_text(params: QNetworkParams) -> str:
    lines = [CHECKPOINT_SCHEMA,
             f"embed_dim={params.embed_dim}",
             f"compete_dim={params.compete_dim}"]
    for name in PARAM_FIELDS:
        arr = np.asarray(getattr(params, name), dtype=np.float64)
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"tensor {name} {dims}".rstrip())
        lines.append(arr.astype("<f8").tobytes().hex())
    return "\n".join(lines) + "\n"


def params_from_lines(lines: list[str]) -> QNetworkParams:
    header: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        if line.startswith("tensor "):
            parts = line.split()
            name, shape = parts[1], tuple(int(d) for d in parts[2:])
            payload = lines[i].strip()
            i += 1
            arr = np.frombuffer(bytes.fromhex(payload), dtype="<f8").astype(np.float64)
            tensors[name] = arr.reshape(shape)
        elif "=" in line:
            key, _, value = line.partition("=")
            header[key.strip()] = value.strip()
    missing = [name for name in PARAM_FIELDS if name not in tensors]
    if missing:
        raise ValueError(f"checkpoint missing tensors: {missing}")
    return QNetworkParams(**{name: tensors[name] for name in PARAM_FIELDS},
                          embed_dim=int(header.get("embed_dim", DEFAULT_EMBED_DIM)),
                          compete_dim=int(header.get("compete_dim", DEFAULT_COMPETE_DIM)))


def save_params(params: QNetworkParams, path) -> None:
    Path(path).write_text(params_to_text(params))


def load_params(path) -> QNetworkParams:
    return params_from_lines(Path(path).read_text().splitlines())
