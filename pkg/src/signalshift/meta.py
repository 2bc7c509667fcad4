"""Meta-training of the Q-network initialization and scenario adaptation.

Meta-training alternates two levels.  Individually, a base learner starts
from the shared initialization theta0 and takes per-decision TD gradient
steps inside one episode of a sampled scenario.  Globally, theta0 moves
against the sum of the adapted learners' gradients on fresh batches, using
the first-order approximation (the gradient at the adapted parameters is
applied directly to theta0).  Adaptation to a new scenario collects a
small experience budget from theta0 and applies a handful of the same
TD steps.
"""

from __future__ import annotations

import hashlib
import time
from collections import namedtuple
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .intersection import IntersectionConfig, initial_state, observe, step
from .network import (
    CHECKPOINT_SCHEMA,
    GradientSet,
    QNetworkParams,
    add_grads,
    bellman_grads,
    clip_gradients,
    frap_forward,
    init_params,
    params_from_lines,
    params_to_text,
    sgd_step,
)
from .scenarios import SCHEMA_LINE, FlowSpec, flow_to_csv_text
from .dqn import ReplayMemory, Transition, epsilon_greedy
from .seeding import NS_META, spawn_rng


@dataclass
class MetaHyper:
    alpha: float = 1e-3            # individual-level learning rate
    beta: float = 1e-3             # global-level learning rate
    task_batch: int = 3            # scenarios sampled per meta-iteration
    meta_iterations: int = 100
    adapt_steps: int = 3           # gradient steps when adapting to a new scenario
    adapt_data_budget: int = 1     # episodes of fresh experience for adaptation
    rollout_epsilon: float = 0.1   # exploration while collecting experience
    batch_size: int = 32
    gamma: float = 0.8
    capacity: int = 10_000
    grad_clip: float = 10.0   # global gradient-norm cap; <=0 disables
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("task_batch", "adapt_steps", "adapt_data_budget",
                     "batch_size", "capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.meta_iterations < 0:
            raise ValueError("meta_iterations must be non-negative")
        if not 0.0 <= self.rollout_epsilon <= 1.0:
            raise ValueError("rollout_epsilon must be in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")


@dataclass
class MetaCheckpoint:
    theta0: QNetworkParams
    hyper: MetaHyper
    scenario_digest: str


MetaLogRow = namedtuple("MetaLogRow", "iteration mean_rollout_loss mean_meta_loss")


@dataclass
class MetaTrainResult:
    checkpoint: MetaCheckpoint
    log: list[MetaLogRow]
    wall_time_s: float


@dataclass
class AdaptResult:
    params: QNetworkParams
    wall_time_s: float
    episodes_used: int
    update_steps: int


def scenario_digest(scenarios) -> str:
    """Order-independent SHA-256 over every scenario's canonical CSV text."""
    flows = getattr(scenarios, "scenarios", scenarios)
    entries = sorted((flow.label, flow_to_csv_text(flow)) for flow in flows)
    h = hashlib.sha256()
    for label, text in entries:
        h.update(label.encode())
        h.update(text.encode())
    return h.hexdigest()


def apply_gradient_steps(theta: QNetworkParams, grad_fn, lr: float,
                         steps: int) -> tuple[QNetworkParams, list[float]]:
    """Iterate theta <- theta - lr * grad for `steps` steps.

    `grad_fn(theta) -> (loss, GradientSet)` is evaluated afresh each step.
    Returns the final parameters and the per-step losses; the input object
    is never mutated.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    losses = []
    for _ in range(steps):
        loss, grads = grad_fn(theta)
        losses.append(loss)
        theta = sgd_step(theta, grads, lr)
    return theta, losses


def individual_adapt(theta: QNetworkParams, memory: ReplayMemory, alpha: float,
                     steps: int, config: IntersectionConfig,
                     batch_size: int = 32, gamma: float = 0.8,
                     grad_clip: float = 0.0) -> QNetworkParams:
    """Per-scenario TD gradient steps from theta, fresh batch each step.

    The bootstrap target uses the current iterate itself (held constant
    within a step).  The original theta is untouched.  `grad_clip` is off
    by default so the update rule stays the plain gradient step.
    """
    if len(memory) < batch_size:
        raise ValueError(
            f"memory holds {len(memory)} transitions, need >= {batch_size}")

    def grad_fn(params):
        batch = memory.sample(batch_size)
        loss, grads = bellman_grads(params, batch, params, gamma, config)
        return loss, clip_gradients(grads, grad_clip)

    adapted, _ = apply_gradient_steps(theta, grad_fn, alpha, steps)
    return adapted


def global_update(theta0: QNetworkParams, adapted_grads: list[GradientSet],
                  beta: float) -> QNetworkParams:
    """Move theta0 against the summed per-task gradients (first order)."""
    if not adapted_grads:
        raise ValueError("need at least one task gradient")
    total = adapted_grads[0]
    for g in adapted_grads[1:]:
        total = add_grads(total, g)
    return sgd_step(theta0, total, beta)


def _rollout_episode(theta: QNetworkParams, flow: FlowSpec, config: IntersectionConfig,
                     memory: ReplayMemory, rng, hyper: MetaHyper,
                     adapt_each_step: bool) -> tuple[QNetworkParams, list[float]]:
    """One episode of experience; optionally one TD step per decision."""
    state = initial_state(config, flow)
    obs = observe(state, config)
    losses: list[float] = []
    while True:
        if state.clock >= config.horizon:
            if state.is_empty() or state.clock >= config.horizon + config.drain:
                break
        action = epsilon_greedy(frap_forward(theta, obs, config),
                                hyper.rollout_epsilon, rng)
        state, reward = step(state, action, config)
        obs_next = observe(state, config)
        memory.push(Transition(obs, action, reward, obs_next))
        obs = obs_next
        if adapt_each_step and len(memory) >= hyper.batch_size:
            batch = memory.sample(hyper.batch_size)
            loss, grads = bellman_grads(theta, batch, theta, hyper.gamma, config)
            theta = sgd_step(theta, clip_gradients(grads, hyper.grad_clip), hyper.alpha)
            losses.append(loss)
    return theta, losses


def train_metalight(config: IntersectionConfig, train_scenarios, hyper: MetaHyper,
                    dims: tuple[int, int] | None = None) -> MetaTrainResult:
    """Meta-train theta0 over the training scenarios.

    Per meta-iteration: sample `task_batch` scenarios without replacement;
    each base learner inherits theta0 and adapts through one episode; then
    theta0 takes the global update from fresh batches drawn from each
    task's memory.  Deterministic per (config, scenarios, hyper, dims).
    """
    flows = list(getattr(train_scenarios, "scenarios", train_scenarios))
    if len(flows) < hyper.task_batch:
        raise ValueError(
            f"{len(flows)} scenarios but task_batch={hyper.task_batch}")
    t_start = time.perf_counter()
    theta0 = init_params(dims or (16, 16), hyper.seed)
    rng = spawn_rng(hyper.seed, NS_META)
    log: list[MetaLogRow] = []

    for iteration in range(hyper.meta_iterations):
        task_idx = rng.choice(len(flows), size=hyper.task_batch, replace=False)
        task_grads: list[GradientSet] = []
        rollout_losses: list[float] = []
        meta_losses: list[float] = []
        for ti in task_idx:
            memory = ReplayMemory(hyper.capacity, seed=rng)
            adapted, losses = _rollout_episode(theta0, flows[int(ti)], config,
                                               memory, rng, hyper,
                                               adapt_each_step=True)
            rollout_losses.extend(losses)
            if len(memory) >= hyper.batch_size:
                batch = memory.sample(hyper.batch_size)
                loss, grads = bellman_grads(adapted, batch, adapted,
                                            hyper.gamma, config)
                task_grads.append(clip_gradients(grads, hyper.grad_clip))
                meta_losses.append(loss)
        if task_grads:
            theta0 = global_update(theta0, task_grads, hyper.beta)
        log.append(MetaLogRow(
            iteration,
            float(np.mean(rollout_losses)) if rollout_losses else float("nan"),
            float(np.mean(meta_losses)) if meta_losses else float("nan"),
        ))

    checkpoint = MetaCheckpoint(theta0, hyper, scenario_digest(flows))
    return MetaTrainResult(checkpoint, log, time.perf_counter() - t_start)


def adapt_params(theta: QNetworkParams, scenario: FlowSpec, config: IntersectionConfig,
                 alpha: float, steps: int, data_budget: int,
                 rollout_epsilon: float, batch_size: int, gamma: float,
                 capacity: int, rng, grad_clip: float = 0.0) -> AdaptResult:
    """Collect `data_budget` episodes acting from theta, then take `steps`
    TD gradient steps on the collected memory."""
    t_start = time.perf_counter()
    hyper_like = MetaHyper(alpha=alpha, rollout_epsilon=rollout_epsilon,
                           batch_size=batch_size, gamma=gamma, capacity=capacity,
                           grad_clip=grad_clip)
    memory = ReplayMemory(capacity, seed=rng)
    for _ in range(data_budget):
        _rollout_episode(theta, scenario, config, memory, rng, hyper_like,
                         adapt_each_step=False)
    adapted = individual_adapt(theta, memory, alpha, steps, config,
                               batch_size=batch_size, gamma=gamma,
                               grad_clip=grad_clip)
    return AdaptResult(adapted, time.perf_counter() - t_start,
                       episodes_used=data_budget, update_steps=steps)


def adapt_to_scenario(checkpoint: MetaCheckpoint, scenario: FlowSpec,
                      config: IntersectionConfig, k_override: int | None = None,
                      seed: int = 0) -> AdaptResult:
    """Adapt the meta-trained initialization to one new scenario.

    Never mutates the checkpoint; uses the checkpoint's hyperparameters
    except for an optional gradient-step override.
    """
    hyper = checkpoint.hyper
    k = hyper.adapt_steps if k_override is None else int(k_override)
    if k < 1:
        raise ValueError("adaptation needs at least one gradient step")
    rng = spawn_rng(hyper.seed, NS_META, 50, seed)
    return adapt_params(checkpoint.theta0, scenario, config, hyper.alpha, k,
                        hyper.adapt_data_budget, hyper.rollout_epsilon,
                        hyper.batch_size, hyper.gamma, hyper.capacity, rng,
                        grad_clip=hyper.grad_clip)


AblationRow = namedtuple("AblationRow", "k avg_travel_time_s scenario_count seed")


def ablate_steps(checkpoint: MetaCheckpoint, scenarios, ks: list[int],
                 config: IntersectionConfig, seed: int = 0) -> list[AblationRow]:
    """Mean greedy travel time after adapting with each gradient-step count.

    One row per entry of `ks`, in the given order; the shape of the curve
    is reported, never asserted.
    """
    from .dqn import GreedyPolicy
    from .intersection import run_episode

    flows = list(getattr(scenarios, "scenarios", scenarios))
    if not ks:
        raise ValueError("ks must be non-empty")
    if not flows:
        raise ValueError("need at least one scenario")
    rows = []
    for k in ks:
        times = []
        for flow in flows:
            adapted = adapt_to_scenario(checkpoint, flow, config,
                                        k_override=k, seed=seed)
            result = run_episode(config, flow, GreedyPolicy(adapted.params, config),
                                 seed=seed)
            if result.avg_travel_time is not None:
                times.append(result.avg_travel_time)
        rows.append(AblationRow(int(k), float(np.mean(times)) if times else float("nan"),
                                len(flows), seed))
    return rows


def write_ablation_csv(rows: list[AblationRow], path) -> None:
    lines = [SCHEMA_LINE, "k,avg_travel_time_s,scenario_count,seed"]
    lines.extend(f"{r.k},{r.avg_travel_time_s!r},{r.scenario_count},{r.seed}"
                 for r in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def write_meta_log(log: list[MetaLogRow], path) -> None:
    lines = [SCHEMA_LINE, "iteration,mean_rollout_loss,mean_meta_loss"]
    lines.extend(f"{r.iteration},{r.mean_rollout_loss!r},{r.mean_meta_loss!r}"
                 for r in log)
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Meta checkpoint file: network checkpoint plus hyper block and digest.

_HYPER_FIELDS = ("alpha", "beta", "task_batch", "meta_iterations", "adapt_steps",
                 "adapt_data_budget", "rollout_epsilon", "batch_size", "gamma",
                 "capacity", "grad_clip", "seed")
_HYPER_INTS = {"task_batch", "meta_iterations", "adapt_steps", "adapt_data_budget",
               "batch_size", "capacity", "seed"}


def save_meta_checkpoint(checkpoint: MetaCheckpoint, path) -> None:
    lines = [CHECKPOINT_SCHEMA, "# meta"]
    for name in _HYPER_FIELDS:
        lines.append(f"{name}={getattr(checkpoint.hyper, name)!r}")
    lines.append(f"scenario_digest={checkpoint.scenario_digest}")
    Path(path).write_text("\n".join(lines) + "\n" + params_to_text(checkpoint.theta0))


def load_meta_checkpoint(path) -> MetaCheckpoint:
    lines = Path(path).read_text().splitlines()
    kv: dict[str, str] = {}
    for line in lines:
        line = line.strip()
        if line.startswith("tensor "):
            break
        if line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    hyper_kwargs = {}
    for name in _HYPER_FIELDS:
        if name in kv:
            hyper_kwargs[name] = int(kv[name]) if name in _HYPER_INTS else float(kv[name])
    hyper = MetaHyper(**hyper_kwargs)
    theta0 = params_from_lines(lines)
    return MetaCheckpoint(theta0, hyper, kv.get("scenario_digest", ""))


def with_seed(hyper: MetaHyper, seed: int) -> MetaHyper:
    return replace(hyper, seed=seed)
