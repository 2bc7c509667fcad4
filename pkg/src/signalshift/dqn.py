"""Value-based training loop and non-learning baseline policies.

The trainer interleaves epsilon-greedy rollouts with one TD update per
decision once the replay memory is warm, syncing a frozen target copy of
the network every `target_sync` updates.
"""

from __future__ import annotations

import time
from collections import namedtuple
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .intersection import (
    IntersectionConfig,
    Observation,
    initial_state,
    observe,
    step,
)
from .network import (
    QNetworkParams,
    QValues,
    bellman_grads,
    clip_gradients,
    frap_forward,
    init_params,
    sgd_step,
)
from .scenarios import SCHEMA_LINE
from .seeding import NS_DQN, spawn_rng


@dataclass
class Transition:
    """One (s, a, r, s') experience tuple."""

    s: Observation
    a: int
    r: float
    s_next: Observation


class ReplayMemory:
    """Ring buffer of transitions with uniform (with-replacement) sampling."""

    def __init__(self, capacity: int = 10_000, seed=0):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._buffer: list[Transition] = []
        self._cursor = 0
        self._rng = seed if isinstance(seed, np.random.Generator) else spawn_rng(int(seed))

    def __len__(self) -> int:
        return len(self._buffer)

    def push(self, transition: Transition) -> None:
        if len(self._buffer) < self.capacity:
            self._buffer.append(transition)
        else:
            self._buffer[self._cursor] = transition
            self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, batch_size: int) -> list[Transition]:
        if not self._buffer:
            raise ValueError("cannot sample from an empty memory")
        idx = self._rng.integers(0, len(self._buffer), size=batch_size)
        return [self._buffer[i] for i in idx]


@dataclass
class DqnHyper:
    gamma: float = 0.8
    lr: float = 1e-3
    batch_size: int = 32
    epsilon_start: float = 0.8
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.8   # fraction of nominal steps spent decaying
    episodes: int = 100
    target_sync: int = 200
    capacity: int = 10_000
    grad_clip: float = 10.0   # global gradient-norm cap; <=0 disables
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        for name in ("epsilon_start", "epsilon_end", "epsilon_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("batch_size", "target_sync", "capacity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.episodes < 0:
            raise ValueError("episodes must be non-negative")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")


def epsilon_greedy(q: QValues, epsilon: float, rng: np.random.Generator | None) -> int:
    """Argmax with probability 1-epsilon (ties to the lowest index),
    otherwise a uniformly random phase."""
    values = np.asarray(q.q if isinstance(q, QValues) else q)
    if values.size == 0:
        raise ValueError("empty Q-values")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    if epsilon > 0.0:
        if rng is None:
            raise ValueError("epsilon > 0 requires an RNG")
        if rng.random() < epsilon:
            return int(rng.integers(values.size))
    return int(np.argmax(values))


LogRow = namedtuple("LogRow", "update episode loss mean_reward epsilon")


@dataclass
class TrainResult:
    params: QNetworkParams
    log: list[LogRow]
    wall_time_s: float
    updates: int


def train_dqn(config: IntersectionConfig, scenarios, hyper: DqnHyper,
              dims: tuple[int, int] | None = None) -> TrainResult:
    """Train the Q-network over scenarios visited round-robin.

    Each decision interval: observe, act epsilon-greedy, step, store the
    transition, and (once the memory holds a batch) take one TD gradient
    step.  Episodes run through the demand horizon plus the drain period.
    Fully determined by (config, scenarios, hyper, dims).
    """
    flows = list(getattr(scenarios, "scenarios", scenarios))
    if not flows:
        raise ValueError("need at least one training scenario")
    t_start = time.perf_counter()
    params = init_params(dims or (16, 16), hyper.seed)
    target = params
    rng = spawn_rng(hyper.seed, NS_DQN)
    memory = ReplayMemory(hyper.capacity, seed=rng)

    decisions_per_episode = max(1, int(config.horizon // config.decision_interval))
    decay_steps = max(1, int(round(hyper.epsilon_fraction * hyper.episodes
                                   * decisions_per_episode)))

    log: list[LogRow] = []
    step_counter = 0
    updates = 0
    for episode in range(hyper.episodes):
        flow = flows[episode % len(flows)]
        state = initial_state(config, flow)
        obs = observe(state, config)
        reward_sum = 0.0
        reward_n = 0
        while True:
            if state.clock >= config.horizon:
                if state.is_empty() or state.clock >= config.horizon + config.drain:
                    break
            frac = min(1.0, step_counter / decay_steps)
            epsilon = hyper.epsilon_start + (hyper.epsilon_end - hyper.epsilon_start) * frac
            action = epsilon_greedy(frap_forward(params, obs, config), epsilon, rng)
            state, reward = step(state, action, config)
            obs_next = observe(state, config)
            memory.push(Transition(obs, action, reward, obs_next))
            obs = obs_next
            reward_sum += reward
            reward_n += 1
            step_counter += 1

            if len(memory) >= hyper.batch_size:
                batch = memory.sample(hyper.batch_size)
                loss, grads = bellman_grads(params, batch, target, hyper.gamma, config)
                params = sgd_step(params, clip_gradients(grads, hyper.grad_clip), hyper.lr)
                updates += 1
                if updates % hyper.target_sync == 0:
                    target = params
                log.append(LogRow(updates, episode, loss, reward_sum / reward_n, epsilon))

    return TrainResult(params, log, time.perf_counter() - t_start, updates)


def write_training_log(log: list[LogRow], path) -> None:
    lines = [SCHEMA_LINE, "update,episode,loss,mean_reward,epsilon"]
    lines.extend(f"{r.update},{r.episode},{r.loss!r},{r.mean_reward!r},{r.epsilon!r}"
                 for r in log)
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Policies

class GreedyPolicy:
    """Deterministic argmax policy over the network's Q-values."""

    def __init__(self, params: QNetworkParams, config: IntersectionConfig):
        self.params = params
        self.config = config

    def __call__(self, obs: Observation) -> int:
        return int(np.argmax(frap_forward(self.params, obs, self.config).q))


class FixedTimePolicy:
    """Cycles phases in order, each held for its green split, blind to traffic.

    Call `reset()` (run_episode does) before reusing an instance for a new
    episode; the phase is derived from the count of decisions taken so far.
    """

    def __init__(self, config: IntersectionConfig, green_split=None):
        splits = green_split if green_split is not None else config.decision_interval
        if np.isscalar(splits):
            splits = [float(splits)] * config.n_phases
        splits = [float(s) for s in splits]
        if len(splits) != config.n_phases or any(s <= 0 for s in splits):
            raise ValueError("need one positive split per phase")
        self.config = config
        self.splits = splits
        self.cycle = sum(splits)
        self._decisions = 0

    def reset(self, seed: int = 0) -> None:
        self._decisions = 0

    def __call__(self, obs: Observation) -> int:
        t = (self._decisions * self.config.decision_interval) % self.cycle
        self._decisions += 1
        acc = 0.0
        for phase, split in enumerate(self.splits):
            acc += split
            if t < acc - 1e-9:
                return phase
        return len(self.splits) - 1


class MaxPressurePolicy:
    """Serve the phase with the largest total queue over its movements.

    Ties keep the current phase when it is among the best, otherwise the
    lowest phase index wins.
    """

    def __init__(self, config: IntersectionConfig):
        self.config = config

    def __call__(self, obs: Observation) -> int:
        pressures = [sum(int(obs.queue_counts[m]) for m in phase)
                     for phase in self.config.phases]
        best = max(pressures)
        candidates = [p for p, v in enumerate(pressures) if v == best]
        if obs.phase_index in candidates:
            return obs.phase_index
        return candidates[0]


class RandomPolicy:
    """Uniform random phase each decision; reseedable per episode."""

    def __init__(self, config: IntersectionConfig, seed: int = 0):
        self.n_phases = config.n_phases
        self.seed = seed
        self._rng = spawn_rng(seed, 99, 0)

    def reset(self, seed: int = 0) -> None:
        self._rng = spawn_rng(self.seed, 99, seed)

    def __call__(self, obs: Observation) -> int:
        return int(self._rng.integers(self.n_phases))


def fixed_time_policy(config: IntersectionConfig, green_split=None) -> FixedTimePolicy:
    return FixedTimePolicy(config, green_split)


def max_pressure_policy(config: IntersectionConfig) -> MaxPressurePolicy:
    return MaxPressurePolicy(config)
