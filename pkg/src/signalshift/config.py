"""Hyperparameter defaults and the optional key=value override file.

One flat file can override any default used by the CLI and the experiment
harness.  Recognized keys (all optional):

  intersection : n_movements, phases (e.g. "0+4;1+5;2+6;3+7"),
                 saturation_rate, approach_time, lost_time,
                 decision_interval, tick, horizon, drain
  dqn          : gamma, lr, batch_size, epsilon_start, epsilon_end,
                 epsilon_fraction, episodes, target_sync, replay_capacity,
                 grad_clip (shared with meta)
  meta         : alpha, beta, task_batch, meta_iterations, adapt_steps,
                 adapt_data_budget, rollout_epsilon
  network      : embed_dim, compete_dim
  metrics      : kl_epsilon
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .dqn import DqnHyper
from .intersection import IntersectionConfig
from .meta import MetaHyper
from .metrics import DEFAULT_KL_EPSILON

_INT_KEYS = {"n_movements", "batch_size", "episodes", "target_sync",
             "replay_capacity", "task_batch", "meta_iterations", "adapt_steps",
             "adapt_data_budget", "embed_dim", "compete_dim"}
_FLOAT_KEYS = {"saturation_rate", "approach_time", "lost_time", "decision_interval",
               "tick", "horizon", "drain", "gamma", "lr", "epsilon_start",
               "epsilon_end", "epsilon_fraction", "grad_clip", "alpha", "beta",
               "rollout_epsilon", "kl_epsilon"}
_KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | {"phases"}


@dataclass
class Settings:
    intersection: IntersectionConfig
    dqn: DqnHyper
    meta: MetaHyper
    dims: tuple[int, int] = (16, 16)
    kl_epsilon: float = DEFAULT_KL_EPSILON


def _parse_phases(text: str) -> tuple[tuple[int, ...], ...]:
    try:
        return tuple(tuple(int(m) for m in group.split("+"))
                     for group in text.split(";") if group)
    except ValueError as exc:
        raise ValueError(f"cannot parse phases spec {text!r}") from exc


def read_overrides(path) -> dict:
    """Parse a key=value override file, rejecting unknown keys."""
    overrides: dict = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KNOWN_KEYS:
            raise ValueError(f"{path}:{line_no}: unknown config key {key!r}")
        if key == "phases":
            overrides[key] = _parse_phases(value)
        elif key in _INT_KEYS:
            overrides[key] = int(value)
        else:
            overrides[key] = float(value)
    return overrides


def load_settings(path=None, seed: int | None = None) -> Settings:
    """Defaults, overridden by the config file, then by the seed flag."""
    overrides = read_overrides(path) if path else {}

    def pick(cls_defaults: dict, mapping: dict[str, str]) -> dict:
        return {field: overrides[key]
                for key, field in mapping.items() if key in overrides}

    intersection = IntersectionConfig(**pick({}, {
        "n_movements": "n_movements", "phases": "phases",
        "saturation_rate": "saturation_rate", "approach_time": "approach_time",
        "lost_time": "lost_time", "decision_interval": "decision_interval",
        "tick": "tick", "horizon": "horizon", "drain": "drain"}))
    dqn = DqnHyper(**pick({}, {
        "gamma": "gamma", "lr": "lr", "batch_size": "batch_size",
        "epsilon_start": "epsilon_start", "epsilon_end": "epsilon_end",
        "epsilon_fraction": "epsilon_fraction", "episodes": "episodes",
        "target_sync": "target_sync", "replay_capacity": "capacity",
        "grad_clip": "grad_clip"}))
    meta = MetaHyper(**pick({}, {
        "alpha": "alpha", "beta": "beta", "task_batch": "task_batch",
        "meta_iterations": "meta_iterations", "adapt_steps": "adapt_steps",
        "adapt_data_budget": "adapt_data_budget",
        "rollout_epsilon": "rollout_epsilon", "gamma": "gamma",
        "batch_size": "batch_size", "replay_capacity": "capacity",
        "grad_clip": "grad_clip"}))
    dims = (overrides.get("embed_dim", 16), overrides.get("compete_dim", 16))
    kl_epsilon = overrides.get("kl_epsilon", DEFAULT_KL_EPSILON)

    if seed is not None:
        dqn = replace(dqn, seed=int(seed))
        meta = replace(meta, seed=int(seed))
    return Settings(intersection, dqn, meta, dims, kl_epsilon)
