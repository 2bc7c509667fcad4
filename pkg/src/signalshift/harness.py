"""Experiment matrices: train, adapt, evaluate, and report.

Runs every requested algorithm over every test scenario and seed, then
writes the report files:

  report_long.csv     one row per (algorithm, scenario, seed)
  report_summary.csv  per-cell mean/min/max over seeds
  report_pivot.csv    algorithms x scenarios, column best starred and the
                      rest annotated with (+N%) relative deltas
  timing.csv          wall-clock of train/adapt stages (the one output that
                      is not byte-reproducible across runs)
  curve.csv           travel time against KL distance from training
  status.txt          ok, or the stage that failed

Travel times are greedy-policy episodes; KL distances are measured against
the mean movement distribution of the training scenarios.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import Settings, load_settings
from .dqn import (
    FixedTimePolicy,
    GreedyPolicy,
    MaxPressurePolicy,
    RandomPolicy,
    train_dqn,
)
from .intersection import IntersectionConfig, run_episode
from .meta import adapt_params, adapt_to_scenario, train_metalight, with_seed
from .metrics import (
    MovementDistribution,
    average_training_distribution,
    kl_distance,
    movement_distribution,
)
from .network import QNetworkParams
from .scenarios import SCHEMA_LINE, FlowSpec, load_scenario_dir
from .seeding import spawn_rng

ALGORITHMS = ("metalight", "rl_adapt", "rl_no_adapt",
              "fixed_time", "max_pressure", "random")


class ExperimentError(RuntimeError):
    """Failure of one pipeline stage, tagged with the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class EvalRecord:
    algorithm: str
    scenario: str
    avg_travel_time: float | None
    completed: int
    residual: int
    kl_to_train: float | None
    seed: int
    wall_time: float


@dataclass
class ExperimentManifest:
    train_dir: Path
    test_dir: Path
    out_dir: Path
    algorithms: list[str] = field(default_factory=lambda: list(ALGORITHMS[:3]))
    seeds: list[int] = field(default_factory=lambda: [0])
    config_path: Path | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("manifest needs at least one seed")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown algorithms {unknown}; valid: {ALGORITHMS}")
        for attr in ("train_dir", "test_dir"):
            p = Path(getattr(self, attr))
            setattr(self, attr, p)
            if not p.exists():
                raise FileNotFoundError(f"{attr} {p} does not exist")
        self.out_dir = Path(self.out_dir)
        if self.config_path is not None:
            self.config_path = Path(self.config_path)
            if not self.config_path.exists():
                raise FileNotFoundError(f"config {self.config_path} does not exist")


def load_manifest(path) -> ExperimentManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest {path} does not exist")
    kv: dict[str, str] = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected key=value")
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    missing = [k for k in ("train_dir", "test_dir", "out") if k not in kv]
    if missing:
        raise ValueError(f"manifest {path} missing keys: {missing}")

    def rel(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else path.parent / q

    return ExperimentManifest(
        train_dir=rel(kv["train_dir"]),
        test_dir=rel(kv["test_dir"]),
        out_dir=rel(kv["out"]),
        algorithms=[a.strip() for a in kv.get("algorithms", "metalight,rl_adapt,rl_no_adapt").split(",") if a.strip()],
        seeds=[int(s) for s in kv.get("seeds", "0").split(",") if s.strip()],
        config_path=rel(kv["config"]) if kv.get("config") else None,
    )


def evaluate(subject, scenario: FlowSpec, config: IntersectionConfig, seed: int = 0,
             train_dist: MovementDistribution | None = None,
             kl_epsilon: float = 1e-6, algorithm: str = "") -> EvalRecord:
    """One greedy episode of `subject` (params or a policy) on a scenario."""
    policy = GreedyPolicy(subject, config) if isinstance(subject, QNetworkParams) \
        else subject
    t0 = time.perf_counter()
    result = run_episode(config, scenario, policy, seed=seed)
    wall = time.perf_counter() - t0
    kl = None
    if train_dist is not None:
        kl = kl_distance(train_dist, movement_distribution(scenario.movement_counts()),
                         epsilon=kl_epsilon)
    return EvalRecord(algorithm, scenario.label, result.avg_travel_time,
                      result.completed_count, result.residual_count, kl, seed, wall)


def emit_curve(records: list[EvalRecord]) -> str:
    """CSV `kl,algorithm,avg_travel_time_s`, sorted ascending by kl."""
    for r in records:
        if r.kl_to_train is None:
            raise ValueError(f"record {r.algorithm}/{r.scenario} has no kl_to_train")
    ordered = sorted(records, key=lambda r: r.kl_to_train)
    lines = [SCHEMA_LINE, "kl,algorithm,avg_travel_time_s"]
    lines.extend(f"{r.kl_to_train!r},{r.algorithm},{r.avg_travel_time!r}"
                 for r in ordered)
    return "\n".join(lines) + "\n"


def percent_delta(value: float, best: float) -> int:
    return round(100.0 * (value - best) / best)


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(x)


def _policy_for(tag: str, settings: Settings, seed: int):
    config = settings.intersection
    if tag == "fixed_time":
        return FixedTimePolicy(config)
    if tag == "max_pressure":
        return MaxPressurePolicy(config)
    if tag == "random":
        return RandomPolicy(config, seed=seed)
    raise ValueError(f"no policy for tag {tag!r}")


def run_experiment(manifest: ExperimentManifest) -> list[EvalRecord]:
    """Execute train -> adapt -> evaluate for every cell of the matrix.

    Any stage failure aborts with a stage-tagged ExperimentError after
    flagging the partial output directory via status.txt.
    """
    out = manifest.out_dir
    out.mkdir(parents=True, exist_ok=True)
    stage = "setup"
    try:
        settings = load_settings(manifest.config_path)
        train_set = load_scenario_dir(manifest.train_dir, kind="training")
        test_set = load_scenario_dir(manifest.test_dir, kind="test")
        train_dist = average_training_distribution(train_set)
        config = settings.intersection

        records: list[EvalRecord] = []
        meta_train_times: list[float] = []
        dqn_train_times: list[float] = []
        adapt_times: list[float] = []

        needs_meta = "metalight" in manifest.algorithms
        needs_dqn = any(a in manifest.algorithms for a in ("rl_adapt", "rl_no_adapt"))

        for seed in manifest.seeds:
            meta_ckpt = None
            dqn_params = None
            if needs_meta:
                stage = "train-meta"
                meta_result = train_metalight(config, train_set,
                                              with_seed(settings.meta, seed),
                                              dims=settings.dims)
                meta_ckpt = meta_result.checkpoint
                meta_train_times.append(meta_result.wall_time_s)
            if needs_dqn:
                stage = "train-dqn"
                dqn_result = train_dqn(config, train_set,
                                       replace(settings.dqn, seed=seed),
                                       dims=settings.dims)
                dqn_params = dqn_result.params
                dqn_train_times.append(dqn_result.wall_time_s)

            for scenario in test_set:
                for algorithm in manifest.algorithms:
                    if algorithm == "metalight":
                        stage = "adapt"
                        adapted = adapt_to_scenario(meta_ckpt, scenario, config,
                                                    seed=seed)
                        adapt_times.append(adapted.wall_time_s)
                        subject = adapted.params
                    elif algorithm == "rl_adapt":
                        stage = "adapt"
                        mh = settings.meta
                        tuned = adapt_params(
                            dqn_params, scenario, config, mh.alpha, mh.adapt_steps,
                            mh.adapt_data_budget, mh.rollout_epsilon, mh.batch_size,
                            mh.gamma, mh.capacity,
                            spawn_rng(seed, 51, zlib.crc32(scenario.label.encode())))
                        subject = tuned.params
                    elif algorithm == "rl_no_adapt":
                        subject = dqn_params
                    else:
                        subject = _policy_for(algorithm, settings, seed)
                    stage = "evaluate"
                    records.append(evaluate(subject, scenario, config, seed=seed,
                                            train_dist=train_dist,
                                            kl_epsilon=settings.kl_epsilon,
                                            algorithm=algorithm))

        stage = "report"
        _write_reports(records, manifest, out,
                       meta_train_times, dqn_train_times, adapt_times)
    except Exception as exc:
        (out / "status.txt").write_text(f"status=failed\nstage={stage}\n")
        if isinstance(exc, ExperimentError):
            raise
        raise ExperimentError(stage, str(exc)) from exc

    (out / "status.txt").write_text("status=ok\n")
    return records


def _write_reports(records, manifest, out: Path,
                   meta_train_times, dqn_train_times, adapt_times) -> None:
    lines = [SCHEMA_LINE,
             "algorithm,scenario,seed,avg_travel_time_s,completed,residual,kl_to_train"]
    lines.extend(
        f"{r.algorithm},{r.scenario},{r.seed},{_fmt(r.avg_travel_time)},"
        f"{r.completed},{r.residual},{_fmt(r.kl_to_train)}"
        for r in records)
    (out / "report_long.csv").write_text("\n".join(lines) + "\n")

    scenario_labels = sorted({r.scenario for r in records})
    cells: dict[tuple[str, str], list[float]] = {}
    for r in records:
        if r.avg_travel_time is not None:
            cells.setdefault((r.algorithm, r.scenario), []).append(r.avg_travel_time)

    lines = [SCHEMA_LINE, "algorithm,scenario,mean_s,min_s,max_s,n_seeds"]
    for algorithm in manifest.algorithms:
        for scenario in scenario_labels:
            values = cells.get((algorithm, scenario), [])
            if values:
                lines.append(f"{algorithm},{scenario},{float(np.mean(values))!r},"
                             f"{min(values)!r},{max(values)!r},{len(values)}")
    (out / "report_summary.csv").write_text("\n".join(lines) + "\n")

    means = {key: float(np.mean(v)) for key, v in cells.items()}
    best = {s: min(means[(a, s)] for a in manifest.algorithms if (a, s) in means)
            for s in scenario_labels}
    lines = [SCHEMA_LINE, "algorithm," + ",".join(scenario_labels)]
    for algorithm in manifest.algorithms:
        row = [algorithm]
        for scenario in scenario_labels:
            mean = means.get((algorithm, scenario))
            if mean is None:
                row.append("")
            elif mean <= best[scenario]:
                row.append(f"{mean:.1f}*")
            else:
                row.append(f"{mean:.1f} (+{percent_delta(mean, best[scenario])}%)")
        lines.append(",".join(row))
    (out / "report_pivot.csv").write_text("\n".join(lines) + "\n")

    lines = [SCHEMA_LINE, "task,seconds"]
    if meta_train_times:
        lines.append(f"metalight_training_base_model,{float(np.mean(meta_train_times))!r}")
    if adapt_times:
        lines.append(f"metalight_adapting_base_model,{float(np.mean(adapt_times))!r}")
    if dqn_train_times:
        lines.append(f"dqn_training_from_scratch,{float(np.mean(dqn_train_times))!r}")
    (out / "timing.csv").write_text("\n".join(lines) + "\n")

    curve_records = [r for r in records if r.kl_to_train is not None
                     and r.avg_travel_time is not None]
    (out / "curve.csv").write_text(emit_curve(curve_records))
