"""Experiment orchestration: seeded runs, worker pool, CSV/JSON/SVG output."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..adaptive import CandidateGrid, GPState, adapt_loop, final_fraction_mean
from ..core import LearningConfig, SplitQAgent, train
from ..envs import RewardTransform
from ..profiles import PRESETS, BiasProfile, get_profile, sample_profile
from ..recovery import fit_profile, seeded_expert
from .config import ConfigError, EnvSpec, ExperimentConfig, parse_config

METRIC_HEADER = ["episode", "total_reward", "total_pos", "total_neg", "steps", "epsilon"]
SMOOTHING_WINDOW = 20
FINAL_FRACTION = 0.2

log = logging.getLogger(__name__)


@dataclass
class RunTask:
    index: int
    env: EnvSpec
    preset: BiasProfile
    learning: LearningConfig
    transform: RewardTransform
    seed: int
    deterministic_profiles: bool
    variant: str | None = None
    repetition: int = 0


@dataclass
class RunRecord:
    config: dict
    label: str
    variant: str | None
    repetition: int
    seed: int
    phi: tuple[float, float, float, float]
    metrics: list[tuple] = field(repr=False)
    duration: float = 0.0

    @property
    def returns(self) -> list[float]:
        return [m[1] for m in self.metrics]

    def final_return(self) -> float:
        return final_fraction_mean(self.returns, FINAL_FRACTION)

    def to_json(self) -> dict:
        data = asdict(self)
        data["metrics"] = [list(m) for m in self.metrics]
        return data


def run_seeds(seed: int):
    """Agent, environment and profile-sampling streams for one run."""
    agent_seq, env_seq, profile_seq = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(agent_seq), env_seq, np.random.default_rng(profile_seq)


def execute(task: RunTask, snapshot: dict | None = None) -> RunRecord:
    start = time.perf_counter()
    agent_rng, env_seq, profile_rng = run_seeds(task.seed)
    profile = sample_profile(task.preset, profile_rng, deterministic=task.deterministic_profiles)
    cfg = task.learning
    env = task.env.build(env_seq, task.transform)
    agent = SplitQAgent.fresh(env, profile)
    records = train(agent, env, cfg, agent_rng)
    metrics = [(k, r.total_reward, r.total_pos, r.total_neg, r.steps, r.epsilon) for k, r in enumerate(records)]
    duration = time.perf_counter() - start
    log.debug("%s rep %d (seed %d, variant %s): %.2fs", task.preset.label, task.repetition, task.seed,
              task.variant, duration)
    return RunRecord(snapshot or {}, task.preset.label, task.variant, task.repetition, task.seed,
                     profile.weights, metrics, duration)


def execute_all(tasks: Sequence[RunTask], workers: int = 1) -> list[RunRecord]:
    """Run tasks, returning records in task order regardless of completion order."""
    if workers <= 1 or len(tasks) <= 1:
        return [execute(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(execute, tasks))


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path: Path, metrics) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_HEADER)
        for row in metrics:
            writer.writerow([_fmt(v) for v in row])


def read_metrics_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {k: (int(v) if k in ("episode", "steps") else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def mean_stderr(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def moving_average(values, window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing mean over up to ``window`` points (shorter at the start)."""
    arr = np.asarray(values, dtype=float)
    csum = np.concatenate([[0.0], np.cumsum(arr)])
    idx = np.arange(1, arr.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def aggregate(records_by_label: dict[str, list[RunRecord]]) -> tuple[list[str], list[list]]:
    """Per-episode mean and standard error of total reward for each label."""
    labels = list(records_by_label)
    header = ["episode"]
    for label in labels:
        header += [f"{label}_mean", f"{label}_stderr"]
    n_episodes = max(len(r.metrics) for recs in records_by_label.values() for r in recs)
    rows = []
    for k in range(n_episodes):
        row = [k]
        for label in labels:
            m, se = mean_stderr([r.metrics[k][1] for r in records_by_label[label] if k < len(r.metrics)])
            row += [m, se]
        rows.append(row)
    return header, rows


def write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_learning_curves_svg(path: Path, header, rows, title: str = "") -> None:
    """Smoothed mean-return curves; output depends only on the table contents."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "splitq", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 4))
        episodes = [row[0] for row in rows]
        for j in range(1, len(header), 2):
            label = header[j][: -len("_mean")]
            ax.plot(episodes, moving_average([row[j] for row in rows]), label=label, linewidth=1.2)
        ax.set_xlabel("episode")
        ax.set_ylabel(f"return ({SMOOTHING_WINDOW}-episode moving average)")
        if title:
            ax.set_title(title)
        ax.legend(loc="best", fontsize="small")
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    Path(path).write_text(buf.getvalue())


def base_seed(cfg: ExperimentConfig, override: int | None) -> int:
    return cfg.learning.seed if override is None else override


def build_tasks(cfg: ExperimentConfig, seed: int, variants=None) -> list[RunTask]:
    variants = variants or [(None, cfg.transform)]
    tasks = []
    for variant, transform in variants:
        for preset in cfg.profiles:
            for k in range(cfg.repetitions):
                tasks.append(RunTask(len(tasks), cfg.environment, preset, cfg.learning, transform, seed + k,
                                     cfg.deterministic_profiles, variant, k))
    return tasks


def _record_name(record: RunRecord) -> str:
    return f"{record.label}_rep{record.repetition}"


def _save_records(out: Path, records: Sequence[RunRecord]) -> None:
    (out / "metrics").mkdir(parents=True, exist_ok=True)
    (out / "records").mkdir(parents=True, exist_ok=True)
    for rec in records:
        write_metrics_csv(out / "metrics" / f"{_record_name(rec)}.csv", rec.metrics)
        (out / "records" / f"{_record_name(rec)}.json").write_text(json.dumps(rec.to_json(), indent=2))


def _group(records):
    grouped: dict[str, list[RunRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.label, []).append(rec)
    return grouped


def run_train(cfg: ExperimentConfig, out: Path, seed: int | None = None) -> list[RunRecord]:
    seed = base_seed(cfg, seed)
    snapshot = dict(cfg.snapshot(), learning=dict(asdict(cfg.learning), seed=seed))
    records = execute_all(build_tasks(cfg, seed), cfg.workers)
    for rec in records:
        rec.config = snapshot
    out.mkdir(parents=True, exist_ok=True)
    _save_records(out, records)
    grouped = _group(records)
    header, rows = aggregate(grouped)
    write_table(out / "aggregate.csv", header, rows)
    write_learning_curves_svg(out / "learning_curves.svg", header, rows, title=cfg.environment.family)
    summary = []
    for label, recs in grouped.items():
        m, se = mean_stderr([r.final_return() for r in recs])
        summary.append([label, m, se, len(recs)])
    write_table(out / "summary.csv", ["profile", "final_mean_return", "final_stderr", "runs"], summary)
    return records


def replay(record: dict) -> RunRecord:
    """Re-execute a run from the config snapshot stored in its record."""
    cfg = parse_config(record["config"])
    variant = record.get("variant")
    transform = cfg.transform
    if variant is not None:
        transform = {v.name: v.transform for v in cfg.variants}[variant]
    preset = next(p for p in cfg.profiles if p.label == record["label"])
    task = RunTask(0, cfg.environment, preset, cfg.learning, transform, record["seed"],
                   cfg.deterministic_profiles, variant, record["repetition"])
    return execute(task, record["config"])


def switch_report(records: Sequence[RunRecord], switch_episode: int, window: int = SMOOTHING_WINDOW):
    """Compare mean return in the windows just before and just after a switch.

    The change is flagged when it exceeds twice its standard error, using the
    per-episode spread of the repetition-averaged curve inside both windows.
    """
    curve = np.mean([r.returns for r in records], axis=0)
    before = curve[max(0, switch_episode - window):switch_episode]
    after = curve[switch_episode:switch_episode + window]
    if before.size < 2 or after.size < 2:
        return math.nan, math.nan, math.nan, False
    delta = float(after.mean() - before.mean())
    se = math.sqrt(before.var(ddof=1) / before.size + after.var(ddof=1) / after.size)
    flagged = abs(delta) > max(2.0 * se, 1e-12)
    return float(before.mean()), float(after.mean()), delta, bool(flagged)


def run_sweep(cfg: ExperimentConfig, out: Path, seed: int | None = None) -> dict:
    if not cfg.variants:
        raise ConfigError("variants: sweep needs at least one transform variant")
    seed = base_seed(cfg, seed)
    snapshot = dict(cfg.snapshot(), learning=dict(asdict(cfg.learning), seed=seed))
    variants = [(v.name, v.transform) for v in cfg.variants]
    records = execute_all(build_tasks(cfg, seed, variants), cfg.workers)
    for rec in records:
        rec.config = snapshot
    out.mkdir(parents=True, exist_ok=True)
    labels = [p.label for p in cfg.profiles]
    matrix: dict[tuple[str, str], float] = {}
    ranking_rows, switch_rows = [], []
    for name, transform in variants:
        recs = [r for r in records if r.variant == name]
        _save_records(out / name, recs)
        grouped = _group(recs)
        header, rows = aggregate(grouped)
        write_table(out / name / "aggregate.csv", header, rows)
        write_learning_curves_svg(out / name / "learning_curves.svg", header, rows, title=name)
        for label in labels:
            matrix[(label, name)] = mean_stderr([r.final_return() for r in grouped[label]])[0]
        ordered = sorted(labels, key=lambda lab: -matrix[(lab, name)])
        for rank, label in enumerate(ordered, 1):
            ranking_rows.append([name, rank, label, matrix[(label, name)]])
        if transform.switch_episode is not None:
            for label in labels:
                before, after, delta, flagged = switch_report(grouped[label], transform.switch_episode)
                switch_rows.append([name, label, transform.switch_episode, before, after, delta, int(flagged)])
    write_table(out / "matrix.csv", ["profile"] + [n for n, _ in variants],
                [[label] + [matrix[(label, n)] for n, _ in variants] for label in labels])
    write_table(out / "ranking.csv", ["variant", "rank", "profile", "final_mean_return"], ranking_rows)
    if switch_rows:
        write_table(out / "switches.csv",
                    ["variant", "profile", "switch_episode", "ma_before", "ma_after", "delta", "flagged"],
                    switch_rows)
    return {"records": records, "matrix": matrix, "switches": switch_rows}


def evaluate_profile(cfg: ExperimentConfig, profile: BiasProfile, seeds: Sequence[int],
                     episodes: int) -> list[float]:
    """Final-fraction mean return of fresh agents, one per seed."""
    learning = replace(cfg.learning, episodes=episodes)
    values = []
    for s in seeds:
        task = RunTask(0, cfg.environment, profile, learning, cfg.transform, s, True)
        values.append(execute(task).final_return())
    return values


def run_adapt(cfg: ExperimentConfig, out: Path, seed: int | None = None) -> dict:
    if cfg.adapt is None:
        raise ConfigError("adapt: section required for the adapt command")
    a = cfg.adapt
    seed = base_seed(cfg, seed)
    try:
        grid = CandidateGrid.from_lists(a.grid)
        gp = GPState(kernel_lengthscale=a.kernel_lengthscale, kernel_variance=a.kernel_variance,
                     noise_variance=a.noise_variance)
    except ValueError as exc:
        raise ConfigError(f"adapt: {exc}") from None
    history = adapt_loop(make_env_factory(cfg), cfg.learning, grid, a.rounds,
                         a.episodes_per_round, np.random.default_rng(seed), gp=gp, beta=a.beta,
                         beta_schedule=a.beta_schedule)
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / "history.csv",
                ["round", "phi1", "phi2", "phi3", "phi4", "mean_return", "best_return",
                 "best_phi1", "best_phi2", "best_phi3", "best_phi4"],
                [[h.round, *h.phi, h.value, h.best_value, *h.best_phi] for h in history])
    best = history[-1]
    seeds = [seed + 1000 + k for k in range(a.baseline_seeds)]
    adapted = evaluate_profile(cfg, BiasProfile.from_weights(best.best_phi, "adapted"), seeds, a.episodes_per_round)
    standard = evaluate_profile(cfg, BiasProfile("standard", 1.0, 1.0, 1.0, 1.0), seeds, a.episodes_per_round)
    am, ase = mean_stderr(adapted)
    sm, sse = mean_stderr(standard)
    report = {
        "incumbent_phi": list(best.best_phi),
        "incumbent_return": best.best_value,
        "evaluation_seeds": seeds,
        "adapted_mean_return": am,
        "adapted_stderr": ase,
        "standard_mean_return": sm,
        "standard_stderr": sse,
        "adapted_within_one_stderr_of_standard_or_better": bool(am >= sm - sse),
    }
    (out / "report.json").write_text(json.dumps(report, indent=2))
    return {"history": history, "report": report}


def make_env_factory(cfg: ExperimentConfig):
    return lambda seq: cfg.environment.build(seq, cfg.transform)


def run_recover(cfg: ExperimentConfig, trajs, out: Path | None = None, seed: int | None = None) -> dict:
    r = cfg.recover
    gamma = cfg.learning.gamma if r.gamma is None else r.gamma
    candidates = [PRESETS[label] for label in r.candidates]
    result = fit_profile(trajs, make_env_factory(cfg), candidates, cfg.learning, gamma, r.seeds_per_candidate,
                         n_trajectories=r.n_trajectories, base_seed=base_seed(cfg, seed))
    rows = [[rank, p.label, *p.weights, d] for rank, (p, d) in enumerate(result.ranking(), 1)]
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_table(out / "recovery.csv", ["rank", "profile", "phi1", "phi2", "phi3", "phi4", "distance"], rows)
    return {"result": result, "rows": rows}


def run_expert(cfg: ExperimentConfig, label: str, n_trajectories: int, seed: int | None = None):
    return seeded_expert(make_env_factory(cfg), get_profile(label), cfg.learning, n_trajectories,
                         base_seed(cfg, seed))
