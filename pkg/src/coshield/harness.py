"""Batch experiments: shield synthesis, seeded episode runs, Table-style summaries."""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .benchmarks import build_benchmark
from .consistency import make_consistent
from .env import CompiledModel, compile_model
from .model import CoPomdp, load_model
from .pomcp import TIGER_CONFIG, UUV_CONFIGS, EpisodeResult, PlannerConfig, run_episode
from .shield import feasibility, infeasibility_report, save_shield, synthesize

MODES = ("shielded", "unshielded")


class InfeasibleModel(RuntimeError):
    pass


class InvariantViolation(RuntimeError):
    pass


def default_planner(benchmark: str | None, size: int = 8) -> PlannerConfig:
    if benchmark and benchmark.startswith("uuv"):
        return UUV_CONFIGS.get(size, UUV_CONFIGS[20])
    return TIGER_CONFIG


@dataclass
class ExperimentConfig:
    benchmark: str | None = "tiger-simple"
    size: int = 8
    params: dict = field(default_factory=dict)
    model_path: str | None = None
    planner: PlannerConfig | None = None
    mode: str = "shielded"
    episodes: int = 100
    seed: int = 0
    out_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episode count must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.benchmark is None and self.model_path is None:
            raise ValueError("give a benchmark id or a model path")
        if self.planner is None:
            self.planner = default_planner(self.benchmark, self.size)

    @property
    def label(self) -> str:
        if self.model_path:
            return Path(self.model_path).stem
        return f"{self.benchmark}-{self.size}x{self.size}" if self.benchmark == "uuv" else str(self.benchmark)


@dataclass
class SummaryRow:
    benchmark: str
    mode: str
    states: int
    observations: int
    episodes: int
    survival: float
    hit: float
    cost_mean: float
    cost_std: float
    time_mean: float
    time_std: float
    shield_time: float | None

    def format(self) -> str:
        shield = "-" if self.shield_time is None else f"{self.shield_time:.2f}"
        return (
            f"{self.benchmark:<16} {self.mode:<10} {self.states:>5} {self.observations:>5} "
            f"{self.survival:>6.1f} {self.hit:>6.1f} {self.cost_mean:>9.2f} ± {self.cost_std:<8.2f} "
            f"{self.time_mean:.4f} ± {self.time_std:.4f} {shield:>8}"
        )


@dataclass
class ExperimentResult:
    row: SummaryRow
    episodes: list[EpisodeResult]
    seeds: list[int]
    model: CoPomdp


def episode_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def load_experiment_model(config: ExperimentConfig) -> CoPomdp:
    if config.model_path:
        return load_model(config.model_path)
    return build_benchmark(config.benchmark, size=config.size, **config.params)


def _run_chunk(env: CompiledModel, planner: PlannerConfig, seeds: list[int]) -> list[EpisodeResult]:
    return [run_episode(env, planner, s) for s in seeds]


def summarize(label: str, mode: str, model: CoPomdp, episodes: list[EpisodeResult],
              shield_time: float | None) -> SummaryRow:
    costs = np.array([e.total_cost for e in episodes])
    times = np.array([t for e in episodes for t in e.decision_times]) if any(e.decision_times for e in episodes) else np.zeros(1)
    return SummaryRow(
        benchmark=label,
        mode=mode,
        states=model.n_states,
        observations=model.n_obs,
        episodes=len(episodes),
        survival=100.0 * np.mean([e.survived for e in episodes]),
        hit=100.0 * np.mean([e.goal_hit for e in episodes]),
        cost_mean=float(costs.mean()),
        cost_std=float(costs.std()),
        time_mean=float(times.mean()),
        time_std=float(times.std()),
        shield_time=shield_time,
    )


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    original = load_experiment_model(config)
    cm = make_consistent(original)
    model = cm.model
    planner = config.planner
    if cm.transformed:
        planner = replace(planner, horizon=2 * planner.horizon)

    shield_time = None
    shield = None
    if config.mode == "shielded":
        t0 = time.perf_counter()
        synth = synthesize(model)
        shield_time = time.perf_counter() - t0
        shield = synth.shield
        if not feasibility(shield, model):
            raise InfeasibleModel("no action is enabled initially:\n" + infeasibility_report(shield, model))
    env = compile_model(model, shield)

    seeds = [episode_seed(config.seed, i) for i in range(config.episodes)]
    if config.workers > 1:
        chunks = [seeds[i::config.workers] for i in range(config.workers)]
        with ProcessPoolExecutor(config.workers) as pool:
            parts = list(pool.map(_run_chunk, [env] * len(chunks), [planner] * len(chunks), chunks))
        by_seed = {}
        for chunk, res in zip(chunks, parts):
            by_seed.update(zip(chunk, res))
        episodes = [by_seed[s] for s in seeds]
    else:
        episodes = _run_chunk(env, planner, seeds)

    row = summarize(config.label, config.mode, original, episodes, shield_time)
    if config.out_dir:
        write_outputs(config, row, episodes, seeds, shield)
    if config.mode == "shielded" and row.survival < 100.0:
        raise InvariantViolation(f"shielded survival is {row.survival:.1f}%, expected 100%")
    return ExperimentResult(row, episodes, seeds, model)


def write_outputs(config: ExperimentConfig, row: SummaryRow, episodes, seeds, shield) -> None:
    out = Path(config.out_dir)
    os.makedirs(out, exist_ok=True)
    with open(out / "episodes.jsonl", "w") as f:
        for i, (seed, ep) in enumerate(zip(seeds, episodes)):
            f.write(json.dumps({"episode": i, "seed": seed, **ep.record()}, sort_keys=True) + "\n")
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(asdict(row)))
        w.writeheader()
        w.writerow(asdict(row))
    if shield is not None:
        save_shield(shield, out / "shield.json")


def compare(shielded: SummaryRow, unshielded: SummaryRow) -> dict[str, float]:
    """Shielded minus unshielded deltas of survival, hit rate and mean cost."""
    return {
        "survival": shielded.survival - unshielded.survival,
        "hit": shielded.hit - unshielded.hit,
        "cost": shielded.cost_mean - unshielded.cost_mean,
    }


def format_compare(delta: dict[str, float]) -> str:
    return "  ".join(f"Δ{k}={v:+.2f}" for k, v in delta.items() if not math.isnan(v))
