"""Seeded experiment runner: training loop, evaluation rollouts and multi-seed aggregation."""

from __future__ import annotations

import csv
import json
import logging
import math
import zlib
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .mapfmt import MapSpec, load_map
from .observation import Encoder, encoding_shape
from .qlearn import MIXERS, Learner, TrainConfig, load_checkpoint, save_checkpoint, select_actions
from .replay import PERConfig, PrioritizedReplayBuffer, ReplayBuffer, Transition, nstep_fold
from .rnd import RND, RNDConfig
from .world import World, max_score, time_limit

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("step", "score", "exit_rate", "episode_length", "epsilon")
EVAL_COLUMNS = ("step", "episode", "score", "exit_rate", "episode_length")
NSTEP_CHOICES = (1, 3, 5, 7, 9)


@dataclass
class ExperimentConfig:
    map: str = "6"
    algo: str = "vdn"
    per: bool = False
    nstep: int = 1
    rnd: bool = False
    total_steps: int = 1_000_000
    seed: int = 0
    eval_interval: int = 0
    eval_episodes: int = 10
    checkpoint_interval: int = 0
    out_dir: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    per_config: PERConfig = field(default_factory=PERConfig)
    rnd_config: RNDConfig = field(default_factory=RNDConfig)

    def __post_init__(self):
        if self.algo not in MIXERS:
            raise ValueError(f"algo must be one of {MIXERS}, got {self.algo!r}")
        if self.nstep not in NSTEP_CHOICES:
            raise ValueError(f"nstep must be one of {NSTEP_CHOICES}, got {self.nstep}")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        d["train"] = TrainConfig(**d.get("train", {}))
        d["per_config"] = PERConfig(**d.get("per_config", {}))
        d["rnd_config"] = RNDConfig(**d.get("rnd_config", {}))
        return cls(**d)


@dataclass
class MetricRow:
    step: int
    score: float
    exit_rate: float
    episode_length: int
    epsilon: float


@dataclass
class Episode:
    score: float
    exit_rate: float
    length: int
    transitions: list[Transition]
    truncated: bool


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named source of randomness under a root seed."""
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


Policy = Callable[[World, np.ndarray, np.ndarray], np.ndarray]


def run_episode(world: World, policy: Policy, limit: int, encoder: Encoder | None = None) -> Episode:
    """Play one episode from the world's current state until termination or ``limit`` steps.

    Truncated episodes keep ``done=False`` on their last transition so the
    learner bootstraps through the cut.
    """
    encoder = encoder or Encoder(world.map)
    state = encoder(world)
    avail = np.array(world.action_mask())
    score = 0.0
    transitions = []
    outcome = None
    while world.step_count < limit and not world.done:
        actions = np.asarray(policy(world, state, avail))
        outcome = world.step(actions)
        score += outcome.reward
        next_state = encoder(world)
        next_avail = np.array(world.action_mask())
        transitions.append(
            Transition(state, avail, actions, outcome.reward, next_state, next_avail, outcome.episode_done)
        )
        state, avail = next_state, next_avail
    return Episode(score, world.exit_rate, world.step_count, transitions, not world.done)


def greedy_policy(learner: Learner) -> Policy:
    rng = np.random.default_rng(0)

    def act(world, state, avail):
        return select_actions(learner.act_utilities(state), avail, 0.0, rng)

    return act


def _fmt(x: float) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_rows(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(getattr(row, c)) if not isinstance(row, dict) else _fmt(row[c]) for c in columns])


def read_metrics(path: Path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        return {c: np.zeros(0) for c in METRIC_COLUMNS}
    return {c: np.array([float(r[c]) for r in rows]) for c in rows[0]}


@dataclass
class RunResult:
    config: ExperimentConfig
    learner: Learner
    metrics: list[MetricRow]
    evaluations: list[dict]
    out_dir: Path | None
    stats: dict


class Trainer:
    """Interleaves acting and learning: every ``train_interval`` env steps one
    batch update, one soft target update and, with RND, one predictor update."""

    def __init__(self, config: ExperimentConfig, spec: MapSpec | None = None):
        self.config = config
        self.spec = spec or load_map(config.map)
        seed = config.seed
        torch.manual_seed(int(rng_stream(seed, "init").integers(2**31)))
        self.explore_rng = rng_stream(seed, "explore")
        self.replay_rng = rng_stream(seed, "replay")
        self.mask_rng = rng_stream(seed, "rnd-mask")
        cfg = config.train
        self.encoder = Encoder(self.spec)
        shape = encoding_shape(self.spec)
        self.learner = Learner(shape, self.spec.n_agents, config.algo, cfg)
        if config.per:
            self.buffer = PrioritizedReplayBuffer(cfg.memory, config.per_config)
        else:
            self.buffer = ReplayBuffer(cfg.memory)
        self.rnd = RND(shape, config.rnd_config) if config.rnd else None
        self.world = World(self.spec)
        self.limit = time_limit(self.spec)
        self.step = 0
        self.losses: list[float] = []
        self.intrinsic: list[float] = []

    def _update(self) -> None:
        cfg = self.config.train
        if self.config.per:
            batch, weights, ids = self.buffer.sample(cfg.batch_size, self.replay_rng, self.step)
        else:
            batch, weights, ids = self.buffer.sample(cfg.batch_size, self.replay_rng), None, None
        bonus = None
        if self.rnd is not None:
            bonus = self.rnd.intrinsic_reward(batch.next_states, self.step)
            self.intrinsic.append(float(bonus.mean()))
        loss, td = self.learner.train_step(batch, weights, bonus)
        if ids is not None:
            self.buffer.update_priorities(ids, td)
        self.learner.soft_update()
        if self.rnd is not None:
            self.rnd.update(batch.next_states, self.mask_rng)
        self.losses.append(loss)

    def _policy(self, world, state, avail):
        eps = self.config.train.epsilon(self.step)
        return select_actions(self.learner.act_utilities(state), avail, eps, self.explore_rng)

    def run_training_episode(self) -> MetricRow:
        cfg = self.config.train
        world = self.world.reset()
        state = self.encoder(world)
        avail = np.array(world.action_mask())
        episode: list[Transition] = []
        score = 0.0
        eps = cfg.epsilon(self.step)
        while True:
            eps = cfg.epsilon(self.step)
            actions = self._policy(world, state, avail)
            outcome = world.step(actions)
            self.step += 1
            score += outcome.reward
            next_state = self.encoder(world)
            next_avail = np.array(world.action_mask())
            episode.append(Transition(state, avail, actions, outcome.reward, next_state, next_avail, outcome.episode_done))
            if self.step % cfg.train_interval == 0 and len(self.buffer) >= cfg.batch_size:
                self._update()
            if outcome.episode_done or world.step_count >= self.limit or self.step >= self.config.total_steps:
                break
            state, avail = next_state, next_avail
        for t in nstep_fold(episode, self.config.nstep, cfg.gamma):
            self.buffer.push(t)
        return MetricRow(self.step, score, world.exit_rate, world.step_count, eps)

    def evaluate(self, episodes: int) -> list[dict]:
        policy = greedy_policy(self.learner)
        world = World(self.spec)
        out = []
        for k in range(episodes):
            world.reset()
            ep = run_episode(world, policy, self.limit, self.encoder)
            out.append({"step": self.step, "episode": k, "score": ep.score, "exit_rate": ep.exit_rate,
                        "episode_length": ep.length})
        return out

    def run(self) -> RunResult:
        config = self.config
        out = Path(config.out_dir) if config.out_dir else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, default=str) + "\n")
        metrics: list[MetricRow] = []
        evaluations: list[dict] = []
        next_eval = config.eval_interval or math.inf
        next_ckpt = config.checkpoint_interval or math.inf
        while self.step < config.total_steps:
            metrics.append(self.run_training_episode())
            if self.step >= next_eval:
                evaluations += self.evaluate(config.eval_episodes)
                next_eval += config.eval_interval
            if out is not None and self.step >= next_ckpt:
                save_checkpoint(out / f"checkpoint_{self.step}.pt", self.learner, self.step, self._ckpt_extra())
                next_ckpt += config.checkpoint_interval
        stats = {
            "episodes": len(metrics),
            "updates": self.learner.updates,
            "final_loss": self.losses[-1] if self.losses else None,
        }
        if isinstance(self.buffer, PrioritizedReplayBuffer):
            stats["stale_priority_updates"] = self.buffer.stale_updates
        if out is not None:
            write_rows(out / "metrics.csv", METRIC_COLUMNS, metrics)
            if evaluations:
                write_rows(out / "eval.csv", EVAL_COLUMNS, evaluations)
            save_checkpoint(out / "checkpoint.pt", self.learner, self.step, self._ckpt_extra())
            from .plotting import plot_run

            plot_run(metrics, out / "metrics.png", max_score(self.spec))
        log.info("finished %s after %d steps, %d episodes", config.map, self.step, len(metrics))
        return RunResult(config, self.learner, metrics, evaluations, out, stats)

    def _ckpt_extra(self) -> dict:
        extra = {"config": self.config.to_dict()}
        if self.rnd is not None:
            extra["rnd"] = self.rnd.state_dict()
        return extra


def train(config: ExperimentConfig, spec: MapSpec | None = None) -> RunResult:
    return Trainer(config, spec).run()


class IncompatibleCheckpoint(ValueError):
    pass


@dataclass
class EvalSummary:
    episodes: int
    mean_score: float
    min_score: float
    max_score: float
    mean_exit_rate: float
    min_exit_rate: float
    max_exit_rate: float
    scores: list[float]
    exit_rates: list[float]


Q_DUMP_COLUMNS = ("episode", "t", "agent", "north", "east", "south", "west", "stay", "available", "action")


def evaluate(learner_or_path, spec: MapSpec, episodes: int = 10, dump_q: bool = False):
    """Greedy rollouts. Returns an :class:`EvalSummary` and, with ``dump_q``, per-step utility rows."""
    learner = learner_or_path
    if not isinstance(learner, Learner):
        learner, _ = load_checkpoint(learner_or_path)
    if tuple(learner.shape) != encoding_shape(spec) or learner.n_agents != spec.n_agents:
        raise IncompatibleCheckpoint(
            f"checkpoint expects {learner.shape} with {learner.n_agents} agents, map gives "
            f"{encoding_shape(spec)} with {spec.n_agents}"
        )
    encoder = Encoder(spec)
    world = World(spec)
    limit = time_limit(spec)
    rows: list[dict] = []
    scores, exit_rates = [], []
    for ep in range(episodes):
        world.reset()

        def policy(w, state, avail, ep=ep):
            q = learner.act_utilities(state)
            actions = select_actions(q, avail, 0.0, np.random.default_rng(0))
            if dump_q:
                for i in range(len(q)):
                    rows.append({
                        "episode": ep, "t": w.step_count, "agent": i,
                        "north": float(q[i, 0]), "east": float(q[i, 1]), "south": float(q[i, 2]),
                        "west": float(q[i, 3]), "stay": float(q[i, 4]),
                        "available": "".join("1" if a else "0" for a in avail[i]),
                        "action": int(actions[i]),
                    })
            return actions

        result = run_episode(world, policy, limit, encoder)
        scores.append(result.score)
        exit_rates.append(result.exit_rate)
    summary = EvalSummary(
        episodes, float(np.mean(scores)), float(min(scores)), float(max(scores)),
        float(np.mean(exit_rates)), float(min(exit_rates)), float(max(exit_rates)), scores, exit_rates,
    )
    return (summary, rows) if dump_q else summary


AGGREGATE_METRICS = ("score", "exit_rate")
AGGREGATE_STATS = ("mean", "ci_low", "ci_high", "min", "max")
AGGREGATE_COLUMNS = ("step", *(f"{m}_{s}" for m in AGGREGATE_METRICS for s in AGGREGATE_STATS), "n_runs")


def confidence_band(values: np.ndarray, z: float = 1.96) -> dict[str, np.ndarray]:
    """Mean and normal-approximation 95% interval across runs (axis 0), clamped to [min, max]."""
    k = values.shape[0]
    mean = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1) if k > 1 else np.zeros_like(mean)
    half = z * sd / math.sqrt(k)
    lo, hi = values.min(axis=0), values.max(axis=0)
    return {
        "mean": mean,
        "ci_low": np.maximum(mean - half, lo),
        "ci_high": np.minimum(mean + half, hi),
        "min": lo,
        "max": hi,
    }


def aggregate(run_dirs, n_points: int = 200) -> list[dict]:
    """Align runs on a common step grid and summarize score and exit rate across seeds."""
    runs = [read_metrics(Path(d) / "metrics.csv") for d in run_dirs]
    runs = [r for r in runs if len(r["step"])]
    if not runs:
        raise ValueError("aggregate needs at least one non-empty run")
    if all(np.array_equal(r["step"], runs[0]["step"]) for r in runs):
        grid = runs[0]["step"]
    else:
        start = max(r["step"][0] for r in runs)
        stop = min(r["step"][-1] for r in runs)
        grid = np.linspace(start, stop, n_points) if stop > start else np.array([stop])
    rows = [{"step": int(round(s)), "n_runs": len(runs)} for s in grid]
    for metric in AGGREGATE_METRICS:
        values = np.stack([np.interp(grid, r["step"], r[metric]) for r in runs])
        band = confidence_band(values)
        for stat, col in band.items():
            for row, v in zip(rows, col):
                row[f"{metric}_{stat}"] = float(v)
    return rows


def write_aggregate(rows: list[dict], path) -> None:
    write_rows(Path(path), AGGREGATE_COLUMNS, rows)
