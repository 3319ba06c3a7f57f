"""Greedy evaluation of checkpoints (or baseline policies) on saved game sets."""
from __future__ import annotations

import csv
import random
import statistics
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..agent import TWCAgent
from ..game import CleanupEnv, GameSpec, load_games, oracle_policy
from ..subgraph import EntityMatcher
from .a2c import run_episode
from .train import load_phase_kb

EVAL_HEADER = ["level", "split", "method", "runs", "games", "steps_mean", "steps_std",
               "score_mean", "score_std", "steps", "score"]


class RandomPolicy:
    """Uniform choice over the admissible set with a seeded generator."""

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def __call__(self, observation, actions):
        return self.rng.choice(actions)


class OraclePolicy:
    """Replays the scripted full-knowledge plan for one game."""

    def __init__(self, spec: GameSpec):
        self.plan = iter(oracle_policy(spec))

    def __call__(self, observation, actions):
        return next(self.plan)


@dataclass
class EvalRow:
    level: str
    split: str
    method: str
    runs: int
    games: int
    steps_mean: float
    steps_std: float
    score_mean: float
    score_std: float

    def formatted(self) -> list:
        return [self.level, self.split, self.method, self.runs, self.games,
                f"{self.steps_mean:.4f}", f"{self.steps_std:.4f}",
                f"{self.score_mean:.4f}", f"{self.score_std:.4f}",
                pm(self.steps_mean, self.steps_std), pm(self.score_mean, self.score_std)]


def pm(mean: float, std: float) -> str:
    return f"{mean:.2f} ± {std:.2f}"


def _std(xs) -> float:
    return statistics.pstdev(xs) if len(xs) > 1 else 0.0


def play_games(policy, games, kb=None, cdc: str = "all", episodes_per_game: int = 1,
               seed: int = 0) -> dict[tuple[str, str], list[tuple[float, int]]]:
    """Run ``policy`` on every game; results keyed by (level, split)."""
    out: dict[tuple[str, str], list] = {}
    for spec in games:
        matcher = EntityMatcher(spec.entity_groups())
        for ep in range(episodes_per_game):
            if policy == "random":
                agent = RandomPolicy(seed * 1_000_003 + spec.seed * 101 + ep)
            elif policy == "oracle":
                agent = OraclePolicy(spec)
            else:
                agent = policy
            with torch.no_grad():
                traj = run_episode(agent, CleanupEnv(spec), kb, "greedy", None, cdc, matcher)
            out.setdefault((spec.level, spec.split), []).append((traj.score, len(traj)))
    return out


def aggregate(per_run: list[dict], method: str) -> list[EvalRow]:
    """Mean over games within a run, then mean and std across runs."""
    keys = sorted({k for r in per_run for k in r})
    rows = []
    for key in keys:
        run_scores, run_steps, n_games = [], [], 0
        for r in per_run:
            if key not in r:
                continue
            res = r[key]
            n_games = len(res)
            run_scores.append(float(np.mean([s for s, _ in res])))
            run_steps.append(float(np.mean([n for _, n in res])))
        rows.append(EvalRow(key[0], key[1], method, len(run_scores), n_games,
                            float(np.mean(run_steps)), _std(run_steps),
                            float(np.mean(run_scores)), _std(run_scores)))
    return rows


def evaluate(checkpoints, games_dir, episodes_per_game: int = 1, kb_override=None,
             method: str | None = None) -> list[EvalRow]:
    """Greedy evaluation; each checkpoint counts as one run."""
    games = load_games(games_dir)
    per_run, label = [], method
    for path in checkpoints:
        agent, meta = TWCAgent.load(path)
        agent.eval()
        kb = kb_override or load_phase_kb(meta["knowledge"])
        _check_compat(meta, games)
        per_run.append(play_games(agent, games, kb, meta.get("cdc", "all"), episodes_per_game))
        label = label or meta.get("method", "agent")
    return aggregate(per_run, label or "agent")


def evaluate_baseline(policy: str, games_dir, runs: int = 5, seeds=None,
                      episodes_per_game: int = 1) -> list[EvalRow]:
    games = load_games(games_dir)
    seeds = list(seeds or range(1, runs + 1))
    per_run = [play_games(policy, games, None, "all", episodes_per_game, s) for s in seeds]
    return aggregate(per_run, policy)


def _check_compat(meta: dict, games) -> None:
    grammar = meta.get("grammar")
    for g in games:
        if grammar and g.grammar != grammar:
            raise ValueError(f"game {g.level}/{g.split}/{g.seed} uses grammar {g.grammar!r}, "
                             f"checkpoint was trained with {grammar!r}")


def write_eval_csv(rows, path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_HEADER)
        for r in rows:
            w.writerow(r.formatted())
