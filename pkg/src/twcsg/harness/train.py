"""Training runs: fresh agent per seed, one A2C update per episode, knowledge schedule."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from ..agent import TEMPLATE_WORDS, AgentConfig, TWCAgent
from ..game import CleanupEnv, EntityVocabulary, generate_game, load_vocab, make_splits
from ..knowledge import KnowledgeBase, load_kb
from ..similarity import EmbeddingStore, load_embeddings, synthetic_embeddings
from ..subgraph import EntityMatcher
from .a2c import a2c_update, run_episode

log = logging.getLogger(__name__)

METRICS_HEADER = ["run", "episode", "level", "knowledge_source", "score", "steps",
                  "loss_policy", "loss_value", "entropy"]


class ConfigError(ValueError):
    pass


@dataclass
class KnowledgePhase:
    source: str
    episodes: int
    kb: list[dict] = field(default_factory=list)  # [{"path", "format"}], merged in order

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError(f"phase {self.source!r}: episodes must be >= 1")
        if not self.kb:
            raise ConfigError(f"phase {self.source!r}: no knowledge files")


@dataclass
class TrainConfig:
    level: str = "easy"
    episodes: int = 100
    runs: int = 5
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    schedule: list[KnowledgePhase] = field(default_factory=list)
    gamma: float = 0.9
    lr: float = 1e-3
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    grad_clip: float = 5.0
    max_steps: int = 50
    embeddings: str | None = None  # None -> synthetic vectors
    embedding_dim: int = 100
    embedding_seed: int = 0
    hidden: int = 64
    gat_rounds: int = 1
    leaky_slope: float = 0.2
    cdc: str = "all"
    grammar: str = "twc"
    vocab: str | None = None
    split_fraction: float = 0.8
    split_seed: int = 0
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if self.runs < 1 or len(self.seeds) < self.runs:
            raise ConfigError(f"need at least {self.runs} seeds, got {self.seeds}")

    @property
    def method(self) -> str:
        return "+".join(p.source for p in self.schedule)

    @property
    def total_episodes(self) -> int:
        return sum(p.episodes for p in self.schedule)

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "TrainConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = Path(base_dir) if base_dir else Path.cwd()

        def resolve(p):
            return None if p is None else str((base / p).resolve())

        episodes = int(d.get("episodes", 100))
        phases = []
        for ph in d.pop("schedule", []):
            files = ph.get("kb")
            if files is None:
                files = [{"path": ph["path"], "format": ph.get("format", "jsonl")}]
            files = [{"path": resolve(f["path"]), "format": f.get("format", "jsonl")} for f in files]
            phases.append(KnowledgePhase(ph["source"], int(ph.get("episodes", episodes)), files))
        if not phases:
            raise ConfigError("config needs a non-empty knowledge schedule")
        for key in ("embeddings", "vocab"):
            if d.get(key) is not None:
                d[key] = resolve(d[key])
        d["out_dir"] = resolve(d.get("out_dir", "runs/default"))
        try:
            return cls(schedule=phases, **d)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls.from_dict(data, path.parent)

    def to_dict(self) -> dict:
        return asdict(self)


def load_phase_kb(phase: KnowledgePhase | dict) -> KnowledgeBase:
    files = phase.kb if isinstance(phase, KnowledgePhase) else phase["kb"]
    kb = None
    for f in files:
        part = load_kb(f["path"], f["format"])
        kb = part if kb is None else kb.merged(part)
    return kb


def agent_words(vocab: EntityVocabulary) -> list[str]:
    return vocab.entity_names() + list(vocab.rooms) + list(TEMPLATE_WORDS)


def build_embeddings(cfg: TrainConfig, words) -> EmbeddingStore:
    if cfg.embeddings:
        return load_embeddings(cfg.embeddings, cfg.embedding_dim)
    toks = {t for w in words for t in w.lower().replace("'", " ").split()} | set(TEMPLATE_WORDS)
    return synthetic_embeddings(toks, cfg.embedding_dim, cfg.embedding_seed)


def new_agent(cfg: TrainConfig, store: EmbeddingStore, vocab: EntityVocabulary, seed: int):
    acfg = AgentConfig(hidden=cfg.hidden, gat_rounds=cfg.gat_rounds,
                       leaky_slope=cfg.leaky_slope, seed=seed)
    return TWCAgent.from_store(store, agent_words(vocab), acfg)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def train_run(cfg: TrainConfig, seed: int, vocab: EntityVocabulary, store: EmbeddingStore,
              kbs: list[KnowledgeBase], out_dir: Path, events: list) -> list[list]:
    """One independent run. Returns metric rows; writes the final checkpoint."""
    torch.manual_seed(seed)
    train_vocab, _, _ = make_splits(vocab, cfg.split_fraction, cfg.split_seed)
    agent = new_agent(cfg, store, vocab, seed)
    opt = torch.optim.Adam([p for p in agent.parameters() if p.requires_grad], lr=cfg.lr)
    game_rng = np.random.default_rng([seed, 0])
    act_rng = np.random.default_rng([seed, 1])
    matcher = EntityMatcher(vocab.entity_names())
    rows = []
    episode = 0
    ckpt_dir = out_dir / "checkpoints"
    for p_idx, (phase, kb) in enumerate(zip(cfg.schedule, kbs)):
        if p_idx > 0:
            events.append({"run": seed, "episode": episode + 1, "event": "knowledge_switch",
                           "from": cfg.schedule[p_idx - 1].source, "to": phase.source})
            log.info("run %d: switching knowledge %s -> %s at episode %d", seed,
                     cfg.schedule[p_idx - 1].source, phase.source, episode + 1)
        for _ in range(phase.episodes):
            episode += 1
            game_seed = int(game_rng.integers(0, 2**31 - 1))
            spec = generate_game(cfg.level, train_vocab, game_seed, "train", cfg.max_steps,
                                 cfg.grammar)
            traj = run_episode(agent, CleanupEnv(spec), kb, "sample", act_rng, cfg.cdc, matcher)
            rec = a2c_update(agent, opt, [traj], cfg.gamma, cfg.value_coef, cfg.entropy_coef,
                             cfg.grad_clip)
            rows.append([seed, episode, cfg.level, phase.source, _fmt(traj.score), len(traj),
                         _fmt(rec.loss_policy), _fmt(rec.loss_value), _fmt(rec.entropy)])
        if len(cfg.schedule) > 1:
            agent.save(ckpt_dir / f"run{seed}_ep{episode}.json", checkpoint_meta(cfg, p_idx))
    agent.save(ckpt_dir / f"run{seed}.json", checkpoint_meta(cfg, len(cfg.schedule) - 1))
    return rows


def checkpoint_meta(cfg: TrainConfig, phase_idx: int) -> dict:
    phase = cfg.schedule[phase_idx]
    return {
        "knowledge_source": phase.source,
        "knowledge": {"source": phase.source, "kb": phase.kb},
        "method": cfg.method,
        "level": cfg.level,
        "cdc": cfg.cdc,
        "grammar": cfg.grammar,
        "vocab": cfg.vocab,
        "max_steps": cfg.max_steps,
        "embedding_dim": cfg.embedding_dim,
        "hidden": cfg.hidden,
    }


def write_metrics(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        w.writerows(rows)


def train(cfg: TrainConfig) -> dict:
    """Train ``cfg.runs`` independent agents; returns output paths."""
    out_dir = Path(cfg.out_dir)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    vocab = load_vocab(cfg.vocab)
    # Resources are resolved before any training starts.
    kbs = [load_phase_kb(p) for p in cfg.schedule]
    store = build_embeddings(cfg, agent_words(vocab))
    (out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True)
                                         + "\n", encoding="utf-8")
    all_rows, events = [], []
    for seed in cfg.seeds[:cfg.runs]:
        rows = train_run(cfg, seed, vocab, store, kbs, out_dir, events)
        write_metrics(rows, out_dir / f"metrics_run{seed}.csv")
        all_rows.extend(rows)
    write_metrics(all_rows, out_dir / "metrics.csv")
    with open(out_dir / "run.log", "w", encoding="utf-8", newline="\n") as fh:
        for ev in events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")
    return {"metrics": out_dir / "metrics.csv", "log": out_dir / "run.log",
            "checkpoints": [out_dir / "checkpoints" / f"run{s}.json" for s in cfg.seeds[:cfg.runs]]}
