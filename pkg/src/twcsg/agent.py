"""Commonsense-augmented actor-critic policy.

Text (observations, admissible actions) goes through GRU encoders over frozen
word vectors. The commonsense subgraph is encoded with graph attention and a
learned sentinel node, fused with the observation context by bidirectional
co-attention, and every admissible action is scored against the fused state.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence

from .similarity import EmbeddingStore
from .subgraph import CommonsenseSubgraph

CHECKPOINT_FORMAT = "twcsg-checkpoint"
CHECKPOINT_VERSION = 1
PAD, UNK = "<pad>", "<unk>"

# Words the engine's templates and command grammar can emit.
TEMPLATE_WORDS = (
    "you are in the see a an is closed open and empty on floor there exit exits to "
    "carrying nothing take put into insert drop examine inventory look go close it "
    "your score has just gone up by one point that's not something can do right now "
    "north south east west"
).split()

_WORD = re.compile(r"[a-z0-9']+")


def tokenize(text: str) -> list[str]:
    return _WORD.findall(str(text).lower())


@dataclass
class AgentConfig:
    hidden: int = 64
    gat_rounds: int = 1
    leaky_slope: float = 0.2
    freeze_embeddings: bool = True
    seed: int = 0


@dataclass
class StateEncoding:
    context: torch.Tensor  # T x H
    graph: torch.Tensor  # (N + 1) x H, sentinel last
    integrated: torch.Tensor  # H
    gat_attention: list = field(default_factory=list)
    c2g: torch.Tensor | None = None
    g2c: torch.Tensor | None = None


@dataclass
class StepOutput:
    probs: torch.Tensor
    log_probs: torch.Tensor
    value: torch.Tensor
    encoding: StateEncoding


class TWCAgent(nn.Module):
    def __init__(self, tokens: list[str], vectors: np.ndarray, config: AgentConfig | None = None):
        super().__init__()
        self.config = config = config or AgentConfig()
        if tokens[:2] != [PAD, UNK]:
            tokens = [PAD, UNK] + [t for t in tokens if t not in (PAD, UNK)]
            vectors = np.vstack([np.zeros((2, vectors.shape[1])), vectors])
        self.tokens = list(tokens)
        self.vocab = {t: i for i, t in enumerate(self.tokens)}
        d, H = vectors.shape[1], config.hidden
        self.dim = d
        # Row mask of tokens that have a real vector (pad/unk excluded).
        known = torch.ones(len(tokens), dtype=torch.float64)
        known[:2] = 0.0
        self.register_buffer("known", known)
        self.embedding = nn.Embedding(len(tokens), d, padding_idx=0)
        self.embedding.weight.data = torch.as_tensor(vectors, dtype=torch.float64).clone()
        self.embedding.weight.requires_grad_(not config.freeze_embeddings)

        self.obs_rnn = nn.GRU(d, H, batch_first=True)
        self.act_rnn = nn.GRU(d, H, batch_first=True)
        self.ctx_cell = nn.GRUCell(H, H)
        self.gat_w = nn.ParameterList(
            [nn.Parameter(torch.empty(H, d if r == 0 else H)) for r in range(config.gat_rounds)])
        self.gat_src = nn.ParameterList([nn.Parameter(torch.empty(H)) for _ in range(config.gat_rounds)])
        self.gat_dst = nn.ParameterList([nn.Parameter(torch.empty(H)) for _ in range(config.gat_rounds)])
        self.sentinel = nn.Parameter(torch.empty(H))
        self.coatt = nn.Parameter(torch.empty(H, H))
        self.fuse = nn.Linear(3 * H, H)
        self.actor = nn.Linear(H, H)
        self.critic = nn.Linear(H, 1)
        self.double()
        self.reset_parameters(config.seed)
        self._cache: dict = {}

    @classmethod
    def from_store(cls, store: EmbeddingStore, words, config: AgentConfig | None = None):
        """Build the token table from ``words`` (names, templates) found in ``store``."""
        toks = sorted({t for w in words for t in tokenize(w)} & set(store.tokens))
        vecs = np.stack([store.vector(t) for t in toks]) if toks else np.zeros((0, store.dim))
        return cls(toks, vecs, config)

    def reset_parameters(self, seed: int) -> None:
        g = torch.Generator().manual_seed(int(seed))
        H = self.config.hidden
        for name, p in self.named_parameters():
            if name.startswith("embedding"):
                continue
            fan_in = p.shape[-1] if p.dim() > 1 else H
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                p.copy_(torch.rand(p.shape, generator=g, dtype=p.dtype) * 2 * bound - bound)
        self._cache = {}

    def begin_episode(self) -> torch.Tensor:
        """Clear per-episode encoding caches and return a fresh running context.

        Parameters must not change while an episode is in progress; cached
        encodings are reused (and shared in the autograd graph) within it.
        """
        self._cache = {"text": {}, "action": {}}
        return self.initial_context()

    # -- encoders --------------------------------------------------------------------------

    def token_ids(self, text: str) -> list[int]:
        ids = [self.vocab.get(t, 1) for t in tokenize(text)]
        return ids or [0]

    def encode_text(self, text_or_ids, rnn: nn.GRU | None = None):
        """Return (T x H token features, H summary = final hidden state)."""
        ids = text_or_ids if isinstance(text_or_ids, list) else self.token_ids(text_or_ids)
        x = self.embedding(torch.tensor([ids]))
        out, h = (rnn or self.obs_rnn)(x)
        return out[0], h[0, 0]

    def encode_actions(self, actions: list[str]) -> torch.Tensor:
        """Final GRU state per action, batched with packing (K x H)."""
        if not actions:
            raise ValueError("no admissible actions")
        cache = self._cache.get("action")
        if cache is None:
            return self._encode_action_batch(actions)
        new = sorted({a for a in actions if a not in cache})
        if new:
            for a, h in zip(new, self._encode_action_batch(new)):
                cache[a] = h
        return torch.stack([cache[a] for a in actions])

    def _encode_action_batch(self, actions):
        seqs = [self.token_ids(a) for a in actions]
        lengths = torch.tensor([len(s) for s in seqs])
        batch = torch.zeros(len(seqs), int(lengths.max()), dtype=torch.long)
        for i, s in enumerate(seqs):
            batch[i, :len(s)] = torch.tensor(s)
        packed = pack_padded_sequence(self.embedding(batch), lengths, batch_first=True,
                                      enforce_sorted=False)
        _, h = self.act_rnn(packed)
        return h[0]

    def node_features(self, names: list[str]) -> torch.Tensor:
        """Mean of in-vocabulary token vectors per entity; zero when none is known."""
        rows = []
        for n in names:
            ids = torch.tensor([self.vocab.get(t, 1) for t in tokenize(n)] or [1])
            w = self.known[ids]
            vec = self.embedding(ids)
            denom = w.sum()
            rows.append((w[:, None] * vec).sum(0) / denom if denom > 0 else vec.sum(0) * 0.0)
        if not rows:
            return torch.zeros(0, self.dim, dtype=torch.float64)
        return torch.stack(rows)

    @staticmethod
    def adjacency(graph: CommonsenseSubgraph) -> torch.Tensor:
        """Boolean mask (target, source) with self-loops; edges act in both directions."""
        n = len(graph.nodes)
        adj = torch.eye(n, dtype=torch.bool)
        for s, d, _, _ in graph.edges:
            adj[s, d] = True
            adj[d, s] = True
        return adj

    def gat_layer(self, x, adj, r: int = 0):
        """One attention round: returns (new features, attention matrix)."""
        z = x @ self.gat_w[r].T
        scores = F.leaky_relu((z @ self.gat_src[r])[:, None] + (z @ self.gat_dst[r])[None, :],
                              self.config.leaky_slope)
        scores = scores.masked_fill(~adj, float("-inf"))
        att = torch.softmax(scores, dim=1)
        return att @ z, att

    def encode_graph(self, graph: CommonsenseSubgraph, node_feats=None):
        """Node features after message passing, with the sentinel appended as the last row."""
        x = self.node_features(graph.nodes) if node_feats is None else node_feats
        atts = []
        if len(graph.nodes):
            adj = self.adjacency(graph)
            for r in range(self.config.gat_rounds):
                x, att = self.gat_layer(x, adj, r)
                atts.append(att)
        else:
            x = x.new_zeros(0, self.config.hidden)
        return torch.cat([x, self.sentinel[None, :]], dim=0), atts

    def co_attention(self, context, graph_feats):
        """Bidirectional attention between context rows and graph rows."""
        if context.dim() != 2 or graph_feats.dim() != 2 or context.shape[1] != graph_feats.shape[1]:
            raise ValueError(f"shape mismatch: {tuple(context.shape)} vs {tuple(graph_feats.shape)}")
        affinity = context @ self.coatt @ graph_feats.T  # T x M
        c2g = torch.softmax(affinity, dim=1)
        attended_graph = (c2g @ graph_feats).mean(0)
        g2c = torch.softmax(affinity.max(dim=1).values, dim=0)
        attended_ctx = g2c @ context
        fused = torch.cat([attended_ctx, attended_graph, attended_ctx * attended_graph])
        return torch.tanh(self.fuse(fused)), c2g, g2c

    def action_scores(self, integrated, action_encodings):
        logits = action_encodings @ self.actor(integrated)
        log_probs = torch.log_softmax(logits, dim=0)
        return log_probs.exp(), log_probs, self.critic(integrated)[0]

    # -- one decision ----------------------------------------------------------------------

    def initial_context(self) -> torch.Tensor:
        return torch.zeros(self.config.hidden, dtype=torch.float64)

    def step(self, observation: str, graph: CommonsenseSubgraph, actions: list[str],
             context_state: torch.Tensor):
        """Encode one observation; returns (StepOutput, updated running context)."""
        cache = self._cache.get("text")
        if cache is None:
            tok_feats, summary = self.encode_text(observation)
        else:
            if observation not in cache:
                cache[observation] = self.encode_text(observation)
            tok_feats, summary = cache[observation]
        ctx = self.ctx_cell(summary[None, :], context_state[None, :])[0]
        context = tok_feats + ctx[None, :]
        graph_feats, atts = self.encode_graph(graph)
        integrated, c2g, g2c = self.co_attention(context, graph_feats)
        probs, log_probs, value = self.action_scores(integrated, self.encode_actions(actions))
        enc = StateEncoding(context, graph_feats, integrated, atts, c2g, g2c)
        return StepOutput(probs, log_probs, value, enc), ctx

    # -- persistence -----------------------------------------------------------------------

    def to_checkpoint(self, meta: dict | None = None) -> dict:
        params = {}
        for name, t in self.state_dict().items():
            arr = t.detach().cpu().double().numpy()
            params[name] = {"shape": list(arr.shape), "data": [float(v) for v in arr.ravel()]}
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "agent": asdict(self.config),
            "dim": self.dim,
            "tokens": self.tokens,
            "params": params,
            "meta": meta or {},
        }

    def save(self, path, meta: dict | None = None) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_checkpoint(meta), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_checkpoint(cls, ckpt: dict) -> "TWCAgent":
        if ckpt.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a twcsg checkpoint")
        if ckpt.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {ckpt.get('version')}")
        cfg = AgentConfig(**ckpt["agent"])
        emb = ckpt["params"]["embedding.weight"]
        vecs = np.asarray(emb["data"], dtype=np.float64).reshape(emb["shape"])
        agent = cls(ckpt["tokens"], vecs, cfg)
        state = {k: torch.tensor(v["data"], dtype=torch.float64).reshape(v["shape"])
                 for k, v in ckpt["params"].items()}
        agent.load_state_dict(state)
        if cfg.hidden != agent.config.hidden or vecs.shape[1] != ckpt["dim"]:
            raise ValueError("checkpoint dimensions are inconsistent")
        return agent

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            ckpt = json.load(fh)
        return cls.from_checkpoint(ckpt), ckpt.get("meta", {})


def act(output: StepOutput, actions: list[str], mode: str = "sample",
        rng: np.random.Generator | None = None):
    """Pick an action; returns (action, index, log-probability tensor, value tensor)."""
    probs = output.probs.detach().numpy()
    if mode == "greedy":
        best = probs.max()
        idx = min((i for i in range(len(actions)) if probs[i] == best), key=lambda i: actions[i])
    elif mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs a random generator")
        cdf = np.cumsum(probs)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        idx = min(idx, len(actions) - 1)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return actions[idx], idx, output.log_probs[idx], output.value
