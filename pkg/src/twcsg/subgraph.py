"""The agent's dynamic commonsense subgraph.

Entities seen so far in an episode accumulate into an entity set; the
subgraph is the part of the knowledge base spanned by that set, optionally
augmented with direct object-location context links (CDC).
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .knowledge import KnowledgeBase

OBJECT, LOCATION = "object", "location"
CDC_MODES = ("all", "none")


@dataclass(frozen=True)
class EntitySet:
    entities: frozenset = frozenset()
    groups: Mapping[str, str] = field(default_factory=dict)

    def __len__(self):
        return len(self.entities)

    def __contains__(self, name):
        return name in self.entities

    def __iter__(self):
        return iter(sorted(self.entities))


@dataclass
class CommonsenseSubgraph:
    nodes: list[str]
    edges: list[tuple[int, int, str, str]]  # (src, dst, relation, provenance)
    groups: dict[str, str] = field(default_factory=dict)
    features: object = None

    def index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.nodes)}

    def edge_keys(self) -> set[tuple[int, int, str]]:
        return {(s, d, r) for s, d, r, _ in self.edges}

    def linked(self, a: int, b: int) -> bool:
        return any({s, d} == {a, b} for s, d, _, _ in self.edges)

    def to_json(self) -> str:
        return json.dumps({
            "nodes": [{"name": n, "group": self.groups.get(n, OBJECT)} for n in self.nodes],
            "edges": [{"src": self.nodes[s], "dst": self.nodes[d], "relation": r,
                       "provenance": p} for s, d, r, p in self.edges],
        }, sort_keys=True)


class EntityMatcher:
    """Longest-match-first, case-insensitive, word-bounded vocabulary matcher."""

    def __init__(self, vocab: Iterable[str]):
        names = sorted({v.lower() for v in vocab if v.strip()}, key=lambda s: (-len(s), s))
        if not names:
            raise ValueError("entity vocabulary is empty")
        alt = "|".join(re.escape(n) for n in names)
        self._re = re.compile(rf"(?<![\w])(?:{alt})(?![\w])", re.IGNORECASE)

    def __call__(self, text: str) -> set[str]:
        return {m.group(0).lower() for m in self._re.finditer(str(text))}


def extract_entities(observation, vocab) -> set[str]:
    matcher = vocab if isinstance(vocab, EntityMatcher) else EntityMatcher(vocab)
    return matcher(observation)


def update_entity_set(previous: EntitySet, extracted: Iterable[str],
                      groups: Mapping[str, str] | None = None) -> EntitySet:
    """Union with ``previous``; existing tags win, unknown entities are objects."""
    tags = dict(previous.groups)
    ents = set(previous.entities)
    for e in extracted:
        ents.add(e)
        if e not in tags:
            tags[e] = (groups or {}).get(e, OBJECT)
    return EntitySet(frozenset(ents), tags)


def build_subgraph(entity_set: EntitySet, kb: KnowledgeBase) -> CommonsenseSubgraph:
    nodes = sorted(entity_set.entities)
    pos = {n: i for i, n in enumerate(nodes)}
    keys = set()
    for n in nodes:
        for h, r, t in kb.keys_touching(n):
            if h in pos and t in pos:
                keys.add((pos[h], pos[t], r))
    edges = [(s, d, r, "knowledge") for s, d, r in sorted(keys)]
    return CommonsenseSubgraph(nodes, edges, {n: entity_set.groups.get(n, OBJECT) for n in nodes})


def apply_cdc(graph: CommonsenseSubgraph, entity_set: EntitySet,
              mode: str = "all") -> CommonsenseSubgraph:
    """Link every object to every location that is not already connected."""
    if mode not in CDC_MODES:
        raise ValueError(f"unknown CDC mode {mode!r}")
    edges = list(graph.edges)
    if mode == "all":
        pos = graph.index()
        linked = {frozenset((s, d)) for s, d, _, _ in edges}
        objs = [n for n in graph.nodes if entity_set.groups.get(n, OBJECT) == OBJECT]
        locs = [n for n in graph.nodes if entity_set.groups.get(n, OBJECT) == LOCATION]
        for o in objs:
            for l in locs:
                if frozenset((pos[o], pos[l])) not in linked:
                    edges.append((pos[o], pos[l], "context", "cdc"))
    return CommonsenseSubgraph(list(graph.nodes), edges, dict(graph.groups), graph.features)
