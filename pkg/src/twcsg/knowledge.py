"""Knowledge sources: ConceptNet dumps, Visual Genome scene graphs and JSONL triplet files.

Everything is reduced to one normalized triplet store. Names are lowercased,
underscores become spaces and surrounding whitespace is stripped; no
lemmatization is attempted.
"""
from __future__ import annotations

import csv
import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

log = logging.getLogger(__name__)

SOURCE_TAGS = ("conceptnet", "scenegraph", "manual", "other")


class KnowledgeError(ValueError):
    """Raised for unreadable or malformed knowledge files."""


def normalize_name(name: str) -> str:
    return " ".join(name.replace("_", " ").lower().split())


_CAMEL = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def relation_from_uri(uri: str) -> str:
    """``/r/AtLocation`` -> ``at location``; ``/r/dbpedia/genre`` -> ``dbpedia/genre``."""
    rel = uri[3:] if uri.startswith("/r/") else uri
    rel = rel.strip("/")
    return normalize_name(_CAMEL.sub(" ", rel))


def concept_from_uri(uri: str) -> tuple[str, str] | None:
    """Split ``/c/<lang>/<term>[/pos/...]`` into (lang, normalized term)."""
    parts = uri.split("/")
    # ['', 'c', 'en', 'term', ...]
    if len(parts) < 4 or parts[1] != "c" or not parts[3]:
        return None
    return parts[2], normalize_name(parts[3])


@dataclass(frozen=True)
class Triplet:
    head: str
    relation: str
    tail: str
    count: int = 1

    def __post_init__(self):
        if not self.head or not self.relation or not self.tail:
            raise KnowledgeError(f"empty field in triplet {self!r}")
        if self.count < 1:
            raise KnowledgeError(f"count must be >= 1, got {self.count}")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.head, self.relation, self.tail)


@dataclass(frozen=True)
class KnowledgeStats:
    n_entities: int
    n_relations: int
    n_triplets: int


@dataclass
class KnowledgeBase:
    """Deduplicated triplet store keyed by ``(head, relation, tail)``.

    Treat instances as immutable once built; the entity index is computed
    lazily on first use.
    """

    source_tag: str = "other"
    counts: dict[tuple[str, str, str], int] = field(default_factory=dict)
    skipped: int = 0
    _index: dict[str, set[tuple[str, str, str]]] | None = field(
        default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.source_tag not in SOURCE_TAGS:
            raise KnowledgeError(f"unknown source tag {self.source_tag!r}")

    @classmethod
    def from_counter(cls, counter: Counter, source_tag: str = "other",
                     skipped: int = 0) -> "KnowledgeBase":
        return cls(source_tag=source_tag, counts=dict(sorted(counter.items())),
                   skipped=skipped)

    @classmethod
    def from_triplets(cls, triplets: Iterable[Triplet],
                      source_tag: str = "other") -> "KnowledgeBase":
        c: Counter = Counter()
        for t in triplets:
            c[t.key] += t.count
        return cls.from_counter(c, source_tag)

    def __len__(self) -> int:
        return len(self.counts)

    def __iter__(self) -> Iterator[Triplet]:
        for (h, r, t), n in self.counts.items():
            yield Triplet(h, r, t, n)

    def __contains__(self, key) -> bool:
        if isinstance(key, Triplet):
            key = key.key
        return key in self.counts

    @property
    def triplets(self) -> set[Triplet]:
        return set(self)

    def entities(self) -> set[str]:
        out = set()
        for h, _, t in self.counts:
            out.add(h)
            out.add(t)
        return out

    def relations(self) -> set[str]:
        return {r for _, r, _ in self.counts}

    def _entity_index(self):
        if self._index is None:
            idx: dict[str, set] = defaultdict(set)
            for key in self.counts:
                idx[key[0]].add(key)
                idx[key[2]].add(key)
            self._index = dict(idx)
        return self._index

    def keys_touching(self, entity: str) -> set[tuple[str, str, str]]:
        return self._entity_index().get(entity, set())

    def merged(self, other: "KnowledgeBase", source_tag: str | None = None) -> "KnowledgeBase":
        c = Counter(self.counts)
        c.update(other.counts)
        return KnowledgeBase.from_counter(c, source_tag or self.source_tag)


def _open_text(path):
    path = Path(path)
    try:
        if path.suffix == ".gz":
            import gzip
            return gzip.open(path, "rt", encoding="utf-8")
        return open(path, encoding="utf-8")
    except OSError as e:
        raise KnowledgeError(f"cannot read {path}: {e}") from e


def load_conceptnet(path, english_only: bool = True) -> KnowledgeBase:
    """Read a tab-separated ConceptNet assertions dump (optionally gzipped).

    Malformed rows are skipped and counted in ``kb.skipped``.
    """
    counter: Counter = Counter()
    skipped = 0
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 5:
                skipped += 1
                log.debug("line %d: expected 5 columns, got %d", lineno, len(cols))
                continue
            if not (cols[2].startswith("/c/") and cols[3].startswith("/c/")):
                continue  # ExternalURL and other non-concept edges
            start = concept_from_uri(cols[2])
            end = concept_from_uri(cols[3])
            rel = relation_from_uri(cols[1])
            if start is None or end is None or not rel or not start[1] or not end[1]:
                skipped += 1
                continue
            if english_only and (start[0] != "en" or end[0] != "en"):
                continue
            counter[(start[1], rel, end[1])] += 1
    if skipped:
        log.warning("%s: skipped %d malformed rows", path, skipped)
    return KnowledgeBase.from_counter(counter, "conceptnet", skipped)


def _vg_name(entry) -> str | None:
    if not isinstance(entry, dict):
        return None
    name = entry.get("name")
    if not name:
        names = entry.get("names")
        if isinstance(names, list) and names:
            name = names[0]
    if not isinstance(name, str):
        return None
    return normalize_name(name) or None


def load_scenegraph(path) -> KnowledgeBase:
    """Read a Visual Genome style ``relationships.json`` array."""
    try:
        with open(path, encoding="utf-8") as fh:
            images = json.load(fh)
    except OSError as e:
        raise KnowledgeError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise KnowledgeError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(images, list):
        raise KnowledgeError(f"{path}: expected a JSON array of images")

    counter: Counter = Counter()
    skipped = 0
    for image in images:
        rels = image.get("relationships") if isinstance(image, dict) else None
        if not isinstance(rels, list):
            skipped += 1
            continue
        for rel in rels:
            if not isinstance(rel, dict):
                skipped += 1
                continue
            subj = _vg_name(rel.get("subject"))
            obj = _vg_name(rel.get("object"))
            pred = rel.get("predicate")
            pred = normalize_name(pred) if isinstance(pred, str) else ""
            if not subj or not obj or not pred:
                skipped += 1
                continue
            counter[(subj, pred, obj)] += 1
    if skipped:
        log.warning("%s: skipped %d images/relationships", path, skipped)
    return KnowledgeBase.from_counter(counter, "scenegraph", skipped)


def load_jsonl(path, source_tag: str = "manual") -> KnowledgeBase:
    """Read the JSONL interchange format: ``{"head", "rel", "tail", "count"?}`` per line."""
    counter: Counter = Counter()
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                head = normalize_name(rec["head"])
                rel = normalize_name(rec["rel"])
                tail = normalize_name(rec["tail"])
                count = int(rec.get("count", 1))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as e:
                raise KnowledgeError(f"{path}: line {lineno}: bad record ({e})") from e
            if not head or not rel or not tail or count < 1:
                raise KnowledgeError(f"{path}: line {lineno}: empty field or bad count")
            counter[(head, rel, tail)] += count
    return KnowledgeBase.from_counter(counter, source_tag)


LOADERS = {
    "conceptnet": load_conceptnet,
    "vg": load_scenegraph,
    "scenegraph": load_scenegraph,
    "jsonl": load_jsonl,
}


def load_kb(path, fmt: str) -> KnowledgeBase:
    try:
        loader = LOADERS[fmt]
    except KeyError:
        raise KnowledgeError(f"unknown knowledge format {fmt!r}") from None
    return loader(path)


def save_jsonl(kb: KnowledgeBase, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (h, r, t), n in sorted(kb.counts.items()):
            fh.write(json.dumps({"head": h, "rel": r, "tail": t, "count": n}) + "\n")


def stats(kb: KnowledgeBase) -> KnowledgeStats:
    return KnowledgeStats(len(kb.entities()), len(kb.relations()), len(kb.counts))


def relation_histogram(kb: KnowledgeBase, top_k: int = 15) -> list[tuple[str, int]]:
    """Relations by descending total count, ties broken lexicographically."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    totals: Counter = Counter()
    for (_, r, _), n in kb.counts.items():
        totals[r] += n
    return sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]


def neighbors(kb: KnowledgeBase, entity: str) -> set[Triplet]:
    return {Triplet(*key, kb.counts[key]) for key in kb.keys_touching(entity)}


def write_stats_csv(rows: Iterable[tuple[str, KnowledgeStats]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "metric", "value"])
        for source, st in rows:
            w.writerow([source, "n_entities", st.n_entities])
            w.writerow([source, "n_relations", st.n_relations])
            w.writerow([source, "n_triplets", st.n_triplets])
