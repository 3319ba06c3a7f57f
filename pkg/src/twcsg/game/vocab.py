from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path


class GameError(ValueError):
    pass


OPPOSITE = {"north": "south", "south": "north", "east": "west", "west": "east"}


@dataclass(frozen=True)
class ObjectEntry:
    name: str
    goal: str
    relation: str  # "on" | "in"


@dataclass(frozen=True)
class LocationEntry:
    name: str
    kind: str  # "supporter" | "container"
    room: str


@dataclass
class EntityVocabulary:
    objects: list[ObjectEntry]
    locations: list[LocationEntry]
    rooms: list[str]
    doors: list[tuple[str, str, str]] = field(default_factory=list)  # (room, direction, room)

    def __post_init__(self):
        self.validate()

    def validate(self):
        locs = {loc.name: loc for loc in self.locations}
        rooms = set(self.rooms)
        for loc in self.locations:
            if loc.kind not in ("supporter", "container"):
                raise GameError(f"location {loc.name!r}: bad kind {loc.kind!r}")
            if loc.room not in rooms:
                raise GameError(f"location {loc.name!r}: unknown room {loc.room!r}")
        for obj in self.objects:
            loc = locs.get(obj.goal)
            if loc is None:
                raise GameError(f"object {obj.name!r}: unknown goal {obj.goal!r}")
            want = "in" if loc.kind == "container" else "on"
            if obj.relation != want:
                raise GameError(f"object {obj.name!r}: {loc.kind} goal needs relation {want!r}")
        for a, d, b in self.doors:
            if a not in rooms or b not in rooms or d not in OPPOSITE:
                raise GameError(f"bad door {a!r} {d!r} {b!r}")

    @property
    def location_map(self) -> dict[str, LocationEntry]:
        return {loc.name: loc for loc in self.locations}

    def exits(self, room: str, allowed=None) -> dict[str, str]:
        out = {}
        for a, d, b in self.doors:
            if allowed is not None and (a not in allowed or b not in allowed):
                continue
            if a == room:
                out[d] = b
            elif b == room:
                out[OPPOSITE[d]] = a
        return out

    def entity_names(self) -> list[str]:
        return sorted({o.name for o in self.objects} | {loc.name for loc in self.locations})

    def to_dict(self) -> dict:
        return {
            "rooms": list(self.rooms),
            "doors": [{"room": a, "direction": d, "to": b} for a, d, b in self.doors],
            "locations": [{"name": l.name, "kind": l.kind, "room": l.room} for l in self.locations],
            "objects": [{"name": o.name, "goal": o.goal, "relation": o.relation}
                        for o in self.objects],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EntityVocabulary":
        try:
            return cls(
                objects=[ObjectEntry(o["name"], o["goal"], o["relation"]) for o in d["objects"]],
                locations=[LocationEntry(l["name"], l["kind"], l["room"]) for l in d["locations"]],
                rooms=list(d["rooms"]),
                doors=[(x["room"], x["direction"], x["to"]) for x in d.get("doors", [])],
            )
        except (KeyError, TypeError) as e:
            raise GameError(f"malformed vocabulary: {e}") from e

    def with_objects(self, names) -> "EntityVocabulary":
        keep = set(names)
        return EntityVocabulary([o for o in self.objects if o.name in keep],
                                list(self.locations), list(self.rooms), list(self.doors))


def load_vocab(path=None) -> EntityVocabulary:
    """Load a vocabulary JSON file; the bundled household vocabulary when ``path`` is None."""
    if path is None:
        text = resources.files("twcsg.data").joinpath("vocab.json").read_text(encoding="utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise GameError(f"cannot read vocabulary {path}: {e}") from e
    try:
        return EntityVocabulary.from_dict(json.loads(text))
    except json.JSONDecodeError as e:
        raise GameError(f"vocabulary is not valid JSON: {e}") from e


def make_splits(vocab: EntityVocabulary, fraction: float = 0.8, seed: int = 0):
    """Partition objects into train and OUT sets; IN games reuse the train objects.

    The split is stratified by goal room so that every room keeps objects on
    both sides (multi-object OUT games need several goals per room).
    Returns ``(train, in_vocab, out_vocab)``.
    """
    if not 0.0 < fraction < 1.0:
        raise GameError(f"fraction must be in (0, 1), got {fraction}")
    if len(vocab.objects) < 2:
        raise GameError("need at least 2 objects to split")
    rng = random.Random(seed)
    locmap = vocab.location_map
    by_room: dict[str, list[str]] = {}
    for o in sorted(vocab.objects, key=lambda o: o.name):
        by_room.setdefault(locmap[o.goal].room, []).append(o.name)
    train, out = [], []
    for room in sorted(by_room):
        names = by_room[room]
        rng.shuffle(names)
        k = round(fraction * len(names))
        train += names[:k]
        out += names[k:]
    # Rooms with one or two objects can round everything to one side.
    if not out:
        out.append(train.pop())
    if not train:
        train.append(out.pop(0))
    train_v = vocab.with_objects(train)
    return train_v, train_v, vocab.with_objects(out)
