"""Deterministic cleanup-game engine.

A game is a handful of rooms holding supporters and containers plus some
portable objects, several of which start away from where they belong. The
agent only ever sees its current room.
"""
from __future__ import annotations

import copy
import json
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .vocab import EntityVocabulary, GameError

MAX_STEPS = 50

# Table of (objects, objects to find, rooms) choices per level.
LEVELS = {
    "easy": ((1,), (1,), (1,)),
    "medium": ((2, 3), (1, 2, 3), (1,)),
    "hard": ((6, 7), (5, 6, 7), (1, 2)),
}
SPLITS = ("train", "in", "out")
GRAMMARS = ("basic", "twc")


@dataclass
class GameSpec:
    level: str
    seed: int
    split: str
    rooms: list[str]
    doors: list[tuple[str, str, str]]
    locations: list[dict]  # {"name", "kind", "room", "open"}
    objects: list[dict]  # {"name", "goal", "relation", "start": [kind, where], "misplaced"}
    start_room: str
    max_steps: int = MAX_STEPS
    inventory_capacity: int = 1
    grammar: str = "twc"

    @property
    def misplaced(self) -> list[str]:
        return [o["name"] for o in self.objects if o["misplaced"]]

    @property
    def goals(self) -> dict[str, tuple[str, str]]:
        return {o["name"]: (o["relation"], o["goal"]) for o in self.objects}

    @property
    def location_map(self) -> dict[str, dict]:
        return {l["name"]: l for l in self.locations}

    def exits(self, room: str) -> dict[str, str]:
        return _exits(self.doors, room)

    def entity_groups(self) -> dict[str, str]:
        """Entity name -> ``object`` or ``location``."""
        out = {l["name"]: "location" for l in self.locations}
        out.update({o["name"]: "object" for o in self.objects})
        return out

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "seed": self.seed,
            "split": self.split,
            "rooms": list(self.rooms),
            "doors": [list(d) for d in self.doors],
            "locations": [dict(sorted(l.items())) for l in self.locations],
            "objects": [dict(sorted(o.items())) for o in self.objects],
            "start_room": self.start_room,
            "max_steps": self.max_steps,
            "inventory_capacity": self.inventory_capacity,
            "grammar": self.grammar,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "GameSpec":
        try:
            spec = cls(
                level=d["level"], seed=int(d["seed"]), split=d["split"],
                rooms=list(d["rooms"]), doors=[tuple(x) for x in d["doors"]],
                locations=[dict(l) for l in d["locations"]],
                objects=[dict(o, start=list(o["start"])) for o in d["objects"]],
                start_room=d["start_room"], max_steps=int(d.get("max_steps", MAX_STEPS)),
                inventory_capacity=int(d.get("inventory_capacity", 1)),
                grammar=d.get("grammar", "twc"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise GameError(f"malformed game spec: {e}") from e
        if spec.grammar not in GRAMMARS:
            raise GameError(f"unknown grammar {spec.grammar!r}")
        return spec

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GameSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as e:
            raise GameError(f"cannot load game {path}: {e}") from e


def _exits(doors, room):
    from .vocab import OPPOSITE
    out = {}
    for a, d, b in doors:
        if a == room:
            out[d] = b
        elif b == room:
            out[OPPOSITE[d]] = a
    return out


@dataclass
class GameState:
    spec: GameSpec
    room: str
    positions: dict[str, tuple[str, str]]  # obj -> ("floor"|"on"|"in"|"held", room/location)
    open: dict[str, bool]
    t: int = 0
    placed_correctly: set[str] = field(default_factory=set)
    done: bool = False

    @property
    def inventory(self) -> list[str]:
        return sorted(o for o, (k, _) in self.positions.items() if k == "held")

    def room_of(self, obj: str) -> str | None:
        kind, where = self.positions[obj]
        if kind == "floor":
            return where
        if kind == "held":
            return self.room
        return self.spec.location_map[where]["room"]

    def visible_objects(self) -> list[str]:
        locs = self.spec.location_map
        out = []
        for obj, (kind, where) in self.positions.items():
            if kind == "floor" and where == self.room:
                out.append(obj)
            elif kind in ("on", "in") and locs[where]["room"] == self.room:
                if kind == "in" and not self.open[where]:
                    continue
                out.append(obj)
        return sorted(out)


@dataclass(frozen=True)
class Observation:
    text: str
    feedback: str = ""

    def __str__(self) -> str:
        return f"{self.feedback} {self.text}".strip()


def _article(name: str) -> str:
    return ("an " if name[0] in "aeiou" else "a ") + name


def _join(items: list[str]) -> str:
    if len(items) == 1:
        return items[0]
    return ", ".join(items[:-1]) + " and " + items[-1]


def describe(state: GameState) -> str:
    spec = state.spec
    here = [l for l in spec.locations if l["room"] == state.room]
    parts = [f"You are in the {state.room}."]
    if here:
        parts.append("You see " + _join([_article(l["name"]) for l in here]) + ".")
    contents: dict[str, list[str]] = {}
    floor = []
    for obj in state.visible_objects():
        kind, where = state.positions[obj]
        if kind == "floor":
            floor.append(obj)
        else:
            contents.setdefault(where, []).append(obj)
    for loc in here:
        name = loc["name"]
        items = contents.get(name, [])
        if loc["kind"] == "container":
            if not state.open[name]:
                parts.append(f"The {name} is closed.")
            elif items:
                parts.append(f"The {name} is open. In the {name} is " +
                             _join([_article(i) for i in items]) + ".")
            else:
                parts.append(f"The {name} is open and empty.")
        elif items:
            parts.append(f"On the {name} is " + _join([_article(i) for i in items]) + ".")
    if floor:
        parts.append("On the floor is " + _join([_article(i) for i in floor]) + ".")
    exits = sorted(spec.exits(state.room))
    if len(exits) == 1:
        parts.append(f"There is an exit to the {exits[0]}.")
    elif exits:
        parts.append("There are exits to the " + _join(exits) + ".")
    inv = state.inventory
    parts.append("You are carrying " + (_join([_article(i) for i in inv]) if inv else "nothing") + ".")
    return " ".join(parts)


def _at_goal(spec: GameSpec, obj: str, pos) -> bool:
    rel, loc = spec.goals[obj]
    return tuple(pos) == (rel, loc)


def reset(spec: GameSpec) -> tuple[GameState, Observation]:
    positions = {o["name"]: tuple(o["start"]) for o in spec.objects}
    state = GameState(
        spec=spec,
        room=spec.start_room,
        positions=positions,
        open={l["name"]: bool(l.get("open", True)) for l in spec.locations
              if l["kind"] == "container"},
        placed_correctly={o for o, p in positions.items() if _at_goal(spec, o, p)},
    )
    return state, Observation(describe(state))


def admissible_actions(state: GameState) -> list[str]:
    spec = state.spec
    here = [l for l in spec.locations if l["room"] == state.room]
    held = state.inventory
    visible = state.visible_objects()
    acts = {"look"}
    for d in spec.exits(state.room):
        acts.add(f"go {d}")
    for loc in here:
        if loc["kind"] == "container" and not state.open[loc["name"]]:
            acts.add(f"open {loc['name']}")
    if len(held) < spec.inventory_capacity:
        for obj in visible:
            if obj not in state.placed_correctly:
                acts.add(f"take {obj}")
    for obj in held:
        for loc in here:
            if loc["kind"] == "supporter":
                acts.add(f"put {obj} on {loc['name']}")
            elif state.open[loc["name"]]:
                acts.add(f"insert {obj} into {loc['name']}")
    if spec.grammar == "twc":
        acts.add("inventory")
        for loc in here:
            acts.add(f"examine {loc['name']}")
            if loc["kind"] == "container" and state.open[loc["name"]]:
                acts.add(f"close {loc['name']}")
        for obj in visible + held:
            acts.add(f"examine {obj}")
        for obj in held:
            acts.add(f"drop {obj}")
    return sorted(acts)


def _parse(action: str, state: GameState):
    """Turn an admissible command into (verb, obj, target)."""
    words = action.split(" ", 1)
    verb, rest = words[0], (words[1] if len(words) > 1 else "")
    if verb == "put" and " on " in rest:
        obj, target = rest.rsplit(" on ", 1)
        return verb, obj, target
    if verb == "insert" and " into " in rest:
        obj, target = rest.rsplit(" into ", 1)
        return verb, obj, target
    return verb, rest, None


def step(state: GameState, action: str):
    """Apply ``action``; returns ``(new_state, observation, reward, done)``."""
    if state.done:
        raise GameError("game is over; call reset()")
    spec = state.spec
    new = copy.copy(state)
    new.positions = dict(state.positions)
    new.open = dict(state.open)
    new.placed_correctly = set(state.placed_correctly)
    new.t = state.t + 1
    reward = 0.0

    if action not in admissible_actions(state):
        feedback = "That's not something you can do right now."
    else:
        verb, obj, target = _parse(action, state)
        if verb == "look":
            feedback = ""
        elif verb == "inventory":
            inv = new.inventory
            feedback = ("You are carrying " + _join([_article(i) for i in inv]) + "."
                        if inv else "You are carrying nothing.")
        elif verb == "go":
            new.room = spec.exits(state.room)[obj]
            feedback = f"You go {obj}."
        elif verb == "open":
            new.open[obj] = True
            feedback = f"You open the {obj}."
        elif verb == "close":
            new.open[obj] = False
            feedback = f"You close the {obj}."
        elif verb == "examine":
            feedback = f"It is {_article(obj)}."
        elif verb == "take":
            new.positions[obj] = ("held", "")
            feedback = f"You take the {obj}."
        elif verb == "drop":
            new.positions[obj] = ("floor", state.room)
            feedback = f"You drop the {obj} on the floor."
        elif verb in ("put", "insert"):
            rel = "on" if verb == "put" else "in"
            new.positions[obj] = (rel, target)
            prep = "on" if verb == "put" else "into"
            feedback = f"You {verb} the {obj} {prep} the {target}."
            if _at_goal(spec, obj, new.positions[obj]):
                new.placed_correctly.add(obj)
                reward = 1.0
                feedback += " Your score has just gone up by one point."
        else:  # pragma: no cover - grammar and parser agree
            raise GameError(f"unhandled verb {verb!r}")

    solved = set(spec.misplaced) <= new.placed_correctly
    new.done = solved or new.t >= spec.max_steps
    return new, Observation(describe(new), feedback), reward, new.done


def normalized_score(state: GameState) -> float:
    mis = state.spec.misplaced
    if not mis:
        return 1.0
    return len(state.placed_correctly & set(mis)) / len(mis)


def _route(spec: GameSpec, src: str, dst: str) -> list[str]:
    """Shortest list of ``go <dir>`` commands from ``src`` to ``dst``."""
    prev = {src: None}
    q = deque([src])
    while q:
        r = q.popleft()
        if r == dst:
            break
        for d, nxt in sorted(spec.exits(r).items()):
            if nxt not in prev:
                prev[nxt] = (r, d)
                q.append(nxt)
    if dst not in prev:
        raise GameError(f"room {dst!r} unreachable from {src!r}")
    path = []
    while prev[dst] is not None:
        r, d = prev[dst]
        path.append(f"go {d}")
        dst = r
    return path[::-1]


def oracle_policy(spec: GameSpec) -> list[str]:
    """Scripted plan using full knowledge of the game layout; verified by replay."""
    state, _ = reset(spec)
    plan: list[str] = []

    def do(cmd):
        nonlocal state
        if cmd not in admissible_actions(state):
            raise GameError(f"oracle produced inadmissible {cmd!r} (generator bug)")
        plan.append(cmd)
        state, _, _, _ = step(state, cmd)

    todo = [o for o in spec.misplaced if o not in state.placed_correctly]
    while todo:
        # Nearest object first, then by name.
        todo.sort(key=lambda o: (len(_route(spec, state.room, state.room_of(o))), o))
        obj = todo.pop(0)
        for cmd in _route(spec, state.room, state.room_of(obj)):
            do(cmd)
        do(f"take {obj}")
        rel, goal = spec.goals[obj]
        for cmd in _route(spec, state.room, spec.location_map[goal]["room"]):
            do(cmd)
        if rel == "in":
            if not state.open[goal]:
                do(f"open {goal}")
            do(f"insert {obj} into {goal}")
        else:
            do(f"put {obj} on {goal}")
    if normalized_score(state) != 1.0 or len(plan) > spec.max_steps:
        raise GameError(f"spec unsolvable within {spec.max_steps} steps (generator bug)")
    return plan


def generate_game(level: str, vocab: EntityVocabulary, seed: int, split: str = "train",
                  max_steps: int = MAX_STEPS, grammar: str = "twc") -> GameSpec:
    if level not in LEVELS:
        raise GameError(f"unknown level {level!r}")
    if split not in SPLITS:
        raise GameError(f"unknown split {split!r}")
    rng = random.Random(f"{level}/{split}/{seed}")
    obj_choices, find_choices, room_choices = LEVELS[level]
    n_obj = rng.choice(obj_choices)
    n_find = rng.choice([k for k in find_choices if k <= n_obj])
    n_rooms = rng.choice(room_choices)

    locmap = vocab.location_map
    goals_by_room: dict[str, list] = {}
    for o in vocab.objects:
        goals_by_room.setdefault(locmap[o.goal].room, []).append(o)

    def objects_in(rooms):
        return sorted((o for r in rooms for o in goals_by_room.get(r, [])), key=lambda o: o.name)

    # Candidate room sets: single rooms, or connected pairs.
    if n_rooms == 1:
        candidates = [[r] for r in vocab.rooms]
    else:
        candidates = sorted({tuple(sorted((a, b))) for a, _, b in vocab.doors})
        candidates = [list(c) for c in candidates]
    candidates = [c for c in candidates if len(objects_in(c)) >= n_obj]
    if not candidates:
        raise GameError(f"insufficient vocabulary: need {n_obj} objects with goals in "
                        f"{n_rooms} connected room(s) for level {level!r}")
    rooms = rng.choice(candidates)
    chosen = rng.sample(objects_in(rooms), n_obj)
    here = [l for l in vocab.locations if l.room in rooms]
    supporters = [l for l in here if l.kind == "supporter"]

    locations = [{"name": l.name, "kind": l.kind, "room": l.room,
                  "open": (rng.random() < 0.5) if l.kind == "container" else True}
                 for l in here]
    objects = []
    for i, o in enumerate(chosen):
        misplaced = i < n_find
        if misplaced:
            wrong = [s for s in supporters if s.name != o.goal]
            if wrong and rng.random() < 0.5:
                start = ["on", rng.choice(wrong).name]
            else:
                start = ["floor", rng.choice(rooms)]
        else:
            start = [o.relation, o.goal]
        objects.append({"name": o.name, "goal": o.goal, "relation": o.relation,
                        "start": start, "misplaced": misplaced})
    objects.sort(key=lambda o: o["name"])
    doors = [d for d in vocab.doors if d[0] in rooms and d[2] in rooms]
    spec = GameSpec(level=level, seed=seed, split=split, rooms=sorted(rooms), doors=doors,
                    locations=locations, objects=objects, start_room=rng.choice(sorted(rooms)),
                    max_steps=max_steps, grammar=grammar)
    oracle_policy(spec)  # certifies solvability
    return spec


class CleanupEnv:
    """Thin stateful wrapper over the functional engine."""

    def __init__(self, spec: GameSpec):
        self.spec = spec
        self.state: GameState | None = None

    def reset(self) -> Observation:
        self.state, obs = reset(self.spec)
        return obs

    def admissible(self) -> list[str]:
        return admissible_actions(self.state)

    def step(self, action: str):
        self.state, obs, reward, done = step(self.state, action)
        return obs, reward, done

    @property
    def score(self) -> float:
        return normalized_score(self.state)


def game_path(root, level: str, split: str, seed: int) -> Path:
    return Path(root) / level / split / f"{seed}.json"


def _game_sort_key(p: Path):
    stem = (0, int(p.stem), "") if p.stem.isdigit() else (1, 0, p.stem)
    return (p.parent.parent.name, p.parent.name, stem)


def load_games(root) -> list[GameSpec]:
    """Load every ``<level>/<split>/<seed>.json`` under ``root`` in a stable order."""
    root = Path(root)
    files = sorted(root.glob("*/*/*.json"), key=_game_sort_key)
    if not files:
        files = sorted(root.glob("*.json"))
    if not files:
        raise GameError(f"no games found under {root}")
    return [GameSpec.load(f) for f in files]
