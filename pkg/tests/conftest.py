import json
import os
from pathlib import Path

import pytest

from twcsg.game import load_vocab
from twcsg.knowledge import KnowledgeBase, Triplet

FIXTURES = Path(__file__).parent / "fixtures"
DATA = Path(__file__).parents[1] / "src" / "twcsg" / "data"


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture(scope="session")
def vocab():
    return load_vocab()


@pytest.fixture
def small_kb():
    return KnowledgeBase.from_triplets([
        Triplet("apple", "on", "table"),
        Triplet("cup", "on", "table"),
        Triplet("apple", "in", "fridge"),
    ])


@pytest.fixture(scope="session")
def manual_path():
    return DATA / "manual.jsonl"


def write_household_sources(vocab, out_dir: Path):
    """Small ConceptNet-style and VG-style files over the bundled vocabulary.

    Both cover every object; the ConceptNet file links objects to goals through
    ``at location`` plus unrelated noise, the VG file through on/in predicates.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    cn = out_dir / "conceptnet_household.csv"
    with open(cn, "w", encoding="utf-8") as fh:
        for o in vocab.objects:
            h, t = o.name.replace(" ", "_"), o.goal.replace(" ", "_")
            fh.write(f"/a/x\t/r/AtLocation\t/c/en/{h}\t/c/en/{t}\t{{}}\n")
            fh.write(f"/a/x\t/r/RelatedTo\t/c/en/{h}\t/c/en/house\t{{}}\n")
    vg = out_dir / "vg_household.json"
    images = [{"image_id": i, "relationships": [
        {"predicate": o.relation.upper(), "subject": {"name": o.name}, "object": {"name": o.goal}}]}
        for i, o in enumerate(vocab.objects)]
    vg.write_text(json.dumps(images), encoding="utf-8")
    return cn, vg


@pytest.fixture(scope="session")
def household_sources(tmp_path_factory, vocab):
    return write_household_sources(vocab, tmp_path_factory.mktemp("sources"))


def env_path(var):
    p = os.environ.get(var)
    return Path(p) if p and Path(p).exists() else None
