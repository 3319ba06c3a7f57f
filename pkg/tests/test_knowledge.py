import gzip
import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from twcsg.knowledge import (KnowledgeBase, KnowledgeError, KnowledgeStats, Triplet,
                             concept_from_uri, load_conceptnet, load_jsonl, load_kb,
                             load_scenegraph, neighbors, normalize_name, relation_from_uri,
                             relation_histogram, save_jsonl, stats, write_stats_csv)

from .conftest import env_path


def test_normalize_name():
    assert normalize_name("  Dirty_Fork ") == "dirty fork"
    assert normalize_name("Coffee   Table") == "coffee table"


def test_relation_and_concept_uris():
    assert relation_from_uri("/r/AtLocation") == "at location"
    assert relation_from_uri("/r/IsA") == "is a"
    assert relation_from_uri("/r/dbpedia/genre") == "dbpedia/genre"
    assert concept_from_uri("/c/en/dirty_fork/n") == ("en", "dirty fork")
    assert concept_from_uri("/c/fr/chat") == ("fr", "chat")
    assert concept_from_uri("http://example.org") is None


def test_triplet_invariants():
    with pytest.raises(KnowledgeError):
        Triplet("", "on", "table")
    with pytest.raises(KnowledgeError):
        Triplet("apple", "on", "table", 0)


def test_conceptnet_fixture(fixtures):
    kb = load_conceptnet(fixtures / "conceptnet_sample.csv")
    assert kb.source_tag == "conceptnet"
    assert kb.counts == {
        ("apple", "at location", "fridge"): 2,
        ("cat", "is a", "animal"): 1,
        ("dirty fork", "related to", "dishwasher"): 1,
        ("jazz", "dbpedia/genre", "music"): 1,
    }
    # the tab-less row and the row with an empty concept term
    assert kb.skipped == 2


def test_conceptnet_identical_rows_merge(tmp_path):
    row = "/a/x\t/r/AtLocation\t/c/en/apple\t/c/en/fridge\t{}\n"
    p = tmp_path / "two.csv"
    p.write_text(row * 2)
    kb = load_conceptnet(p)
    assert list(kb) == [Triplet("apple", "at location", "fridge", 2)]


def test_conceptnet_gzip_and_empty(tmp_path):
    p = tmp_path / "a.csv.gz"
    with gzip.open(p, "wt") as fh:
        fh.write("/a/x\t/r/UsedFor\t/c/en/cup\t/c/en/drinking\t{}\n")
    assert len(load_conceptnet(p)) == 1
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert stats(load_conceptnet(empty)) == KnowledgeStats(0, 0, 0)


def test_unreadable_file_is_an_error(tmp_path):
    with pytest.raises(KnowledgeError):
        load_conceptnet(tmp_path / "missing.csv")
    with pytest.raises(KnowledgeError):
        load_scenegraph(tmp_path / "missing.json")


def test_scenegraph_fixture(fixtures):
    kb = load_scenegraph(fixtures / "vg_sample.json")
    assert kb.source_tag == "scenegraph"
    assert kb.counts == {
        ("cup", "on", "table"): 1,
        ("dirty fork", "in", "dishwasher"): 1,
        ("plate", "on", "table"): 2,
    }
    # image without relationships, nameless subject, empty predicate
    assert kb.skipped == 3


def test_scenegraph_single_relationship(tmp_path):
    p = tmp_path / "one.json"
    p.write_text(json.dumps([{"image_id": 1, "relationships": [
        {"predicate": "IN", "subject": {"name": "dirty fork"}, "object": {"name": "dishwasher"}}]}]))
    assert list(load_scenegraph(p)) == [Triplet("dirty fork", "in", "dishwasher")]
    p.write_text(json.dumps([{"image_id": 1, "relationships": []}]))
    assert len(load_scenegraph(p)) == 0


def test_scenegraph_rejects_non_array(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"relationships": []}')
    with pytest.raises(KnowledgeError):
        load_scenegraph(p)
    p.write_text("[")
    with pytest.raises(KnowledgeError):
        load_scenegraph(p)


def test_jsonl_loading(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text('{"head":"apple","rel":"on","tail":"table"}\n')
    assert list(load_jsonl(p)) == [Triplet("apple", "on", "table", 1)]
    p.write_text('{"head":"apple","rel":"on"}\n')
    with pytest.raises(KnowledgeError, match="line 1"):
        load_jsonl(p)
    p.write_text('{"head":"a","rel":"on","tail":"b"}\nnot json\n')
    with pytest.raises(KnowledgeError, match="line 2"):
        load_jsonl(p)


def test_stats_and_neighbors(small_kb):
    assert stats(small_kb) == KnowledgeStats(4, 2, 3)
    assert stats(KnowledgeBase()) == KnowledgeStats(0, 0, 0)
    assert neighbors(small_kb, "table") == {Triplet("apple", "on", "table"),
                                            Triplet("cup", "on", "table")}
    assert neighbors(small_kb, "sofa") == set()


def test_neighbors_head_and_tail():
    kb = KnowledgeBase.from_triplets([Triplet("box", "in", "box"), Triplet("box", "on", "shelf")])
    assert len(neighbors(kb, "box")) == 2


def test_relation_histogram_order():
    kb = KnowledgeBase.from_triplets([
        Triplet("a", "on", "b", 3), Triplet("c", "in", "d", 3), Triplet("e", "near", "f", 5),
        Triplet("g", "under", "h", 1)])
    assert relation_histogram(kb, 15) == [("near", 5), ("in", 3), ("on", 3), ("under", 1)]
    assert relation_histogram(kb, 2) == [("near", 5), ("in", 3)]
    assert relation_histogram(KnowledgeBase(), 15) == []
    with pytest.raises(ValueError):
        relation_histogram(kb, 0)


def test_load_kb_dispatch(fixtures):
    assert len(load_kb(fixtures / "vg_sample.json", "vg")) == 3
    with pytest.raises(KnowledgeError):
        load_kb(fixtures / "vg_sample.json", "rdf")


def test_stats_csv(tmp_path, small_kb):
    out = tmp_path / "s.csv"
    write_stats_csv([("manual", stats(small_kb))], out)
    assert out.read_text() == ("source,metric,value\nmanual,n_entities,4\n"
                               "manual,n_relations,2\nmanual,n_triplets,3\n")


def test_bundled_manual_kb(manual_path, vocab):
    kb = load_jsonl(manual_path)
    st_ = stats(kb)
    assert st_.n_triplets == len(vocab.objects)
    assert kb.relations() == {"at location"}


def test_manual_kb_table_counts():
    path = env_path("TWCSG_MANUAL_KB")
    if path is None:
        pytest.skip("set TWCSG_MANUAL_KB to the original 132-triplet manual file")
    assert stats(load_jsonl(path)) == KnowledgeStats(111, 2, 132)


names = st.sampled_from(["apple", "cup", "table", "fridge", "sink", "dirty fork", "shelf"])
rels = st.sampled_from(["on", "in", "at location", "near"])
triplets = st.lists(st.builds(Triplet, names, rels, names, st.integers(1, 4)), max_size=25)


@settings(max_examples=60, deadline=None)
@given(triplets, st.randoms(use_true_random=False))
def test_stats_order_insensitive(ts, rnd):
    shuffled = list(ts)
    rnd.shuffle(shuffled)
    assert stats(KnowledgeBase.from_triplets(ts)) == stats(KnowledgeBase.from_triplets(shuffled))


@settings(max_examples=60, deadline=None)
@given(triplets)
def test_histogram_totals_and_entity_cover(ts):
    kb = KnowledgeBase.from_triplets(ts)
    hist = relation_histogram(kb, top_k=100)
    assert sum(n for _, n in hist) == sum(kb.counts.values())
    ents = kb.entities()
    for t in kb:
        assert t.head in ents and t.tail in ents
    st_ = stats(kb)
    per_rel = [sum(1 for k in kb.counts if k[1] == r) for r in kb.relations()]
    assert st_.n_triplets >= max(per_rel, default=0)


@settings(max_examples=40, deadline=None)
@given(triplets)
def test_jsonl_round_trip(tmp_path_factory, ts):
    kb = KnowledgeBase.from_triplets(ts)
    p = tmp_path_factory.mktemp("rt") / "kb.jsonl"
    save_jsonl(kb, p)
    back = load_jsonl(p)
    assert back.triplets == kb.triplets
    save_jsonl(back, p.with_suffix(".2"))
    assert p.read_bytes() == p.with_suffix(".2").read_bytes()


def test_fixture_round_trip(fixtures, tmp_path):
    for kb in (load_conceptnet(fixtures / "conceptnet_sample.csv"),
               load_scenegraph(fixtures / "vg_sample.json")):
        save_jsonl(kb, tmp_path / "x.jsonl")
        assert load_jsonl(tmp_path / "x.jsonl").triplets == kb.triplets


def test_random_order_conceptnet(tmp_path):
    rows = [f"/a/x\t/r/AtLocation\t/c/en/o{i % 7}\t/c/en/l{i % 3}\t{{}}\n" for i in range(40)]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("".join(rows))
    random.Random(3).shuffle(rows)
    b.write_text("".join(rows))
    assert load_conceptnet(a).counts == load_conceptnet(b).counts
