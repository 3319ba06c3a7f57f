import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from twcsg.agent import AgentConfig, TWCAgent, act, tokenize
from twcsg.harness.a2c import Step, Trajectory, a2c_loss
from twcsg.subgraph import CommonsenseSubgraph

WORDS = ["you", "see", "a", "fork", "table", "sink", "take", "put", "on", "apple", "dirty",
         "fridge", "insert", "into"]


def make_agent(hidden=4, dim=5, seed=0, **kw):
    rng = np.random.default_rng(42)
    return TWCAgent(WORDS, rng.normal(size=(len(WORDS), dim)),
                    AgentConfig(hidden=hidden, seed=seed, **kw))


def graph4():
    return CommonsenseSubgraph(
        ["apple", "dirty fork", "fridge", "sink"],
        [(0, 2, "in", "knowledge"), (1, 3, "on", "knowledge"), (0, 3, "context", "cdc")],
        {"apple": "object", "dirty fork": "object", "fridge": "location", "sink": "location"})


ACTIONS = ["insert apple into fridge", "put apple on sink", "take dirty fork"]


def permuted(graph, perm):
    """Same graph with node i moved to position perm[i]."""
    nodes = [None] * len(graph.nodes)
    for i, p in enumerate(perm):
        nodes[p] = graph.nodes[i]
    edges = [(perm[s], perm[d], r, p) for s, d, r, p in graph.edges]
    return CommonsenseSubgraph(nodes, edges, dict(graph.groups))


def test_tokenize():
    assert tokenize("Take the Dirty fork.") == ["take", "the", "dirty", "fork"]


def test_encode_text_contracts():
    agent = make_agent()
    feats, summary = agent.encode_text("take a dirty fork")
    assert feats.shape == (4, 4) and summary.shape == (4,)
    again, _ = agent.encode_text("take a dirty fork")
    assert torch.equal(feats, again)
    pad, s = agent.encode_text("")
    assert pad.shape == (1, 4) and torch.isfinite(s).all()
    torch.testing.assert_close(summary, feats[-1], rtol=0, atol=0)


def test_single_node_gat():
    agent = make_agent()
    g = CommonsenseSubgraph(["apple"], [], {"apple": "object"})
    x = agent.node_features(g.nodes)
    out, atts = agent.encode_graph(g)
    assert atts[0].item() == 1.0
    torch.testing.assert_close(out[0], x[0] @ agent.gat_w[0].T, rtol=0, atol=1e-15)
    torch.testing.assert_close(out[1], agent.sentinel, rtol=0, atol=0)


def test_attention_normalization():
    agent = make_agent(gat_rounds=2)
    out, atts = agent.encode_graph(graph4())
    assert out.shape == (5, 4)
    for att in atts:
        torch.testing.assert_close(att.sum(1), torch.ones(4, dtype=torch.float64),
                                   rtol=0, atol=1e-6)
        # no mass on non-neighbours
        adj = agent.adjacency(graph4())
        assert (att[~adj] == 0).all()
    ctx = torch.randn(3, 4, dtype=torch.float64)
    _, c2g, g2c = agent.co_attention(ctx, out)
    torch.testing.assert_close(c2g.sum(1), torch.ones(3, dtype=torch.float64), rtol=0, atol=1e-6)
    assert abs(float(g2c.detach().sum()) - 1.0) < 1e-6


def test_sentinel_only_graph():
    agent = make_agent()
    empty = CommonsenseSubgraph([], [], {})
    feats, _ = agent.encode_graph(empty)
    assert feats.shape == (1, 4)
    ctx = torch.randn(3, 4, dtype=torch.float64)
    integrated, c2g, _ = agent.co_attention(ctx, feats)
    assert torch.all(c2g == 1.0)
    assert torch.isfinite(integrated).all()
    h = agent.begin_episode()
    out, _ = agent.step("you see a sink", empty, ACTIONS, h)
    assert torch.isfinite(out.probs).all()


def test_co_attention_shape_mismatch():
    agent = make_agent()
    with pytest.raises(ValueError):
        agent.co_attention(torch.zeros(3, 4, dtype=torch.float64),
                           torch.zeros(2, 5, dtype=torch.float64))


def test_action_distribution_contracts():
    agent = make_agent()
    h = agent.begin_episode()
    one, _ = agent.step("you see a sink", graph4(), ["take apple"], h)
    assert one.probs.item() == 1.0
    out, _ = agent.step("you see a sink", graph4(), ACTIONS + [ACTIONS[0]], h)
    assert abs(float(out.probs.detach().sum()) - 1.0) < 1e-6 and (out.probs > 0).all()
    assert out.probs[0].item() == out.probs[3].item()
    with pytest.raises(ValueError):
        agent.encode_actions([])


def test_act_modes():
    agent = make_agent()
    h = agent.begin_episode()
    out, _ = agent.step("you see a sink", graph4(), ACTIONS, h)
    a, i, logp, v = act(out, ACTIONS, "greedy")
    assert i == int(torch.argmax(out.probs))
    assert abs(float(logp.detach()) - math.log(float(out.probs[i].detach()))) < 1e-9
    seq1 = [act(out, ACTIONS, "sample", np.random.default_rng(5))[1] for _ in range(1)]
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    assert [act(out, ACTIONS, "sample", r1)[1] for _ in range(20)] == \
           [act(out, ACTIONS, "sample", r2)[1] for _ in range(20)]
    assert seq1
    with pytest.raises(ValueError):
        act(out, ACTIONS, "sample")
    with pytest.raises(ValueError):
        act(out, ACTIONS, "boltzmann")


class _Fixed:
    def __init__(self, p):
        self.probs = torch.tensor(p, dtype=torch.float64)
        self.log_probs = self.probs.log()
        self.value = torch.tensor(0.0)


def test_greedy_tie_break_and_first_of_two():
    assert act(_Fixed([0.7, 0.3]), ["b", "a"], "greedy")[0] == "b"
    assert act(_Fixed([0.5, 0.5]), ["take x", "look"], "greedy")[0] == "look"


def test_sampling_frequencies():
    rng = np.random.default_rng(0)
    picks = [act(_Fixed([0.2, 0.8]), ["a", "b"], "sample", rng)[0] for _ in range(4000)]
    assert abs(picks.count("b") / 4000 - 0.8) < 0.03


def test_permutation_invariance():
    agent = make_agent(hidden=6, gat_rounds=2)
    g = graph4()
    h = agent.begin_episode()
    base, _ = agent.step("you see a fork on the table", g, ACTIONS, h)
    for perm in ([3, 2, 1, 0], [1, 0, 3, 2], [2, 3, 0, 1]):
        agent.begin_episode()
        out, _ = agent.step("you see a fork on the table", permuted(g, perm), ACTIONS, h)
        assert (out.encoding.integrated - base.encoding.integrated).abs().max() < 1e-9
        assert (out.probs - base.probs).abs().max() < 1e-9
        assert int(out.probs.argmax()) == int(base.probs.argmax())


def test_evaluation_determinism():
    a, b = make_agent(seed=3), make_agent(seed=3)
    with torch.no_grad():
        oa, _ = a.step("you see a fork", graph4(), ACTIONS, a.begin_episode())
        ob, _ = b.step("you see a fork", graph4(), ACTIONS, b.begin_episode())
    assert torch.equal(oa.probs, ob.probs) and torch.equal(oa.value, ob.value)
    c = make_agent(seed=4)
    with torch.no_grad():
        oc, _ = c.step("you see a fork", graph4(), ACTIONS, c.begin_episode())
    assert not torch.equal(oa.probs, oc.probs)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, len(WORDS) - 1), st.floats(1e-3, 1e3))
def test_scaled_embedding_keeps_normalization(row, scale):
    agent = make_agent()
    with torch.no_grad():
        agent.embedding.weight[row + 2] *= scale
    feats, atts = agent.encode_graph(graph4())
    assert abs(float(atts[0].detach().sum(1).sum()) - 4.0) < 1e-6
    _, c2g, g2c = agent.co_attention(torch.ones(2, 4, dtype=torch.float64), feats)
    assert (c2g.sum(1) - 1).abs().max() < 1e-6 and abs(float(g2c.detach().sum()) - 1) < 1e-6


def test_parameter_init_bounds():
    agent = make_agent(hidden=8)
    for name, p in agent.named_parameters():
        if name.startswith("embedding"):
            assert not p.requires_grad
            continue
        fan_in = p.shape[-1] if p.dim() > 1 else 8
        assert p.abs().max() <= 1 / math.sqrt(fan_in)
    assert torch.equal(make_agent(hidden=8).fuse.weight, agent.fuse.weight)


def test_checkpoint_round_trip(tmp_path):
    agent = make_agent(seed=2)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    agent.save(p1, {"knowledge_source": "manual"})
    loaded, meta = TWCAgent.load(p1)
    assert meta == {"knowledge_source": "manual"}
    loaded.save(p2, meta)
    assert p1.read_bytes() == p2.read_bytes()
    with torch.no_grad():
        a, _ = agent.step("take a fork", graph4(), ACTIONS, agent.begin_episode())
        b, _ = loaded.step("take a fork", graph4(), ACTIONS, loaded.begin_episode())
    assert torch.equal(a.probs, b.probs)


def test_checkpoint_rejects_foreign_files():
    with pytest.raises(ValueError):
        TWCAgent.from_checkpoint({"format": "other"})


# -- gradient checks against central finite differences ------------------------------------

REWARDS = (0.0, 1.0, 0.5)


def _rollout(agent):
    traj = Trajectory()
    h = agent.begin_episode()
    obs = ["you see a fork", "take dirty fork", "put apple on sink"]
    graphs = [graph4(), permuted(graph4(), [1, 0, 2, 3]), graph4()]
    for text, g, choice in zip(obs, graphs, (1, 0, 2)):
        out, h = agent.step(text, g, ACTIONS, h)
        traj.log_probs.append(out.log_probs[choice])
        traj.values.append(out.value)
        traj.entropies.append(-(out.probs * out.log_probs).sum())
    traj.steps = [Step("", [], "", 0.0, 0.0, r, 0.0) for r in REWARDS]
    return traj


def _episode_loss(agent):
    """Three decisions through the full pipeline, scored with the actor-critic loss."""
    total, *_ = a2c_loss([_rollout(agent)], gamma=0.9)
    return total


def _surrogate(advantages):
    """The same objective written out directly, advantages held constant."""
    returns = torch.tensor([0.9 * 1.0 + 0.81 * 0.5, 1.0 + 0.9 * 0.5, 0.5], dtype=torch.float64)

    def loss(agent):
        tr = _rollout(agent)
        values = torch.stack(tr.values)
        return (-(advantages * torch.stack(tr.log_probs)).sum()
                + 0.5 * ((returns - values) ** 2).sum()
                - 0.01 * torch.stack(tr.entropies).sum())
    return loss, returns


def _check_gradients(agent, loss_fn, names=None, eps=1e-6, analytic_fn=None):
    """Relative error per parameter tensor between autograd and central differences.

    ``analytic_fn`` (default ``loss_fn``) supplies the backpropagated loss; the
    numeric side always differentiates ``loss_fn``.
    """
    params = dict(agent.named_parameters())
    names = names or [n for n, p in params.items() if p.requires_grad]
    agent.zero_grad()
    (analytic_fn or loss_fn)(agent).backward()
    worst = {}
    for name in names:
        p = params[name]
        analytic = p.grad.detach().clone().reshape(-1)
        numeric = torch.zeros_like(analytic)
        flat = p.data.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + eps
                up = float(loss_fn(agent))
                flat[i] = orig - eps
                down = float(loss_fn(agent))
                flat[i] = orig
            numeric[i] = (up - down) / (2 * eps)
        denom = max(float(analytic.norm()), float(numeric.norm()), 1e-8)
        worst[name] = float((analytic - numeric).norm()) / denom
    return worst


def full_pipeline_gradient_errors():
    torch.manual_seed(0)
    agent = make_agent(hidden=4, dim=5, seed=1)
    with torch.no_grad():
        values = torch.stack(_rollout(agent).values)
    _, returns = _surrogate(None)
    surrogate, _ = _surrogate(returns - values)
    return _check_gradients(agent, surrogate, analytic_fn=_episode_loss)


def test_full_pipeline_gradient_check():
    errs = full_pipeline_gradient_errors()
    groups = {n.split(".")[0] for n in errs}
    assert {"obs_rnn", "act_rnn", "ctx_cell", "gat_w", "gat_src", "gat_dst", "sentinel", "coatt",
            "fuse", "actor", "critic"} <= groups
    bad = {k: v for k, v in errs.items() if not v < 1e-4}
    assert not bad


def test_gat_gradient_wrt_w():
    agent = make_agent(hidden=4, dim=5, seed=3)
    weights = torch.linspace(-1, 1, 16, dtype=torch.float64).reshape(4, 4)

    def loss(a):
        feats, _ = a.encode_graph(graph4())
        return (feats[:4] * weights).sum()

    errs = _check_gradients(agent, loss, ["gat_w.0", "gat_src.0", "gat_dst.0"])
    assert max(errs.values()) < 1e-4
