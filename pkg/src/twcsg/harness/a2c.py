"""Episode rollouts and the advantage actor-critic update."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from ..agent import TWCAgent, act
from ..game import CleanupEnv
from ..knowledge import KnowledgeBase
from ..subgraph import EntityMatcher, EntitySet, apply_cdc, build_subgraph, extract_entities, \
    update_entity_set

log = logging.getLogger(__name__)


class NumericError(RuntimeError):
    """A loss or gradient went non-finite."""


@dataclass
class Step:
    observation: str
    admissible: list[str]
    action: str
    log_prob: float
    value: float
    reward: float
    score: float
    n_entities: int = 0


@dataclass
class Trajectory:
    steps: list[Step] = field(default_factory=list)
    done: bool = False
    score: float = 0.0
    # Graph-connected tensors for the update; empty under no_grad rollouts.
    log_probs: list = field(default_factory=list, repr=False)
    values: list = field(default_factory=list, repr=False)
    entropies: list = field(default_factory=list, repr=False)

    @property
    def rewards(self) -> list[float]:
        return [s.reward for s in self.steps]

    @property
    def episode_return(self) -> float:
        return float(sum(self.rewards))

    def __len__(self):
        return len(self.steps)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for s in self.steps:
                fh.write(json.dumps({"observation": s.observation, "action": s.action,
                                     "reward": s.reward, "score": s.score}) + "\n")


def discounted_returns(rewards, gamma: float) -> list[float]:
    out = [0.0] * len(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def run_episode(agent, env: CleanupEnv, kb: KnowledgeBase, mode: str = "sample",
                rng: np.random.Generator | None = None, cdc: str = "all",
                matcher: EntityMatcher | None = None, on_graph=None) -> Trajectory:
    """Play one episode.

    ``agent`` may be a :class:`TWCAgent` or any callable
    ``(observation, admissible) -> action`` used as a baseline policy.
    """
    spec = env.spec
    groups = spec.entity_groups()
    matcher = matcher or EntityMatcher(groups)
    obs = env.reset()
    entities = EntitySet()
    traj = Trajectory()
    neural = isinstance(agent, TWCAgent)
    ctx = agent.begin_episode() if neural else None
    done = False
    while not done:
        text = str(obs)
        entities = update_entity_set(entities, extract_entities(text, matcher), groups)
        actions = env.admissible()
        if neural:
            graph = apply_cdc(build_subgraph(entities, kb), entities, cdc)
            if on_graph is not None:
                on_graph(env.state.t, graph)
            out, ctx = agent.step(text, graph, actions, ctx)
            action, _, logp, value = act(out, actions, mode, rng)
            if torch.is_grad_enabled():
                traj.log_probs.append(logp)
                traj.values.append(value)
                traj.entropies.append(-(out.probs * out.log_probs).sum())
            lp, v = float(logp.detach()), float(value.detach())
        else:
            action, lp, v = agent(text, actions), 0.0, 0.0
        obs, reward, done = env.step(action)
        traj.steps.append(Step(text, actions, action, lp, v, reward, env.score, len(entities)))
    traj.done = done
    traj.score = env.score
    return traj


@dataclass
class LossRecord:
    loss_policy: float
    loss_value: float
    entropy: float
    total: float
    grad_norm: float


def a2c_loss(trajectories, gamma: float, value_coef: float = 0.5, entropy_coef: float = 0.01):
    """Monte-Carlo advantage actor-critic loss over complete trajectories."""
    pol, val, ent, n = 0.0, 0.0, 0.0, 0
    for tr in trajectories:
        if not tr.log_probs:
            raise ValueError("trajectory carries no differentiable outputs")
        returns = torch.tensor(discounted_returns(tr.rewards, gamma), dtype=torch.float64)
        values = torch.stack(tr.values)
        adv = (returns - values).detach()
        pol = pol - (adv * torch.stack(tr.log_probs)).sum()
        val = val + ((returns - values) ** 2).sum()
        ent = ent + torch.stack(tr.entropies).sum()
        n += len(tr.log_probs)
    total = pol + value_coef * val - entropy_coef * ent
    return total, pol, val, ent / max(n, 1)


def a2c_update(agent, optimizer, trajectories, gamma: float = 0.9, value_coef: float = 0.5,
               entropy_coef: float = 0.01, grad_clip: float = 5.0) -> LossRecord:
    if not trajectories:
        raise ValueError("a2c_update needs at least one trajectory")
    total, pol, val, ent = a2c_loss(trajectories, gamma, value_coef, entropy_coef)
    if not torch.isfinite(total):
        raise NumericError(
            f"non-finite loss: policy={float(pol.detach())} value={float(val.detach())} entropy={float(ent.detach())} "
            f"returns={[discounted_returns(t.rewards, gamma) for t in trajectories]}")
    optimizer.zero_grad()
    total.backward()
    params = [p for p in agent.parameters() if p.requires_grad]
    gnorm = torch.nn.utils.clip_grad_norm_(params, grad_clip)
    if not torch.isfinite(gnorm):
        raise NumericError(f"non-finite gradient norm {float(gnorm)}")
    optimizer.step()
    return LossRecord(float(pol.detach()), float(value_coef * val.detach()), float(ent.detach()),
                      float(total.detach()), float(gnorm))
