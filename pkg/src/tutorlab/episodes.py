"""Episode execution, metric aggregation, and parameter sweeps.

Every episode gets its own generator seeded from (run seed, sample index),
so evaluation order never matters and parallel workers reproduce the serial
report exactly.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import multiprocessing
import numpy as np

from .data import Sample
from .simulator import (CdModel, SimConfig, Termination, Tier, dynamic_update,
                        respond, start_session)
from .graph import CognitiveGraph


@dataclass
class World:
    graph: CognitiveGraph
    cd_model: CdModel
    sim_cfg: SimConfig


@dataclass
class TurnRecord:
    turn: int
    action: int          # global node id
    branch: str
    reward: float
    feedback: int
    loss: float
    cumulative_loss: float


@dataclass
class EpisodeLog:
    student: int
    target: int
    tier: str
    outcome: Termination
    turns_used: int
    total_reward: float
    final_loss: float
    records: list[TurnRecord] = field(default_factory=list)


@dataclass
class MetricsReport:
    policy: str
    n_episodes: int
    success_rate: float
    average_turn: float
    impatience: float
    per_turn_success: list[float]
    by_tier: dict[str, dict]
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "n_episodes": self.n_episodes,
            "success_rate": self.success_rate,
            "average_turn": self.average_turn,
            "impatience": self.impatience,
            "per_turn_success": self.per_turn_success,
            "by_tier": self.by_tier,
            "config": self.config,
        }


def episode_seed(run_seed: int, sample_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((run_seed, sample_index)))


def run_episode(policy, world: World, sample: Sample,
                rng: np.random.Generator) -> EpisodeLog:
    """act -> respond -> observe -> dynamic update, until termination."""
    cat = world.graph.catalog
    cfg = world.sim_cfg
    policy.begin_episode(sample.student, sample.concept, rng)
    session = start_session(world.cd_model, sample.student)
    records: list[TurnRecord] = []
    while session.active:
        action = policy.act()
        is_concept = cat.is_concept(action)
        entity = sample.concept if is_concept else cat.node_to_exercise(action)
        outcome = respond(session, world.cd_model, is_concept, entity,
                          sample.concept, cfg)
        records.append(TurnRecord(
            turn=session.turn, action=action, branch=outcome.branch.value,
            reward=outcome.reward, feedback=outcome.feedback,
            loss=outcome.patience_loss, cumulative_loss=session.cumulative_loss))
        policy.observe(action, outcome)
        if not is_concept and outcome.terminal is Termination.ACTIVE:
            dynamic_update(session, world.cd_model, entity, outcome.feedback,
                           cfg.alpha, cfg.literal_descent)
    return EpisodeLog(
        student=sample.student, target=sample.concept, tier=sample.tier.value,
        outcome=session.terminated, turns_used=session.turn,
        total_reward=sum(r.reward for r in records),
        final_loss=session.cumulative_loss, records=records)


def _summarize(policy_name: str, episodes: list[EpisodeLog], max_turns: int,
               config: dict | None = None) -> MetricsReport:
    n = len(episodes)
    mastered = [e for e in episodes if e.outcome is Termination.MASTERED]
    per_turn = [sum(1 for e in mastered if e.turns_used <= t) / n
                for t in range(1, max_turns + 1)]
    by_tier = {}
    for tier in sorted({e.tier for e in episodes}):
        eps = [e for e in episodes if e.tier == tier]
        m = [e for e in eps if e.outcome is Termination.MASTERED]
        by_tier[tier] = {
            "n": len(eps),
            "success_rate": len(m) / len(eps),
            "average_turn": float(np.mean([e.turns_used for e in eps])),
            "impatience": float(np.mean([e.final_loss for e in eps])),
        }
    return MetricsReport(
        policy=policy_name,
        n_episodes=n,
        success_rate=len(mastered) / n,
        average_turn=float(np.mean([e.turns_used for e in episodes])),
        impatience=float(np.mean([e.final_loss for e in episodes])),
        per_turn_success=per_turn,
        by_tier=by_tier,
        config=config or {})


def _run_chunk(args):
    policy, world, jobs = args
    out = []
    for run_seed, idx, sample in jobs:
        log = run_episode(policy, world, sample, episode_seed(run_seed, idx))
        out.append((run_seed, idx, log))
    return out


def evaluate(policy, world: World, samples: list[Sample], seeds: list[int],
             workers: int = 1, config: dict | None = None) -> MetricsReport:
    """Every sample once per seed; outcome identical for any worker count."""
    if not samples:
        raise ValueError("no samples to evaluate")
    jobs = [(run_seed, idx, sample)
            for run_seed in seeds for idx, sample in enumerate(samples)]
    if workers <= 1:
        results = _run_chunk((policy, world, jobs))
    else:
        chunks = [jobs[i::workers] for i in range(workers)]
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            results = []
            for part in pool.map(_run_chunk,
                                 [(policy, world, chunk) for chunk in chunks]):
                results.extend(part)
    results.sort(key=lambda r: (r[0], r[1]))
    episodes = [log for _, _, log in results]
    cfg = dict(config or {})
    cfg.setdefault("sim", world.sim_cfg.to_dict())
    cfg.setdefault("seeds", list(seeds))
    return _summarize(getattr(policy, "name", "policy"), episodes,
                      world.sim_cfg.max_turns, cfg)


PATIENCE_GRID = (1.0, 2.0, 3.0, 4.0, 5.0)
LEARNRATE_GRID = (0.01, 0.02, 0.03, 0.04, 0.05)


def sweep(kind: str, policies: dict[str, object], world: World,
          samples: list[Sample], seeds: list[int], workers: int = 1) -> list[dict]:
    """Long-format grid of evaluate() calls.

    kind 'patience' varies the quit threshold, 'learnrate' the simulated
    learning speed, 'tier' partitions the samples by difficulty tier.
    """
    rows = []
    if kind == "patience":
        grid = [("beta", b, replace(world.sim_cfg, beta=b)) for b in PATIENCE_GRID]
    elif kind == "learnrate":
        grid = [("alpha", a, replace(world.sim_cfg, alpha=a)) for a in LEARNRATE_GRID]
    elif kind == "tier":
        grid = None
    else:
        raise ValueError(f"unknown sweep kind {kind!r}")

    for name, policy in sorted(policies.items()):
        if kind == "tier":
            by_tier: dict[Tier, list[Sample]] = {}
            for s in samples:
                by_tier.setdefault(s.tier, []).append(s)
            for tier in (Tier.EASY, Tier.MEDIUM, Tier.HARD):
                subset = by_tier.get(tier, [])
                if not subset:
                    continue
                rep = evaluate(policy, world, subset, seeds, workers)
                rows.append({"policy": name, "kind": "tier", "param": "tier",
                             "value": tier.value, "report": rep})
        else:
            for param, value, sim_cfg in grid:
                w = World(world.graph, world.cd_model, sim_cfg)
                rep = evaluate(policy, w, samples, seeds, workers)
                rows.append({"policy": name, "kind": kind, "param": param,
                             "value": value, "report": rep})
    return rows
