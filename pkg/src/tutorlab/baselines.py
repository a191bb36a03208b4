"""Comparison policies: cosine-nearest-neighbor, assess-after-success greedy,
and a flat Q-learner trained with the same loop but without the graph encoder
or candidate pruning."""

from __future__ import annotations

import numpy as np

from .agent import AblationFlags, AgentConfig, PaiAgent, run_training
from .embedding import EmbeddingTable
from .graph import CognitiveGraph, SubgraphScope, apply_feedback, build_subgraph
from .selection import CandidateSet, closure_exercises
from .simulator import CdModel, SimConfig, StepOutcome, Termination


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def knn_act(embeddings: EmbeddingTable, catalog, student: int,
            candidates: list[int]) -> int:
    """Candidate (exercise or concept node) most cosine-similar to the
    student's pretrained embedding; ties break to the lowest node id."""
    if not candidates:
        raise ValueError("empty candidate set")
    u = embeddings.entities[student]
    best, best_sim = None, -np.inf
    for node in sorted(candidates):
        sim = cosine(embeddings.entities[node], u)
        if sim > best_sim:
            best, best_sim = node, sim
    return best


class KnnPolicy:
    """Nearest-cosine heuristic over the predecessor-closure exercises plus
    the assessment action; exercises already answered correctly are skipped."""

    name = "knn"

    def __init__(self, graph: CognitiveGraph, embeddings: EmbeddingTable):
        self.graph = graph
        self.embeddings = embeddings

    def begin_episode(self, student: int, target: int, rng: np.random.Generator):
        self._student = student
        self._target = target
        self._pool = closure_exercises(self.graph, target)
        self._succeeded: set[int] = set()

    def act(self) -> int:
        cat = self.graph.catalog
        nodes = [cat.exercise_node(e) for e in self._pool if e not in self._succeeded]
        nodes.append(cat.concept_node(self._target))
        return knn_act(self.embeddings, cat, self._student, nodes)

    def observe(self, action: int, outcome: StepOutcome):
        cat = self.graph.catalog
        if cat.is_exercise(action) and outcome.feedback == 1:
            self._succeeded.add(cat.node_to_exercise(action))


class GreedyPolicy:
    """Tutors a random not-yet-comprehended exercise of the target concept;
    assesses right after each comprehension (and when nothing is left)."""

    name = "greedy"

    def __init__(self, graph: CognitiveGraph):
        self.graph = graph

    def begin_episode(self, student: int, target: int, rng: np.random.Generator):
        self._target = target
        self._rng = rng
        self._pool = self.graph.o.exercises_of(target)
        self._comprehended: set[int] = set()
        self._assess_next = False

    def act(self) -> int:
        cat = self.graph.catalog
        remaining = [e for e in self._pool if e not in self._comprehended]
        if self._assess_next or not remaining:
            return cat.concept_node(self._target)
        return cat.exercise_node(remaining[self._rng.integers(len(remaining))])

    def observe(self, action: int, outcome: StepOutcome):
        cat = self.graph.catalog
        if cat.is_exercise(action):
            if outcome.feedback == 1:
                self._comprehended.add(cat.node_to_exercise(action))
                self._assess_next = True
            else:
                self._assess_next = False
        else:
            self._assess_next = False


VANILLA_FLAGS = AblationFlags(no_gcn=True, no_selection=True)


def train_vanilla_dqn(graph: CognitiveGraph, cd_model: CdModel, sim_cfg: SimConfig,
                      embeddings: EmbeddingTable, train_samples, cfg: AgentConfig,
                      episodes: int, seed: int) -> tuple[PaiAgent, list[dict]]:
    """Same training loop, but state/action vectors are the raw pretrained
    embeddings and the candidate space is the whole predecessor closure."""
    return run_training(graph, cd_model, sim_cfg, embeddings, train_samples,
                        cfg, episodes, seed, flags=VANILLA_FLAGS, name="dqn")
