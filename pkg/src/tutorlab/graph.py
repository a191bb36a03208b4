"""Cognitive graph: students, exercises, concepts and their three relations.

Global node ids pack the three entity families into one index space:
students occupy [0, U), exercises [U, U+E), concepts [U+E, U+E+C).
A :class:`SessionState` is the per-episode view: the subgraph around one
(student, target concept) pair plus the signed interaction history.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class GraphError(ValueError):
    pass


class UnknownIdError(GraphError):
    pass


class UnusableGoalError(GraphError):
    """Target concept has no related exercises, so mastery is undefined."""


class CycleError(GraphError):
    def __init__(self, cycle: list[int]):
        self.cycle = cycle
        super().__init__("prerequisite cycle: " + " -> ".join(map(str, cycle + cycle[:1])))


class SubgraphScope(Enum):
    # LITERAL keeps only the target's own exercises; EXTENDED adds the
    # exercises of every prerequisite predecessor so each selectable
    # action has a node in the subgraph.
    LITERAL = "literal"
    EXTENDED = "extended"


@dataclass(frozen=True)
class EntityCatalog:
    n_students: int
    n_exercises: int
    n_concepts: int

    def __post_init__(self):
        if min(self.n_students, self.n_exercises, self.n_concepts) < 1:
            raise GraphError("catalog needs at least one of each entity kind")

    @property
    def n_nodes(self) -> int:
        return self.n_students + self.n_exercises + self.n_concepts

    def exercise_node(self, e: int) -> int:
        return self.n_students + e

    def concept_node(self, c: int) -> int:
        return self.n_students + self.n_exercises + c

    def node_to_exercise(self, node: int) -> int:
        return node - self.n_students

    def node_to_concept(self, node: int) -> int:
        return node - self.n_students - self.n_exercises

    def is_student(self, node: int) -> bool:
        return 0 <= node < self.n_students

    def is_exercise(self, node: int) -> bool:
        return self.n_students <= node < self.n_students + self.n_exercises

    def is_concept(self, node: int) -> bool:
        return self.n_students + self.n_exercises <= node < self.n_nodes


class InteractionMatrix:
    """Sparse student-exercise answers; values are exactly -1 or +1."""

    def __init__(self):
        self._by_student: dict[int, dict[int, int]] = {}

    def set(self, student: int, exercise: int, value: int):
        if value not in (-1, 1):
            raise GraphError(f"interaction value must be -1 or +1, got {value}")
        self._by_student.setdefault(student, {})[exercise] = value

    def get(self, student: int, exercise: int) -> int:
        return self._by_student.get(student, {}).get(exercise, 0)

    def row(self, student: int) -> dict[int, int]:
        return self._by_student.get(student, {})

    def items(self):
        for u in sorted(self._by_student):
            row = self._by_student[u]
            for e in sorted(row):
                yield u, e, row[e]

    def __len__(self) -> int:
        return sum(len(r) for r in self._by_student.values())


class ConceptExerciseMap:
    """Exercise -> concepts coverage with the concept -> exercises reverse index."""

    def __init__(self):
        self._covers: dict[int, set[int]] = {}
        self._by_concept: dict[int, set[int]] = {}

    def add(self, exercise: int, concept: int):
        self._covers.setdefault(exercise, set()).add(concept)
        self._by_concept.setdefault(concept, set()).add(exercise)

    def concepts_of(self, exercise: int) -> list[int]:
        return sorted(self._covers.get(exercise, ()))

    def exercises_of(self, concept: int) -> list[int]:
        return sorted(self._by_concept.get(concept, ()))

    def covers(self, exercise: int, concept: int) -> bool:
        return concept in self._covers.get(exercise, ())

    def items(self):
        for e in sorted(self._covers):
            for c in sorted(self._covers[e]):
                yield e, c

    def __len__(self) -> int:
        return sum(len(s) for s in self._covers.values())


class PrereqDag:
    """Directed concept-to-concept edges, (i, j) meaning i precedes j."""

    def __init__(self):
        self._succ: dict[int, set[int]] = {}
        self._pred: dict[int, set[int]] = {}

    def add(self, prereq: int, concept: int):
        self._succ.setdefault(prereq, set()).add(concept)
        self._pred.setdefault(concept, set()).add(prereq)

    def direct_predecessors(self, concept: int) -> list[int]:
        return sorted(self._pred.get(concept, ()))

    def direct_successors(self, concept: int) -> list[int]:
        return sorted(self._succ.get(concept, ()))

    def edges(self):
        for i in sorted(self._succ):
            for j in sorted(self._succ[i]):
                yield i, j

    def __len__(self) -> int:
        return sum(len(s) for s in self._succ.values())

    def validate_acyclic(self, n_concepts: int):
        """Topological sort; raises CycleError carrying one witness cycle."""
        indeg = {c: 0 for c in range(n_concepts)}
        for _, j in self.edges():
            indeg[j] += 1
        queue = [c for c in range(n_concepts) if indeg[c] == 0]
        seen = 0
        while queue:
            c = queue.pop()
            seen += 1
            for j in self.direct_successors(c):
                indeg[j] -= 1
                if indeg[j] == 0:
                    queue.append(j)
        if seen == n_concepts:
            return
        remaining = {c for c in range(n_concepts) if indeg[c] > 0}
        # Walk predecessors inside the remaining set until a node repeats.
        start = min(remaining)
        path, pos = [start], {start: 0}
        while True:
            nxt = min(p for p in self._pred.get(path[-1], ()) if p in remaining)
            if nxt in pos:
                raise CycleError(path[pos[nxt]:][::-1])
            pos[nxt] = len(path)
            path.append(nxt)


@dataclass
class CognitiveGraph:
    catalog: EntityCatalog
    q: InteractionMatrix
    o: ConceptExerciseMap
    p: PrereqDag

    def validate(self):
        cat = self.catalog
        for u, e, _ in self.q.items():
            if not (0 <= u < cat.n_students):
                raise UnknownIdError(f"interaction references unknown student {u}")
            if not (0 <= e < cat.n_exercises):
                raise UnknownIdError(f"interaction references unknown exercise {e}")
        covered = set()
        for e, c in self.o.items():
            if not (0 <= e < cat.n_exercises):
                raise UnknownIdError(f"coverage references unknown exercise {e}")
            if not (0 <= c < cat.n_concepts):
                raise UnknownIdError(f"coverage references unknown concept {c}")
            covered.add(e)
        if len(covered) != cat.n_exercises:
            missing = sorted(set(range(cat.n_exercises)) - covered)
            raise GraphError(f"exercises with no concept: {missing[:5]}")
        for i, j in self.p.edges():
            if not (0 <= i < cat.n_concepts and 0 <= j < cat.n_concepts):
                raise UnknownIdError(f"prerequisite references unknown concept ({i}, {j})")
        self.p.validate_acyclic(cat.n_concepts)
        return self


def predecessors(graph: CognitiveGraph, target: int) -> list[int]:
    """All concepts with a directed path to target, in topological order
    (Kahn with a min-heap, so ties break by ascending id)."""
    if not (0 <= target < graph.catalog.n_concepts):
        raise UnknownIdError(f"unknown concept {target}")
    ancestors: set[int] = set()
    stack = list(graph.p.direct_predecessors(target))
    while stack:
        c = stack.pop()
        if c in ancestors:
            continue
        ancestors.add(c)
        stack.extend(graph.p.direct_predecessors(c))
    indeg = {c: sum(1 for p in graph.p.direct_predecessors(c) if p in ancestors)
             for c in ancestors}
    heap = [c for c in ancestors if indeg[c] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        c = heapq.heappop(heap)
        order.append(c)
        for j in graph.p.direct_successors(c):
            if j in ancestors:
                indeg[j] -= 1
                if indeg[j] == 0:
                    heapq.heappush(heap, j)
    return order


@dataclass
class SessionState:
    """Subgraph around (student, target) plus the signed interaction history.

    ``adjacency`` is a dense signed matrix over local node indices,
    directional by entity blocks: (student row -> exercise cols) holds Q
    feedback, (exercise -> concept) coverage, (concept -> concept)
    prerequisite edges.
    """

    student: int
    target: int
    scope: SubgraphScope
    nodes: np.ndarray                  # global node ids, local order
    local: dict[int, int]              # global id -> local index
    adjacency: np.ndarray              # (n, n) float64
    history: list[tuple[int, int]] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def student_local(self) -> int:
        return 0

    def target_local(self, catalog: EntityCatalog) -> int:
        return self.local[catalog.concept_node(self.target)]

    def copy(self) -> "SessionState":
        return SessionState(self.student, self.target, self.scope, self.nodes,
                            self.local, self.adjacency.copy(), list(self.history))


def build_subgraph(graph: CognitiveGraph, student: int, target: int,
                   scope: SubgraphScope = SubgraphScope.EXTENDED) -> SessionState:
    cat = graph.catalog
    if not (0 <= student < cat.n_students):
        raise UnknownIdError(f"unknown student {student}")
    if not (0 <= target < cat.n_concepts):
        raise UnknownIdError(f"unknown concept {target}")
    target_exercises = graph.o.exercises_of(target)
    if not target_exercises:
        raise UnusableGoalError(f"concept {target} has no related exercises")

    exercises = set(target_exercises)
    if scope is SubgraphScope.EXTENDED:
        for c in predecessors(graph, target):
            exercises.update(graph.o.exercises_of(c))
    ex_sorted = sorted(exercises)

    nodes = [student]
    nodes += [cat.exercise_node(e) for e in ex_sorted]
    nodes += [cat.concept_node(c) for c in range(cat.n_concepts)]
    nodes = np.asarray(nodes, dtype=np.int64)
    local = {int(g): i for i, g in enumerate(nodes)}

    n = len(nodes)
    adj = np.zeros((n, n), dtype=np.float64)
    row = graph.q.row(student)
    for i, e in enumerate(ex_sorted, start=1):
        v = row.get(e, 0)
        if v:
            adj[0, i] = float(v)
        for c in graph.o.concepts_of(e):
            adj[i, local[cat.concept_node(c)]] = 1.0
    for i, j in graph.p.edges():
        adj[local[cat.concept_node(i)], local[cat.concept_node(j)]] = 1.0
    return SessionState(student, target, scope, nodes, local, adj)


def apply_feedback(state: SessionState, action: int, feedback: int,
                   catalog: EntityCatalog) -> SessionState:
    """Record (action, feedback) in the history; exercise feedback is also
    written into the student's adjacency row (latest value wins). Concept
    feedback never touches the adjacency."""
    if feedback not in (-1, 1):
        raise GraphError(f"feedback must be -1 or +1, got {feedback}")
    if action not in state.local:
        raise UnknownIdError(f"action {action} is not a node of this subgraph")
    out = state.copy()
    out.history.append((action, feedback))
    if catalog.is_exercise(action):
        out.adjacency[0, out.local[action]] = float(feedback)
    return out


def symmetrized(state: SessionState) -> tuple[np.ndarray, np.ndarray]:
    """(magnitude, signed) symmetrized adjacency; signs ride on Q entries."""
    signed = state.adjacency + state.adjacency.T
    return np.abs(signed), signed


def normalized_adjacency(state: SessionState, signed: bool = False) -> np.ndarray:
    """D^{-1/2} A D^{-1/2} over the symmetrized adjacency, with degrees
    always taken from edge magnitudes. Zero-degree rows stay zero."""
    mag, sgn = symmetrized(state)
    deg = mag.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    base = sgn if signed else mag
    return base * inv_sqrt[:, None] * inv_sqrt[None, :]
