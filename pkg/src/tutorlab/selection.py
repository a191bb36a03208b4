"""Prerequisite-guided candidate selection.

Exercises are scored against the student and the session's appropriate /
inappropriate history, prerequisite concepts are ranked by the weighted
entropy of their overlap with the target's exercises, and candidates are
drawn concept-by-concept until the budget is filled. The target concept is
always appended as the assessment action.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import CognitiveGraph, predecessors
from .nn import sigmoid

PROB_EPS = 1e-12


@dataclass
class CandidateSet:
    """Ordered candidate exercises plus the always-available target concept."""

    exercises: list[int]
    target: int
    exercise_nodes: np.ndarray = field(default=None)  # type: ignore[assignment]

    def actions(self, catalog) -> list[int]:
        """Global node ids: exercises in order, then the target concept."""
        return [catalog.exercise_node(e) for e in self.exercises] + \
            [catalog.concept_node(self.target)]

    def __len__(self) -> int:
        return len(self.exercises) + 1


def closure_exercises(graph: CognitiveGraph, target: int) -> list[int]:
    """Union of the exercise sets of every prerequisite predecessor."""
    out: set[int] = set()
    for c in predecessors(graph, target):
        out.update(graph.o.exercises_of(c))
    return sorted(out)


def exercise_scores(vec_of, student_vec: np.ndarray, exercises: list[int],
                    tutored_plus: set[int], tutored_minus: set[int]) -> dict[int, float]:
    """sigma(h_u . h_e + sum over appropriate e' of h_e . h_e'
    - sum over inappropriate e' of h_e . h_e')."""
    plus = [vec_of(e) for e in sorted(tutored_plus)]
    minus = [vec_of(e) for e in sorted(tutored_minus)]
    scores = {}
    for e in exercises:
        he = vec_of(e)
        total = float(np.dot(student_vec, he))
        for hp in plus:
            total += float(np.dot(he, hp))
        for hm in minus:
            total -= float(np.dot(he, hm))
        scores[e] = float(sigmoid(np.float64(total)))
    return scores


def concept_scores(w: dict[int, float], graph: CognitiveGraph,
                   target: int) -> dict[int, float]:
    """Weighted entropy -prob * ln(prob) per predecessor concept, where prob
    is the target-overlap share of the concept's total exercise score. An
    empty overlap (or an empty denominator) scores 0, the -p ln p limit."""
    target_set = set(graph.o.exercises_of(target))
    out = {}
    for c in predecessors(graph, target):
        ex = graph.o.exercises_of(c)
        den = sum(w[e] for e in ex if e in w)
        num = sum(w[e] for e in ex if e in w and e in target_set)
        if den <= 0.0 or num <= 0.0:
            out[c] = 0.0
            continue
        prob = min(max(num / den, PROB_EPS), 1.0)
        out[c] = -prob * np.log(prob)
    return out


def select_candidates(graph: CognitiveGraph, target: int, w_e: dict[int, float],
                      w_c: dict[int, float], n_candidates: int) -> CandidateSet:
    """Concepts in descending score order, exercises within each concept in
    descending score order, every tie broken by ascending id; each exercise
    appears at most once; stop once the budget is filled."""
    chosen: list[int] = []
    seen: set[int] = set()
    concepts = sorted(w_c, key=lambda c: (-w_c[c], c))
    for c in concepts:
        if len(chosen) >= n_candidates:
            break
        for e in sorted(graph.o.exercises_of(c), key=lambda e: (-w_e[e], e)):
            if e in seen:
                continue
            chosen.append(e)
            seen.add(e)
            if len(chosen) >= n_candidates:
                break
    return CandidateSet(exercises=chosen, target=target)
