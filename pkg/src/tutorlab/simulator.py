"""Student environment: monotone cognitive diagnosis plus response simulation.

The diagnosis model predicts p(correct) for a (student, exercise) pair from
per-concept proficiency, per-exercise difficulty and discrimination, pushed
through a positive-weight two-layer net. Keeping the net weights
non-negative makes every prediction non-decreasing in proficiency, which is
what the response branch table and the per-turn dynamic update rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .graph import CognitiveGraph
from .nn import load_checkpoint, relu, save_checkpoint, sigmoid


class SimulatorError(ValueError):
    pass


class Termination(Enum):
    ACTIVE = "active"
    MASTERED = "mastered"
    QUIT_PATIENCE = "quit_patience"
    QUIT_MAXTURN = "quit_maxturn"


class Branch(Enum):
    CONCEPT_PASS = "concept_pass"
    CONCEPT_FAIL = "concept_fail"
    EXERCISE_OK = "exercise_ok"
    EXERCISE_EASY = "exercise_easy"
    EXERCISE_FAIL = "exercise_fail"


class Tier(Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"
    EXCLUDED = "excluded"


@dataclass
class SimConfig:
    delta: float = 0.9            # mastery pass threshold on d
    lambda_lo: float = 0.5        # appropriate-difficulty interval on p
    lambda_hi: float = 1.0
    r_concept_pass: float = 1.0
    r_concept_fail: float = -0.2
    r_exercise_ok: float = 0.01
    r_exercise_bad: float = -0.1
    r_quit: float = -0.3
    beta: float = 4.0             # patience threshold
    max_turns: int = 20
    alpha: float = 0.02           # dynamic-update learning rate
    literal_descent: bool = False  # ablation: descend instead of ascend on log p

    def __post_init__(self):
        if not (0 < self.delta <= 1):
            raise ValueError("delta must be in (0, 1]")
        if not (0 <= self.lambda_lo < self.lambda_hi <= 1):
            raise ValueError("lambda interval must satisfy 0 <= lo < hi <= 1")
        if self.beta <= 0 or self.max_turns < 1 or self.alpha <= 0:
            raise ValueError("beta, max_turns, alpha must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "delta", "lambda_lo", "lambda_hi", "r_concept_pass", "r_concept_fail",
            "r_exercise_ok", "r_exercise_bad", "r_quit", "beta", "max_turns",
            "alpha", "literal_descent")}


@dataclass
class CdFitConfig:
    epochs: int = 150
    learning_rate: float = 2.0
    batch_size: int = 256
    hidden: int = 100
    # Latent logits learn slower and shrink toward zero, which keeps them in
    # the responsive part of the sigmoid; the interaction net carries the
    # sharpness instead. That balance is what gives the per-turn dynamic
    # update a usable effect size.
    latent_lr_scale: float = 0.3
    latent_l2: float = 1e-2


@dataclass
class StepOutcome:
    reward: float
    feedback: int            # -1/+1 for exercises, 0 for concept assessments
    patience_loss: float
    terminal: Termination
    branch: Branch
    p: float | None = None   # predicted correctness for exercise actions
    d: float | None = None   # mastery estimate for assessment actions


class CdModel:
    """Diagnosis parameters shared by all sessions (immutable during episodes)."""

    def __init__(self, proficiency_logits, difficulty, discrimination,
                 w1, b1, w2, b2, q_mask):
        self.proficiency_logits = np.asarray(proficiency_logits, dtype=np.float64)
        self.difficulty = np.asarray(difficulty, dtype=np.float64)
        self.discrimination = np.asarray(discrimination, dtype=np.float64)
        self.w1 = np.asarray(w1, dtype=np.float64)   # (C, hidden), kept >= 0
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)   # (hidden, 1), kept >= 0
        self.b2 = np.asarray(b2, dtype=np.float64)
        self.q_mask = np.asarray(q_mask, dtype=np.float64)

    @property
    def n_students(self) -> int:
        return self.proficiency_logits.shape[0]

    @property
    def n_exercises(self) -> int:
        return self.q_mask.shape[0]

    @property
    def n_concepts(self) -> int:
        return self.q_mask.shape[1]

    def exercises_of(self, concept: int) -> np.ndarray:
        return np.flatnonzero(self.q_mask[:, concept] > 0)

    def _inputs(self, prof_rows: np.ndarray, ex: np.ndarray) -> np.ndarray:
        disc = sigmoid(self.discrimination[ex])[:, None]
        return self.q_mask[ex] * (sigmoid(prof_rows) - sigmoid(self.difficulty[ex])) * disc

    def predict_rows(self, prof_rows: np.ndarray, ex: np.ndarray) -> np.ndarray:
        """p for stacked (proficiency row, exercise) pairs."""
        x = self._inputs(prof_rows, ex)
        h = relu(x @ self.w1 + self.b1)
        z = h @ self.w2 + self.b2
        return sigmoid(z[:, 0])

    def predict(self, u: int, e: int) -> float:
        if not (0 <= u < self.n_students):
            raise SimulatorError(f"unknown student {u}")
        if not (0 <= e < self.n_exercises):
            raise SimulatorError(f"unknown exercise {e}")
        return float(self.predict_rows(self.proficiency_logits[[u]],
                                       np.asarray([e]))[0])

    def mastery_from_row(self, prof_row: np.ndarray, concept: int) -> float:
        ex = self.exercises_of(concept)
        if len(ex) == 0:
            raise SimulatorError(f"concept {concept} has no exercises")
        p = self.predict_rows(np.repeat(prof_row[None, :], len(ex), axis=0), ex)
        return float(p.mean())

    def mastery(self, u: int, c: int) -> float:
        return self.mastery_from_row(self.proficiency_logits[u], c)

    def save(self, path, meta: dict | None = None):
        save_checkpoint(path, [
            ("proficiency_logits", self.proficiency_logits),
            ("difficulty", self.difficulty),
            ("discrimination", self.discrimination),
            ("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2),
            ("q_mask", self.q_mask),
        ], meta=meta)

    @classmethod
    def load(cls, path) -> "CdModel":
        p, _ = load_checkpoint(path)
        return cls(p["proficiency_logits"], p["difficulty"], p["discrimination"],
                   p["w1"], p["b1"], p["w2"], p["b2"], p["q_mask"])


def init_model(graph: CognitiveGraph, cfg: CdFitConfig, rng: np.random.Generator) -> CdModel:
    cat = graph.catalog
    q_mask = np.zeros((cat.n_exercises, cat.n_concepts))
    for e, c in graph.o.items():
        q_mask[e, c] = 1.0
    # Narrow latent init plus a mildly positive hidden bias keep the ReLU
    # units alive at the start; discrimination starts high so inputs carry.
    return CdModel(
        proficiency_logits=rng.normal(0.0, 0.3, size=(cat.n_students, cat.n_concepts)),
        difficulty=rng.normal(0.0, 0.3, size=(cat.n_exercises, cat.n_concepts)),
        discrimination=rng.normal(2.0, 0.2, size=cat.n_exercises),
        w1=rng.uniform(0.0, 6.0 / np.sqrt(cat.n_concepts), size=(cat.n_concepts, cfg.hidden)),
        b1=np.full(cfg.hidden, 0.1),
        w2=rng.uniform(0.0, 6.0 / np.sqrt(cfg.hidden), size=(cfg.hidden, 1)),
        b2=np.zeros(1),
        q_mask=q_mask,
    )


def fit(graph: CognitiveGraph, cfg: CdFitConfig, seed: int,
        loss_log: list | None = None) -> CdModel:
    """Binary cross-entropy over the observed answer matrix.

    Labels are 1 for correct (+1) and 0 for wrong (-1) entries. The
    interaction-net weights are clamped non-negative after every step.
    """
    entries = list(graph.q.items())
    if not entries:
        raise SimulatorError("cannot fit a simulator on an empty answer matrix")
    rng = np.random.default_rng(seed)
    model = init_model(graph, cfg, rng)
    users = np.asarray([u for u, _, _ in entries], dtype=np.int64)
    exs = np.asarray([e for _, e, _ in entries], dtype=np.int64)
    ys = np.asarray([1.0 if v > 0 else 0.0 for _, _, v in entries])
    n = len(entries)

    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            u, e, y = users[idx], exs[idx], ys[idx]
            m = len(idx)
            s = sigmoid(model.proficiency_logits[u])
            dv = sigmoid(model.difficulty[e])
            disc = sigmoid(model.discrimination[e])[:, None]
            q = model.q_mask[e]
            x = q * (s - dv) * disc
            pre = x @ model.w1 + model.b1
            h = relu(pre)
            z = (h @ model.w2 + model.b2)[:, 0]
            p = sigmoid(z)
            total += float(np.sum(-(y * np.log(np.maximum(p, 1e-12))
                                    + (1 - y) * np.log(np.maximum(1 - p, 1e-12)))))

            dz = (p - y)[:, None] / m
            dw2 = h.T @ dz
            db2 = dz.sum(axis=0)
            dh = dz @ model.w2.T
            dpre = np.where(pre > 0, dh, 0.0)
            dw1 = x.T @ dpre
            db1 = dpre.sum(axis=0)
            dx = dpre @ model.w1.T
            l2 = cfg.latent_l2 / m
            dprof = dx * q * disc * s * (1 - s) + l2 * model.proficiency_logits[u]
            ddiff = -dx * q * disc * dv * (1 - dv) + l2 * model.difficulty[e]
            ddisc = np.sum(dx * q * (s - dv), axis=1) * (disc * (1 - disc))[:, 0]

            lr = cfg.learning_rate
            lr_lat = lr * cfg.latent_lr_scale
            np.add.at(model.proficiency_logits, u, -lr_lat * dprof)
            np.add.at(model.difficulty, e, -lr_lat * ddiff)
            np.add.at(model.discrimination, e, -lr_lat * ddisc)
            model.w1 -= lr * dw1
            model.b1 -= lr * db1
            model.w2 -= lr * dw2
            model.b2 -= lr * db2
            np.maximum(model.w1, 0.0, out=model.w1)
            np.maximum(model.w2, 0.0, out=model.w2)
        if loss_log is not None:
            loss_log.append(total / n)
    return model


@dataclass
class StudentSession:
    """Per-episode mutable student state: a cloned proficiency row plus the
    patience ledger. Exercise-side parameters stay shared and read-only."""

    student: int
    proficiency: np.ndarray
    cumulative_loss: float = 0.0
    turn: int = 0
    terminated: Termination = Termination.ACTIVE
    losses: list = field(default_factory=list)

    @property
    def active(self) -> bool:
        return self.terminated is Termination.ACTIVE


def start_session(model: CdModel, student: int) -> StudentSession:
    return StudentSession(student=student,
                          proficiency=model.proficiency_logits[student].copy())


def respond(session: StudentSession, model: CdModel, action_is_concept: bool,
            action: int, target: int, cfg: SimConfig) -> StepOutcome:
    """One turn of the response branch table, plus patience accounting.

    Boundary conventions: d == delta passes; p == lambda_lo counts as a
    failure; p == lambda_hi counts as too easy. The quit penalty is added
    on top of the branch reward on the step that triggers quitting.
    """
    if not session.active:
        raise SimulatorError("respond called on a terminated session")
    if action_is_concept:
        if action != target:
            raise SimulatorError("only the target concept can be assessed")
        d = model.mastery_from_row(session.proficiency, target)
        if d >= cfg.delta:
            reward, feedback, loss = cfg.r_concept_pass, 0, 0.0
            branch, terminal = Branch.CONCEPT_PASS, Termination.MASTERED
        else:
            reward, feedback, loss = cfg.r_concept_fail, 0, 1.0
            branch, terminal = Branch.CONCEPT_FAIL, Termination.ACTIVE
        p = None
    else:
        p = float(model.predict_rows(session.proficiency[None, :],
                                     np.asarray([action]))[0])
        loss = 1.0 - p
        d = None
        if p >= cfg.lambda_hi:
            reward, feedback, branch = cfg.r_exercise_bad, 1, Branch.EXERCISE_EASY
        elif p <= cfg.lambda_lo:
            reward, feedback, branch = cfg.r_exercise_bad, -1, Branch.EXERCISE_FAIL
        else:
            reward, feedback, branch = cfg.r_exercise_ok, 1, Branch.EXERCISE_OK
        terminal = Termination.ACTIVE

    session.cumulative_loss += loss
    session.losses.append(loss)
    session.turn += 1
    if terminal is not Termination.MASTERED:
        if session.cumulative_loss >= cfg.beta:
            terminal = Termination.QUIT_PATIENCE
            reward += cfg.r_quit
        elif session.turn >= cfg.max_turns:
            terminal = Termination.QUIT_MAXTURN
            reward += cfg.r_quit
    session.terminated = terminal
    return StepOutcome(reward=reward, feedback=feedback, patience_loss=loss,
                       terminal=terminal, branch=branch, p=p, d=d)


def dynamic_update(session: StudentSession, model: CdModel, exercise: int,
                   feedback: int, alpha: float, literal_descent: bool = False):
    """Move the session's cloned proficiency along the log-likelihood of the
    fresh exercise record. Failed attempts carry label 0, which zeroes the
    printed gradient, so only successes move anything. Exercise-side
    parameters are never touched."""
    y = max(feedback, 0)
    if y == 0:
        return
    prof = session.proficiency
    s = sigmoid(prof)
    disc = float(sigmoid(model.discrimination[exercise]))
    q = model.q_mask[exercise]
    dv = sigmoid(model.difficulty[exercise])
    x = q * (s - dv) * disc
    pre = x @ model.w1 + model.b1
    h = relu(pre)
    z = float(h @ model.w2 + model.b2)
    p = float(sigmoid(np.asarray(z)))
    # d log p / d prof = (1 - p) * dz/dx * dx/dprof
    dz_dx = (np.where(pre > 0, 1.0, 0.0) * model.w2[:, 0]) @ model.w1.T
    grad = (1.0 - p) * dz_dx * q * disc * s * (1 - s)
    sign = -1.0 if literal_descent else 1.0
    prof += sign * alpha * grad


def assign_tiers(model: CdModel, samples: list[tuple[int, int]]) -> list[Tier]:
    """Bucket (student, concept) pairs by initial mastery estimate."""
    tiers = []
    for u, c in samples:
        d = model.mastery(u, c)
        if 0.5 < d < 0.6:
            tiers.append(Tier.HARD)
        elif 0.6 < d < 0.7:
            tiers.append(Tier.MEDIUM)
        elif 0.7 < d < 0.8:
            tiers.append(Tier.EASY)
        else:
            tiers.append(Tier.EXCLUDED)
    return tiers
