"""Dataset synthesis, on-disk formats, and loading with validation.

The synthetic world plants topic chains of concepts (so prerequisite
closures stay small), assigns each exercise a primary concept plus,
usually, one of its direct prerequisites, and samples answer records from
a latent-ability response model. Students with too few records are pruned
and re-indexed. Target samples are tiered by the initial mastery estimate
of an internally fitted diagnosis model; only tiered samples survive.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import simulator
from .graph import (CognitiveGraph, ConceptExerciseMap, CycleError, EntityCatalog,
                    GraphError, InteractionMatrix, PrereqDag, predecessors)
from .nn import sigmoid
from .simulator import CdFitConfig, Tier


class DataFormatError(ValueError):
    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


@dataclass
class SynthSpec:
    n_students: int = 200
    n_concepts: int = 30
    n_exercises: int = 150
    chain_length: int = 5          # concepts per topic chain
    skip_edge_prob: float = 0.3    # extra i -> i+2 edge inside a chain
    cross_link_prob: float = 0.4   # chain head depends on the previous chain
    extra_coverage_prob: float = 0.75  # exercise also covers a direct prereq
    ability_spread: float = 1.0
    concept_noise: float = 0.5
    difficulty_spread: float = 0.3  # homogeneous exercises within a concept
    response_slope: float = 3.0
    records_low: int = 10
    records_high: int = 60
    min_records: int = 15          # pruning threshold on answer counts
    test_fraction: float = 0.2
    cd_epochs: int = 150           # internal fit used only for tier labels

    def __post_init__(self):
        if min(self.n_students, self.n_concepts, self.n_exercises) < 1:
            raise ValueError("counts must be at least 1")
        if self.n_exercises < self.n_concepts:
            raise ValueError("need at least one exercise per concept")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Sample:
    student: int
    concept: int
    tier: Tier


@dataclass
class DatasetBundle:
    graph: CognitiveGraph
    train_samples: list[Sample]
    test_samples: list[Sample]
    meta: dict = field(default_factory=dict)

    def samples_by_tier(self, split: str = "test") -> dict[Tier, list[Sample]]:
        samples = self.test_samples if split == "test" else self.train_samples
        out: dict[Tier, list[Sample]] = {}
        for s in samples:
            out.setdefault(s.tier, []).append(s)
        return out


def synth_dataset(spec: SynthSpec, seed: int) -> DatasetBundle:
    ss = np.random.SeedSequence(seed)
    rng_graph, rng_students, rng_fit, rng_split = (
        np.random.default_rng(s) for s in ss.spawn(4))

    dag = PrereqDag()
    for c in range(spec.n_concepts):
        pos = c % spec.chain_length
        if pos > 0:
            dag.add(c - 1, c)
            if pos > 1 and rng_graph.random() < spec.skip_edge_prob:
                dag.add(c - 2, c)
        elif c > 0 and rng_graph.random() < spec.cross_link_prob:
            chain_start = c - spec.chain_length
            offset = int(rng_graph.integers(0, max(1, spec.chain_length // 2)))
            dag.add(chain_start + offset, c)

    o = ConceptExerciseMap()
    primaries = np.empty(spec.n_exercises, dtype=np.int64)
    primaries[:spec.n_concepts] = np.arange(spec.n_concepts)
    primaries[spec.n_concepts:] = rng_graph.integers(
        0, spec.n_concepts, size=spec.n_exercises - spec.n_concepts)
    for e in range(spec.n_exercises):
        c = int(primaries[e])
        o.add(e, c)
        parents = dag.direct_predecessors(c)
        if parents and rng_graph.random() < spec.extra_coverage_prob:
            o.add(e, int(parents[rng_graph.integers(len(parents))]))

    # Latent response model: ability vs. difficulty through a logistic link.
    overall = rng_students.normal(0.0, spec.ability_spread, size=spec.n_students)
    ability = overall[:, None] + rng_students.normal(
        0.0, spec.concept_noise, size=(spec.n_students, spec.n_concepts))
    difficulty = rng_students.normal(0.0, spec.difficulty_spread, size=spec.n_exercises)
    ex_concepts = [o.concepts_of(e) for e in range(spec.n_exercises)]

    records: list[tuple[int, int, int]] = []
    kept_students: list[int] = []
    for u in range(spec.n_students):
        n_rec = int(rng_students.integers(spec.records_low, spec.records_high + 1))
        n_rec = min(n_rec, spec.n_exercises)
        if n_rec < spec.min_records:
            continue  # pruned: too few records
        kept_students.append(u)
        chosen = rng_students.choice(spec.n_exercises, size=n_rec, replace=False)
        for e in chosen:
            skill = float(np.mean([ability[u, c] for c in ex_concepts[e]]))
            p = sigmoid(np.float64(spec.response_slope * (skill - difficulty[e])))
            correct = rng_students.random() < p
            records.append((u, int(e), 1 if correct else -1))

    remap = {u: i for i, u in enumerate(kept_students)}
    q = InteractionMatrix()
    for u, e, v in records:
        q.set(remap[u], e, v)
    catalog = EntityCatalog(len(kept_students), spec.n_exercises, spec.n_concepts)
    graph = CognitiveGraph(catalog, q, o, dag).validate()

    cd_fit_seed = int(rng_fit.integers(2 ** 31))
    model = simulator.fit(graph, CdFitConfig(epochs=spec.cd_epochs), seed=cd_fit_seed)
    eligible_concepts = [
        c for c in range(spec.n_concepts)
        if any(graph.o.exercises_of(pc) for pc in predecessors(graph, c))
    ]
    pairs = [(u, c) for u in range(catalog.n_students) for c in eligible_concepts]
    tiers = simulator.assign_tiers(model, pairs)
    kept = [Sample(u, c, t) for (u, c), t in zip(pairs, tiers) if t is not Tier.EXCLUDED]

    order = rng_split.permutation(len(kept))
    n_test = max(1, int(len(kept) * spec.test_fraction))
    test = [kept[i] for i in sorted(order[:n_test])]
    train = [kept[i] for i in sorted(order[n_test:])]
    meta = {"spec": spec.to_dict(), "seed": seed,
            "cd_fit_seed": cd_fit_seed, "cd_epochs": spec.cd_epochs,
            "n_students_kept": catalog.n_students,
            "n_records": len(records)}
    return DatasetBundle(graph, train, test, meta)


# -- on-disk format ----------------------------------------------------------
#   meta.json            counts + generation echo
#   interactions.jsonl   {"student": int, "exercise": int, "correct": bool}
#   exercise_concepts.csv  exercise_id,concept_id
#   prerequisites.csv      prereq_id,concept_id
#   samples.csv            role,student_id,concept_id,tier

def save_dataset(bundle: DatasetBundle, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    cat = bundle.graph.catalog
    meta = dict(bundle.meta)
    meta["counts"] = {"students": cat.n_students, "exercises": cat.n_exercises,
                      "concepts": cat.n_concepts}
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2)
    with open(os.path.join(out_dir, "interactions.jsonl"), "w") as fh:
        for u, e, v in bundle.graph.q.items():
            fh.write(json.dumps({"student": u, "exercise": e, "correct": v > 0}) + "\n")
    with open(os.path.join(out_dir, "exercise_concepts.csv"), "w") as fh:
        fh.write("exercise_id,concept_id\n")
        for e, c in bundle.graph.o.items():
            fh.write(f"{e},{c}\n")
    with open(os.path.join(out_dir, "prerequisites.csv"), "w") as fh:
        fh.write("prereq_id,concept_id\n")
        for i, j in bundle.graph.p.edges():
            fh.write(f"{i},{j}\n")
    with open(os.path.join(out_dir, "samples.csv"), "w") as fh:
        fh.write("role,student_id,concept_id,tier\n")
        for role, samples in (("train", bundle.train_samples),
                              ("test", bundle.test_samples)):
            for s in samples:
                fh.write(f"{role},{s.student},{s.concept},{s.tier.value}\n")


def _read_int(path, line_no, text, what) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataFormatError(path, line_no, f"bad {what}: {text!r}") from None


def load_dataset(in_dir) -> DatasetBundle:
    meta_path = os.path.join(in_dir, "meta.json")
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise DataFormatError(meta_path, None, "missing meta.json") from None
    except json.JSONDecodeError as err:
        raise DataFormatError(meta_path, err.lineno, f"bad JSON: {err.msg}") from None
    counts = meta.get("counts", {})
    try:
        catalog = EntityCatalog(int(counts["students"]), int(counts["exercises"]),
                                int(counts["concepts"]))
    except (KeyError, TypeError) as err:
        raise DataFormatError(meta_path, None, f"bad counts: {err}") from None

    q = InteractionMatrix()
    path = os.path.join(in_dir, "interactions.jsonl")
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                u, e, ok = int(rec["student"]), int(rec["exercise"]), bool(rec["correct"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                raise DataFormatError(path, line_no, f"bad record: {err}") from None
            q.set(u, e, 1 if ok else -1)

    o = ConceptExerciseMap()
    path = os.path.join(in_dir, "exercise_concepts.csv")
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if line_no == 1 or not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DataFormatError(path, line_no, f"expected 2 columns, got {len(parts)}")
            o.add(_read_int(path, line_no, parts[0], "exercise id"),
                  _read_int(path, line_no, parts[1], "concept id"))

    dag = PrereqDag()
    path = os.path.join(in_dir, "prerequisites.csv")
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if line_no == 1 or not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DataFormatError(path, line_no, f"expected 2 columns, got {len(parts)}")
            dag.add(_read_int(path, line_no, parts[0], "prereq id"),
                    _read_int(path, line_no, parts[1], "concept id"))

    graph = CognitiveGraph(catalog, q, o, dag)
    try:
        graph.validate()
    except CycleError:
        raise
    except GraphError as err:
        raise DataFormatError(in_dir, None, str(err)) from None

    train, test = [], []
    path = os.path.join(in_dir, "samples.csv")
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if line_no == 1 or not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DataFormatError(path, line_no, f"expected 4 columns, got {len(parts)}")
            role = parts[0]
            s = Sample(_read_int(path, line_no, parts[1], "student id"),
                       _read_int(path, line_no, parts[2], "concept id"),
                       Tier(parts[3]))
            if not (0 <= s.student < catalog.n_students):
                raise DataFormatError(path, line_no, f"unknown student {s.student}")
            if not (0 <= s.concept < catalog.n_concepts):
                raise DataFormatError(path, line_no, f"unknown concept {s.concept}")
            if role == "train":
                train.append(s)
            elif role == "test":
                test.append(s)
            else:
                raise DataFormatError(path, line_no, f"unknown role {role!r}")
    return DatasetBundle(graph, train, test, meta)
