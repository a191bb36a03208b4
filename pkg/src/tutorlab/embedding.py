"""Translation-based pretraining of node embeddings over the cognitive graph.

The three relation matrices become typed triples; embeddings are trained
with a margin ranking loss against uniformly corrupted triples and the
entity vectors are renormalized to unit length after every epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import CognitiveGraph
from .nn import load_checkpoint, save_checkpoint

ANSWERED_CORRECT = 0
ANSWERED_WRONG = 1
COVERS = 2
PREREQ_OF = 3
N_RELATIONS = 4
RELATION_NAMES = ("answered_correct", "answered_wrong", "covers", "prereq_of")


@dataclass
class TripleStore:
    heads: np.ndarray
    relations: np.ndarray
    tails: np.ndarray
    n_entities: int

    def __len__(self) -> int:
        return len(self.heads)


def make_triples(graph: CognitiveGraph) -> TripleStore:
    """One triple per Q entry (relation by sign), O entry, and P edge."""
    cat = graph.catalog
    heads, rels, tails = [], [], []
    for u, e, v in graph.q.items():
        heads.append(u)
        rels.append(ANSWERED_CORRECT if v > 0 else ANSWERED_WRONG)
        tails.append(cat.exercise_node(e))
    for e, c in graph.o.items():
        heads.append(cat.exercise_node(e))
        rels.append(COVERS)
        tails.append(cat.concept_node(c))
    for i, j in graph.p.edges():
        heads.append(cat.concept_node(i))
        rels.append(PREREQ_OF)
        tails.append(cat.concept_node(j))
    return TripleStore(np.asarray(heads, dtype=np.int64),
                       np.asarray(rels, dtype=np.int64),
                       np.asarray(tails, dtype=np.int64),
                       n_entities=cat.n_nodes)


@dataclass
class EmbeddingTable:
    entities: np.ndarray   # (n_entities, dim)
    relations: np.ndarray  # (N_RELATIONS, dim)

    @property
    def dim(self) -> int:
        return self.entities.shape[1]

    def vector(self, node: int) -> np.ndarray:
        return self.entities[node]

    def save(self, path, meta: dict | None = None):
        save_checkpoint(path, [("entities", self.entities), ("relations", self.relations)],
                        meta=meta)

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        params, _ = load_checkpoint(path)
        return cls(entities=params["entities"], relations=params["relations"])


@dataclass
class PretrainConfig:
    dim: int = 64
    margin: float = 1.0
    epochs: int = 500
    learning_rate: float = 0.01
    batch_size: int = 128
    typed_relations: bool = True  # False collapses all edges onto one relation vector


def transe_score(h: np.ndarray, r: np.ndarray, t: np.ndarray) -> float:
    """||h + r - t||_2; lower means a more plausible triple."""
    return float(np.linalg.norm(h + r - t))


def random_table(n_entities: int, dim: int, rng: np.random.Generator) -> EmbeddingTable:
    bound = 1.0 / np.sqrt(dim)
    ent = rng.uniform(-bound, bound, size=(n_entities, dim))
    rel = rng.uniform(-bound, bound, size=(N_RELATIONS, dim))
    rel /= np.maximum(np.linalg.norm(rel, axis=1, keepdims=True), 1e-12)
    return EmbeddingTable(ent, rel)


def _normalize_rows(m: np.ndarray):
    m /= np.maximum(np.linalg.norm(m, axis=1, keepdims=True), 1e-12)


def pretrain(triples: TripleStore, cfg: PretrainConfig, seed: int,
             log: list | None = None) -> EmbeddingTable:
    """Margin-ranking training with uniform head/tail corruption.

    Deterministic for a given seed; with epochs=0 the seeded random
    initialization is returned untouched.
    """
    if len(triples) == 0:
        raise ValueError("empty triple store")
    rng = np.random.default_rng(seed)
    table = random_table(triples.n_entities, cfg.dim, rng)
    ent, rel = table.entities, table.relations
    n = len(triples)
    rel_idx = triples.relations if cfg.typed_relations else np.zeros(n, dtype=np.int64)

    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        corrupt_head = rng.random(n) < 0.5
        corrupt_ent = rng.integers(0, triples.n_entities, size=n)
        epoch_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            h, r, t = triples.heads[idx], rel_idx[idx], triples.tails[idx]
            ch = np.where(corrupt_head[idx], corrupt_ent[idx], h)
            ct = np.where(corrupt_head[idx], t, corrupt_ent[idx])

            dp = ent[h] + rel[r] - ent[t]
            dn = ent[ch] + rel[r] - ent[ct]
            np_pos = np.maximum(np.linalg.norm(dp, axis=1), 1e-12)
            np_neg = np.maximum(np.linalg.norm(dn, axis=1), 1e-12)
            active = cfg.margin + np_pos - np_neg > 0
            epoch_loss += float(np.sum(np.maximum(cfg.margin + np_pos - np_neg, 0.0)))
            if not np.any(active):
                continue
            gp = dp[active] / np_pos[active, None]   # d||v||/dv = v/||v||
            gn = dn[active] / np_neg[active, None]
            step = cfg.learning_rate
            ent_grad = np.zeros_like(ent)
            rel_grad = np.zeros_like(rel)
            np.add.at(ent_grad, h[active], gp)
            np.add.at(ent_grad, t[active], -gp)
            np.add.at(ent_grad, ch[active], -gn)
            np.add.at(ent_grad, ct[active], gn)
            np.add.at(rel_grad, r[active], gp - gn)
            ent -= step * ent_grad
            rel -= step * rel_grad
        _normalize_rows(ent)
        if log is not None:
            log.append(epoch_loss / n)
    return table


def mean_rank_of_true_tails(table: EmbeddingTable, triples: TripleStore,
                            rel_typed: bool = True) -> float:
    """Filtered mean rank of the true tail among all entities (1 = best)."""
    known = set(zip(triples.heads.tolist(), triples.relations.tolist(),
                    triples.tails.tolist()))
    ranks = []
    for h, r, t in zip(triples.heads, triples.relations, triples.tails):
        ri = int(r) if rel_typed else 0
        pred = table.entities[h] + table.relations[ri]
        d = np.linalg.norm(pred[None, :] - table.entities, axis=1)
        better = 0
        for cand in np.flatnonzero(d < d[t]):
            if cand != t and (int(h), int(r), int(cand)) not in known:
                better += 1
        ranks.append(better + 1)
    return float(np.mean(ranks))
