"""Tutoring agent: graph-encoded state, dueling Q-values, prioritized replay.

The state encoder runs a few graph-convolution layers over the session
subgraph (signed normalized adjacency, so failed answers contribute negated
messages) and pools the student and target rows into one state vector. The
Q-network scores each candidate action as state value plus mean-centered
advantage over the current candidate set. Training follows the standard
per-turn loop: epsilon-greedy rollout, replay insertion, one prioritized
minibatch update per turn, with a periodically synced target network.

Replay stores compact per-state structures (node ids plus the sparse
normalized adjacency) instead of dense tensors; minibatches are re-encoded
as one padded batched forward pass, which is what keeps desk-scale training
runs in the minutes range.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp

from .embedding import EmbeddingTable, random_table
from .graph import (CognitiveGraph, SessionState, SubgraphScope, apply_feedback,
                    build_subgraph, normalized_adjacency)
from .nn import (Linear, Param, SgdConfig, load_checkpoint, relu, save_checkpoint,
                 sgd_step)
from .selection import (CandidateSet, closure_exercises, concept_scores,
                        exercise_scores, select_candidates)
from .simulator import (Branch, CdModel, SimConfig, StepOutcome, StudentSession,
                        Termination, dynamic_update, respond, start_session)


@dataclass
class AgentConfig:
    gamma: float = 0.999
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_frac: float = 0.2   # linear decay over this share of episodes
    batch_size: int = 128
    learning_rate: float = 1e-4
    l2: float = 1e-6
    n_candidates: int = 30
    gcn_layers: int = 2
    embed_dim: int = 64
    hidden: int = 100
    buffer_capacity: int = 50_000
    target_update: int = 100          # train steps between target-net syncs
    use_target_network: bool = True   # False bootstraps from the online net
    priority_exponent: float = 0.6
    is_beta: float = 0.4
    priority_eps: float = 1e-3

    def __post_init__(self):
        if not (0 < self.gamma <= 1):
            raise ValueError("gamma must be in (0, 1]")
        for e in (self.epsilon_start, self.epsilon_end):
            if not (0 <= e <= 1):
                raise ValueError("epsilon must be in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AblationFlags:
    no_gcn: bool = False        # raw pretrained embeddings, no encoder params
    no_pretrain: bool = False   # random frozen embeddings instead of pretraining
    no_selection: bool = False  # candidates = predecessor closure, unranked
    no_prereq: bool = False     # rank by exercise score only, no concept grouping

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_names(cls, names) -> "AblationFlags":
        flags = cls()
        mapping = {"no-gcn": "no_gcn", "no-pretrain": "no_pretrain",
                   "no-selection": "no_selection", "no-prereq": "no_prereq"}
        for name in names:
            key = mapping.get(name.strip())
            if key is None:
                raise ValueError(f"unknown ablation {name!r}")
            setattr(flags, key, True)
        return flags


class GraphEncoder:
    """Stacked h' = ReLU(Adj h W + h B) layers over a session subgraph."""

    def __init__(self, dim: int, n_layers: int, rng: np.random.Generator):
        if n_layers < 1:
            raise ValueError("need at least one layer")
        self.dim = dim
        self.layers: list[tuple[Param, Param]] = []
        for l in range(n_layers):
            w = Param(_uniform(rng, dim, (dim, dim)), name=f"gcn{l}.w")
            b = Param(_uniform(rng, dim, (dim, dim)), name=f"gcn{l}.b")
            self.layers.append((w, b))

    def params(self) -> list[Param]:
        return [p for pair in self.layers for p in pair]

    def forward_single(self, adj: np.ndarray, h0: np.ndarray) -> np.ndarray:
        h = h0
        for w, b in self.layers:
            h = relu(adj @ h @ w.value + h @ b.value)
        return h

    def forward_flat(self, adj: sp.csr_matrix, h0: np.ndarray):
        """adj: block-diagonal symmetric signed normalized adjacency over the
        stacked node rows of many states; h0: (rows, dim). Returns final
        reprs and backward caches."""
        h = h0
        caches = []
        for w, b in self.layers:
            msg = adj @ h
            pre = msg @ w.value + h @ b.value
            caches.append((h, msg, pre))
            h = relu(pre)
        return h, caches

    def backward_flat(self, adj: sp.csr_matrix, caches, d_out: np.ndarray):
        """Accumulates layer gradients; relies on adj being symmetric."""
        dh = d_out
        for (w, b), (h, msg, pre) in zip(reversed(self.layers), reversed(caches)):
            dpre = np.where(pre > 0, dh, 0.0)
            w.grad += msg.T @ dpre
            b.grad += h.T @ dpre
            dh = adj @ (dpre @ w.value.T) + dpre @ b.value.T
        return dh

    def copy_values_from(self, other: "GraphEncoder"):
        for (w, b), (ow, ob) in zip(self.layers, other.layers):
            w.value[...] = ow.value
            b.value[...] = ob.value


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class DuelingQNet:
    """Q(s, a) = V(s) + A(s, a) - mean over the candidate set of A(s, .)."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.dim = dim
        self.value_h = Linear(dim, hidden, rng, name="value_h")
        self.value_o = Linear(hidden, 1, rng, name="value_o")
        self.adv_h = Linear(2 * dim, hidden, rng, name="adv_h")
        self.adv_o = Linear(hidden, 1, rng, name="adv_o")

    def params(self) -> list[Param]:
        return (self.value_h.params() + self.value_o.params()
                + self.adv_h.params() + self.adv_o.params())

    def value_forward(self, state_rows: np.ndarray) -> np.ndarray:
        self._v_pre = self.value_h.forward(state_rows)
        return self.value_o.forward(relu(self._v_pre))[:, 0]

    def value_backward(self, d_v: np.ndarray) -> np.ndarray:
        dh = self.value_o.backward(d_v[:, None])
        return self.value_h.backward(np.where(self._v_pre > 0, dh, 0.0))

    def adv_forward(self, pair_rows: np.ndarray) -> np.ndarray:
        self._a_pre = self.adv_h.forward(pair_rows)
        return self.adv_o.forward(relu(self._a_pre))[:, 0]

    def adv_backward(self, d_a: np.ndarray) -> np.ndarray:
        dh = self.adv_o.backward(d_a[:, None])
        return self.adv_h.backward(np.where(self._a_pre > 0, dh, 0.0))

    def q_candidates(self, state_repr: np.ndarray, cand_reprs: np.ndarray) -> np.ndarray:
        """Rollout-path Q values for one state and its candidate set."""
        v = self.value_forward(state_repr[None, :])[0]
        pairs = np.concatenate(
            [np.repeat(state_repr[None, :], len(cand_reprs), axis=0), cand_reprs], axis=1)
        a = self.adv_forward(pairs)
        return v + a - a.mean()

    def copy_values_from(self, other: "DuelingQNet"):
        for mine, theirs in zip(self.params(), other.params()):
            mine.value[...] = theirs.value


def td_target(reward: float, next_q: np.ndarray | None, gamma: float) -> float:
    """y = r for terminal transitions, else r + gamma * max next-Q."""
    if next_q is None or len(next_q) == 0:
        return float(reward)
    return float(reward + gamma * np.max(next_q))


def epsilon_at(episode: int, total_episodes: int, cfg: AgentConfig) -> float:
    cut = max(1, int(total_episodes * cfg.epsilon_decay_frac))
    if episode >= cut:
        return cfg.epsilon_end
    frac = episode / cut
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac


@dataclass
class StateStruct:
    """Compact replayable snapshot of one encoded-state input."""

    emb_rows: np.ndarray    # (n,) global node ids = embedding rows
    coo_i: np.ndarray
    coo_j: np.ndarray
    coo_v: np.ndarray       # signed normalized adjacency entries
    u_local: int
    t_local: int
    cand_local: np.ndarray  # (k,) local node index, -1 if outside the subgraph
    cand_nodes: np.ndarray  # (k,) global node ids, target concept last

    @property
    def n_nodes(self) -> int:
        return len(self.emb_rows)

    @property
    def n_cands(self) -> int:
        return len(self.cand_nodes)


def snapshot_state(state: SessionState, cands: CandidateSet,
                   catalog) -> StateStruct:
    adj = normalized_adjacency(state, signed=True)
    ii, jj = np.nonzero(adj)
    nodes = cands.actions(catalog)
    return StateStruct(
        emb_rows=state.nodes.astype(np.int64),
        coo_i=ii.astype(np.int32), coo_j=jj.astype(np.int32),
        coo_v=adj[ii, jj].copy(),
        u_local=state.student_local(),
        t_local=state.target_local(catalog),
        cand_local=np.asarray([state.local.get(a, -1) for a in nodes], dtype=np.int64),
        cand_nodes=np.asarray(nodes, dtype=np.int64),
    )


@dataclass
class Transition:
    s: StateStruct
    a_idx: int              # index of the taken action within s.cand_nodes
    reward: float
    s1: StateStruct | None  # None for terminal transitions
    terminal: bool
    # target-value cache, valid while the target network stays unsynced
    y_cache: float = 0.0
    y_version: int = -1


class ReplayBuffer:
    """FIFO ring with proportional prioritized sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._data: list[Transition] = []
        self._pri = np.zeros(capacity)
        self._pos = 0

    def __len__(self) -> int:
        return len(self._data)

    def add(self, tr: Transition, priority: float | None = None):
        if priority is None:
            priority = float(self._pri[:len(self._data)].max()) if self._data else 1.0
        if priority <= 0:
            raise ValueError("priority must be positive")
        if len(self._data) < self.capacity:
            self._data.append(tr)
            self._pri[len(self._data) - 1] = priority
        else:
            self._data[self._pos] = tr
            self._pri[self._pos] = priority
            self._pos = (self._pos + 1) % self.capacity

    def sample(self, batch: int, rng: np.random.Generator, exponent: float,
               is_beta: float):
        n = len(self._data)
        if n < batch:
            raise ValueError(f"buffer holds {n} < batch {batch}")
        scaled = self._pri[:n] ** exponent
        probs = scaled / scaled.sum()
        idx = rng.choice(n, size=batch, replace=True, p=probs)
        weights = (n * probs[idx]) ** (-is_beta)
        weights /= weights.max()
        return idx, [self._data[i] for i in idx], weights

    def update_priorities(self, idx: np.ndarray, priorities: np.ndarray):
        self._pri[idx] = np.maximum(priorities, 1e-12)


class _FlatBatch:
    """Stacked node rows of many state structs with index arrays into them.

    The per-state adjacencies become one block-diagonal CSR matrix, so a
    whole minibatch encodes with one sparse matmul plus one dense GEMM per
    layer term.
    """

    def __init__(self, structs: list[StateStruct], emb: np.ndarray):
        counts = np.asarray([st.n_nodes for st in structs])
        offsets = np.zeros(len(structs), dtype=np.int64)
        np.cumsum(counts[:-1], out=offsets[1:])
        total = int(counts.sum())
        self.h0 = emb[np.concatenate([st.emb_rows for st in structs])]
        i = np.concatenate([st.coo_i + off for st, off in zip(structs, offsets)])
        j = np.concatenate([st.coo_j + off for st, off in zip(structs, offsets)])
        v = np.concatenate([st.coo_v for st in structs])
        self.adj = sp.csr_matrix((v, (i, j)), shape=(total, total))
        self.u_rows = offsets + np.asarray([st.u_local for st in structs])
        self.t_rows = offsets + np.asarray([st.t_local for st in structs])
        loc = np.concatenate([st.cand_local for st in structs])
        self.seg = np.concatenate(
            [np.full(st.n_cands, k, dtype=np.int64) for k, st in enumerate(structs)])
        self.cand_nodes = np.concatenate([st.cand_nodes for st in structs])
        self.inside = loc >= 0
        self.cand_rows = np.where(self.inside, loc + offsets[self.seg], 0)

    def state_reprs(self, reprs: np.ndarray) -> np.ndarray:
        return 0.5 * (reprs[self.u_rows] + reprs[self.t_rows])

    def cand_reprs(self, reprs: np.ndarray, emb: np.ndarray) -> np.ndarray:
        out = reprs[self.cand_rows]
        if not self.inside.all():
            out[~self.inside] = emb[self.cand_nodes[~self.inside]]
        return out


def _segment_q(qnet: DuelingQNet, state_reprs: np.ndarray, cand_reprs: np.ndarray,
               seg: np.ndarray):
    """Dueling Q for flattened candidate rows grouped by seg (state index)."""
    v = qnet.value_forward(state_reprs)
    pairs = np.concatenate([state_reprs[seg], cand_reprs], axis=1)
    a = qnet.adv_forward(pairs)
    counts = np.bincount(seg, minlength=len(state_reprs)).astype(np.float64)
    sums = np.bincount(seg, weights=a, minlength=len(state_reprs))
    mean_a = sums / np.maximum(counts, 1.0)
    return v[seg] + a - mean_a[seg], a, v, counts


class Trainer:
    """Owns the online/target networks and runs prioritized Q-learning steps."""

    def __init__(self, graph: CognitiveGraph, embeddings: EmbeddingTable,
                 cfg: AgentConfig, flags: AblationFlags, rng: np.random.Generator):
        self.graph = graph
        self.cfg = cfg
        self.flags = flags
        self.emb = embeddings.entities
        self.encoder = None if flags.no_gcn else GraphEncoder(cfg.embed_dim, cfg.gcn_layers, rng)
        self.qnet = DuelingQNet(cfg.embed_dim, cfg.hidden, rng)
        if cfg.use_target_network:
            self.target_encoder = copy.deepcopy(self.encoder)
            self.target_qnet = copy.deepcopy(self.qnet)
        else:
            self.target_encoder = self.encoder
            self.target_qnet = self.qnet
        self.steps = 0

    def parameters(self) -> list[Param]:
        params = list(self.qnet.params())
        if self.encoder is not None:
            params += self.encoder.params()
        return params

    def sync_target(self):
        if not self.cfg.use_target_network:
            return
        if self.encoder is not None:
            self.target_encoder.copy_values_from(self.encoder)
        self.target_qnet.copy_values_from(self.qnet)

    def compute_targets(self, batch: list[Transition]) -> np.ndarray:
        y = np.array([tr.reward for tr in batch])
        live = [i for i, tr in enumerate(batch) if not tr.terminal]
        if not live:
            return y
        flat = _FlatBatch([batch[i].s1 for i in live], self.emb)
        if self.target_encoder is None:
            reprs = flat.h0
        else:
            reprs, _ = self.target_encoder.forward_flat(flat.adj, flat.h0)
        q, _, _, _ = _segment_q(self.target_qnet, flat.state_reprs(reprs),
                                flat.cand_reprs(reprs, self.emb), flat.seg)
        best = np.full(len(live), -np.inf)
        np.maximum.at(best, flat.seg, q)
        for j, i in enumerate(live):
            y[i] += self.cfg.gamma * best[j]
        return y

    def loss_and_grads(self, batch: list[Transition], weights: np.ndarray,
                       y: np.ndarray | None = None):
        """Weighted squared TD error with gradients accumulated into the
        online parameters; targets are treated as constants."""
        if y is None:
            y = self.compute_targets(batch)
        structs = [tr.s for tr in batch]
        b = len(batch)
        flat = _FlatBatch(structs, self.emb)
        if self.encoder is None:
            reprs, caches = flat.h0, None
        else:
            reprs, caches = self.encoder.forward_flat(flat.adj, flat.h0)
        state_reprs = flat.state_reprs(reprs)
        cand_reprs = flat.cand_reprs(reprs, self.emb)
        q_all, a_all, v, counts = _segment_q(self.qnet, state_reprs, cand_reprs,
                                             flat.seg)

        offsets = np.cumsum([0] + [st.n_cands for st in structs[:-1]])
        taken = offsets + np.asarray([tr.a_idx for tr in batch])
        q_taken = q_all[taken]
        td = y - q_taken
        loss = float(np.mean(weights * td ** 2))

        dq = -2.0 * weights * td / b
        d_v = dq
        # dQ/dA_j = 1[j taken] - 1/k within each candidate set
        d_a = -(dq / counts)[flat.seg]
        d_a[taken] += dq

        d_pairs = self.qnet.adv_backward(d_a)
        d_state = self.qnet.value_backward(d_v)
        dim = self.cfg.embed_dim
        d_state_from_pairs = np.zeros_like(d_state)
        np.add.at(d_state_from_pairs, flat.seg, d_pairs[:, :dim])
        d_state += d_state_from_pairs
        d_cand = d_pairs[:, dim:]

        if self.encoder is not None:
            d_reprs = np.zeros_like(reprs)
            np.add.at(d_reprs, flat.u_rows, 0.5 * d_state)
            np.add.at(d_reprs, flat.t_rows, 0.5 * d_state)
            np.add.at(d_reprs, flat.cand_rows[flat.inside], d_cand[flat.inside])
            self.encoder.backward_flat(flat.adj, caches, d_reprs)
        return loss, td

    def train_step(self, buffer: ReplayBuffer, rng: np.random.Generator) -> float:
        cfg = self.cfg
        idx, batch, weights = buffer.sample(cfg.batch_size, rng,
                                            cfg.priority_exponent, cfg.is_beta)
        loss, td = self.loss_and_grads(batch, weights)
        sgd_step(self.parameters(), SgdConfig(cfg.learning_rate, cfg.l2))
        buffer.update_priorities(idx, np.abs(td) + cfg.priority_eps)
        self.steps += 1
        if cfg.use_target_network and self.steps % cfg.target_update == 0:
            self.sync_target()
        return loss


def encode_state(encoder: GraphEncoder | None, state: SessionState,
                 embeddings: EmbeddingTable, catalog) -> tuple[np.ndarray, np.ndarray]:
    """Final-layer node reprs for one state plus the pooled state vector
    (elementwise mean of the student and target rows)."""
    if state.nodes.max() >= embeddings.entities.shape[0]:
        raise ValueError("embedding table does not cover this subgraph")
    h0 = embeddings.entities[state.nodes]
    if encoder is None:
        h = h0
    else:
        h = encoder.forward_single(normalized_adjacency(state, signed=True), h0)
    state_repr = 0.5 * (h[state.student_local()] + h[state.target_local(catalog)])
    return state_repr, h


class PaiAgent:
    """Trained policy: per-episode subgraph tracking plus greedy/epsilon action
    choice over the prerequisite-guided candidate set."""

    def __init__(self, graph: CognitiveGraph, embeddings: EmbeddingTable,
                 encoder: GraphEncoder | None, qnet: DuelingQNet,
                 cfg: AgentConfig, flags: AblationFlags,
                 scope: SubgraphScope = SubgraphScope.EXTENDED, name: str = "pai"):
        self.graph = graph
        self.embeddings = embeddings
        self.encoder = encoder
        self.qnet = qnet
        self.cfg = cfg
        self.flags = flags
        self.scope = scope
        self.name = name
        self._ctx = None

    # -- per-episode protocol ------------------------------------------------

    def begin_episode(self, student: int, target: int, rng: np.random.Generator):
        state = build_subgraph(self.graph, student, target, self.scope)
        self._ctx = _EpisodeContext(state=state, rng=rng)
        self._refresh()

    def act(self, epsilon: float = 0.0) -> int:
        ctx = self._ctx
        actions = ctx.cands.actions(self.graph.catalog)
        if epsilon > 0 and ctx.rng.random() < epsilon:
            return actions[ctx.rng.integers(len(actions))]
        q = self.q_for_candidates()
        best = np.flatnonzero(q == q.max())
        return min(actions[i] for i in best)

    def q_for_candidates(self) -> np.ndarray:
        ctx = self._ctx
        cand_reprs = np.stack([self._vec_of_node(a)
                               for a in ctx.cands.actions(self.graph.catalog)])
        return self.qnet.q_candidates(ctx.state_repr, cand_reprs)

    def observe(self, action: int, outcome: StepOutcome):
        ctx = self._ctx
        cat = self.graph.catalog
        if cat.is_exercise(action):
            e = cat.node_to_exercise(action)
            if outcome.branch is Branch.EXERCISE_OK:
                ctx.e_plus.add(e)
            else:
                ctx.e_minus.add(e)
            ctx.state = apply_feedback(ctx.state, action, outcome.feedback, cat)
        else:
            hist_f = 1 if outcome.terminal is Termination.MASTERED else -1
            ctx.state = apply_feedback(ctx.state, action, hist_f, cat)
        if outcome.terminal is Termination.ACTIVE:
            self._refresh()

    # -- internals -------------------------------------------------------------

    def _refresh(self):
        ctx = self._ctx
        ctx.state_repr, ctx.node_reprs = encode_state(
            self.encoder, ctx.state, self.embeddings, self.graph.catalog)
        ctx.cands = self._select(ctx)

    def _vec_of_node(self, node: int) -> np.ndarray:
        ctx = self._ctx
        li = ctx.state.local.get(node)
        if li is None:
            return self.embeddings.entities[node]
        return ctx.node_reprs[li]

    def _vec_of_exercise(self, e: int) -> np.ndarray:
        return self._vec_of_node(self.graph.catalog.exercise_node(e))

    def _select(self, ctx) -> CandidateSet:
        graph, cfg, flags = self.graph, self.cfg, self.flags
        target = ctx.state.target
        pool = closure_exercises(graph, target)
        if flags.no_selection:
            succeeded = {graph.catalog.node_to_exercise(a)
                         for a, f in ctx.state.history
                         if graph.catalog.is_exercise(a) and f == 1}
            return CandidateSet(exercises=[e for e in pool if e not in succeeded],
                                target=target)
        u_vec = ctx.node_reprs[ctx.state.student_local()]
        w_e = exercise_scores(self._vec_of_exercise, u_vec, pool,
                              ctx.e_plus, ctx.e_minus)
        if flags.no_prereq:
            ranked = sorted(pool, key=lambda e: (-w_e[e], e))[:cfg.n_candidates]
            return CandidateSet(exercises=ranked, target=target)
        w_c = concept_scores(w_e, graph, target)
        return select_candidates(graph, target, w_e, w_c, cfg.n_candidates)

    # -- persistence -----------------------------------------------------------

    def save(self, path, extra_meta: dict | None = None):
        named = []
        if self.encoder is not None:
            named += [(p.name, p.value) for p in self.encoder.params()]
        named += [(p.name, p.value) for p in self.qnet.params()]
        meta = {"config": self.cfg.to_dict(), "flags": self.flags.to_dict(),
                "scope": self.scope.value, "name": self.name}
        meta.update(extra_meta or {})
        save_checkpoint(path, named, meta=meta)

    @classmethod
    def load(cls, path, graph: CognitiveGraph, embeddings: EmbeddingTable) -> "PaiAgent":
        params, meta = load_checkpoint(path)
        cfg = AgentConfig(**meta["config"])
        flags = AblationFlags(**meta["flags"])
        rng = np.random.default_rng(0)
        encoder = None if flags.no_gcn else GraphEncoder(cfg.embed_dim, cfg.gcn_layers, rng)
        qnet = DuelingQNet(cfg.embed_dim, cfg.hidden, rng)
        agent = cls(graph, embeddings, encoder, qnet, cfg, flags,
                    SubgraphScope(meta.get("scope", "extended")),
                    name=meta.get("name", "pai"))
        for p in (agent.encoder.params() if agent.encoder else []) + agent.qnet.params():
            p.value[...] = params[p.name]
        return agent


@dataclass
class _EpisodeContext:
    state: SessionState
    rng: np.random.Generator
    e_plus: set = field(default_factory=set)
    e_minus: set = field(default_factory=set)
    cands: CandidateSet = None          # type: ignore[assignment]
    state_repr: np.ndarray = None       # type: ignore[assignment]
    node_reprs: np.ndarray = None       # type: ignore[assignment]


def run_training(graph: CognitiveGraph, cd_model: CdModel, sim_cfg: SimConfig,
                 embeddings: EmbeddingTable | None, train_samples: list[tuple[int, int]],
                 cfg: AgentConfig, episodes: int, seed: int,
                 flags: AblationFlags = AblationFlags(),
                 scope: SubgraphScope = SubgraphScope.EXTENDED,
                 name: str = "pai") -> tuple[PaiAgent, list[dict]]:
    """Per-turn Q-learning over simulated tutoring episodes.

    Each turn: encode state, choose epsilon-greedy among the candidates,
    query the simulator, record the transition (terminal ones included, so
    assessment payoffs are learnable), update the per-episode simulator
    clone on successful tutoring, reselect candidates, then run one
    prioritized minibatch update once the buffer is warm. Deterministic for
    a given seed.
    """
    ss = np.random.SeedSequence(seed)
    rng_init, rng_ep, rng_replay = (np.random.default_rng(s) for s in ss.spawn(3))
    if flags.no_pretrain or embeddings is None:
        embeddings = random_table(graph.catalog.n_nodes, cfg.embed_dim, rng_init)
    trainer = Trainer(graph, embeddings, cfg, flags, rng_init)
    agent = PaiAgent(graph, embeddings, trainer.encoder, trainer.qnet, cfg, flags,
                     scope, name=name)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    cat = graph.catalog
    log: list[dict] = []

    for ep in range(episodes):
        eps = epsilon_at(ep, episodes, cfg)
        u, c_star = train_samples[rng_ep.integers(len(train_samples))]
        agent.begin_episode(u, c_star, rng_ep)
        session = start_session(cd_model, u)
        total_reward, losses = 0.0, []
        turns = 0
        outcome = None
        for _ in range(sim_cfg.max_turns):
            ctx = agent._ctx
            struct_t = snapshot_state(ctx.state, ctx.cands, cat)
            action = agent.act(epsilon=eps)
            a_idx = int(np.flatnonzero(struct_t.cand_nodes == action)[0])
            is_concept = cat.is_concept(action)
            entity = c_star if is_concept else cat.node_to_exercise(action)
            outcome = respond(session, cd_model, is_concept, entity, c_star, sim_cfg)
            total_reward += outcome.reward
            turns += 1
            agent.observe(action, outcome)  # transition + candidate reselection
            if (not is_concept and outcome.feedback == 1
                    and outcome.terminal is Termination.ACTIVE):
                dynamic_update(session, cd_model, entity, outcome.feedback,
                               sim_cfg.alpha, sim_cfg.literal_descent)
            terminal = outcome.terminal is not Termination.ACTIVE
            struct_t1 = None if terminal else snapshot_state(
                agent._ctx.state, agent._ctx.cands, cat)
            buffer.add(Transition(struct_t, a_idx, outcome.reward, struct_t1, terminal))
            if len(buffer) >= cfg.batch_size:
                losses.append(trainer.train_step(buffer, rng_replay))
            if terminal:
                break
        log.append({
            "episode": ep, "student": int(u), "target": int(c_star),
            "outcome": outcome.terminal.value, "turns": turns,
            "reward": round(total_reward, 6), "epsilon": round(eps, 4),
            "loss": round(float(np.mean(losses)), 8) if losses else None,
        })
    return agent, log
