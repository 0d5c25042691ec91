"""Exact forward-backward over pdf-labeled graphs.

Computation is log-space double precision throughout; no pruning, no
leaky-HMM smoothing. Epsilon (backoff) arcs are closed at every frame
boundary; the epsilon subgraph must be acyclic, which the LM construction
guarantees (backoff strictly shortens the context).

The inner loops are vectorized per frame over arc arrays: arcs are grouped
by destination (forward) or source (backward) once per graph and reduced
with segmented log-sum-exp. The grouping is cached on the graph object; the
graph itself is never mutated.
"""

import numpy as np

from .errors import EpsilonCycleError, ShapeMismatchError
from .graph import EPSILON, WeightedGraph
from .semiring import LOG_ZERO


def _segment_lse(vals, starts, sizes):
    """Log-sum-exp over contiguous groups of vals; one output per group."""
    m = np.maximum.reduceat(vals, starts)
    m_rep = np.repeat(m, sizes)
    with np.errstate(invalid="ignore"):
        shifted = np.where(np.isneginf(m_rep), -np.inf, vals - m_rep)
    with np.errstate(divide="ignore"):
        return m + np.log(np.add.reduceat(np.exp(shifted), starts))


class _ArcGroup:
    """Arc arrays sorted and grouped by a key state (dst or src)."""

    __slots__ = ("src", "dst", "pdf", "weight", "key_states", "starts", "sizes", "empty")

    def __init__(self, arcs, key):
        self.empty = len(arcs) == 0
        if self.empty:
            return
        order = sorted(range(len(arcs)), key=lambda i: (key(arcs[i]), i))
        self.src = np.array([arcs[i].src for i in order], dtype=np.intp)
        self.dst = np.array([arcs[i].dst for i in order], dtype=np.intp)
        self.pdf = np.array([arcs[i].label - 1 for i in order], dtype=np.intp)
        self.weight = np.array([arcs[i].weight for i in order], dtype=np.float64)
        keys = np.array([key(arcs[i]) for i in order], dtype=np.intp)
        self.key_states, self.starts = np.unique(keys, return_index=True)
        self.sizes = np.diff(np.append(self.starts, len(keys)))


class _EpsLevels:
    """Epsilon arcs grouped by topological level for closure sweeps."""

    def __init__(self, eps_arcs, num_states):
        level = self._levels(eps_arcs, num_states)
        by_level = {}
        for a in eps_arcs:
            by_level.setdefault(level[a.src], []).append(a)
        # forward closure: ascending source level, grouped by dst
        self.forward = [
            _ArcGroup(by_level[lv], key=lambda a: a.dst) for lv in sorted(by_level)
        ]
        # backward closure: descending source level, grouped by src
        self.backward = [
            _ArcGroup(by_level[lv], key=lambda a: a.src)
            for lv in sorted(by_level, reverse=True)
        ]

    @staticmethod
    def _levels(eps_arcs, num_states):
        out = {}
        indeg = {}
        nodes = set()
        for a in eps_arcs:
            out.setdefault(a.src, []).append(a.dst)
            indeg[a.dst] = indeg.get(a.dst, 0) + 1
            nodes.add(a.src)
            nodes.add(a.dst)
        level = {s: 0 for s in nodes}
        queue = [s for s in nodes if indeg.get(s, 0) == 0]
        seen = 0
        while queue:
            s = queue.pop()
            seen += 1
            for d in out.get(s, ()):
                level[d] = max(level[d], level[s] + 1)
                indeg[d] -= 1
                if indeg[d] == 0:
                    queue.append(d)
        if seen != len(nodes):
            raise EpsilonCycleError("epsilon arcs form a cycle")
        return level


class _CompiledGraph:
    def __init__(self, g: WeightedGraph):
        emitting = [a for a in g.arcs if a.label != EPSILON]
        eps = [a for a in g.arcs if a.label == EPSILON]
        self.num_states = g.num_states
        self.by_dst = _ArcGroup(emitting, key=lambda a: a.dst)
        self.by_src = _ArcGroup(emitting, key=lambda a: a.src)
        self.eps = _EpsLevels(eps, g.num_states)
        self.max_pdf = max((a.label - 1 for a in emitting), default=-1)
        self.start_states = np.array([s for s, _ in g.start_states()], dtype=np.intp)
        self.start_weights = np.array([w for _, w in g.start_states()], dtype=np.float64)
        self.final_states = np.array([s for s, _ in g.final_states()], dtype=np.intp)
        self.final_weights = np.array([w for _, w in g.final_states()], dtype=np.float64)


def compiled(g: WeightedGraph) -> _CompiledGraph:
    if g._fb_cache is None:
        g._fb_cache = _CompiledGraph(g)
    return g._fb_cache


def _close_forward(row, levels):
    for group in levels:
        vals = row[group.src] + group.weight
        row[group.key_states] = np.logaddexp(
            row[group.key_states], _segment_lse(vals, group.starts, group.sizes)
        )


def _close_backward(row, levels):
    for group in levels:
        vals = group.weight + row[group.dst]
        row[group.key_states] = np.logaddexp(
            row[group.key_states], _segment_lse(vals, group.starts, group.sizes)
        )


def _lse(vals):
    if len(vals) == 0:
        return LOG_ZERO
    m = vals.max()
    if m == LOG_ZERO:
        return LOG_ZERO
    return float(m + np.log(np.exp(vals - m).sum()))


def alpha_beta(g: WeightedGraph, emissions: np.ndarray):
    """Forward and backward state potentials per frame boundary.

    Returns (alpha, beta, forward_total, backward_total) where alpha and beta
    are (T+1) x num_states arrays. The two totals agree up to float rounding;
    both are exposed so tests can check the consistency directly.
    """
    e = np.asarray(emissions, dtype=np.float64)
    if e.ndim != 2:
        raise ShapeMismatchError(f"emissions must be 2-D, got shape {e.shape}")
    T, P = e.shape
    if T < 1:
        raise ValueError("need at least one frame")
    c = compiled(g)
    if c.max_pdf >= P:
        raise ShapeMismatchError(
            f"graph references pdf {c.max_pdf} but emissions have only {P} columns"
        )

    alpha = np.full((T + 1, c.num_states), LOG_ZERO)
    alpha[0, c.start_states] = c.start_weights
    _close_forward(alpha[0], c.eps.forward)
    fwd = c.by_dst
    for t in range(T):
        if not fwd.empty:
            vals = alpha[t, fwd.src] + fwd.weight + e[t, fwd.pdf]
            alpha[t + 1, fwd.key_states] = _segment_lse(vals, fwd.starts, fwd.sizes)
        _close_forward(alpha[t + 1], c.eps.forward)

    beta = np.full((T + 1, c.num_states), LOG_ZERO)
    beta[T, c.final_states] = c.final_weights
    _close_backward(beta[T], c.eps.backward)
    bwd = c.by_src
    for t in range(T - 1, -1, -1):
        if not bwd.empty:
            vals = bwd.weight + e[t, bwd.pdf] + beta[t + 1, bwd.dst]
            beta[t, bwd.key_states] = _segment_lse(vals, bwd.starts, bwd.sizes)
        _close_backward(beta[t], c.eps.backward)

    forward_total = _lse(alpha[T, c.final_states] + c.final_weights)
    backward_total = _lse(c.start_weights + beta[0, c.start_states])
    return alpha, beta, forward_total, backward_total


def graph_forward_backward(g: WeightedGraph, emissions: np.ndarray):
    """Log marginal likelihood and per-frame pdf occupancies.

    Returns (logprob, gamma) with gamma of shape T x P; every row of gamma
    sums to 1. When no path accepts the T frames, logprob is -inf and gamma
    is all zeros (the caller decides whether that is an error).
    """
    e = np.asarray(emissions, dtype=np.float64)
    alpha, beta, logprob, _ = alpha_beta(g, e)
    T, P = e.shape
    gamma = np.zeros((T, P))
    if logprob == LOG_ZERO:
        return LOG_ZERO, gamma
    c = compiled(g)
    fwd = c.by_dst
    if not fwd.empty:
        for t in range(T):
            contrib = (
                alpha[t, fwd.src]
                + fwd.weight
                + e[t, fwd.pdf]
                + beta[t + 1, fwd.dst]
                - logprob
            )
            gamma[t] = np.bincount(
                fwd.pdf, weights=np.exp(contrib), minlength=P
            )
    return logprob, gamma
