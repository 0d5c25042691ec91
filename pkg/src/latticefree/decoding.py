"""Phone-level Viterbi decoding and error-rate scoring."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatchError, NoAcceptingPathError, ShapeMismatchError
from .graph import EPSILON, DecodeGraph
from .semiring import LOG_ZERO


class _MaxGroup:
    """Arcs sorted by (group key, src, original index) for deterministic argmax.

    Ties in score resolve to the earliest arc in this order, i.e. smallest
    (state-id, arc-index).
    """

    __slots__ = ("arc_ids", "src", "dst", "pdf", "weight", "key_states", "starts", "sizes", "empty")

    def __init__(self, indexed_arcs, key):
        self.empty = len(indexed_arcs) == 0
        if self.empty:
            return
        order = sorted(indexed_arcs, key=lambda ia: (key(ia[1]), ia[1].src, ia[0]))
        self.arc_ids = np.array([i for i, _ in order], dtype=np.intp)
        self.src = np.array([a.src for _, a in order], dtype=np.intp)
        self.dst = np.array([a.dst for _, a in order], dtype=np.intp)
        self.pdf = np.array([a.label - 1 for _, a in order], dtype=np.intp)
        self.weight = np.array([a.weight for _, a in order], dtype=np.float64)
        keys = np.array([key(a) for _, a in order], dtype=np.intp)
        self.key_states, self.starts = np.unique(keys, return_index=True)
        self.sizes = np.diff(np.append(self.starts, len(keys)))

    def best_per_key(self, scores):
        """(max score, winning original arc id) per key group."""
        m = np.maximum.reduceat(scores, self.starts)
        is_max = scores == np.repeat(m, self.sizes)
        positions = np.where(is_max, np.arange(len(scores)), len(scores))
        win = np.minimum.reduceat(positions, self.starts)
        return m, self.arc_ids[win]


def _compile_viterbi(g):
    emitting = [(i, a) for i, a in enumerate(g.arcs) if a.label != EPSILON]
    eps = [(i, a) for i, a in enumerate(g.arcs) if a.label == EPSILON]
    emit_group = _MaxGroup(emitting, key=lambda a: a.dst)
    # epsilon arcs swept in source-level order, exactly as in forward-backward
    from .fb import _EpsLevels

    level = _EpsLevels._levels([a for _, a in eps], g.num_states) if eps else {}
    by_level = {}
    for i, a in eps:
        by_level.setdefault(level[a.src], []).append((i, a))
    eps_groups = [_MaxGroup(by_level[lv], key=lambda a: a.dst) for lv in sorted(by_level)]
    return emit_group, eps_groups


def _close_max(row, ptr_row, eps_groups):
    for group in eps_groups:
        cand = row[group.src] + group.weight
        m, win = group.best_per_key(cand)
        improve = m > row[group.key_states]
        targets = group.key_states[improve]
        row[targets] = m[improve]
        ptr_row[targets] = win[improve]


def viterbi_path(decode_graph: DecodeGraph, emissions):
    """Best path in the max semiring; returns (score, arc index list)."""
    g = decode_graph.graph
    e = np.asarray(emissions, dtype=np.float64)
    if e.ndim != 2:
        raise ShapeMismatchError(f"emissions must be 2-D, got shape {e.shape}")
    T, P = e.shape
    max_label = g.max_label()
    if max_label - 1 >= P:
        raise ShapeMismatchError(
            f"graph references pdf {max_label - 1} but emissions have {P} columns"
        )
    emit_group, eps_groups = _compile_viterbi(g)

    alpha = np.full((T + 1, g.num_states), LOG_ZERO)
    ptr = np.full((T + 1, g.num_states), -1, dtype=np.intp)
    for s, w in g.start_states():
        if w > alpha[0, s]:
            alpha[0, s] = w
    _close_max(alpha[0], ptr[0], eps_groups)
    for t in range(T):
        if not emit_group.empty:
            cand = alpha[t, emit_group.src] + emit_group.weight + e[t, emit_group.pdf]
            m, win = emit_group.best_per_key(cand)
            alpha[t + 1, emit_group.key_states] = m
            ptr[t + 1, emit_group.key_states] = np.where(np.isneginf(m), -1, win)
        _close_max(alpha[t + 1], ptr[t + 1], eps_groups)

    best_score = LOG_ZERO
    best_state = -1
    for s, w in g.final_states():
        score = alpha[T, s] + w
        if score > best_score:
            best_score = score
            best_state = s
    if best_state < 0:
        raise NoAcceptingPathError(f"no accepting path for {T} frames")

    path = []
    t, s = T, best_state
    while True:
        a = ptr[t, s]
        if a < 0:
            break
        arc = g.arcs[a]
        path.append(a)
        if arc.label == EPSILON:
            s = arc.src
        else:
            s = arc.src
            t -= 1
    path.reverse()
    return float(best_score), path


def viterbi(decode_graph: DecodeGraph, emissions):
    """Phone readout of the best path."""
    _, path = viterbi_path(decode_graph, emissions)
    readout = decode_graph.readout
    return [readout[a] for a in path if a in readout]


# --- edit distance and PER ----------------------------------------------------


@dataclass
class AlignmentCosts:
    insertions: int
    deletions: int
    substitutions: int
    reference_length: int

    @property
    def errors(self) -> int:
        return self.insertions + self.deletions + self.substitutions

    @property
    def per(self) -> float:
        if self.reference_length == 0:
            return float("nan")
        return self.errors / self.reference_length


def edit_distance(ref, hyp) -> AlignmentCosts:
    """Levenshtein alignment with unit costs.

    Ties between operations of equal total cost resolve substitution first,
    then insertion, then deletion, so the (ins, del, sub) split is
    deterministic.
    """
    R, H = len(ref), len(hyp)
    # each cell holds (cost, ins, del, sub)
    prev = [(j, j, 0, 0) for j in range(H + 1)]
    for i in range(1, R + 1):
        cur = [(i, 0, i, 0)]
        for j in range(1, H + 1):
            match = ref[i - 1] == hyp[j - 1]
            d_cost, d_ins, d_del, d_sub = prev[j - 1]
            diag = (d_cost + (0 if match else 1), d_ins, d_del, d_sub + (0 if match else 1))
            i_cost, i_ins, i_del, i_sub = cur[j - 1]
            ins = (i_cost + 1, i_ins + 1, i_del, i_sub)
            u_cost, u_ins, u_del, u_sub = prev[j]
            dele = (u_cost + 1, u_ins, u_del + 1, u_sub)
            best = diag
            if ins[0] < best[0]:
                best = ins
            if dele[0] < best[0]:
                best = dele
            cur.append(best)
        prev = cur
    cost, ins, dele, sub = prev[H]
    return AlignmentCosts(ins, dele, sub, R)


@dataclass
class CorpusScore:
    per_utterance: list
    total: AlignmentCosts


def score_corpus(refs, hyps) -> CorpusScore:
    """Aggregate PER from summed counts, not the mean of per-utterance rates."""
    if len(refs) != len(hyps):
        raise LengthMismatchError(
            f"{len(refs)} references but {len(hyps)} hypotheses"
        )
    scores = [edit_distance(r, h) for r, h in zip(refs, hyps)]
    total = AlignmentCosts(
        insertions=sum(s.insertions for s in scores),
        deletions=sum(s.deletions for s in scores),
        substitutions=sum(s.substitutions for s in scores),
        reference_length=sum(s.reference_length for s in scores),
    )
    return CorpusScore(scores, total)


def format_score_report(utt_ids, corpus_score: CorpusScore) -> str:
    """Tab-separated per-utterance rows plus a TOTAL row."""
    if len(utt_ids) != len(corpus_score.per_utterance):
        raise LengthMismatchError(
            f"{len(utt_ids)} ids but {len(corpus_score.per_utterance)} scored utterances"
        )
    lines = []
    for utt_id, s in zip(utt_ids, corpus_score.per_utterance):
        lines.append(f"{utt_id}\t{_fmt_per(s.per)}\t{s.insertions}\t{s.deletions}\t{s.substitutions}")
    t = corpus_score.total
    lines.append(f"TOTAL\t{_fmt_per(t.per)}\t{t.insertions}\t{t.deletions}\t{t.substitutions}")
    return "\n".join(lines) + "\n"


def _fmt_per(per: float) -> str:
    return "nan" if math.isnan(per) else f"{per:.6f}"
