"""Compile phone-level structures into pdf-labeled training graphs.

Arc labels on pdf graphs are ``pdf_id + 1`` (0 stays epsilon). Emitting
structure is epsilon-free: phone chains are stitched together by replicating
entry arcs from every predecessor, never by epsilon glue. The only epsilon
arcs in a denominator graph are the language model's backoff arcs, carried
over (and replicated from chain-final states) as non-emitting weighted arcs.
"""

from .errors import EmptyTranscriptError, LabelOutOfRangeError
from .graph import (
    EPSILON,
    PDF_LABELS,
    PHONE_LABELS,
    Arc,
    DecodeGraph,
    WeightedGraph,
    trim_with_maps,
)
from .semiring import LOG_ONE
from .topology import HmmTopology


def _plabel(topo: HmmTopology, phone: int, j: int) -> int:
    return topo.pdf(phone, j) + 1


def build_numerator(alternatives, topo: HmmTopology) -> WeightedGraph:
    """Acceptor of all frame alignments of all pronunciation variants.

    ``alternatives`` is one list of pronunciation variants per word position
    (each variant a sequence of phone ids). The graph concatenates positions
    and unions variants; all weights are log-one, so the numerator carries no
    language-model scores.
    """
    if not alternatives or any(len(variants) == 0 for variants in alternatives):
        raise EmptyTranscriptError("transcript has no pronunciation alternatives")
    for variants in alternatives:
        for variant in variants:
            if len(variant) == 0:
                raise EmptyTranscriptError("empty pronunciation variant")
            for phone in variant:
                if not 1 <= phone <= topo.num_phones:
                    raise LabelOutOfRangeError(
                        f"phone {phone} outside topology range 1..{topo.num_phones}"
                    )

    k = topo.states_per_phone
    arcs = []
    num_states = 1            # state 0 is the single initial state
    frontier = [0]            # states from which the next word may start
    for variants in alternatives:
        new_frontier = []
        for variant in variants:
            prev = None       # None means "enter from the frontier"
            for phone in variant:
                for j in range(k):
                    state = num_states
                    num_states += 1
                    label = _plabel(topo, phone, j)
                    if prev is None:
                        for f in frontier:
                            arcs.append(Arc(f, state, label, LOG_ONE))
                    else:
                        arcs.append(Arc(prev, state, label, LOG_ONE))
                    if topo.self_loop:
                        arcs.append(Arc(state, state, label, LOG_ONE))
                    prev = state
            new_frontier.append(prev)
        frontier = new_frontier
    start = [(0, LOG_ONE)]
    finals = [(s, LOG_ONE) for s in frontier]
    return WeightedGraph(num_states, arcs, start, finals, PDF_LABELS)


def _expand_lm(lm_fsa: WeightedGraph, topo: HmmTopology):
    """Shared machinery for denominator and decode graphs.

    Every phone arc of the LM acceptor becomes a topology chain carrying the
    LM weight on its first (entry) arc. Entry arcs are replicated from the LM
    state node and from every chain-final state that arrives at that LM
    state, keeping emitting structure epsilon-free. Backoff epsilon arcs are
    similarly replicated. Returns the trimmed graph plus a readout map from
    arc index to the phone whose occurrence starts there.
    """
    if lm_fsa.label_semantics != PHONE_LABELS:
        raise LabelOutOfRangeError("denominator expansion needs a phone-labeled FSA")
    for a in lm_fsa.arcs:
        if a.label > topo.num_phones:
            raise LabelOutOfRangeError(
                f"phone {a.label} outside topology range 1..{topo.num_phones}"
            )

    k = topo.states_per_phone
    phone_arcs = [(i, a) for i, a in enumerate(lm_fsa.arcs) if a.label != EPSILON]
    eps_arcs = [a for a in lm_fsa.arcs if a.label == EPSILON]

    num_states = lm_fsa.num_states
    chain_first = {}
    chain_last = {}
    for i, a in phone_arcs:
        chain_first[i] = num_states
        chain_last[i] = num_states + k - 1
        num_states += k

    # chain-final states that represent "arrived at LM state q"
    at_state = {q: [] for q in range(lm_fsa.num_states)}
    for i, a in phone_arcs:
        at_state[a.dst].append(chain_last[i])

    arcs = []
    readout = {}

    def add(src, dst, label, weight, phone=None):
        if phone is not None:
            readout[len(arcs)] = phone
        arcs.append(Arc(src, dst, label, weight))

    for i, a in phone_arcs:
        first, p = chain_first[i], a.label
        entry_label = _plabel(topo, p, 0)
        add(a.src, first, entry_label, a.weight, phone=p)
        for pred in at_state[a.src]:
            add(pred, first, entry_label, a.weight, phone=p)
        for j in range(k):
            state = first + j
            if topo.self_loop:
                add(state, state, _plabel(topo, p, j), LOG_ONE)
            if j + 1 < k:
                add(state, state + 1, _plabel(topo, p, j + 1), LOG_ONE)
    for a in eps_arcs:
        add(a.src, a.dst, EPSILON, a.weight)
        for pred in at_state[a.src]:
            add(pred, a.dst, EPSILON, a.weight)

    start = list(lm_fsa.start)
    finals = []
    for q, w in lm_fsa.finals:
        finals.append((q, w))
        for pred in at_state[q]:
            finals.append((pred, w))

    raw = WeightedGraph(num_states, arcs, start, finals, PDF_LABELS)
    trimmed, _, arc_map = trim_with_maps(raw)
    readout = {arc_map[i]: p for i, p in readout.items() if i in arc_map}
    return trimmed, readout


def build_denominator(lm_fsa: WeightedGraph, topo: HmmTopology) -> WeightedGraph:
    graph, _ = _expand_lm(lm_fsa, topo)
    return graph


def build_decode_graph(lm_fsa: WeightedGraph, topo: HmmTopology) -> DecodeGraph:
    """Denominator structure plus phone readout annotations on entry arcs, so
    Viterbi backtraces yield phone sequences."""
    graph, readout = _expand_lm(lm_fsa, topo)
    return DecodeGraph(graph, readout)
