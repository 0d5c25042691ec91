"""Weighted finite-state acceptors in the log semiring.

A ``WeightedGraph`` is a plain acceptor: one label per arc, weights in
natural-log space. Label 0 is reserved for epsilon (non-emitting) arcs, which
by construction only appear as language-model backoff arcs. Graphs carrying
pdf labels store ``pdf_id + 1`` on the arc so that pdf 0 does not collide
with epsilon; graphs carrying phone labels store the phone id directly
(phone ids start at 1).

Graphs are treated as immutable after construction; every operation here
returns a new graph.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import CyclicWithoutBoundError, EmptyGraphError, ParseError
from .semiring import LOG_ZERO, log_add

PDF_LABELS = "pdf-id"
PHONE_LABELS = "phone-id"
EPSILON = 0

_FORMAT_HEADER = "WFSA v1"


class Arc(NamedTuple):
    src: int
    dst: int
    label: int
    weight: float


@dataclass
class WeightedGraph:
    num_states: int
    arcs: list
    start: list          # [(state, log-weight)]
    finals: list         # [(state, log-weight)]
    label_semantics: str = PDF_LABELS

    def __post_init__(self):
        self.arcs = [Arc(*a) for a in self.arcs]
        self._fb_cache = None

    def start_states(self):
        return [(s, w) for s, w in self.start if w > LOG_ZERO]

    def final_states(self):
        return [(s, w) for s, w in self.finals if w > LOG_ZERO]

    def final_weight(self, state: int) -> float:
        for s, w in self.finals:
            if s == state:
                return w
        return LOG_ZERO

    def max_label(self) -> int:
        return max((a.label for a in self.arcs), default=0)


@dataclass
class DecodeGraph:
    """A pdf-labeled graph plus per-arc phone readout annotations.

    ``readout[i]`` gives the phone whose occurrence starts on arc ``i``;
    arcs without an entry are phone-internal (chain continuation or
    self-loop) or epsilon.
    """

    graph: WeightedGraph
    readout: dict = field(default_factory=dict)


def validate(g: WeightedGraph) -> None:
    """Basic index validation; raises ValueError on violation."""
    for i, a in enumerate(g.arcs):
        if not (0 <= a.src < g.num_states and 0 <= a.dst < g.num_states):
            raise ValueError(f"arc {i} references state outside [0, {g.num_states})")
        if a.label < 0:
            raise ValueError(f"arc {i} has negative label {a.label}")
        if a.weight != a.weight:  # NaN
            raise ValueError(f"arc {i} has NaN weight")
    for name, entries in (("start", g.start), ("final", g.finals)):
        for s, w in entries:
            if not 0 <= s < g.num_states:
                raise ValueError(f"{name} entry references state {s} outside range")
            if w != w:
                raise ValueError(f"{name} entry for state {s} has NaN weight")
    if not g.start_states():
        raise ValueError("graph has no start state with weight above log-zero")
    if not g.final_states():
        raise ValueError("graph has no final state with weight above log-zero")
    if g.label_semantics not in (PDF_LABELS, PHONE_LABELS):
        raise ValueError(f"unknown label semantics {g.label_semantics!r}")


def _reachable(g: WeightedGraph):
    fwd = {s for s, _ in g.start_states()}
    out = {}
    for a in g.arcs:
        out.setdefault(a.src, []).append(a.dst)
    queue = list(fwd)
    while queue:
        s = queue.pop()
        for d in out.get(s, ()):
            if d not in fwd:
                fwd.add(d)
                queue.append(d)
    bwd = {s for s, _ in g.final_states()}
    inc = {}
    for a in g.arcs:
        inc.setdefault(a.dst, []).append(a.src)
    queue = list(bwd)
    while queue:
        s = queue.pop()
        for d in inc.get(s, ()):
            if d not in bwd:
                bwd.add(d)
                queue.append(d)
    return fwd & bwd


def trim_with_maps(g: WeightedGraph):
    """Trim and also return the old-state -> new-state and old-arc -> new-arc maps.

    Needed by the graph compiler to remap readout annotations.
    """
    validate(g)
    keep = _reachable(g)
    if not keep:
        raise EmptyGraphError("no start-to-final path exists")
    state_map = {}
    for s in range(g.num_states):
        if s in keep:
            state_map[s] = len(state_map)
    arc_map = {}
    arcs = []
    for i, a in enumerate(g.arcs):
        if a.src in keep and a.dst in keep:
            arc_map[i] = len(arcs)
            arcs.append(Arc(state_map[a.src], state_map[a.dst], a.label, a.weight))
    start = [(state_map[s], w) for s, w in g.start_states() if s in keep]
    finals = [(state_map[s], w) for s, w in g.final_states() if s in keep]
    trimmed = WeightedGraph(len(state_map), arcs, start, finals, g.label_semantics)
    return trimmed, state_map, arc_map


def trim(g: WeightedGraph) -> WeightedGraph:
    """Drop states that are not on some start-to-final path.

    Preserves the accepted path set and the total weight of every path.
    Raises EmptyGraphError when nothing survives.
    """
    trimmed, _, _ = trim_with_maps(g)
    return trimmed


def _has_cycle(g: WeightedGraph) -> bool:
    out = {}
    for a in g.arcs:
        if a.src == a.dst:
            return True
        out.setdefault(a.src, []).append(a.dst)
    # iterative DFS with colors
    color = [0] * g.num_states  # 0 white, 1 on stack, 2 done
    for root in range(g.num_states):
        if color[root]:
            continue
        stack = [(root, iter(out.get(root, ())))]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == 1:
                    return True
                if color[nxt] == 0:
                    color[nxt] = 1
                    stack.append((nxt, iter(out.get(nxt, ()))))
                    advanced = True
                    break
            if not advanced:
                color[node] = 2
                stack.pop()
    return False


def total_weight(g: WeightedGraph, max_path_length: int | None = None) -> float:
    """Log-sum over all accepted paths of start + arc + final weights.

    The graph must be acyclic, or ``max_path_length`` (a bound on the number
    of arcs per path) must be supplied.
    """
    validate(g)
    if max_path_length is None:
        if _has_cycle(g):
            raise CyclicWithoutBoundError(
                "graph is cyclic; supply max_path_length to bound the path sum"
            )
        bound = max(g.num_states - 1, 0)
    else:
        bound = max_path_length

    alpha = [LOG_ZERO] * g.num_states
    for s, w in g.start_states():
        alpha[s] = log_add(alpha[s], w)
    total = LOG_ZERO
    for s, w in g.final_states():
        if alpha[s] > LOG_ZERO:
            total = log_add(total, alpha[s] + w)
    for _ in range(bound):
        nxt = [LOG_ZERO] * g.num_states
        for a in g.arcs:
            if alpha[a.src] > LOG_ZERO:
                nxt[a.dst] = log_add(nxt[a.dst], alpha[a.src] + a.weight)
        alpha = nxt
        for s, w in g.final_states():
            if alpha[s] > LOG_ZERO:
                total = log_add(total, alpha[s] + w)
    return total


# --- text serialization -------------------------------------------------------
#
# Line-oriented UTF-8 format:
#   WFSA v1 <num_states> <label_semantics>
#   A <src> <dst> <label> <weight>
#   S <state> <weight>
#   F <state> <weight>
#   R <arc-index> <phone-id>        (decode graphs only)
#
# Weights use repr() so the round trip is bit exact; "-inf" is the zero element.


def _fmt_weight(w: float) -> str:
    return repr(w) if w != LOG_ZERO else "-inf"


def serialize(g) -> str:
    """Serialize a WeightedGraph or DecodeGraph to the text format."""
    readout = None
    if isinstance(g, DecodeGraph):
        readout = g.readout
        g = g.graph
    lines = [f"{_FORMAT_HEADER} {g.num_states} {g.label_semantics}"]
    for a in g.arcs:
        lines.append(f"A {a.src} {a.dst} {a.label} {_fmt_weight(a.weight)}")
    for s, w in g.start:
        lines.append(f"S {s} {_fmt_weight(w)}")
    for s, w in g.finals:
        lines.append(f"F {s} {_fmt_weight(w)}")
    if readout is not None:
        for arc_index in sorted(readout):
            lines.append(f"R {arc_index} {readout[arc_index]}")
    return "\n".join(lines) + "\n"


def _parse_weight(token: str, lineno: int) -> float:
    try:
        w = float(token)
    except ValueError:
        raise ParseError(f"bad weight {token!r}", line=lineno) from None
    if w != w:
        raise ParseError("NaN weight", line=lineno)
    return w


def deserialize(text: str):
    """Parse the text format; returns a WeightedGraph, or a DecodeGraph when
    readout (R) lines are present."""
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty input", line=1)
    header = lines[0].split()
    if len(header) != 4 or " ".join(header[:2]) != _FORMAT_HEADER:
        raise ParseError(f"bad header {lines[0]!r}", line=1)
    try:
        num_states = int(header[2])
    except ValueError:
        raise ParseError(f"bad state count {header[2]!r}", line=1) from None
    semantics = header[3]
    if semantics not in (PDF_LABELS, PHONE_LABELS):
        raise ParseError(f"unknown label semantics {semantics!r}", line=1)

    arcs, start, finals = [], [], []
    readout = {}
    has_readout = False
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        kind = fields[0]
        if kind == "A":
            if len(fields) != 5:
                raise ParseError("arc line needs 4 fields", line=lineno)
            try:
                src, dst, label = int(fields[1]), int(fields[2]), int(fields[3])
            except ValueError:
                raise ParseError("non-integer arc field", line=lineno) from None
            if not (0 <= src < num_states and 0 <= dst < num_states):
                raise ParseError(
                    f"arc references state outside [0, {num_states})", line=lineno
                )
            if label < 0:
                raise ParseError(f"negative label {label}", line=lineno)
            arcs.append(Arc(src, dst, label, _parse_weight(fields[4], lineno)))
        elif kind in ("S", "F"):
            if len(fields) != 3:
                raise ParseError(f"{kind} line needs 2 fields", line=lineno)
            try:
                state = int(fields[1])
            except ValueError:
                raise ParseError("non-integer state field", line=lineno) from None
            if not 0 <= state < num_states:
                raise ParseError(
                    f"state {state} outside [0, {num_states})", line=lineno
                )
            entry = (state, _parse_weight(fields[2], lineno))
            (start if kind == "S" else finals).append(entry)
        elif kind == "R":
            if len(fields) != 3:
                raise ParseError("readout line needs 2 fields", line=lineno)
            try:
                arc_index, phone = int(fields[1]), int(fields[2])
            except ValueError:
                raise ParseError("non-integer readout field", line=lineno) from None
            if not 0 <= arc_index < len(arcs):
                raise ParseError(
                    f"readout references arc {arc_index} before it is defined",
                    line=lineno,
                )
            if phone < 1:
                raise ParseError(f"readout phone {phone} must be >= 1", line=lineno)
            readout[arc_index] = phone
            has_readout = True
        else:
            raise ParseError(f"unknown record type {kind!r}", line=lineno)

    g = WeightedGraph(num_states, arcs, start, finals, semantics)
    try:
        validate(g)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    if has_readout:
        return DecodeGraph(g, readout)
    return g
