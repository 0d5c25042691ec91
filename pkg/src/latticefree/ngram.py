"""Backoff phone n-gram language models estimated from weighted corpus mixtures.

Counts are fractional: every n-gram occurrence in a corpus contributes that
corpus's weight, so a weight of 10 is exactly ten replicas of the data and a
weight of 0 contributes nothing. Smoothing is interpolated Witten-Bell,
recursing to a uniform base distribution over the vocabulary plus the
end-of-utterance event, i.e. 1/(V+1) apiece. Witten-Bell needs no tuned
discounts and stays well-defined for tiny fractional counts, which is what
the few-shot regime produces.

An order-0 model is the uniform base itself, regardless of any corpora.
"""

import math
from dataclasses import dataclass, field

from .errors import (
    EmptyTrainingDataError,
    InvalidOrderError,
    ParseError,
    UnknownPhoneError,
)
from .graph import PHONE_LABELS, Arc, WeightedGraph
from .phones import PhoneInventory
from .semiring import LOG_ONE

# Sentence-boundary events. BOS only ever appears inside contexts; EOS only
# ever appears as a successor. Both are disjoint from real phone ids (>= 1)
# and from epsilon (0).
BOS = -1
EOS = -2

BOS_SYMBOL = "<s>"
EOS_SYMBOL = "</s>"


@dataclass
class WeightedCorpus:
    utterances: list    # phone-id sequences
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"corpus weight must be >= 0, got {self.weight}")


def _lookup(probs, backoff, context, successor):
    entry = probs.get(context)
    if entry is not None and successor in entry:
        return entry[successor]
    if not context:
        raise KeyError(successor)
    # unobserved contexts carry no explicit backoff and fall through at cost 1
    return backoff.get(context, 1.0) * _lookup(probs, backoff, context[1:], successor)


@dataclass
class NGramModel:
    order: int
    vocab: PhoneInventory
    # probs[context][successor] = interpolated probability. Contexts are
    # tuples of phone ids (possibly BOS-padded); successors are phone ids or
    # EOS. The empty context carries entries for every phone plus EOS.
    probs: dict = field(default_factory=dict)
    # backoff[context] = mass routed to the next-shorter context, for every
    # observed context of length >= 1.
    backoff: dict = field(default_factory=dict)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def uniform_prob(self) -> float:
        return 1.0 / (self.vocab_size + 1)

    def start_context(self) -> tuple:
        return (BOS,) * max(self.order - 1, 0)

    def states(self):
        """All context states, sorted shortest-first then lexicographically."""
        ctxs = set(self.probs) | set(self.backoff) | {()}
        if self.order >= 1:
            ctxs.add(self.start_context())
        return sorted(ctxs, key=lambda c: (len(c), c))

    def prob(self, context, successor) -> float:
        """Interpolated p(successor | context), backing off as needed."""
        if successor != EOS and successor not in self.vocab:
            raise UnknownPhoneError(successor)
        if self.order == 0:
            return self.uniform_prob()
        context = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        try:
            return _lookup(self.probs, self.backoff, context, successor)
        except KeyError:
            raise UnknownPhoneError(successor) from None


def _accumulate_counts(corpora, order):
    """Fractional counts per level: counts[m][context][successor] for m=1..order."""
    counts = {m: {} for m in range(1, order + 1)}
    any_data = False
    for corpus in corpora:
        if corpus.weight == 0.0:
            continue
        for utt in corpus.utterances:
            any_data = True
            for m in range(1, order + 1):
                seq = [BOS] * (m - 1) + list(utt) + [EOS]
                for pos in range(m - 1, len(seq)):
                    ctx = tuple(seq[pos - m + 1:pos])
                    succ = seq[pos]
                    level = counts[m].setdefault(ctx, {})
                    level[succ] = level.get(succ, 0.0) + corpus.weight
    return counts, any_data


def estimate_ngram(corpora, order: int, vocab: PhoneInventory) -> NGramModel:
    """Estimate an interpolated Witten-Bell model from weighted corpora."""
    if order < 0:
        raise InvalidOrderError(f"order must be >= 0, got {order}")
    uniform = 1.0 / (len(vocab) + 1)
    if order == 0:
        probs = {(): {pid: uniform for pid in vocab.ids()}}
        probs[()][EOS] = uniform
        return NGramModel(0, vocab, probs, {})

    counts, any_data = _accumulate_counts(corpora, order)
    if not any_data:
        raise EmptyTrainingDataError(
            "no positive-weight utterances available for estimation"
        )
    for succ in counts[1].get((), {}):
        if succ != EOS and succ not in vocab:
            raise UnknownPhoneError(succ)

    probs = {}
    backoff = {}

    # level 1: interpolate with the uniform base; keep an explicit entry for
    # every phone and EOS so nothing has zero probability
    level1 = counts[1].get((), {})
    total = sum(level1.values())
    distinct = len(level1)
    denom = total + distinct
    probs[()] = {
        ev: (level1.get(ev, 0.0) + distinct * uniform) / denom
        for ev in list(vocab.ids()) + [EOS]
    }

    # higher levels, lowest first so each can interpolate with the one below;
    # only observed events get explicit entries
    for m in range(2, order + 1):
        for ctx in sorted(counts[m]):
            succs = counts[m][ctx]
            total = sum(succs.values())
            distinct = len(succs)
            denom = total + distinct
            probs[ctx] = {
                succ: (c + distinct * _lookup(probs, backoff, ctx[1:], succ)) / denom
                for succ, c in sorted(succs.items())
            }
            backoff[ctx] = distinct / denom
    return NGramModel(order, vocab, probs, backoff)


def sequence_logprob(model: NGramModel, seq) -> float:
    """ln p(seq, EOS) under the interpolated model, BOS-padded per utterance."""
    context = model.start_context()
    keep = max(model.order - 1, 0)
    total = 0.0
    for phone in seq:
        total += math.log(model.prob(context, phone))
        context = (context + (phone,))[-keep:] if keep else ()
    total += math.log(model.prob(context, EOS))
    return total


def lm_to_fsa(model: NGramModel) -> WeightedGraph:
    """Convert the model to a phone-labeled backoff acceptor.

    One state per context; explicit arcs for stored successors at their
    interpolated probability; an epsilon arc per non-empty context carrying
    the backoff mass; final weight at every state is ln p(EOS | context).
    Every vocab phone is therefore accepted in every context through the
    backoff chain. The epsilon arcs duplicate a little probability mass for
    observed successors (both routes reach them); sequence scoring under the
    deterministic take-explicit-arc-first rule matches sequence_logprob
    exactly.
    """
    states = model.states()
    index = {ctx: i for i, ctx in enumerate(states)}

    def next_state(ctx, phone):
        if model.order <= 1:
            return index[()]
        nxt = (ctx + (phone,))[-(model.order - 1):]
        while nxt not in index:
            nxt = nxt[1:]
        return index[nxt]

    arcs = []
    for ctx in states:
        i = index[ctx]
        entry = model.probs.get(ctx, {})
        for succ in sorted(entry):
            if succ == EOS:
                continue
            arcs.append(Arc(i, next_state(ctx, succ), succ, math.log(entry[succ])))
        if ctx:
            scale = model.backoff.get(ctx, 1.0)
            arcs.append(Arc(i, index[ctx[1:]], 0, math.log(scale)))

    start = [(index[model.start_context()], LOG_ONE)]
    finals = [(index[ctx], math.log(model.prob(ctx, EOS))) for ctx in states]
    return WeightedGraph(len(states), arcs, start, finals, PHONE_LABELS)


# --- ARPA-style text serialization ---------------------------------------------
#
# Probabilities are written in log10 with full precision. Context backoff
# weights ride on the line of the context's own n-gram, standard ARPA style;
# contexts made of sentence-start padding get the usual -99 placeholder
# probability. An order-0 model is written as its equivalent uniform unigram
# model (the two are indistinguishable in behavior).


def _sym(model, event):
    if event == EOS:
        return EOS_SYMBOL
    if event == BOS:
        return BOS_SYMBOL
    return model.vocab.symbol_of(event)


def serialize_lm(model: NGramModel) -> str:
    order = max(model.order, 1)
    grams = {m: {} for m in range(1, order + 1)}   # tuple -> log10 prob or None
    for ctx, entry in model.probs.items():
        for succ, p in entry.items():
            gram = ctx + (succ,)
            grams[len(gram)][gram] = math.log10(p)
    for ctx in model.backoff:
        if ctx not in grams[len(ctx)]:
            grams[len(ctx)][ctx] = None    # placeholder line carrying the backoff
    lines = ["\\data\\"]
    for m in range(1, order + 1):
        lines.append(f"ngram {m}={len(grams[m])}")
    for m in range(1, order + 1):
        lines.append("")
        lines.append(f"\\{m}-grams:")
        for gram in sorted(grams[m]):
            logp = grams[m][gram]
            p_field = "-99" if logp is None else f"{logp:.17g}"
            syms = " ".join(_sym(model, ev) for ev in gram)
            bo = model.backoff.get(gram)
            if bo is not None and m < order:
                lines.append(f"{p_field}\t{syms}\t{math.log10(bo):.17g}")
            else:
                lines.append(f"{p_field}\t{syms}")
    lines.append("")
    lines.append("\\end\\")
    return "\n".join(lines) + "\n"


def _event_of(token, vocab):
    if token == EOS_SYMBOL:
        return EOS
    if token == BOS_SYMBOL:
        return BOS
    return vocab.id_of(token)


def parse_lm(text: str, vocab: PhoneInventory) -> NGramModel:
    lines = text.splitlines()
    i = 0
    while i < len(lines) and lines[i].strip() != "\\data\\":
        i += 1
    if i == len(lines):
        raise ParseError("missing \\data\\ marker", line=1)
    i += 1
    counts_decl = {}
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if not line.startswith("ngram "):
            break
        try:
            m, n = line[len("ngram "):].split("=")
            counts_decl[int(m)] = int(n)
        except ValueError:
            raise ParseError(f"bad ngram declaration {line!r}", line=i + 1) from None
        i += 1
    if not counts_decl:
        raise ParseError("no ngram declarations in \\data\\ section", line=i)
    order = max(counts_decl)

    probs = {}
    backoff = {}
    section = None
    saw_end = False
    for lineno in range(i, len(lines)):
        line = lines[lineno].strip()
        if not line:
            continue
        if line == "\\end\\":
            saw_end = True
            break
        if line.startswith("\\") and line.endswith("-grams:"):
            try:
                section = int(line[1:-len("-grams:")])
            except ValueError:
                raise ParseError(f"bad section header {line!r}",
                                 line=lineno + 1) from None
            continue
        if section is None:
            raise ParseError("entry before any n-gram section", line=lineno + 1)
        fields = line.split()
        if len(fields) not in (section + 1, section + 2):
            raise ParseError(f"expected {section + 1} or {section + 2} fields",
                             line=lineno + 1, section=section)
        try:
            logp = float(fields[0])
        except ValueError:
            raise ParseError(f"bad probability {fields[0]!r}", line=lineno + 1,
                             section=section) from None
        try:
            events = tuple(_event_of(t, vocab) for t in fields[1:section + 1])
        except UnknownPhoneError as exc:
            raise ParseError(f"unknown symbol {exc.phone!r}", line=lineno + 1,
                             section=section) from None
        if len(fields) == section + 2:
            try:
                bo = float(fields[section + 1])
            except ValueError:
                raise ParseError(f"bad backoff {fields[section + 1]!r}",
                                 line=lineno + 1, section=section) from None
            backoff[events] = 10.0 ** bo
        if events[-1] != BOS:      # BOS-terminated grams are structural placeholders
            probs.setdefault(events[:-1], {})[events[-1]] = 10.0 ** logp
    if not saw_end:
        raise ParseError("missing \\end\\ marker", line=len(lines))
    return NGramModel(order, vocab, probs, backoff)


# --- corpus / manifest loading ---------------------------------------------------


def load_corpus(text: str, inv: PhoneInventory, weight: float = 1.0) -> WeightedCorpus:
    """One utterance per line, space-separated phone symbols."""
    utterances = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        try:
            utterances.append([inv.id_of(t) for t in tokens])
        except UnknownPhoneError as exc:
            raise UnknownPhoneError(exc.phone, line=lineno) from None
    return WeightedCorpus(utterances, weight)


def load_manifest(text: str):
    """Weighted-mixture manifest: lines of ``path<TAB>weight``."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.rstrip("\n").split("\t")
        if len(parts) != 2:
            raise ParseError("expected path<TAB>weight", line=lineno)
        try:
            weight = float(parts[1])
        except ValueError:
            raise ParseError(f"bad weight {parts[1]!r}", line=lineno) from None
        if weight < 0:
            raise ParseError(f"negative weight {weight}", line=lineno)
        out.append((parts[0], weight))
    return out
