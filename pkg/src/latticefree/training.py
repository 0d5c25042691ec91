"""Multilingual pretraining, few-shot transfer scenarios, and the n-gram
order / unpaired-text-weight sweep.

Four transfer scenarios are supported:

  scratch-mono           random encoder, fresh target-only output head
  transfer-mono          pretrained encoder, fresh target-only head
  transfer-multi         pretrained encoder and universal head, target phones
                         remapped into the universal space
  frozen-transfer-multi  transfer-multi with encoder parameters held fixed

Fine-tuning always minimizes the summed graph objective on the few-shot set
with plain SGD (fixed step size, global gradient-norm clip). The denominator
LM mixes the paired few-shot transcripts at ``target_weight`` with unpaired
target text at weight ``alpha``; alpha = 0 reproduces the unexpanded
baseline exactly. All randomness is keyed off the config seed; metrics are
written deterministically so fixed-seed runs are byte-identical.
"""

import configparser
from dataclasses import dataclass, replace

import numpy as np

from .compiler import build_decode_graph, build_denominator, build_numerator
from .decoding import score_corpus, viterbi
from .errors import (
    DivergedLossError,
    NumeratorPrunedError,
    ScenarioMismatchError,
)
from .graph import PHONE_LABELS, Arc, WeightedGraph
from .loss import lfmmi_loss
from .model import AcousticModel, clip_gradients
from .ngram import WeightedCorpus, estimate_ngram, lm_to_fsa
from .phones import PhoneInventory, remap_sequence, transcript_to_phone_alternatives
from .topology import make_topology

SCENARIOS = ("scratch-mono", "transfer-mono", "transfer-multi", "frozen-transfer-multi")
UNIVERSAL_HEAD = "universal"


@dataclass
class TrainConfig:
    scenario: str = "transfer-multi"
    steps: int = 200
    step_size: float = 0.05
    batch_size: int = 8
    clip_norm: float = 5.0
    hidden: tuple = (32,)
    states_per_phone: int = 1
    self_loop: bool = True
    den_order: int = 2
    target_weight: float = 10.0
    alpha: float = 0.0
    train_count: int = 20
    eval_every: int = 10           # dev check cadence for early stopping
    eval_count: int = 0            # 0 = whole eval split
    early_stop: bool = True        # keep the best-dev-PER checkpoint
    decode_order: int = 2
    decode_source: str = "pool"    # pool | train | unpaired
    target_lang: str = ""          # empty = the task's single target language
    seed: int = 0


@dataclass
class MetricRow:
    step: int
    scenario: str
    metric: str
    value: float


def metrics_lines(rows) -> str:
    out = []
    for r in rows:
        out.append(f"{r.step}\t{r.scenario}\t{r.metric}\t{r.value!r}")
    return "\n".join(out) + "\n" if out else ""


# --- label spaces -----------------------------------------------------------------


class _LabelSpace:
    """Maps a language's data into the phone-id space graphs are built over.

    The universal space is the identity (plus optional remap of phones
    unattested in training); a mono space renumbers the target language's
    phones densely from 1.
    """

    def __init__(self, inventory, phones=None, remap=None, attested=None):
        self.remap = remap
        self.attested = set(attested) if attested is not None else None
        if phones is None:
            self.size = len(inventory)
            self.to_space = None
            self.from_space = None
        else:
            ordered = sorted(phones)
            self.size = len(ordered)
            self.to_space = {u: i + 1 for i, u in enumerate(ordered)}
            self.from_space = {i + 1: u for i, u in enumerate(ordered)}

    def map_seq(self, seq):
        if self.remap is not None and self.attested is not None:
            seq = remap_sequence(seq, self.remap, self.attested)
        if self.to_space is None:
            return list(seq)
        return [self.to_space[p] for p in seq]

    def unmap_seq(self, seq):
        if self.from_space is None:
            return list(seq)
        return [self.from_space[p] for p in seq]

    def map_lexicon_alternatives(self, alternatives):
        return [[tuple(self.map_seq(v)) for v in variants] for variants in alternatives]

    def space_phones(self, lang_phones):
        """The space-ids a language can produce (after any remapping)."""
        return sorted({self.map_seq([p])[0] for p in lang_phones})


def _estimate_lm_fsa(sequences, order, phone_set):
    """Estimate an LM over a language's own phone subset and relabel the
    acceptor into the target space.

    Restricting the vocabulary matters: smoothing then spreads mass only over
    phones the language actually uses, so a language's denominator never
    references another language's pdfs.
    """
    phone_set = sorted(phone_set)
    to_dense = {p: i + 1 for i, p in enumerate(phone_set)}
    vocab = PhoneInventory(tuple(f"u{i}" for i in range(1, len(phone_set) + 1)))
    corpora = [
        WeightedCorpus([[to_dense[p] for p in seq] for seq in seqs], w)
        for seqs, w in sequences
        if w > 0
    ]
    model = estimate_ngram(corpora if order else [], order, vocab)
    fsa = lm_to_fsa(model)
    if phone_set == list(range(1, len(phone_set) + 1)):
        return fsa
    arcs = [
        Arc(a.src, a.dst, phone_set[a.label - 1] if a.label else 0, a.weight)
        for a in fsa.arcs
    ]
    return WeightedGraph(fsa.num_states, arcs, fsa.start, fsa.finals, PHONE_LABELS)


def _numerator_for(utt, lexicon, space, topo, cache):
    num = cache.get(utt.utt_id)
    if num is None:
        alternatives = transcript_to_phone_alternatives(utt.words, lexicon)
        num = build_numerator(space.map_lexicon_alternatives(alternatives), topo)
        cache[utt.utt_id] = num
    return num


# --- pretraining -----------------------------------------------------------------


def pretrain_multilingual(task, config: TrainConfig, model: AcousticModel | None = None):
    """Train a universal-head model on all training languages mixed together.

    Returns (model, loss_history) where loss_history holds the mean
    per-utterance batch loss at every step.
    """
    topo = make_topology(config.states_per_phone, config.self_loop, len(task.inventory))
    space = _LabelSpace(task.inventory)
    if model is None:
        model = AcousticModel(
            _task_feature_dim(task), config.hidden,
            {UNIVERSAL_HEAD: topo.num_pdfs}, seed=config.seed,
        )
    elif UNIVERSAL_HEAD not in model.heads:
        model.replace_head(UNIVERSAL_HEAD, topo.num_pdfs, seed=config.seed)

    pool = []      # (utterance, lexicon, den graph index)
    dens = []
    for lang in task.train_languages():
        seqs = [space.map_seq(u.phones) for u in lang.splits["train"]]
        den = build_denominator(
            _estimate_lm_fsa(
                [(seqs, 1.0)], config.den_order, space.space_phones(lang.phones)
            ),
            topo,
        )
        dens.append(den)
        for utt in lang.splits["train"]:
            pool.append((utt, lang.lexicon, len(dens) - 1))

    cache = {}
    rng = np.random.default_rng((config.seed, 11))
    history = []
    for step in range(config.steps):
        idx = rng.integers(0, len(pool), size=config.batch_size)
        grads = {}
        batch_loss = 0.0
        used = 0
        for i in idx:
            utt, lexicon, den_i = pool[int(i)]
            num = _numerator_for(utt, lexicon, space, topo, cache)
            emissions, acts = model.forward(utt.features, UNIVERSAL_HEAD)
            try:
                res = lfmmi_loss(num, dens[den_i], emissions)
            except NumeratorPrunedError:
                continue
            used += 1
            batch_loss += res.loss
            for key, g in model.backward(acts, res.grad, UNIVERSAL_HEAD).items():
                if key in grads:
                    grads[key] += g
                else:
                    grads[key] = g
        if used == 0:
            history.append(0.0)
            continue
        if not np.isfinite(batch_loss):
            raise DivergedLossError(f"non-finite loss at pretraining step {step}")
        clipped, _ = clip_gradients(grads, config.clip_norm)
        model.apply_update(clipped, config.step_size)
        history.append(batch_loss / used)
    return model, history


def _task_feature_dim(task):
    for lang in task.languages.values():
        for utts in lang.splits.values():
            for utt in utts:
                return utt.features.shape[1]
    raise ScenarioMismatchError("task has no utterances")


# --- transfer scenarios ------------------------------------------------------------


def _target_language(task, config):
    if config.target_lang:
        lang = task.languages.get(config.target_lang)
        if lang is None:
            raise ScenarioMismatchError(f"no language {config.target_lang!r} in task")
        return lang
    targets = task.target_languages()
    if len(targets) != 1:
        raise ScenarioMismatchError(
            f"need exactly one target language or an explicit target_lang, found {len(targets)}"
        )
    return targets[0]


def train_scenario(pretrained, task, config: TrainConfig, remap=None):
    """Fine-tune on the target few-shot set; returns (model, metric rows).

    ``remap`` optionally maps target phones unattested in pretraining onto
    attested ones (multi scenarios only).
    """
    if config.scenario not in SCENARIOS:
        raise ScenarioMismatchError(f"unknown scenario {config.scenario!r}")
    mono = config.scenario.endswith("mono")
    frozen = config.scenario == "frozen-transfer-multi"
    needs_pretrained = config.scenario != "scratch-mono"
    if needs_pretrained and pretrained is None:
        raise ScenarioMismatchError(f"{config.scenario} requires a pretrained model")

    lang = _target_language(task, config)
    if mono:
        space = _LabelSpace(task.inventory, phones=lang.phones)
        head = f"mono-{lang.code}"
    else:
        attested = set()
        for tl in task.train_languages():
            attested |= set(tl.phones)
        space = _LabelSpace(
            task.inventory, remap=remap, attested=attested if remap is not None else None
        )
        head = UNIVERSAL_HEAD
    topo = make_topology(config.states_per_phone, config.self_loop, space.size)

    if config.scenario == "scratch-mono":
        model = AcousticModel(
            _task_feature_dim(task), config.hidden, {head: topo.num_pdfs},
            seed=config.seed,
        )
    else:
        model = pretrained.copy()
        if mono:
            model.replace_head(head, topo.num_pdfs, seed=config.seed)
        elif head not in model.heads:
            raise ScenarioMismatchError(
                "transfer-multi needs a pretrained universal head"
            )
        elif model.head_dim(head) != topo.num_pdfs:
            raise ScenarioMismatchError(
                f"universal head has {model.head_dim(head)} pdfs, topology needs {topo.num_pdfs}"
            )

    few_shot = lang.splits["train"][: config.train_count]
    if not few_shot:
        raise ScenarioMismatchError("empty few-shot training set")

    sequences = [([space.map_seq(u.phones) for u in few_shot], config.target_weight)]
    if config.alpha > 0 and lang.unpaired:
        sequences.append(([space.map_seq(s) for s in lang.unpaired], config.alpha))
    den = build_denominator(
        _estimate_lm_fsa(sequences, config.den_order, space.space_phones(lang.phones)),
        topo,
    )

    decode_graph = _build_decode_graph(task, lang, space, topo, config)

    def evaluate(model, split):
        utts = lang.splits[split]
        if split == "eval" and config.eval_count:
            utts = utts[: config.eval_count]
        hyps = []
        refs = []
        for utt in utts:
            emissions, _ = model.forward(utt.features, head)
            hyp = viterbi(decode_graph, emissions)
            hyps.append(space.unmap_seq(hyp))
            refs.append(list(utt.phones))
        return score_corpus(refs, hyps).total.per

    rows = [MetricRow(0, config.scenario, "per", evaluate(model, "eval"))]
    cache = {}
    rng = np.random.default_rng((config.seed, 23))
    skipped = 0
    encoder_before = model.encoder_checksum() if frozen else None
    # early stopping mirrors tuning on a small held-out dev set: keep the
    # checkpoint with the best dev PER, ties resolved to the earliest step
    best_dev = evaluate(model, "dev") if config.early_stop else None
    best_params = (
        {k: v.copy() for k, v in model.parameters().items()}
        if config.early_stop
        else None
    )
    best_step = 0

    def dev_check(step):
        nonlocal best_dev, best_params, best_step
        dev = evaluate(model, "dev")
        rows.append(MetricRow(step, config.scenario, "dev_per", dev))
        if config.early_stop and dev < best_dev:
            best_dev = dev
            best_step = step
            best_params = {k: v.copy() for k, v in model.parameters().items()}

    for step in range(1, config.steps + 1):
        idx = rng.integers(0, len(few_shot), size=config.batch_size)
        grads = {}
        batch_loss = 0.0
        used = 0
        for i in idx:
            utt = few_shot[int(i)]
            num = _numerator_for(utt, lang.lexicon, space, topo, cache)
            emissions, acts = model.forward(utt.features, head)
            try:
                res = lfmmi_loss(num, den, emissions)
            except NumeratorPrunedError:
                skipped += 1
                continue
            used += 1
            batch_loss += res.loss
            for key, g in model.backward(acts, res.grad, head, freeze_encoder=frozen).items():
                grads[key] = grads.get(key, 0.0) + g
        if used:
            if not np.isfinite(batch_loss):
                raise DivergedLossError(f"non-finite loss at step {step}")
            clipped, _ = clip_gradients(grads, config.clip_norm)
            model.apply_update(clipped, config.step_size)
        if (config.eval_every and step % config.eval_every == 0) or step == config.steps:
            dev_check(step)
    if config.early_stop and config.steps:
        for key, arr in best_params.items():
            model._param_array(key)[...] = arr
        rows.append(MetricRow(config.steps, config.scenario, "best_step", float(best_step)))
    if config.steps:
        rows.append(MetricRow(config.steps, config.scenario, "per", evaluate(model, "eval")))
    rows.append(MetricRow(config.steps, config.scenario, "skipped", float(skipped)))
    if frozen and model.encoder_checksum() != encoder_before:
        raise ScenarioMismatchError("frozen scenario mutated encoder parameters")
    return model, rows


def _build_decode_graph(task, lang, space, topo, config):
    if config.decode_source == "pool":
        text = [space.map_seq(u.phones) for u in lang.splits["train"]]
    elif config.decode_source == "train":
        text = [space.map_seq(u.phones) for u in lang.splits["train"][: config.train_count]]
    elif config.decode_source == "unpaired":
        text = [space.map_seq(s) for s in lang.unpaired]
    else:
        raise ScenarioMismatchError(f"unknown decode_source {config.decode_source!r}")
    fsa = _estimate_lm_fsa(
        [(text, 1.0)], config.decode_order, space.space_phones(lang.phones)
    )
    return build_decode_graph(fsa, topo)


# --- denominator sweep ---------------------------------------------------------------


def sweep_denominator(pretrained, task, config: TrainConfig, orders, alphas):
    """Fine-tune one model per (order, alpha) grid cell; returns metric rows.

    Each cell starts from a fresh copy of the pretrained model. Failed cells
    are reported with metric ``failed`` instead of aborting the sweep.
    """
    rows = []
    for n in orders:
        for a in alphas:
            cell = replace(config, den_order=int(n), alpha=float(a))
            label = f"{config.scenario}-n{int(n)}-a{a:g}"
            try:
                _, cell_rows = train_scenario(pretrained, task, cell)
            except Exception:
                rows.append(MetricRow(config.steps, label, "failed", 1.0))
                continue
            final_per = [r for r in cell_rows if r.metric == "per"][-1]
            rows.append(MetricRow(config.steps, label, "per", final_per.value))
    return rows


# --- train config files -----------------------------------------------------------------

_TRAIN_KEYS = {
    "scenario": str,
    "steps": int,
    "step_size": float,
    "batch_size": int,
    "clip_norm": float,
    "states_per_phone": int,
    "self_loop": lambda v: v.strip().lower() in ("1", "true", "yes"),
    "den_order": int,
    "target_weight": float,
    "alpha": float,
    "train_count": int,
    "eval_every": int,
    "eval_count": int,
    "decode_order": int,
    "decode_source": str,
    "target_lang": str,
    "seed": int,
}


def parse_train_config(text: str) -> tuple:
    """Parses [train] (and optional [model], [sweep]) sections.

    Returns (TrainConfig, orders, alphas); the grid lists are empty unless a
    [sweep] section is present.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_string(text)
    kwargs = {}
    if "train" in parser:
        for key, raw in parser["train"].items():
            if key not in _TRAIN_KEYS:
                raise ScenarioMismatchError(f"unknown [train] key {key!r}")
            kwargs[key] = _TRAIN_KEYS[key](raw)
    hidden = (32,)
    if "model" in parser:
        for key, raw in parser["model"].items():
            if key != "hidden":
                raise ScenarioMismatchError(f"unknown [model] key {key!r}")
            hidden = tuple(int(w) for w in raw.split())
    orders, alphas = [], []
    if "sweep" in parser:
        for key, raw in parser["sweep"].items():
            if key == "orders":
                orders = [int(v) for v in raw.split()]
            elif key == "alphas":
                alphas = [float(v) for v in raw.split()]
            else:
                raise ScenarioMismatchError(f"unknown [sweep] key {key!r}")
    config = TrainConfig(hidden=hidden, **kwargs)
    if config.scenario not in SCENARIOS:
        raise ScenarioMismatchError(f"unknown scenario {config.scenario!r}")
    return config, orders, alphas
