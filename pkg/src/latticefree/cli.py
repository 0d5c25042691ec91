"""Command-line surface: one verb per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data/validation error (the message
names the offending file and, where known, the line). All outputs are
written atomically (temp file in the same directory, then rename). No
environment variables are consulted; configuration is flags and files only.
"""

import argparse
import concurrent.futures
import os
import sys
import tempfile
from pathlib import Path

from . import compiler, decoding, emissions, graph, ngram, phones, synth, training
from .errors import LatticeFreeError
from .model import AcousticModel


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


class _DataError(Exception):
    pass


def _write_atomic(path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise _DataError(f"cannot read {path}: {exc.strerror}") from None


def _load_vocab(path) -> phones.PhoneInventory:
    return phones.load_inventory(_read_text(path))


def _load_graph(path):
    return graph.deserialize(_read_text(path))


def _load_emat(path):
    if not Path(path).exists():
        raise _DataError(f"cannot read {path}: no such file")
    return emissions.read_emat(path)


# --- subcommand implementations ----------------------------------------------------


def _cmd_estimate_lm(args):
    vocab = _load_vocab(args.vocab)
    corpora = []
    for path, weight in ngram.load_manifest(_read_text(args.manifest)):
        resolved = Path(args.manifest).parent / path if not os.path.isabs(path) else Path(path)
        corpora.append(ngram.load_corpus(_read_text(resolved), vocab, weight))
    model = ngram.estimate_ngram(corpora, args.order, vocab)
    _write_atomic(args.out, ngram.serialize_lm(model))
    print(f"wrote {args.out}: order {model.order}, {len(model.states())} contexts")
    return 0


def _cmd_lm_to_fsa(args):
    vocab = _load_vocab(args.vocab)
    model = ngram.parse_lm(_read_text(args.lm), vocab)
    fsa = ngram.lm_to_fsa(model)
    _write_atomic(args.out, graph.serialize(fsa))
    print(f"wrote {args.out}: {fsa.num_states} states, {len(fsa.arcs)} arcs")
    return 0


def _topology(args, num_phones):
    from .topology import make_topology

    return make_topology(args.states_per_phone, not args.no_self_loop, num_phones)


def _cmd_build_den(args):
    vocab = _load_vocab(args.vocab)
    model = ngram.parse_lm(_read_text(args.lm), vocab)
    topo = _topology(args, len(vocab))
    den = compiler.build_denominator(ngram.lm_to_fsa(model), topo)
    _write_atomic(args.out, graph.serialize(den))
    print(
        f"wrote {args.out}: {den.num_states} states, {len(den.arcs)} arcs, "
        f"{topo.num_pdfs} pdfs"
    )
    return 0


def _cmd_build_num(args):
    vocab = _load_vocab(args.vocab)
    lexicon = phones.load_lexicon(_read_text(args.lexicon), vocab)
    words = _read_text(args.transcript).split()
    if not words:
        raise _DataError(f"{args.transcript}: empty transcript")
    topo = _topology(args, len(vocab))
    alternatives = phones.transcript_to_phone_alternatives(words, lexicon)
    num = compiler.build_numerator(alternatives, topo)
    _write_atomic(args.out, graph.serialize(num))
    print(f"wrote {args.out}: {num.num_states} states, {len(num.arcs)} arcs")
    return 0


def _cmd_build_decode(args):
    vocab = _load_vocab(args.vocab)
    model = ngram.parse_lm(_read_text(args.lm), vocab)
    topo = _topology(args, len(vocab))
    dg = compiler.build_decode_graph(ngram.lm_to_fsa(model), topo)
    _write_atomic(args.out, graph.serialize(dg))
    print(
        f"wrote {args.out}: {dg.graph.num_states} states, {len(dg.graph.arcs)} arcs, "
        f"{len(dg.readout)} readouts"
    )
    return 0


def _cmd_loss(args):
    from .loss import lfmmi_loss

    num = _load_graph(args.num)
    den = _load_graph(args.den)
    if isinstance(num, graph.DecodeGraph):
        num = num.graph
    if isinstance(den, graph.DecodeGraph):
        den = den.graph
    e = _load_emat(args.emat)
    res = lfmmi_loss(num, den, e)
    print(f"{res.loss!r} {res.num_logprob!r} {res.den_logprob!r}")
    if args.grad_out:
        buf = Path(args.grad_out)
        buf.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=buf.parent, prefix=f".{buf.name}.")
        os.close(fd)
        emissions.write_emat(tmp, res.grad)
        os.replace(tmp, buf)
    return 0


def _cmd_generate_task(args):
    spec = synth.parse_task_config(_read_text(args.config))
    if args.seed is not None:
        spec.seed = args.seed
    out = Path(args.out)
    if out.exists():
        raise _DataError(f"{out}: output directory already exists")
    task = synth.generate_task(spec)
    # populate a staging directory, then rename into place
    staging = out.parent / f".{out.name}.tmp-{os.getpid()}"
    try:
        synth.write_task(task, staging)
        os.replace(staging, out)
    except BaseException:
        if staging.exists():
            import shutil

            shutil.rmtree(staging, ignore_errors=True)
        raise
    n_utts = sum(
        len(utts) for lang in task.languages.values() for utts in lang.splits.values()
    )
    print(f"wrote {out}: {len(task.languages)} languages, {n_utts} utterances")
    return 0


def _train_setup(args):
    task = synth.load_task(args.task)
    config, orders, alphas = training.parse_train_config(_read_text(args.config))
    if args.seed is not None:
        config.seed = args.seed
    if getattr(args, "scenario", None):
        config.scenario = args.scenario
    return task, config, orders, alphas


def _save_model(model, path):
    buf = Path(path)
    buf.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=buf.parent, prefix=f".{buf.name}.", suffix=".npz")
    os.close(fd)
    model.save(tmp)
    os.replace(tmp, buf)


def _cmd_pretrain(args):
    task, config, _, _ = _train_setup(args)
    model, history = training.pretrain_multilingual(task, config)
    _save_model(model, args.out)
    if args.metrics:
        rows = [
            training.MetricRow(i + 1, "pretrain", "loss", v)
            for i, v in enumerate(history)
        ]
        _write_atomic(args.metrics, training.metrics_lines(rows))
    final = history[-1] if history else float("nan")
    print(f"wrote {args.out}: {config.steps} steps, final batch loss {final:.4f}")
    return 0


def _cmd_finetune(args):
    task, config, _, _ = _train_setup(args)
    pretrained = AcousticModel.load(args.model) if args.model else None
    remap = None
    if args.remap:
        attested = set()
        for lang in task.train_languages():
            attested |= set(lang.phones)
        remap = phones.load_remap(_read_text(args.remap), task.inventory, attested)
    model, rows = training.train_scenario(pretrained, task, config, remap=remap)
    if args.out:
        _save_model(model, args.out)
    _write_atomic(args.metrics, training.metrics_lines(rows))
    pers = [r.value for r in rows if r.metric == "per"]
    print(f"{config.scenario}: per {pers[0]:.4f} -> {pers[-1]:.4f}")
    return 0


def _cmd_sweep(args):
    task, config, orders, alphas = _train_setup(args)
    if not orders or not alphas:
        raise _DataError(f"{args.config}: sweep needs [sweep] orders and alphas")
    pretrained = AcousticModel.load(args.model) if args.model else None
    rows = training.sweep_denominator(pretrained, task, config, orders, alphas)
    _write_atomic(args.metrics, training.metrics_lines(rows))
    print(f"wrote {args.metrics}: {len(rows)} cells")
    return 0


def _cmd_decode(args):
    dg = _load_graph(args.graph)
    if not isinstance(dg, graph.DecodeGraph):
        raise _DataError(f"{args.graph}: graph has no readout annotations")
    vocab = _load_vocab(args.vocab) if args.vocab else None

    def to_line(hyp):
        if vocab is None:
            return " ".join(str(p) for p in hyp)
        return " ".join(vocab.symbol_of(p) for p in hyp)

    target = Path(args.emat)
    if target.is_dir():
        paths = sorted(target.glob("*.emat"))
        with concurrent.futures.ThreadPoolExecutor(max_workers=max(args.jobs, 1)) as ex:
            hyps = list(ex.map(lambda p: decoding.viterbi(dg, emissions.read_emat(p)), paths))
        lines = [f"{p.stem}\t{to_line(h)}" for p, h in zip(paths, hyps)]
        out = "\n".join(lines) + "\n" if lines else ""
        if args.out:
            _write_atomic(args.out, out)
        else:
            sys.stdout.write(out)
    else:
        hyp = decoding.viterbi(dg, _load_emat(args.emat))
        print(to_line(hyp))
    return 0


def _read_utt_tsv(path):
    out = {}
    order = []
    for lineno, row in enumerate(_read_text(path).splitlines(), start=1):
        if not row.strip():
            continue
        if "\t" not in row:
            raise _DataError(f"{path}:{lineno}: expected utt-id<TAB>symbols")
        utt_id, text = row.split("\t", 1)
        out[utt_id] = text.split()
        order.append(utt_id)
    return out, order


def _cmd_score(args):
    refs, order = _read_utt_tsv(args.refs)
    hyps, _ = _read_utt_tsv(args.hyps)
    missing = [u for u in order if u not in hyps]
    if missing:
        raise _DataError(f"{args.hyps}: missing hypotheses for {missing[:5]}")
    ref_list = [refs[u] for u in order]
    hyp_list = [hyps[u] for u in order]
    score = decoding.score_corpus(ref_list, hyp_list)
    report = decoding.format_score_report(order, score)
    if args.out:
        _write_atomic(args.out, report)
    else:
        sys.stdout.write(report)
    return 0


# --- argument wiring ------------------------------------------------------------------


def _add_topology_flags(p):
    p.add_argument("--states-per-phone", type=int, default=1)
    p.add_argument("--no-self-loop", action="store_true")


def build_parser() -> _Parser:
    parser = _Parser(prog="latticefree", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate-lm", help="estimate a phone n-gram LM from a weighted corpus mixture")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--manifest", required=True, help="lines of path<TAB>weight")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_estimate_lm)

    p = sub.add_parser("lm-to-fsa", help="convert an LM to a phone acceptor")
    p.add_argument("--lm", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_lm_to_fsa)

    p = sub.add_parser("build-den", help="compile a denominator graph from an LM")
    p.add_argument("--lm", required=True)
    p.add_argument("--vocab", required=True)
    _add_topology_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_den)

    p = sub.add_parser("build-num", help="compile a numerator graph from a transcript")
    p.add_argument("--transcript", required=True, help="file of whitespace-separated words")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--vocab", required=True)
    _add_topology_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_num)

    p = sub.add_parser("build-decode", help="compile a decode graph (with phone readout) from an LM")
    p.add_argument("--lm", required=True)
    p.add_argument("--vocab", required=True)
    _add_topology_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_decode)

    p = sub.add_parser("loss", help="objective value and gradient for one utterance")
    p.add_argument("--num", required=True)
    p.add_argument("--den", required=True)
    p.add_argument("--emat", required=True)
    p.add_argument("--grad-out")
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("generate-task", help="generate a synthetic multilingual task")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_generate_task)

    p = sub.add_parser("pretrain", help="multilingual pretraining on the task's training languages")
    p.add_argument("--task", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("finetune", help="few-shot fine-tuning on the target language")
    p.add_argument("--task", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--model", help="pretrained model (.npz); omit for scratch-mono")
    p.add_argument("--scenario", choices=training.SCENARIOS)
    p.add_argument("--remap", help="missing<TAB>replacement phone map file")
    p.add_argument("--out")
    p.add_argument("--metrics", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("sweep", help="n-gram order x unpaired-text-weight grid")
    p.add_argument("--task", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--model", help="pretrained model (.npz)")
    p.add_argument("--metrics", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("decode", help="Viterbi phone decoding")
    p.add_argument("--graph", required=True, help="decode graph with readout lines")
    p.add_argument("--emat", required=True, help="emission file, or a directory of them")
    p.add_argument("--vocab", help="print symbols instead of phone ids")
    p.add_argument("--out", help="write utt<TAB>hyp lines here instead of stdout")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("score", help="PER scoring of hypothesis vs reference phones")
    p.add_argument("--refs", required=True, help="utt-id<TAB>phones")
    p.add_argument("--hyps", required=True, help="utt-id<TAB>phones")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_score)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (_DataError, LatticeFreeError) as exc:
        print(f"latticefree {args.command}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"latticefree {args.command}: cannot read {exc.filename}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
