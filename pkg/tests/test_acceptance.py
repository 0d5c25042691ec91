"""Acceptance suite: exact property checks plus the synthetic trend studies.

Criteria 1-4 are oracle-equivalence checks with hard tolerances and runtime
budgets. Criteria 5-7 reproduce the qualitative few-shot findings on the
reference synthetic task (three training seeds, directional claims).
Criterion 8 checks byte-level determinism of the experiment CLI.

Run with ``pytest -s tests/test_acceptance.py`` to see one line per
criterion. The trend studies train dozens of models; the whole module takes
roughly 15 minutes on one machine.
"""

import time
from dataclasses import replace
from fractions import Fraction as F
from math import comb
from pathlib import Path

import numpy as np
import pytest

from latticefree import cli
from latticefree.compiler import build_denominator, build_numerator
from latticefree.fb import graph_forward_backward
from latticefree.loss import lfmmi_loss
from latticefree.ngram import (
    BOS,
    EOS,
    WeightedCorpus,
    estimate_ngram,
    lm_to_fsa,
    sequence_logprob,
)
from latticefree.ngram import _accumulate_counts
from latticefree.phones import load_inventory
from latticefree.semiring import LOG_ZERO
from latticefree.synth import generate_task, parse_task_config
from latticefree.topology import make_topology
from latticefree.training import (
    parse_train_config,
    pretrain_multilingual,
    sweep_denominator,
    train_scenario,
)

from oracles import (
    brute_forward,
    enumerate_frame_paths,
    finite_difference_grad,
    fsa_sequence_score,
    random_fb_graph,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
SEEDS = (0, 1, 2)


def report(criterion, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {criterion} [{name}]: {status} {detail}")
    assert ok, f"criterion {criterion} ({name}) failed: {detail}"


# --- criterion 1: forward oracle equivalence -----------------------------------


def test_criterion_1_forward_oracle():
    t0 = time.time()
    rng = np.random.default_rng(101)
    checked = 0
    worst = 0.0
    while checked < 50:
        g = random_fb_graph(rng, max_states=6, max_arcs=12, num_pdfs=4)
        T = int(rng.integers(1, 7))
        e = rng.normal(0.0, 1.0, size=(T, 4))
        want, _ = brute_forward(g, e)
        got, _ = graph_forward_backward(g, e)
        if want == LOG_ZERO:
            assert got == LOG_ZERO
            continue
        checked += 1
        worst = max(worst, abs(got - want))
    elapsed = time.time() - t0
    report(
        1, "forward oracle", worst < 1e-9 and elapsed < 10,
        f"{checked} graphs, max |diff| {worst:.2e}, {elapsed:.1f}s",
    )


# --- criterion 2: gradient correctness ------------------------------------------


def test_criterion_2_gradient_correctness():
    t0 = time.time()
    rng = np.random.default_rng(202)
    inv = load_inventory("a\nb\nc")
    worst_rel = 0.0
    worst_rowsum = 0.0
    for _ in range(20):
        order = int(rng.integers(0, 3))
        k = int(rng.integers(1, 3))
        m = int(rng.integers(1, 4))
        topo = make_topology(k, True, 3)
        transcript = [[(int(rng.integers(1, 4)),)] for _ in range(m)]
        num = build_numerator(transcript, topo)
        utts = [[int(p) for p in rng.integers(1, 4, size=int(rng.integers(1, 5)))]
                for _ in range(3)]
        model = estimate_ngram(
            [WeightedCorpus(utts, 1.0)] if order else [], order, inv
        )
        den = build_denominator(lm_to_fsa(model), topo)
        T = int(rng.integers(m * k, m * k + 4))
        e = rng.normal(0.0, 1.0, size=(T, topo.num_pdfs))
        res = lfmmi_loss(num, den, e)
        worst_rowsum = max(worst_rowsum, np.abs(res.grad.sum(axis=1)).max())
        fd = finite_difference_grad(lambda x: lfmmi_loss(num, den, x).loss, e, step=1e-4)
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(res.grad)), 1e-6)
        worst_rel = max(worst_rel, (np.abs(fd - res.grad) / denom).max())
    elapsed = time.time() - t0
    report(
        2, "gradient correctness",
        worst_rel <= 1e-3 and worst_rowsum <= 1e-8 and elapsed < 30,
        f"max rel err {worst_rel:.2e}, max row sum {worst_rowsum:.2e}, {elapsed:.1f}s",
    )


# --- criterion 3: LM correctness -------------------------------------------------


def test_criterion_3_lm_correctness():
    t0 = time.time()
    inv = load_inventory("a\nb\nc")
    A, B, C = 1, 2, 3
    corpora = [WeightedCorpus([[A, A, B], [B, A]], 2.0), WeightedCorpus([[A, C]], 0.5)]

    counts, _ = _accumulate_counts(corpora, 2)
    counts_ok = (
        counts[1][()] == {A: 6.5, B: 4.0, EOS: 4.5, C: 0.5}
        and counts[2][(BOS,)] == {A: 2.5, B: 2.0}
        and counts[2][(A,)] == {A: 2.0, B: 2.0, EOS: 2.0, C: 0.5}
        and counts[2][(B,)] == {EOS: 2.0, A: 2.0}
        and counts[2][(C,)] == {EOS: 0.5}
    )

    model1 = estimate_ngram(corpora, 1, inv)
    expected1 = {A: F(5, 13), B: F(10, 39), C: F(1, 13), EOS: F(11, 39)}
    wb_err = max(abs(model1.prob((), ev) - float(fr)) for ev, fr in expected1.items())

    # alpha = 0 corpora are provably inert
    base = estimate_ngram(corpora, 2, inv)
    padded = estimate_ngram(corpora + [WeightedCorpus([[C, C]], 0.0)], 2, inv)
    alpha_err = max(
        abs(base.prob(ctx, ev) - padded.prob(ctx, ev))
        for ctx in base.states()
        for ev in (A, B, C, EOS)
    )

    rng = np.random.default_rng(303)
    fsa_err = 0.0
    for order in (1, 2, 3):
        model = estimate_ngram(corpora, order, inv)
        fsa = lm_to_fsa(model)
        for _ in range(100):
            seq = [int(p) for p in rng.integers(1, 4, size=int(rng.integers(0, 7)))]
            fsa_err = max(
                fsa_err, abs(fsa_sequence_score(fsa, seq) - sequence_logprob(model, seq))
            )
    elapsed = time.time() - t0
    report(
        3, "LM correctness",
        counts_ok and wb_err < 1e-12 and alpha_err < 1e-12 and fsa_err < 1e-9
        and elapsed < 5,
        f"counts {'ok' if counts_ok else 'BAD'}, WB err {wb_err:.2e}, "
        f"alpha0 err {alpha_err:.2e}, fsa err {fsa_err:.2e}, {elapsed:.1f}s",
    )


# --- criterion 4: numerator combinatorics ----------------------------------------


def test_criterion_4_numerator_combinatorics():
    t0 = time.time()
    topo = make_topology(1, True, 4)
    ok = True
    for m in range(1, 5):
        transcript = [[(1 + (i % 4),)] for i in range(m)]
        g = build_numerator(transcript, topo)
        for T in range(1, 9):
            count = len(enumerate_frame_paths(g, T))
            want = comb(T - 1, m - 1) if T >= m else 0
            ok = ok and count == want
    elapsed = time.time() - t0
    report(4, "numerator combinatorics", ok and elapsed < 5, f"{elapsed:.1f}s")


# --- shared fixtures for the trend studies ----------------------------------------


@pytest.fixture(scope="module")
def reference_task():
    spec = parse_task_config((CONFIG_DIR / "reference_task.cfg").read_text())
    return generate_task(spec)


@pytest.fixture(scope="module")
def train_configs():
    pre_cfg, _, _ = parse_train_config((CONFIG_DIR / "reference_pretrain.cfg").read_text())
    ft_cfg, orders, alphas = parse_train_config((CONFIG_DIR / "reference_train.cfg").read_text())
    return pre_cfg, ft_cfg, orders, alphas


@pytest.fixture(scope="module")
def pretrained_models(reference_task, train_configs):
    pre_cfg, _, _, _ = train_configs
    return {
        seed: pretrain_multilingual(reference_task, replace(pre_cfg, seed=seed))[0]
        for seed in SEEDS
    }


@pytest.fixture(scope="module")
def scenario_results(reference_task, train_configs, pretrained_models):
    """Final PER per (train count, scenario, seed), plus frozen-run details."""
    _, ft_cfg, _, _ = train_configs
    results = {}
    frozen_runs = []
    t0 = time.time()
    for seed in SEEDS:
        pretrained = pretrained_models[seed]
        for count, scenario in (
            (20, "scratch-mono"),
            (20, "transfer-mono"),
            (20, "transfer-multi"),
            (20, "frozen-transfer-multi"),
            (500, "transfer-mono"),
            (500, "transfer-multi"),
        ):
            cfg = replace(ft_cfg, scenario=scenario, train_count=count, seed=seed)
            model, rows = train_scenario(
                pretrained if scenario != "scratch-mono" else None,
                reference_task,
                cfg,
            )
            pers = [r.value for r in rows if r.metric == "per"]
            results[(count, scenario, seed)] = pers[-1]
            if scenario == "frozen-transfer-multi":
                frozen_runs.append(
                    {
                        "seed": seed,
                        "zero_shot": pers[0],
                        "final": pers[-1],
                        "encoder_unchanged": model.encoder_checksum()
                        == pretrained.encoder_checksum(),
                    }
                )
    results["elapsed"] = time.time() - t0
    results["frozen_runs"] = frozen_runs
    return results


def _mean(results, count, scenario):
    return float(np.mean([results[(count, scenario, s)] for s in SEEDS]))


# --- criterion 5: few-shot transfer trend -----------------------------------------


def test_criterion_5_transfer_trend(scenario_results):
    scratch = _mean(scenario_results, 20, "scratch-mono")
    mono = _mean(scenario_results, 20, "transfer-mono")
    multi = _mean(scenario_results, 20, "transfer-multi")
    mono500 = _mean(scenario_results, 500, "transfer-mono")
    multi500 = _mean(scenario_results, 500, "transfer-multi")
    gap20 = multi - mono            # negative: multi ahead
    gap500 = multi500 - mono500
    shrink_or_reverse = (abs(gap500) < abs(gap20)) or (gap500 > 0)
    ok = (multi < mono) and (mono < scratch) and shrink_or_reverse
    report(
        5, "few-shot transfer trend", ok,
        f"PER@20 scratch {scratch:.3f} > mono {mono:.3f} > multi {multi:.3f}; "
        f"gap@20 {gap20:+.3f} -> gap@500 {gap500:+.3f}; "
        f"{scenario_results['elapsed']:.0f}s",
    )
    assert scenario_results["elapsed"] < 600


# --- criterion 6: denominator expansion sweep -------------------------------------


def test_criterion_6_denominator_sweep(reference_task, train_configs, pretrained_models):
    _, ft_cfg, orders, alphas = train_configs
    t0 = time.time()
    tables = []
    for seed in SEEDS:
        cfg = replace(ft_cfg, scenario="transfer-multi", train_count=20, seed=seed)
        rows = sweep_denominator(pretrained_models[seed], reference_task, cfg, orders, alphas)
        table = {}
        for r in rows:
            assert r.metric == "per", f"sweep cell failed: {r.scenario}"
            n_tag, a_tag = r.scenario.split("-")[-2:]
            table[(int(n_tag[1:]), float(a_tag[1:]))] = r.value
        tables.append(table)
    elapsed = time.time() - t0

    # (a) at n=4 every alpha > 0 cell is at least as good as alpha = 0,
    #     in a majority of seeds per cell
    a_ok = all(
        sum(t[(4, a)] <= t[(4, 0.0)] for t in tables) >= 2
        for a in alphas if a > 0
    )
    # (b) the best unexpanded cell sits at order 1 or 2 in a majority of seeds
    best_unexpanded = [min(orders, key=lambda n: t[(n, 0.0)]) for t in tables]
    b_ok = sum(1 <= n <= 2 for n in best_unexpanded) >= 2
    # (c) the uniform denominator is strictly worse than the best n >= 1 cell
    c_ok = (
        sum(
            t[(0, 0.0)] > min(t[(n, a)] for n in orders if n >= 1 for a in alphas)
            for t in tables
        )
        >= 2
    )
    report(
        6, "denominator expansion sweep", a_ok and b_ok and c_ok,
        f"(a) alpha>0 helps at n=4: {a_ok}; (b) best unexpanded orders {best_unexpanded}; "
        f"(c) uniform worst: {c_ok}; {elapsed:.0f}s",
    )
    assert elapsed < 1200


# --- criterion 7: frozen-encoder contract -----------------------------------------


def test_criterion_7_frozen_encoder(scenario_results):
    runs = scenario_results["frozen_runs"]
    checksums_ok = all(r["encoder_unchanged"] for r in runs)
    improves = any(r["final"] < r["zero_shot"] for r in runs)
    detail = ", ".join(
        f"seed {r['seed']}: {r['zero_shot']:.3f}->{r['final']:.3f}" for r in runs
    )
    report(7, "frozen-encoder contract", checksums_ok and improves, detail)


# --- criterion 8: CLI determinism --------------------------------------------------


SMALL_TASK_CFG = """
[task]
seed = 9
feature_dim = 6
phone_spread = 0.6
noise = 0.8
accent = 0.3
warp_strength = 1.0
train_pool = 24
dev_size = 6
eval_size = 8
unpaired_size = 12

[inventory]
phones = p t k a e i

[language L1]
role = train
phones = p t a e
words = 8

[language L2]
role = train
phones = t k e i
words = 8

[language TGT]
role = target
phones = p t a i
words = 8
"""

SMALL_TRAIN_CFG = """
[train]
scenario = transfer-multi
steps = 20
batch_size = 4
den_order = 1
decode_order = 1
train_count = 10
eval_every = 5
seed = 1

[model]
hidden = 12

[sweep]
orders = 0 1
alphas = 0 0.2
"""


def test_criterion_8_cli_determinism(tmp_path):
    t0 = time.time()
    (tmp_path / "task.cfg").write_text(SMALL_TASK_CFG)
    (tmp_path / "train.cfg").write_text(SMALL_TRAIN_CFG)
    run = lambda *argv: cli.run([str(a) for a in argv])
    assert run("generate-task", "--config", tmp_path / "task.cfg", "--out", tmp_path / "task") == 0
    assert run(
        "pretrain", "--task", tmp_path / "task", "--config", tmp_path / "train.cfg",
        "--out", tmp_path / "pre.npz",
    ) == 0
    for i in (1, 2):
        assert run(
            "finetune", "--task", tmp_path / "task", "--config", tmp_path / "train.cfg",
            "--model", tmp_path / "pre.npz", "--metrics", tmp_path / f"ft{i}.tsv",
        ) == 0
        assert run(
            "sweep", "--task", tmp_path / "task", "--config", tmp_path / "train.cfg",
            "--model", tmp_path / "pre.npz", "--metrics", tmp_path / f"sw{i}.tsv",
        ) == 0
    ft_same = (tmp_path / "ft1.tsv").read_bytes() == (tmp_path / "ft2.tsv").read_bytes()
    sw_same = (tmp_path / "sw1.tsv").read_bytes() == (tmp_path / "sw2.tsv").read_bytes()
    report(
        8, "CLI determinism", ft_same and sw_same,
        f"finetune identical: {ft_same}, sweep identical: {sw_same}, "
        f"{time.time() - t0:.0f}s",
    )
