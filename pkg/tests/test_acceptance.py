"""Desk-scale acceptance gates.

Each test asserts one headline criterion of the reproduction at its stated
tolerance and prints a single PASS/FAIL line (visible with `pytest -s` or on
failure). The model-dependent gates read artifacts from the pipeline data
root (WUGLAB_DATA_DIR, default .wuglab_cache); missing stages are built on
demand, so a cold run trains six tiny models (~12 minutes each on one CPU
core). The oracle gates (quadrature, statistics, gradients, corpora) need no
trained models.
"""

import itertools
import json
import math
import os
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gammaln

from wuglab import bpe as bpelib
from wuglab import hbm as hbmlib
from wuglab.corpusgen import (
    CorpusCondition,
    build_spec,
    checksum,
    generate_corpus,
    load_corpus,
    manipulation_check,
)
from wuglab.evaluate import read_results_csv
from wuglab.model import gradient_check
from wuglab.pipeline import RunSpec, RunRegistry, desk_matrix, run_matrix
from wuglab.stats import (
    _jt_statistic,
    _u_statistic,
    binomial_test,
    jonckheere_terpstra,
    kl_divergence,
    mann_whitney_u,
    tost_equivalence,
)

REGULAR_RUNS = [s for s in desk_matrix() if s.condition == "regular"]
SWAP_RUNS = [s for s in desk_matrix() if s.condition == "feature_swap"]


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="session")
def desk_root():
    root = Path(os.environ.get("WUGLAB_DATA_DIR", Path(__file__).parent.parent / ".wuglab_cache"))
    run_matrix(desk_matrix(), root)  # no-op for stages already recorded
    registry = RunRegistry(root)
    missing = [
        registry.key(spec, stage)
        for spec in desk_matrix()
        for stage in ("eval", "hbm", "probe")
        if registry.records.get(registry.key(spec, stage), {}).get("status") != "ok"
    ]
    if missing:
        pytest.fail(f"desk matrix incomplete: {missing}")
    return root


def _cell(root: Path, spec: RunSpec, item_type: str) -> dict:
    agg = json.loads((spec.run_dir(root) / "eval" / "aggregate.json").read_text())
    return agg[f"{spec.condition_label}|{spec.size_tag}|{spec.seed}|{item_type}"]


# ---------------------------------------------------------------------------
# Model-dependent gates


def test_fo_ceiling(desk_root):
    worst = min(
        round(_cell(desk_root, s, "first_order")["accuracy"] * 80) for s in REGULAR_RUNS
    )
    _verdict("FO ceiling", worst >= 79, f"worst Regular FO = {worst}/80 (need >= 79)")


def test_so_null_and_equivalence(desk_root):
    accs = [_cell(desk_root, s, "second_order")["accuracy"] for s in REGULAR_RUNS]
    in_band = all(0.40 <= a <= 0.60 for a in accs)
    # Two seeds cannot power an equivalence test alone; pool per-kind
    # accuracies (2 runs x 8 novel kinds) for the TOST.
    per_kind = []
    for s in REGULAR_RUNS:
        rows = read_results_csv(s.run_dir(desk_root) / "eval" / "results.csv")
        by_kind = defaultdict(list)
        for r in rows:
            if r.item_type == "second_order":
                by_kind[r.kind_id].append(r.correct)
        per_kind.extend(sum(v) / len(v) for v in by_kind.values())
    tost = tost_equivalence(per_kind, bound=0.10)
    _verdict(
        "SO null",
        in_band and tost.equivalent,
        f"per-run SO = {[f'{a:.3f}' for a in accs]} (band [0.40, 0.60]); "
        f"TOST equivalent to 0.5 +/- 0.10: {tost.equivalent} "
        f"(90% CI [{tost.ci90[0]:.3f}, {tost.ci90[1]:.3f}])",
    )


def test_probe_dissociation(desk_root):
    details, ok = [], True
    for s in REGULAR_RUNS:
        summ = json.loads((s.run_dir(desk_root) / "probe" / "probe_summary.json").read_text())
        acc, base, p = summ["best_accuracy"], summ["baseline_mean"], summ["permutation_p"]
        ok &= acc >= 0.95 and 0.05 <= base <= 0.20 and p < 0.01
        details.append(f"s{s.seed}: acc={acc:.3f} base={base:.3f} p={p:.4f}")
    _verdict("probe dissociation", ok, "; ".join(details))


def _swap_counts(desk_root, item_type):
    correct = n = 0
    for s in SWAP_RUNS:
        corpus = load_corpus(s.run_dir(desk_root) / "gen")
        domain_b = {k.kind_id for k in corpus.train_kinds() if k.domain == "B"}
        rows = read_results_csv(s.run_dir(desk_root) / "eval" / "results.csv")
        for r in rows:
            if r.item_type == item_type and r.kind_id in domain_b:
                correct += r.correct
                n += 1
    return correct, n


def test_feature_swap_signature(desk_root):
    cued_k, cued_n = _swap_counts(desk_root, "swap_frame_cued")
    noun_k, noun_n = _swap_counts(desk_root, "swap_noun_only")
    p_cued = binomial_test(cued_k, cued_n).p_value
    p_noun = binomial_test(noun_k, noun_n).p_value
    ok = (
        cued_k / cued_n >= 0.90
        and noun_k / noun_n <= 0.35
        and p_cued < 0.001
        and p_noun < 0.001
    )
    _verdict(
        "feature-swap signature",
        ok,
        f"Domain-B cued {cued_k}/{cued_n} (p={p_cued:.2e}), "
        f"noun-only {noun_k}/{noun_n} (p={p_noun:.2e})",
    )


def test_representational_collapse(desk_root):
    details, ok = [], True
    for s in REGULAR_RUNS:
        summ = json.loads((s.run_dir(desk_root) / "probe" / "probe_summary.json").read_text())
        wn = summ["cosine_before"]["within_novel"][-1]  # deepest layer
        wt = summ["cosine_before"]["within_trained"][-1]
        wn_after = summ["cosine_after"]["within_novel"][-1]
        ok &= wn >= 0.98 and wt <= 0.90 and wn_after <= 0.90
        details.append(
            f"s{s.seed}: within-novel={wn:.3f} within-trained={wt:.3f} after-swap={wn_after:.3f}"
        )
    _verdict("representational collapse", ok, "; ".join(details))


def test_greedy_so_specific_rate(desk_root):
    rates = []
    for s in REGULAR_RUNS:
        g = json.loads((s.run_dir(desk_root) / "eval" / "greedy.json").read_text())
        rates.append(g["second_order"]["correct_specific_rate"])
    _verdict(
        "greedy SO diagnostic",
        max(rates) < 0.05,
        f"SO correct-specific greedy rates {[f'{r:.3f}' for r in rates]} (need < 0.05)",
    )


# ---------------------------------------------------------------------------
# Ideal-observer gates (corpus-level; no trained models required)

ALPHA_ORDER = [
    CorpusCondition.REGULAR,
    CorpusCondition.WEAK_LABEL_25,
    CorpusCondition.FEATURE_SWAP,   # FeatureSwap and Noise form an unordered pair
    CorpusCondition.NOISE_INJECTION,
    CorpusCondition.SCRAMBLED,
    CorpusCondition.FREQUENCY_MATCHED,
]


def test_hbm_alpha_gradient():
    alphas = {
        c: hbmlib.fit_corpus(generate_corpus(build_spec(c, 42))).mean_alpha
        for c in ALPHA_ORDER
    }
    a = alphas
    middle = {
        a[CorpusCondition.FEATURE_SWAP],
        a[CorpusCondition.NOISE_INJECTION],
    }
    ok = (
        a[CorpusCondition.REGULAR] < a[CorpusCondition.WEAK_LABEL_25] < min(middle)
        and max(middle) < a[CorpusCondition.SCRAMBLED] < a[CorpusCondition.FREQUENCY_MATCHED]
        and a[CorpusCondition.REGULAR] <= 0.05
        and a[CorpusCondition.FREQUENCY_MATCHED] >= 0.5
    )
    _verdict(
        "HBM alpha gradient",
        ok,
        "; ".join(f"{c.value}={v:.4f}" for c, v in alphas.items()),
    )


def _quadrature_row_loglik(row, alpha, beta):
    row = np.asarray(row, dtype=float)
    coef = gammaln(row.sum() + 1) - gammaln(row + 1).sum()
    ab = alpha * np.asarray(beta, dtype=float)
    lognorm = gammaln(ab).sum() - gammaln(ab.sum())
    if len(row) == 2:
        val, _ = integrate.quad(
            lambda t: t ** (row[0] + ab[0] - 1) * (1 - t) ** (row[1] + ab[1] - 1),
            0.0, 1.0,
        )
    else:
        val, _ = integrate.dblquad(
            lambda t2, t1: (
                t1 ** (row[0] + ab[0] - 1)
                * t2 ** (row[1] + ab[1] - 1)
                * (1 - t1 - t2) ** (row[2] + ab[2] - 1)
            ),
            0.0, 1.0,
            0.0, lambda t1: 1.0 - t1,
        )
    return coef + math.log(val) - lognorm


def test_hbm_quadrature_oracle():
    worst = 0.0
    n_checked = 0
    for n_values in (2, 3):
        rows = [
            row
            for row in itertools.product(range(5), repeat=n_values)
            if 1 <= sum(row) <= 4
        ]
        betas = [np.ones(n_values) / n_values,
                 np.arange(1, n_values + 1, dtype=float) / sum(range(1, n_values + 1))]
        for row, alpha, beta in itertools.product(rows, (0.5, 1.0, 2.0), betas):
            got = hbmlib.marginal_likelihood(np.array([row]), alpha, beta)
            expected = _quadrature_row_loglik(row, alpha, beta)
            worst = max(worst, abs(got - expected))
            n_checked += 1
    _verdict(
        "HBM quadrature oracle",
        worst < 1e-3,
        f"max |log-lik error| = {worst:.2e} over {n_checked} instances (tol 1e-3)",
    )


# ---------------------------------------------------------------------------
# Statistics oracles


def _enum_mwu_p(a, b):
    pooled = list(a) + list(b)
    u_obs = _u_statistic(a, b)
    n_le = n_ge = total = 0
    for idx in itertools.combinations(range(len(pooled)), len(a)):
        sel = set(idx)
        ga = [pooled[i] for i in idx]
        gb = [pooled[i] for i in range(len(pooled)) if i not in sel]
        u = _u_statistic(ga, gb)
        n_le += u <= u_obs + 1e-12
        n_ge += u >= u_obs - 1e-12
        total += 1
    return min(1.0, 2 * min(n_le / total, n_ge / total))


def test_stats_oracles():
    rng = np.random.default_rng(4)
    worst_mwu = 0.0
    for _ in range(25):
        na, nb = rng.integers(2, 7), rng.integers(2, 7)
        a = list(rng.integers(0, 6, na))
        b = list(rng.integers(0, 6, nb))
        worst_mwu = max(worst_mwu, abs(mann_whitney_u(a, b).p_value - _enum_mwu_p(a, b)))

    worst_jt = 0.0
    for _ in range(8):
        sizes = rng.integers(1, 4, size=3)
        while sizes.sum() > 8:
            sizes = rng.integers(1, 4, size=3)
        groups = [list(rng.integers(0, 5, s)) for s in sizes]
        jt_obs = _jt_statistic(groups)
        pooled = [v for g in groups for v in g]
        n_ge = total = 0
        for perm in itertools.permutations(pooled):
            arr, off = [], 0
            for s in sizes:
                arr.append(list(perm[off:off + s]))
                off += s
            n_ge += _jt_statistic(arr) >= jt_obs - 1e-12
            total += 1
        worst_jt = max(worst_jt, abs(jonckheere_terpstra(groups).p_value - n_ge / total))

    kl_err = abs(
        kl_divergence([0.9, 0.1], [0.5, 0.5])[0]
        - (0.9 * math.log(1.8) + 0.1 * math.log(0.2))
    )
    binom_err = abs(binomial_test(0, 10).p_value - 2 / 1024)
    ok = worst_mwu < 1e-12 and worst_jt < 1e-12 and kl_err < 1e-12 and binom_err < 1e-12
    _verdict(
        "statistics oracles",
        ok,
        f"MWU err={worst_mwu:.1e}, JT err={worst_jt:.1e}, "
        f"KL err={kl_err:.1e}, binomial err={binom_err:.1e}",
    )


def test_gradient_check():
    err = gradient_check()
    _verdict("gradient check", err < 1e-3, f"max relative error = {err:.2e} (tol 1e-3)")


# ---------------------------------------------------------------------------
# Corpus gates


def test_corpus_checks():
    regular = generate_corpus(build_spec(CorpusCondition.REGULAR, 42))
    scrambled = generate_corpus(build_spec(CorpusCondition.SCRAMBLED, 42))
    reg_check = manipulation_check(regular)
    scr_check = manipulation_check(scrambled)
    shape_entropies = [
        slots.get("shape", 0.0)
        for kid, slots in reg_check.per_kind_normalized_entropy.items()
        if not regular.kind_by_id(kid).is_novel
    ]
    vocab_sizes = {
        c: len(generate_corpus(build_spec(c, 42)).vocab()) for c in CorpusCondition
    }
    ok = (
        max(shape_entropies) == 0.0
        and reg_check.mi_noun_shape_slot > scr_check.mi_noun_shape_slot
        and all(314 <= v <= 351 for v in vocab_sizes.values())
        and checksum(regular) == regular.md5
    )
    _verdict(
        "corpus checks",
        ok,
        f"max Regular shape entropy = {max(shape_entropies)}, "
        f"MI {reg_check.mi_noun_shape_slot:.3f} > {scr_check.mi_noun_shape_slot:.3f}, "
        f"vocab sizes {sorted(vocab_sizes.values())}, md5 regenerates",
    )
