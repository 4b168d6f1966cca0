import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wuglab.stats import (
    TestResult,
    binomial_test,
    bonferroni,
    evaluate_hypotheses,
    jonckheere_terpstra,
    kendall_tau_b,
    kl_divergence,
    mann_whitney_u,
    paired_t,
    tost_equivalence,
    _jt_statistic,
    _u_statistic,
)


def _brute_force_mwu_p(a, b):
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


def test_mwu_separated_groups_oracle():
    res = mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert res.statistic == 0.0
    assert res.p_value == pytest.approx(0.1)


def test_mwu_identical_groups():
    assert mann_whitney_u([1, 2, 3], [1, 2, 3]).p_value == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(
    a=st.lists(st.integers(0, 5), min_size=2, max_size=6),
    b=st.lists(st.integers(0, 5), min_size=2, max_size=6),
)
def test_mwu_matches_enumeration(a, b):
    assert mann_whitney_u(a, b).p_value == pytest.approx(_brute_force_mwu_p(a, b))


def test_mwu_normal_approximation_close_to_exact():
    a, b = [1, 3, 5, 7, 9], [2, 4, 6, 8, 10]
    exact = mann_whitney_u(a, b, exact=True).p_value
    approx = mann_whitney_u(a, b, exact=False).p_value
    assert abs(exact - approx) < 0.15


def _brute_force_jt_p(groups):
    pooled = [v for g in groups for v in g]
    sizes = [len(g) for g in groups]
    jt_obs = _jt_statistic(groups)
    n_ge = total = 0
    for perm in itertools.permutations(pooled):
        arr, off = [], 0
        for s in sizes:
            arr.append(list(perm[off : off + s]))
            off += s
        n_ge += _jt_statistic(arr) >= jt_obs - 1e-12
        total += 1
    return n_ge / total


def test_jt_perfectly_ordered_singletons():
    res = jonckheere_terpstra([[1], [2], [3], [4]])
    assert res.p_value == pytest.approx(1 / 24)
    assert res.effect_size == pytest.approx(1.0)


def test_jt_constant_groups():
    res = jonckheere_terpstra([[5, 5], [5, 5], [5, 5]])
    assert res.p_value >= 0.5
    assert res.effect_size == 0.0


@settings(max_examples=15, deadline=None)
@given(
    groups=st.lists(
        st.lists(st.integers(0, 4), min_size=1, max_size=3), min_size=3, max_size=3
    ).filter(lambda gs: sum(map(len, gs)) <= 8)
)
def test_jt_matches_full_permutation(groups):
    res = jonckheere_terpstra(groups)
    assert res.p_value == pytest.approx(_brute_force_jt_p(groups))


def test_jt_decreasing_direction():
    inc = jonckheere_terpstra([[1], [2], [3]], direction="increasing")
    dec = jonckheere_terpstra([[3], [2], [1]], direction="decreasing")
    assert inc.p_value == pytest.approx(dec.p_value)


def test_jt_needs_three_groups():
    with pytest.raises(ValueError):
        jonckheere_terpstra([[1], [2]])


def test_kendall_tau_b_range():
    # Singleton groups with a strict trend: no ties, tau-b is exactly 1.
    assert kendall_tau_b([[1], [2], [3]]) == pytest.approx(1.0)
    # Ties in the group index shrink the denominator below 1 even for a
    # perfectly ordered sequence: 12 concordant pairs / sqrt(12 * 15).
    assert kendall_tau_b([[1, 2], [3, 4], [5, 6]]) == pytest.approx(
        12 / math.sqrt(12 * 15)
    )
    assert -1 <= kendall_tau_b([[3, 1], [2, 2], [1, 5]]) <= 1


def test_tost_equivalent_near_center():
    res = tost_equivalence([0.50, 0.51, 0.49, 0.505, 0.495], bound=0.10)
    assert res.equivalent
    assert res.ci90[0] <= 0.5 <= res.ci90[1]


def test_tost_not_equivalent_off_center():
    res = tost_equivalence([0.64, 0.65, 0.66, 0.65, 0.65], bound=0.10)
    assert not res.equivalent


def test_tost_monotone_in_bound():
    vals = [0.52, 0.53, 0.51, 0.54, 0.52]
    narrow = tost_equivalence(vals, bound=0.05)
    wide = tost_equivalence(vals, bound=0.10)
    if narrow.equivalent:
        assert wide.equivalent


def test_tost_zero_variance_flagged():
    res = tost_equivalence([0.5, 0.5, 0.5], bound=0.10)
    assert res.degenerate and res.equivalent


def test_binomial_trivial_and_derived():
    assert binomial_test(5, 10).p_value == pytest.approx(1.0)
    assert binomial_test(0, 10).p_value == pytest.approx(2 / 1024, abs=1e-12)


def test_binomial_matches_direct_mass_sum():
    from scipy.stats import binom

    n, k, p0 = 80, 20, 0.5
    pmf = binom.pmf(np.arange(n + 1), n, p0)
    expected = pmf[pmf <= pmf[k] * (1 + 1e-9)].sum()
    assert binomial_test(k, n, p0).p_value == pytest.approx(expected, abs=1e-12)


def test_paired_t_identical_and_hand_case():
    res = paired_t([1, 2, 3], [1, 2, 3])
    assert res.p_value == 1.0 and "zero-variance differences" in res.notes
    a = np.array([2.0, 2.0, 2.0, 2.0, 2.0, 2.1])
    b = np.zeros(6)
    d = a - b
    t_hand = d.mean() / (d.std(ddof=1) / math.sqrt(6))
    assert paired_t(a, b).statistic == pytest.approx(t_hand)


def test_bonferroni_threshold():
    out = bonferroni([0.02, 0.2], alpha=0.05)
    assert out[0]["threshold"] == 0.025
    assert out[0]["significant"] and not out[1]["significant"]
    assert out[1]["p_adjusted"] == pytest.approx(0.4)


def test_kl_closed_forms():
    val, floored = kl_divergence([0.5, 0.5], [0.5, 0.5])
    assert val == 0.0 and not floored
    val, _ = kl_divergence([0.9, 0.1], [0.5, 0.5])
    assert val == pytest.approx(0.9 * math.log(1.8) + 0.1 * math.log(0.2), abs=1e-12)
    val, floored = kl_divergence([1.0, 0.0], [0.0, 1.0])
    assert floored


def test_p_values_validated():
    with pytest.raises(ValueError):
        TestResult("x", 0.0, 1.5)


def _cell(condition, item_type, seed, accuracy, n=100):
    return {
        "condition": condition, "size_tag": "tiny", "seed": seed,
        "item_type": item_type, "n": n, "accuracy": accuracy,
        "mean_delta_logp": 0.0, "mean_rank": 1.0,
    }


def test_evaluate_hypotheses_null_pattern():
    cells = {}
    i = 0
    for seed, reg, scr in [(42, 0.51, 0.52), (123, 0.49, 0.50), (7, 0.52, 0.48)]:
        cells[str(i := i + 1)] = _cell("regular", "second_order", seed, reg, 200)
        cells[str(i := i + 1)] = _cell("scrambled", "second_order", seed, scr, 200)
        cells[str(i := i + 1)] = _cell("regular", "frame_variant", seed, reg + 0.01)
    report = evaluate_hypotheses(cells, kl_nats=0.19)
    assert report["H1"]["verdict"] == "not supported"
    assert report["H2"]["verdict"] == "supported"  # vacuously, both at chance
    assert report["H_Bayes"]["verdict"] == "not supported"
    assert report["H_label"]["verdict"] == "insufficient data"


def test_evaluate_hypotheses_swap_signature():
    cells = {
        "a": _cell("feature_swap", "swap_frame_cued", 42, 0.99, 80),
        "b": _cell("feature_swap", "swap_noun_only", 42, 0.20, 80),
    }
    report = evaluate_hypotheses(cells)
    assert report["H_swap"]["verdict"] == "supported"
    assert report["H_swap"]["criterion_met"]
