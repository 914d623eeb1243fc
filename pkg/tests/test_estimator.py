import math

import numpy as np
import pytest
from scipy import stats

from gnncert import (
    DeltaBound,
    SmoothingConfig,
    VoteTable,
    VoteTally,
    CertificateResult,
    certified_radius,
    certify,
    clopper_pearson,
    estimate,
    estimate_all,
    report,
)
from gnncert.errors import InsufficientSamplesError

from conftest import random_graph
from test_gcn import random_model


def test_clopper_pearson_boundaries():
    assert clopper_pearson(0, 50, 0.01, "lower") == 0.0
    assert clopper_pearson(50, 50, 0.01, "upper") == 1.0


def test_clopper_pearson_all_successes_closed_form():
    # lower bound with every sample a success: alpha**(1/n)
    got = clopper_pearson(100, 100, 0.01, "lower")
    assert got == pytest.approx(0.01 ** (1 / 100), abs=1e-9)
    assert got == pytest.approx(0.9550, abs=5e-4)


def test_clopper_pearson_matches_beta_quantiles(rng):
    for _ in range(50):
        n = int(rng.integers(2, 400))
        c = int(rng.integers(0, n + 1))
        a = float(rng.uniform(0.001, 0.2))
        lo = clopper_pearson(c, n, a, "lower")
        hi = clopper_pearson(c, n, a, "upper")
        ref_lo = stats.beta.ppf(a, c, n - c + 1) if c > 0 else 0.0
        ref_hi = stats.beta.ppf(1 - a, c + 1, n - c) if c < n else 1.0
        assert lo == pytest.approx(float(ref_lo), abs=1e-8)
        assert hi == pytest.approx(float(ref_hi), abs=1e-8)
        assert lo <= c / n <= hi


def test_clopper_pearson_validation():
    with pytest.raises(ValueError):
        clopper_pearson(5, 4, 0.01, "lower")
    with pytest.raises(ValueError):
        clopper_pearson(1, 4, 0.0, "lower")
    with pytest.raises(ValueError):
        clopper_pearson(1, 4, 0.01, "sideways")


def test_clopper_pearson_coverage_quick(rng):
    # one-sided violation rate stays near the nominal level
    n, alpha_side, trials = 200, 0.02, 2000
    p = 0.6
    counts = rng.binomial(n, p, size=trials)
    lower = {c: clopper_pearson(int(c), n, alpha_side, "lower")
             for c in np.unique(counts)}
    viol = np.mean([lower[int(c)] > p for c in counts])
    se = math.sqrt(alpha_side * (1 - alpha_side) / trials)
    assert viol <= alpha_side + 3 * se


def constant_votes(node, n_samples, cls):
    return VoteTable(votes={node: {i: cls for i in range(n_samples)}})


def test_estimate_constant_classifier():
    table = constant_votes(0, 200, 3)
    tally = estimate(table, None, 0, None, n0=50, n1=150, alpha=0.01)
    assert tally.y_star == 3
    assert tally.counts[3] == 150
    assert tally.counts.sum() == 150
    assert tally.y_tilde != 3


def test_estimate_insufficient_votes():
    table = constant_votes(0, 10, 1)
    with pytest.raises(InsufficientSamplesError):
        estimate(table, None, 0, None, n0=8, n1=8, alpha=0.01)


def test_estimate_selection_and_tally_disjoint():
    # selection round says class 1, certification round says class 0:
    # y_star must come from the first n0 indices only
    votes = {i: 1 for i in range(10)}
    votes.update({i: 0 for i in range(10, 30)})
    table = VoteTable(votes={0: votes})
    tally = estimate(table, None, 0, None, n0=10, n1=20, alpha=0.01)
    assert tally.y_star == 1
    assert tally.counts[0] == 20
    assert tally.counts[1] == 0


def test_estimate_live_model_reproducible_and_matches_per_node(rng):
    g = random_graph(rng, n=8, p_edge=0.4, d=3)
    model = random_model(rng, d=3, classes=3)
    cfg = SmoothingConfig(p_del=0.3, p_abl=0.4, token=model.token, seed=21)
    batched = estimate_all(model, g, [1, 4, 6], cfg, n0=20, n1=40, alpha=0.05)
    for v in (1, 4, 6):
        single = estimate(model, g, v, cfg, n0=20, n1=40, alpha=0.05)
        assert np.array_equal(single.counts, batched[v].counts)
        assert single.y_star == batched[v].y_star
    again = estimate_all(model, g, [1, 4, 6], cfg, n0=20, n1=40, alpha=0.05)
    for v in (1, 4, 6):
        assert np.array_equal(again[v].counts, batched[v].counts)


def test_estimate_matches_reference_forward_with_skip(rng):
    from gnncert import apply, sample
    from gnncert.gcn import forward_all
    from gnncert.estimator import _predictions_per_sample

    g = random_graph(rng, n=7, p_edge=0.4, d=3)
    model = random_model(rng, d=3, skip=True)
    cfg = SmoothingConfig(p_del=0.4, p_abl=0.5, token=model.token, seed=33)
    nodes = np.arange(g.n)
    fast = _predictions_per_sample(model, g, cfg, 25, nodes)
    for i in range(25):
        view = apply(g, sample(g, cfg, i), cfg)
        ref = np.argmax(forward_all(model, view, clean_features=g.features),
                        axis=1)
        assert np.array_equal(fast[i], ref)


def test_fair_coin_classifier_abstains(rng):
    votes = {i: int(rng.random() < 0.5) for i in range(1200)}
    table = VoteTable(votes={0: votes})
    tally = estimate(table, None, 0, None, n0=200, n1=1000, alpha=0.01)
    curve = {1: lambda rho: DeltaBound(0.0, "multiplicative", rho)}
    res = certify(tally, curve, rho_max_scan=5)
    assert res.abstain
    assert res.certified_radius[1] == 0


def fixed_curve(values):
    def fn(rho):
        return DeltaBound(values[min(rho, len(values)) - 1], "multiplicative", rho)
    return fn


def make_tally(p_hits, n1=1000, n0=100, alpha=0.01, classes=3):
    counts = np.zeros(classes, dtype=int)
    counts[0] = p_hits
    counts[1] = n1 - p_hits
    return VoteTally(node=0, counts=counts, y_star=0, y_tilde=1,
                     n0=n0, n1=n1, alpha=alpha)


def test_certify_arithmetic_example():
    # bounds wide apart; arrival bound 0.3 at budget 2 still certifies
    tally = make_tally(980, n1=1000)
    radius, p_lower, p_upper, abstain = certified_radius(
        tally, fixed_curve([0.1, 0.3, 0.6]), rho_max_scan=3)
    assert not abstain
    assert p_lower > 0.9 and p_upper < 0.05
    assert radius == 2


def test_certify_never_certifies_half_delta():
    tally = make_tally(1000, n1=1000)     # p_lower as high as it gets
    radius, *_ = certified_radius(tally, fixed_curve([0.5]), rho_max_scan=4)
    assert radius == 0


def test_certify_monotone_radii(rng):
    for _ in range(20):
        hits = int(rng.integers(500, 1001))
        tally = make_tally(hits)
        curve_vals = np.sort(rng.uniform(0, 1, size=6)).tolist()
        radius, _, _, _ = certified_radius(tally, fixed_curve(curve_vals), 6)
        certified = [rho for rho in range(1, 7)
                     if _certifies(tally, fixed_curve(curve_vals), rho)]
        assert radius == (max(certified) if certified else 0)
        # every budget below a certified one is certified
        for rho in certified:
            assert all(r in certified for r in range(1, rho))


def _certifies(tally, curve, rho):
    from gnncert.estimator import confidence_bounds
    p_lower, p_upper = confidence_bounds(tally)
    delta = curve(rho).value
    return p_lower - delta > p_upper + delta


def test_bound_sandwich_contains_empirical_frequency(rng):
    for _ in range(40):
        n1 = int(rng.integers(5, 400))
        hits = int(rng.integers(0, n1 + 1))
        tally = make_tally(hits, n1=n1)
        p_hat = hits / n1
        lo = clopper_pearson(hits, n1, tally.alpha / 2, "lower")
        hi = clopper_pearson(hits, n1, tally.alpha / 2, "upper")
        assert lo <= p_hat <= hi


def test_binary_mode():
    tally = make_tally(900, n1=1000, classes=2)
    r_bin, *_ = certified_radius(tally, fixed_curve([0.2, 0.36, 0.5]), 3,
                                 binary=True)
    assert r_bin == 2     # 0.88ish - 0.36 > 0.5 holds, 0.5 never certifies


def result(node, radius, abstain=False, correct=True, d_min=1):
    return CertificateResult(node=node, prediction=0, abstain=abstain,
                             p_lower=0.9, p_upper=0.05,
                             certified_radius={d_min: radius}, correct=correct)


class _StubField:
    def __init__(self, surface):
        self._s = surface

    def attack_surface(self, d_min):
        return self._s


def test_report_all_certified_to_three():
    results = [result(v, 3) for v in range(4)]
    fields = {v: _StubField(5) for v in range(4)}
    rep = report(results, fields)
    assert rep["per_d_min"][1]["certified_ratio"] == [1.0, 1.0, 1.0, 1.0]
    assert rep["abstain_rate"] == 0.0


def test_report_all_abstained():
    results = [result(v, 0, abstain=True, correct=False) for v in range(3)]
    rep = report(results, {v: _StubField(4) for v in range(3)})
    assert rep["abstain_rate"] == 1.0
    assert rep["per_d_min"][1]["certified_ratio"] == [1.0]   # radius >= 0 trivially
    assert rep["per_d_min"][1]["aucrc"] == pytest.approx(1.0)
    assert rep["clean_accuracy"] == 0.0


def test_report_mixed_radii_step_sum():
    results = [result(0, 0), result(1, 1), result(2, 2)]
    rep = report(results, {v: _StubField(4) for v in range(3)})
    entry = rep["per_d_min"][1]
    assert entry["certified_ratio"] == pytest.approx([1.0, 2 / 3, 1 / 3])
    assert entry["aucrc"] == pytest.approx(2.0)


def test_report_normalized_curve_and_empty_surface():
    results = [result(0, 2), result(1, 0, abstain=True, correct=False),
               result(2, 0)]
    fields = {0: _StubField(4), 1: _StubField(0), 2: _StubField(0)}
    rep = report(results, fields)
    entry = rep["per_d_min"][1]
    # node 0 -> 0.5, node 1 abstained with empty surface -> 0, node 2 -> 1
    assert 0.5 in entry["normalized_curve"]["x"]
    assert entry["aucrc_normalized"] <= 1.0
