import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renewal_dynamics import analytic
from renewal_dynamics.marks import SeedSpec, make_distribution
from renewal_dynamics.population import (
    MarkWindow,
    PointSample,
    original_ancestors,
    population_process,
    regeneration_cycles,
    simulate_marks,
)
from renewal_dynamics.stats import (
    TRANSPORT_FUNCTIONALS,
    ForestStatistics,
    InsufficientData,
    batch_means,
    diagonal_invariance,
    distribution_equality_test,
    empirical_intensity,
    estimate_mean,
    kernel_gof_test,
    lag1_autocorrelation,
    mtp_balance,
    pair_independence_test,
    palm_mean,
    ratio_identity_check,
)
from renewal_dynamics.tree import build_forest, foil

LAMBDA_O = 0.2887880950866024


def _setup(text, n, seed=1, eps=1e-9):
    dist = make_distribution(text)
    w = simulate_marks(dist, SeedSpec(seed, "stats-test"), 0, n - 1)
    trace = population_process(w, eps)
    anc = original_ancestors(trace)
    return w, trace, anc, build_forest(w, anc, B=trace.B, epsilon=trace.epsilon)


def test_intensity_of_even_atoms():
    pts = PointSample(np.arange(0, 100, 2), 0, 99, "even")
    assert empirical_intensity(pts).value == 0.5


def test_empty_core_rejected():
    with pytest.raises(Exception):
        empirical_intensity(PointSample(np.array([], dtype=np.int64), 5, 4, "x"))


def test_successful_intensity(geom_ctx):
    F = geom_ctx.forest
    lo = F.anchor
    pts = PointSample(F.successful, lo, F.R, "successful")
    est = empirical_intensity(pts)
    assert est.within(0.5)


def test_ancestor_intensity(geom_ctx):
    est = empirical_intensity(geom_ctx.ancestors, geom_ctx.cycles)
    assert est.method == "regenerative"
    assert est.within(LAMBDA_O)


def test_batch_means_iid():
    rng = np.random.default_rng(0)
    x = rng.normal(3.0, 1.0, 20_000)
    est = batch_means(x)
    assert est.n_effective == 20
    assert est.se == pytest.approx(1 / math.sqrt(x.size), rel=0.5)
    with pytest.raises(InsufficientData):
        batch_means(np.ones(5))


def test_estimate_mean_falls_back_to_batches():
    w = MarkWindow.from_marks([1] * 200, L=0, dist=make_distribution("constant:1"))
    trace = population_process(w)
    anc = PointSample(np.array([0, 5, 9]), 0, 199, "x")
    cycles = regeneration_cycles(trace, anc)
    assert estimate_mean(trace.nhat, cycles).method == "batch-means"


def test_palm_total_cousins(geom_ctx):
    est = palm_mean(geom_ctx.fs, "successful", "l")
    assert est.within(2.0)


def test_palm_ephemeral_tree_size(geom_ctx):
    est = palm_mean(geom_ctx.fs, "successful", "tilde_de")
    assert est.within(2.0)


def test_palm_constant_one_exact():
    *_, F = _setup("constant:1", 500)
    est = palm_mean(F, "successful", "tilde_de")
    assert est.value == 1.0 and est.se == 0.0


def test_palm_callable_functional():
    *_, F = _setup("geometric:0.5", 20_000)
    succ = F.successful
    est = palm_mean(F, "successful", lambda forest, n: forest.f(n) - n)
    # gaps along the successful path; the last one leaves the window
    assert est.value == pytest.approx(np.diff(succ).mean(), rel=0.01)
    assert est.within(2.0)


def test_palm_needs_atoms():
    *_, F = _setup("constant:1", 500)
    with pytest.raises(InsufficientData):
        palm_mean(F, "ephemeral", "d1")


def test_criticality(geom_ctx):
    fs = geom_ctx.fs
    d1, valid = fs.node_values("d1")
    x = d1[valid].astype(float)
    est = batch_means(x)
    assert est.within(1.0)


def test_palm_split(geom_ctx):
    for j in (1, 2):
        s = palm_mean(geom_ctx.fs, "successful", f"d{j}")
        e = palm_mean(geom_ctx.fs, "ephemeral", f"d{j}")
        assert s.value - 1 > 3 * s.se
        assert 1 - e.value > 3 * e.se


def test_parent_transport_rhs_is_one(geom_ctx):
    res = mtp_balance(geom_ctx.fs, "parent")
    assert res.rhs.value == 1.0 and res.rhs.se == 0.0
    assert res.balanced


def test_gap_transport(geom_ctx):
    res = mtp_balance(geom_ctx.fs, "gap")
    lo, hi = res.core
    marks = geom_ctx.window.marks
    # rhs is the mean mark over the core, marks beyond the radius dropped
    a = marks[lo:hi + 1]
    assert res.rhs.value == pytest.approx(np.where(a <= res.radius, a, 0).mean())
    assert res.balanced


def test_tree_transport(geom_ctx):
    lhs, rhs = mtp_balance(geom_ctx.fs, "ephemeral_tree")
    assert abs(lhs.value - rhs.value) <= mtp_balance(geom_ctx.fs, "ephemeral_tree").bound


def test_gap_transport_brute_force():
    w, trace, anc, F = _setup("geometric:0.5", 3000, seed=5, eps=1e-3)
    res = mtp_balance(F, "gap", radius=5)
    lo, hi = res.core
    h = TRANSPORT_FUNCTIONALS["gap"].point
    recv = [sum(h(F, m, n) for m in range(max(F.L, n - 5), n + 6) if m <= F.R) for n in range(lo, hi + 1)]
    sent = [sum(h(F, n, m) for m in range(n - 5, min(F.R, n + 5) + 1) if m >= F.L) for n in range(lo, hi + 1)]
    assert res.lhs.value == pytest.approx(np.mean(recv))
    assert res.rhs.value == pytest.approx(np.mean(sent))


def test_transport_radius_guard():
    *_, F = _setup("geometric:0.5", 300, eps=1e-3)
    with pytest.raises(Exception, match="guard"):
        mtp_balance(F, "parent", radius=140)


@pytest.mark.parametrize("name", sorted(TRANSPORT_FUNCTIONALS))
def test_diagonal_invariance(name):
    w, trace, anc, F = _setup("geometric:0.5", 400, seed=2, eps=1e-3)
    k = 37
    shifted_anc = PointSample(anc.atoms + k, anc.lo + k, anc.hi + k, anc.label)
    G = build_forest(w.shifted(k), shifted_anc, B=F.B)
    nodes = range(F.anchor + 20, F.anchor + 60)
    assert diagonal_invariance(TRANSPORT_FUNCTIONALS[name], F, G, k, nodes, radius=10)


def test_equality_identical_samples():
    x = np.arange(100) % 7
    assert distribution_equality_test(x, x) == (0.0, 1.0)


def test_equality_disjoint_supports():
    _, p = distribution_equality_test(np.zeros(1000), np.full(1000, 5))
    assert p < 1e-6


def test_equality_single_shared_value():
    assert distribution_equality_test(np.ones(10), np.ones(30))[1] == 1.0


def test_cousins_versus_ephemerals(geom_ctx):
    fs = geom_ctx.fs
    L = fs.forest.L
    # 10^4 atoms each, from separate stretches of the path
    a = fs.succ[1:10_001] - L
    b = fs.succ[20_001:30_001] - L
    l1, lv = fs.strict_cousins(1)
    de = fs.de[1][b][fs.de_valid[1][b]]
    _, p = distribution_equality_test(de, l1[a][lv[a]])
    assert p > 0.01


def test_duality_per_realization(geom_ctx):
    fs = geom_ctx.fs
    L = fs.forest.L
    T = fs.succ.size
    for j in (1, 2, 3):
        l_j, l_valid = fs.strict_cousins(j)
        base = fs.succ[1:T - j] - L
        top = fs.succ[1 + j:] - L
        ok = l_valid[base] & fs.de_valid[j][top]
        assert ok.sum() > 100_000
        np.testing.assert_array_equal(l_j[base][ok], fs.de[j][top][ok])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=30, max_size=120))
def test_strict_cousins_match_foils(marks):
    w = MarkWindow.from_marks(marks, L=0)
    trace = population_process(w, B=0)
    anc = original_ancestors(trace)
    F = build_forest(w, anc, B=0)
    if not F.classified or F.successful.size < 5:
        return
    fs = ForestStatistics(F)
    for j in (1, 2):
        l_j, valid = fs.strict_cousins(j)
        for s in F.successful.tolist():
            if not valid[s]:
                continue
            assert l_j[s] == len(foil(F, s, j).cousins)


def test_kernel_gof_geometric(geom_ctx):
    assert kernel_gof_test(geom_ctx.trace, 0.5) > 0.01


def test_kernel_gof_rejects_wrong_model():
    w, trace, *_ = _setup("constant:2", 5000)
    assert kernel_gof_test(trace, 0.5) < 1e-6


def test_kernel_gof_insufficient():
    w, trace, *_ = _setup("geometric:0.5", 60, eps=0.1)
    with pytest.raises(InsufficientData, match="insufficient data"):
        kernel_gof_test(trace, 0.5)


def test_ratio_constant_one_rejected():
    *_, F = _setup("constant:1", 500)
    with pytest.raises(ValueError, match="no ephemerals"):
        ratio_identity_check(F)


def test_ratio_geometric(geom_ctx):
    rc = ratio_identity_check(geom_ctx.fs)
    assert abs(rc.lhs_ratio / rc.rhs_target - 1) < 0.1
    assert abs(rc.foil_ratio / rc.rhs_target - 1) < 0.1


def test_ratio_twopoint(twopoint_ctx):
    lhs, target = ratio_identity_check(twopoint_ctx.fs)
    assert target == pytest.approx(0.5)
    assert abs(lhs - 0.5) < 0.05


def test_cycle_independence(geom_ctx):
    r, se = lag1_autocorrelation(geom_ctx.cycles.lengths)
    assert abs(r) < 3 * se
    _, p = pair_independence_test(geom_ctx.cycles.lengths)
    assert p > 0.01


def test_pair_test_detects_dependence():
    x = np.repeat(np.arange(1, 9), 500)  # long runs of equal values
    _, p = pair_independence_test(x)
    assert p < 1e-6
    r, se = lag1_autocorrelation(x)
    assert r > 3 * se
