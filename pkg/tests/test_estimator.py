import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatialamr import (
    GEODESIC,
    Bernoulli,
    Complete,
    ExponentialCovariance,
    InterventionSet,
    OutcomePoints,
    RasterGrid,
    circle_average,
    circle_average_table,
    estimate_amr,
    fit_kriging,
    hajek,
    horvitz_thompson,
    raster_lookup,
    sample_circle,
    smooth_amr,
)
from spatialamr.errors import EstimationError, ValidationError
from spatialamr.estimator import (
    AmrCurve,
    amr_contrast,
    auto_bandwidth,
    check_dvec,
    circle_plan,
    epanechnikov,
    local_linear,
    parse_design,
)


def loop_circle_average(grid, center, d, numpts, only_unique=False, metric=None):
    kw = {} if metric is None else {"metric": metric}
    pts = sample_circle(center, d, numpts, **kw).points
    seen, vals = set(), []
    for p in pts:
        idx = int(grid.cell_index(p)[0])
        if idx < 0:
            continue
        if only_unique:
            if idx in seen:
                continue
            seen.add(idx)
        v = raster_lookup(grid, p)
        if not np.isnan(v):
            vals.append(v)
    return (np.mean(vals) if vals else np.nan), len(vals)


@pytest.fixture
def grid(rng):
    vals = rng.random((30, 40))
    vals[5, 7] = np.nan
    return RasterGrid((-2.0, -1.0), 0.5, vals)


@settings(max_examples=60, deadline=None)
@given(st.floats(-4, 20), st.floats(-3, 15), st.floats(0.05, 8.0), st.integers(1, 90),
       st.booleans())
def test_circle_average_matches_point_loop(cx, cy, d, k, uniq):
    g = RasterGrid((-2.0, -1.0), 0.5, np.random.default_rng(9).random((30, 40)))
    mu, n = circle_average(g, (cx, cy), d, k, only_unique=uniq)
    mu_ref, n_ref = loop_circle_average(g, (cx, cy), d, k, uniq)
    assert n == n_ref
    if n_ref == 0:
        assert np.isnan(mu)
    else:
        assert mu == pytest.approx(mu_ref, rel=1e-12)


def test_table_skips_missing_cells(grid):
    coords = np.array([[1.3, 2.1], [6.0, 5.0], [30.0, 30.0]])
    tab = circle_average_table(grid, coords, [0.5, 1.0, 2.0], numpts=24)
    for i, c in enumerate(coords):
        for j, d in enumerate(tab.dvec):
            ref, n = loop_circle_average(grid, c, d, 24)
            assert tab.n_eval[i, j] == n
            np.testing.assert_allclose(tab.mu[i, j], ref, rtol=1e-12)
    assert np.isnan(tab.mu[2]).all()


def test_default_numpts_follow_raster_resolution(grid):
    tab = circle_average_table(grid, [[5.0, 5.0]], [0.5, 2.0])
    assert tab.numpts == (8, 26)


def test_geodesic_plan_matches_loop():
    g = RasterGrid((32.0, 0.0), 0.01, np.random.default_rng(4).random((100, 100)))
    coords = np.array([[32.4, 0.5], [32.55, 0.3]])
    tab = circle_average_table(g, coords, [1000.0, 5000.0], numpts=40, metric=GEODESIC)
    for i, c in enumerate(coords):
        for j, d in enumerate(tab.dvec):
            ref, _ = loop_circle_average(g, c, d, 40, metric=GEODESIC)
            assert tab.mu[i, j] == pytest.approx(ref, rel=1e-12)


def test_kriging_source_uses_predictions(rng):
    locs = rng.uniform(0, 10, (15, 2))
    model = fit_kriging(OutcomePoints(locs, rng.normal(size=15)), ExponentialCovariance(2.0))
    tab = circle_average_table(model, [[5.0, 5.0]], [1.0, 2.0], numpts=12)
    for j, d in enumerate([1.0, 2.0]):
        pts = sample_circle((5.0, 5.0), d, 12).points
        assert tab.mu[0, j] == pytest.approx(model.predict(pts).mean(), rel=1e-12)
    with pytest.raises(ValidationError, match="numpts"):
        circle_average_table(model, [[5.0, 5.0]], [1.0])


def test_plan_is_linear_in_values(grid):
    coords = np.array([[3.0, 3.0], [8.0, 6.0]])
    plan = circle_plan(grid, coords, [0.7, 1.9], numpts=30)
    a = np.random.default_rng(1).random((30, 40))
    b = np.random.default_rng(2).random((30, 40))
    mu_a, _ = plan.apply(a)
    mu_b, _ = plan.apply(b)
    mu_ab, _ = plan.apply(2.0 * a - b)
    np.testing.assert_allclose(mu_ab, 2.0 * mu_a - mu_b, atol=1e-12)
    stacked, _ = plan.apply(np.stack([a, b]))
    np.testing.assert_allclose(stacked[1], mu_b)


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------

def test_ht_and_hajek_by_hand():
    iv = InterventionSet([[0, 0], [1, 0], [2, 0], [3, 0]], [1, 0, 1, 0], Bernoulli(0.5))
    assert horvitz_thompson(iv, [1, 2, 3, 4]) == pytest.approx(-1.0)
    assert hajek(iv, [1, 2, 3, 4]) == pytest.approx(-1.0)
    # A missing average: HT counts it as zero, Hajek drops it.
    assert horvitz_thompson(iv, [1, np.nan, 3, 4]) == pytest.approx(0.0)
    assert hajek(iv, [1, np.nan, 3, 4]) == pytest.approx(-2.0)
    iv3 = InterventionSet([[0, 0], [1, 0], [2, 0], [3, 0]], [1, 0, 0, 0], Bernoulli(0.25))
    assert horvitz_thompson(iv3, [4, 1, 1, 1]) == pytest.approx(4 / 1.0 - 3 / 3.0)


def test_complete_design_uses_observed_share():
    iv = InterventionSet(np.zeros((5, 2)) + np.arange(5)[:, None], [1, 1, 0, 0, 0], Complete(2))
    assert iv.p == pytest.approx(0.4)
    mus = np.array([2.0, 4.0, 1.0, 1.0, 1.0])
    assert horvitz_thompson(iv, mus) == pytest.approx(6 / 2.0 - 3 / 3.0)


def test_empty_arm_raises():
    iv = InterventionSet([[0, 0], [1, 0], [2, 0]], [1, 0, 0], Bernoulli(0.5))
    with pytest.raises(EstimationError):
        hajek(iv, [np.nan, 1.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000))
def test_vectorised_contrast_matches_loop(n, seed):
    r = np.random.default_rng(seed)
    mu = r.normal(size=(n, 3))
    mu[r.random((n, 3)) < 0.2] = np.nan
    zs = (r.random((6, n)) < 0.5).astype(int)
    for est in ("hajek", "ht"):
        got = amr_contrast(zs, mu, est, 0.4)
        for m, z in enumerate(zs):
            for j in range(3):
                col = mu[:, j]
                t, c = z == 1, z == 0
                tt, cc = t & ~np.isnan(col), c & ~np.isnan(col)
                if not tt.any() or not cc.any():
                    assert np.isnan(got[m, j])
                elif est == "hajek":
                    assert got[m, j] == pytest.approx(col[tt].mean() - col[cc].mean())
                else:
                    ref = np.nansum(col[t]) / (n * 0.4) - np.nansum(col[c]) / (n * 0.6)
                    assert got[m, j] == pytest.approx(ref)


def test_ht_zero_fill_is_reported(grid):
    iv = InterventionSet([[5.0, 5.0], [6.0, 6.0], [40.0, 40.0], [7.0, 4.0]], [1, 0, 1, 0],
                         Bernoulli(0.5))
    with pytest.warns(RuntimeWarning, match="zero-filled"):
        curve = estimate_amr(iv, grid, [0.5, 1.0], numpts=16, estimator="ht")
    assert curve.metadata["ht_zero_filled"] == [1, 1]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        estimate_amr(iv, grid, [0.5, 1.0], numpts=16, estimator="hajek")


def test_intervention_set_validation():
    with pytest.raises(ValidationError):
        InterventionSet([[0, 0], [1, 1]], [1, 2], Bernoulli(0.5))
    with pytest.raises(ValidationError):
        InterventionSet([[0, 0]], [1], Bernoulli(0.5))
    with pytest.raises(ValidationError):
        InterventionSet([[0, 0], [1, 1]], [1, 0], Complete(2))


def test_parse_design():
    assert parse_design("bernoulli:0.3") == Bernoulli(0.3)
    assert parse_design("complete:4") == Complete(4)
    for bad in ("bernoulli:2", "complete:x", "cluster:3"):
        with pytest.raises(ValidationError):
            parse_design(bad)


@pytest.mark.parametrize("bad", [[], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0], [np.inf]])
def test_check_dvec(bad):
    with pytest.raises(ValidationError):
        check_dvec(bad)


# --------------------------------------------------------------------------
# smoothing
# --------------------------------------------------------------------------

def wls_line(x, y, x0, h):
    w = epanechnikov((x - x0) / h)
    keep = w > 0
    coef = np.polyfit(x[keep] - x0, y[keep], 1, w=np.sqrt(w[keep]))
    return coef[1]


def test_local_linear_matches_weighted_least_squares(rng):
    x = np.sort(rng.uniform(0, 10, 40))
    y = np.sin(x) + rng.normal(scale=0.1, size=40)
    for x0 in np.linspace(0.5, 9.5, 11):
        assert local_linear(x, y, [x0], 1.5)[0] == pytest.approx(wls_line(x, y, x0, 1.5), rel=1e-9)


def test_local_linear_fallbacks():
    x = np.array([0.0, 1.0, 2.0])
    y = np.array([5.0, 7.0, 1.0])
    # A bandwidth narrower than the spacing leaves each point alone.
    np.testing.assert_allclose(local_linear(x, y, x, 0.5), y)
    assert np.isnan(local_linear(x, y, [10.0], 0.5)[0])


def test_smooth_amr_auto_bandwidth_and_missing():
    d = np.arange(1, 11) * 0.1
    est = 1.0 + 2.0 * d
    est[3] = np.nan
    curve = smooth_amr(AmrCurve(d, est))
    assert curve.metadata["smooth_bandwidth"] == pytest.approx(auto_bandwidth(d))
    np.testing.assert_allclose(curve.amr_smoothed, 1.0 + 2.0 * d, atol=1e-12)
    with pytest.raises(ValidationError):
        smooth_amr(AmrCurve(d[:2], est[:2]))
    with pytest.raises(ValidationError):
        smooth_amr(AmrCurve(d, est), -1.0)


def test_curve_column_order():
    d = np.array([1.0, 2.0])
    c = AmrCurve(d, d, conley_se=d, conley_ci_lo=d, conley_ci_hi=d, per_ci_lo=d, per_ci_hi=d,
                 amr_smoothed=d)
    assert list(c.columns()) == ["dVec", "AMR_est", "Conley.CI.l", "Conley.CI.u", "Per.CI.l",
                                 "Per.CI.u", "AMR_est_smoothed"]
