import itertools
import json
import math

import numpy as np
import pytest

from spatialamr import (
    Bernoulli,
    Complete,
    RasterGrid,
    StructuralModel,
    additive_truth,
    enumerate_truth,
    gamma_mixture_effect,
    make_toy_example,
    simulate_realization,
)
from spatialamr.errors import CapacityError, ValidationError
from spatialamr.oracle import jittered_grid_model, truncated_gamma_effect

from test_estimator import loop_circle_average


def gamma_pdf(d, k, theta):
    return d ** (k - 1) * math.exp(-d / theta) / (math.gamma(k) * theta ** k)


@pytest.mark.parametrize("d", [0.05, 0.3, 0.9, 1.7, 4.0])
def test_gamma_mixture_closed_form(d):
    expected = 8 * gamma_pdf(d, 2, 0.3) - 4 * gamma_pdf(d, 6, 0.2)
    assert gamma_mixture_effect(d) == pytest.approx(expected, rel=1e-12)


def test_gamma_mixture_shape():
    d = np.linspace(0.01, 3, 300)
    f = gamma_mixture_effect(d)
    assert f[np.argmax(f)] > 0 and 0.2 < d[np.argmax(f)] < 0.4
    assert f.min() < 0
    assert abs(gamma_mixture_effect(10.0)) < 1e-6
    with pytest.raises(ValidationError):
        gamma_mixture_effect(1.0, k1=0.0)


def small_model(combination, design, n=3, seed=0):
    rng = np.random.default_rng(seed)
    base = RasterGrid((0.0, 0.0), 0.5, rng.random((12, 12)))
    nodes = rng.uniform(2.0, 4.0, (n, 2))
    return StructuralModel(base, nodes, gamma_mixture_effect, combination, design)


def brute_truth(model, dvec, numpts):
    """Potential outcomes cell by cell, conditional means by explicit sums."""
    n, g = model.n, model.baseline
    centres = g.cell_centers()
    support = []
    for z in itertools.product((0, 1), repeat=n):
        if isinstance(model.design, Complete):
            if sum(z) != model.design.n1:
                continue
            pr = 1.0
        else:
            pr = math.prod(model.design.p if v else 1 - model.design.p for v in z)
        y = np.empty(len(centres))
        for c, x in enumerate(centres):
            effs = [float(gamma_mixture_effect(math.dist(model.nodes[i], x)))
                    for i in range(n) if z[i]]
            if model.combination == "additive":
                add = sum(effs)
            else:
                add = max(effs) if effs else 0.0
            y[c] = g.values.flat[c] + add
        support.append((z, pr, y))
    tau_id = np.empty((n, len(dvec)))
    for i in range(n):
        on = [(pr, y) for z, pr, y in support if z[i] == 1]
        off = [(pr, y) for z, pr, y in support if z[i] == 0]
        m1 = sum(p * y for p, y in on) / sum(p for p, _ in on)
        m0 = sum(p * y for p, y in off) / sum(p for p, _ in off)
        tau = g.with_values((m1 - m0).reshape(g.nrows, g.ncols))
        for j, d in enumerate(dvec):
            tau_id[i, j] = loop_circle_average(tau, model.nodes[i], d, numpts)[0]
    return tau_id


@pytest.mark.parametrize("combination,design", [
    ("additive", Bernoulli(0.5)),
    ("max", Bernoulli(0.3)),
    ("max", Complete(2)),
    ("additive", Complete(1)),
])
def test_enumeration_matches_brute_force(combination, design):
    model = small_model(combination, design)
    dvec = [0.4, 0.8, 1.5]
    truth = enumerate_truth(model, dvec, numpts=20)
    np.testing.assert_allclose(truth.tau_id, brute_truth(model, dvec, 20), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(truth.true_amr, truth.tau_id.mean(axis=0))
    assert truth.probabilities.sum() == pytest.approx(1.0)


def test_additive_shortcut_matches_enumeration():
    model = small_model("additive", Bernoulli(0.4), n=5, seed=3)
    truth = enumerate_truth(model, [0.3, 0.6, 1.2], numpts=32)
    tau_id, amr = additive_truth(model, [0.3, 0.6, 1.2], numpts=32)
    np.testing.assert_allclose(tau_id, truth.tau_id, atol=1e-12)
    np.testing.assert_allclose(amr, truth.true_amr, atol=1e-12)
    with pytest.raises(ValidationError):
        additive_truth(small_model("max", Bernoulli(0.5)), [1.0])


def test_max_combination_realisation():
    model = small_model("max", Bernoulli(0.5))
    eff = model.effects()
    z = np.array([1, 0, 1])
    expected = model.baseline.values + np.maximum(eff[0], eff[2])
    np.testing.assert_allclose(model.realize(z), expected)
    np.testing.assert_allclose(model.realize(np.zeros(3, int)), model.baseline.values)


def test_enumeration_capacity_guard():
    base = RasterGrid((0, 0), 1.0, np.zeros((4, 4)))
    model = StructuralModel(base, np.random.default_rng(0).uniform(0, 4, (21, 2)),
                            gamma_mixture_effect)
    with pytest.raises(CapacityError):
        enumerate_truth(model, [1.0])


def test_truth_json_schema():
    _, truth = make_toy_example()
    doc = json.loads(truth.to_json())
    assert doc["schema"] == "spatialamr.enumerated_truth/1"
    assert len(doc["true_amr"]) == 20
    assert len(doc["assignments"]) == 16


def test_toy_example_truth_pattern():
    model, truth = make_toy_example()
    assert model.n == 4 and isinstance(model.design, Bernoulli)
    amr = truth.true_amr
    assert np.all(amr[:13] > 0) and np.all(amr[13:] < 0)
    assert np.nanmax(np.abs(amr)) == pytest.approx(amr[0])


def test_simulation_is_seeded():
    model = small_model("additive", Complete(2))
    a_iv, a_r = simulate_realization(model, 9)
    b_iv, b_r = simulate_realization(model, 9)
    np.testing.assert_array_equal(a_iv.z, b_iv.z)
    np.testing.assert_array_equal(a_r.values, b_r.values)
    assert a_iv.n1 == 2


def test_jittered_grid_model():
    model = jittered_grid_model(5, 4, seed=2, effect_fn=truncated_gamma_effect(2.0))
    grid_pts = np.array([(x, y) for y in range(4) for x in range(5)], dtype=float)
    assert np.all(np.abs(model.nodes - grid_pts) <= 0.2)
    x0, y0, x1, y1 = model.baseline.extent
    assert x0 == -3.0 and x1 >= 7.0 and y1 >= 6.0
    assert truncated_gamma_effect(2.0)(2.5) == 0.0
