import math

import numpy as np
import pytest

from ustatbound import chaos as Ch
from ustatbound.model import (GroundSpace, IntensityMeasure, UStatModel, box_indicator, box_table_kernel,
                              builtin_model)
from ustatbound.quadrature import IntegrationBudget
from ustatbound.simulate import PointConfiguration, sample_poisson

# 10^7-sample brute-force oracle for P(|U - V| <= 0.05) on [0,1]^2 (numpy default_rng(12345)),
# scaled by t^2 = 2500.
ORACLE_EDGES_T50_R005 = (2500 * 0.0075421, 2500 * 2.7359125490614286e-05)

A = ([0.0, 0.0], [0.5, 0.5])
B = ([0.5, 0.0], [1.0, 0.5])


def unit(t):
    return IntensityMeasure(GroundSpace.unit(2), t)


def test_level_k_projection_is_phi():
    model = builtin_model("two-radii-edges", {"t": 50})
    pts = np.random.default_rng(0).random((400, 2, 2)) * np.array([1.0, 0.2]) + np.array([0.0, 0.4])
    vals = Ch.kernel_projection(model, 1, 2)(pts)
    assert np.array_equal(vals, model.kernels[0](pts))
    assert set(np.unique(vals)) <= {0.0, 1.0}


def test_level_above_order_is_zero():
    model = builtin_model("count-and-edges", {"t": 5})
    assert np.all(Ch.kernel_projection(model, 1, 2)(np.random.default_rng(1).random((10, 2, 2))) == 0)
    assert np.all(Ch.kernel_projection(model, 2, 3)(np.random.default_rng(1).random((10, 3, 2))) == 0)


def test_interior_first_level_closed_form():
    t, r = 50.0, 0.1
    model = builtin_model("two-radii-edges", {"t": t, "r": [r, 0.2]})
    z = 0.2 + 0.6 * np.random.default_rng(2).random((20, 1, 2))
    assert np.allclose(Ch.kernel_projection(model, 1, 1)(z), 2 * t * math.pi * r * r, rtol=1e-12)
    mc = Ch.kernel_projection(model, 1, 1, IntegrationBudget(tensor_dim_cap=0, mc_samples=2 ** 14), seed=3,
                              use_closed_form=False)
    vals, ses = mc.evaluate(z)
    assert np.all(np.abs(vals - 2 * t * math.pi * r * r) <= 4 * ses)
    again, _ = mc.evaluate(z)
    assert np.array_equal(vals, again)


def test_expectation_box_mass_exact():
    model = builtin_model("order1-pair", {"t": 10})
    assert Ch.expectation(model, 1).value == pytest.approx(2.5, abs=1e-12)


def test_expectation_zero_kernel():
    k0 = box_table_kernel([[[0, 1], [0, 1]]], [0.0], 2)
    model = UStatModel(unit(3.0), (k0, k0), np.eye(2))
    assert Ch.expectation(model, 1).value == 0.0


def test_expectation_edges_against_frozen_oracle():
    model = builtin_model("two-radii-edges", {"t": 50, "r": [0.05, 0.1]})
    res = Ch.expectation(model, 1)
    assert abs(res.value - ORACLE_EDGES_T50_R005[0]) <= 4 * math.hypot(res.std_error, ORACLE_EDGES_T50_R005[1])


def test_covariance_disjoint_boxes():
    model = builtin_model("order1-pair", {"t": 10, "A": [[0, 0.5], [0, 0.5]], "B": [[0.5, 1], [0, 1]]})
    cov = Ch.covariance(model)
    assert np.allclose(cov.Sigma, np.diag([2.5, 5.0]), atol=1e-12)
    assert not cov.singular


def test_covariance_identical_kernels_singular():
    k = box_indicator([[0, 0.5], [0, 0.5]], 2)
    cov = Ch.covariance(UStatModel(unit(10.0), (k, k), np.eye(2)))
    assert cov.Sigma[0, 0] == cov.Sigma[0, 1] == cov.Sigma[1, 1]
    assert cov.singular
    with pytest.raises(Ch.SingularCovariance):
        cov.require_pd()


def test_covariance_symmetric():
    cov = Ch.covariance(builtin_model("count-and-edges", {"t": 20}), IntegrationBudget(mc_samples=2 ** 14))
    assert np.array_equal(cov.Sigma, cov.Sigma.T)


def test_multiple_integral_examples():
    measure = IntensityMeasure(GroundSpace.unit(2), 8.0)  # mu([0,.5]^2) = 2
    cfg = PointConfiguration(np.array([[0.1, 0.1], [0.2, 0.2], [0.3, 0.3], [0.9, 0.9]]), measure)
    assert Ch.multiple_integral_simple(Ch.SimpleFunctionSpec.indicator(A), cfg) == 1.0
    m4 = IntensityMeasure(GroundSpace.unit(2), 4.0)  # masses of A and B are 1
    cfg2 = PointConfiguration(np.array([[0.1, 0.1], [0.2, 0.2]]), m4)
    assert Ch.multiple_integral_simple(Ch.SimpleFunctionSpec.indicator(A, B), cfg2) == -1.0
    assert Ch.multiple_integral_simple(Ch.SimpleFunctionSpec(1, ()), cfg2) == 0.0


def test_overlapping_boxes_rejected():
    with pytest.raises(ValueError):
        Ch.SimpleFunctionSpec.indicator(A, ([0.25, 0.25], [0.75, 0.75]))


def test_moment_formula_examples():
    m = unit(10.0)
    fA = Ch.SimpleFunctionSpec.indicator(A)
    fB = Ch.SimpleFunctionSpec.indicator(B)
    assert Ch.moment_formula([fA, fA], m) == pytest.approx(2.5)
    assert Ch.moment_formula([fA] * 4, m) == 2.5 + 3 * 2.5 ** 2
    assert Ch.moment_formula([fA, fB], m) == 0.0


@pytest.mark.parametrize("orders", [(1, 1, 1), (2, 2), (1, 1, 2), (2, 1, 1), (1, 2, 1), (2, 2, 0)])
def test_moment_formula_against_simulation(orders):
    m = unit(6.0)
    C1 = ([0.25, 0.0], [0.75, 0.5])
    C2 = ([0.0, 0.5], [0.5, 1.0])
    pool = {1: Ch.SimpleFunctionSpec.indicator(C1), 2: Ch.SimpleFunctionSpec.indicator(A, C2)}
    factors = [pool[o] for o in orders if o]
    exact = Ch.moment_formula(factors, m)
    draws = 40_000
    vals = np.empty(draws)
    for r in range(draws):
        cfg = sample_poisson(m, 1, "moment", r)
        vals[r] = np.prod([Ch.multiple_integral_simple(f, cfg) for f in factors])
    se = vals.std(ddof=1) / math.sqrt(draws)
    assert abs(vals.mean() - exact) <= 4 * se


def test_inner_product_symmetrises():
    m = unit(4.0)
    f = Ch.SimpleFunctionSpec.indicator(A, B)
    g = Ch.SimpleFunctionSpec.indicator(B, A)
    assert Ch.inner_product(f, g, m) == pytest.approx(Ch.inner_product(f, f, m))


def test_iterated_difference_examples():
    pair = builtin_model("order1-pair", {"t": 10})
    cfg = sample_poisson(pair.measure, 0)
    assert Ch.iterated_difference(pair, 1, [[0.1, 0.1]], cfg) == 1.0
    assert Ch.iterated_difference(pair, 1, [[0.9, 0.9]], cfg) == 0.0
    edges = builtin_model("two-radii-edges", {"t": 30, "r": [0.1, 0.2]})
    cfg = sample_poisson(edges.measure, 1)
    assert Ch.iterated_difference(edges, 1, [[0.5, 0.5], [0.55, 0.5]], cfg) == 2.0
    assert Ch.iterated_difference(edges, 1, [[0.5, 0.5], [0.8, 0.5]], cfg) == 0.0
    empty = PointConfiguration(np.zeros((0, 2)), edges.measure)
    assert Ch.iterated_difference(edges, 1, [[0.5, 0.5]], empty) == 0.0


def test_difference_operator_matches_inclusion_exclusion():
    for name in ("count-and-edges", "two-radii-edges"):
        model = builtin_model(name, {"t": 40})
        z = np.random.default_rng(5).random((15, 2))
        for seed in range(5):
            cfg = sample_poisson(model.measure, seed)
            for i in (1, 2):
                fast = Ch.difference_operator(model, i, z, cfg)
                slow = [Ch.iterated_difference(model, i, zz, cfg) for zz in z]
                assert np.array_equal(fast, slow)


def test_second_order_chaos_identity_moments():
    t, r = 50.0, 0.1
    model = builtin_model("two-radii-edges", {"t": t, "r": [r, 0.2]})
    z = np.array([[0.5, 0.5], [0.05, 0.5], [0.0, 0.0]])
    f1 = Ch.kernel_projection(model, 1, 1)(z[:, None, :])
    draws = 20_000
    vals = np.array([Ch.difference_operator(model, 1, z, sample_poisson(model.measure, 2, "id", r_))
                     for r_ in range(draws)]) - f1
    # 2 I_1(phi(z, .)) has mean 0 and variance 4 * int phi(z, x)^2 mu(dx) = 2 f1(z)
    mean_se = vals.std(axis=0, ddof=1) / math.sqrt(draws)
    assert np.all(np.abs(vals.mean(axis=0)) <= 4 * mean_se)
    sq = vals ** 2
    sq_se = sq.std(axis=0, ddof=1) / math.sqrt(draws)
    assert np.all(np.abs(sq.mean(axis=0) - 2 * f1) <= 4 * sq_se)
