import json
import math

import numpy as np
import pytest

from ustatbound import bounds as Bd
from ustatbound.chaos import SingularCovariance, covariance
from ustatbound.model import GroundSpace, IntensityMeasure, UStatModel, box_table_kernel, builtin_model
from ustatbound.quadrature import IntegrationBudget

FAST = IntegrationBudget(mc_samples=2 ** 15)


def test_variance_level_one_is_zero():
    model = builtin_model("two-radii-edges", {"t": 20})
    for i in (1, 2):
        for j in (1, 2):
            term = Bd.m_term_variance(model, i, j, 1, 1, FAST)
            assert term.value == 0.0 and term.partitions == 0


def test_levels_above_order_are_zero():
    model = builtin_model("count-and-edges", {"t": 20})
    assert Bd.m_term_variance(model, 1, 2, 2, 1, FAST).value == 0.0
    assert Bd.m_term_fourth(model, 1, 2, FAST).value == 0.0


def test_fourth_order_one_box():
    model = builtin_model("order1-pair", {"t": 10})
    term = Bd.m_term_fourth(model, 1, 1)
    assert term.partitions == 1
    assert term.value == pytest.approx(2.5, abs=1e-12)


def test_fourth_count_kernel_is_mass():
    model = builtin_model("count-and-edges", {"t": 37})
    assert Bd.m_term_fourth(model, 1, 1).value == pytest.approx(37.0, rel=1e-12)


def test_scale_covariance_matched_seed():
    budget = IntegrationBudget(mc_samples=2 ** 14, tensor_dim_cap=0)
    a_model = builtin_model("two-radii-edges", {"t": 20})
    b_model = builtin_model("two-radii-edges", {"t": 60})
    for key in [(1, 2, 1, 2), (2, 1, 1, 2), (1, 1, 1, 2)]:
        a = Bd.m_term_variance(a_model, *key, budget, seed=4)
        b = Bd.m_term_variance(b_model, *key, budget, seed=4)
        assert len(set(a.variables)) == 1  # one power of t per term
        assert b.value == pytest.approx(a.value * 3.0 ** a.variables[0], rel=1e-9)


def test_grouped_wiring_differs():
    model = builtin_model("two-radii-edges", {"t": 20})
    e = Bd.m_term_variance(model, 1, 2, 1, 1, FAST, wiring="expansion")
    g = Bd.m_term_variance(model, 1, 2, 1, 1, FAST, wiring="grouped")
    assert e.value == 0.0 and g.value == 0.0
    e2 = Bd.m_term_variance(model, 1, 1, 2, 2, FAST, wiring="expansion")
    g2 = Bd.m_term_variance(model, 1, 1, 2, 2, FAST, wiring="grouped")
    assert e2.value > 0 and g2.value > 0


@pytest.mark.parametrize("t", [10.0, 20.0, 40.0, 80.0])
def test_closed_form_order_one(t):
    mb = Bd.bound_for_model(builtin_model("order1-pair", {"t": t}))
    s = t / 4
    assert mb.report.term2 == 0.0
    assert mb.report.total == pytest.approx(math.sqrt(2 * math.pi) / math.sqrt(s), rel=1e-6)


def test_doubling_t_shrinks_by_root_two():
    a = Bd.bound_for_model(builtin_model("order1-pair", {"t": 10})).report.total
    b = Bd.bound_for_model(builtin_model("order1-pair", {"t": 20})).report.total
    assert b / a == pytest.approx(1 / math.sqrt(2), rel=1e-9)


def test_zero_kernels_singular():
    k0 = box_table_kernel([[[0, 1], [0, 1]]], [0.0], 2)
    model = UStatModel(IntensityMeasure(GroundSpace.unit(2), 5.0), (k0, k0), np.eye(2))
    with pytest.raises(SingularCovariance):
        Bd.bound_for_model(model)


def test_assemble_is_pure():
    model = builtin_model("two-radii-edges", {"t": 20})
    cov = covariance(model, FAST)
    table = Bd.compute_mtable(model, FAST)
    a = Bd.assemble_bound(model, np.eye(2), table, cov.Sigma, cov.std_error).to_dict()
    b = Bd.assemble_bound(model, np.eye(2), table, cov.Sigma, cov.std_error).to_dict()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert a["term1"] >= 0 and a["term2"] >= 0 and a["total"] > 0


def test_paper_literal_variant_reported():
    mb = Bd.bound_for_model(builtin_model("two-radii-edges", {"t": 20}), FAST, paper_literal=True)
    lit = mb.report.paper_literal
    assert lit is not None and lit["term2"] == mb.report.term2
    assert lit["total"] == pytest.approx(lit["term1"] + lit["term2"])


def test_non_pd_target_rejected():
    from ustatbound.linalg import NotPositiveDefinite
    model = builtin_model("order1-pair", {"t": 10})
    cov = covariance(model)
    table = Bd.compute_mtable(model)
    with pytest.raises(NotPositiveDefinite):
        Bd.assemble_bound(model, np.diag([1.0, -1.0]), table, cov.Sigma)


def test_scaled_target_scales_total():
    model = builtin_model("two-radii-edges", {"t": 20})
    cov = covariance(model, FAST)
    table = Bd.compute_mtable(model, FAST)
    rep = Bd.assemble_bound(model, np.eye(2), table, cov.Sigma)
    scaled = Bd.assemble_bound(model, 4.0 * np.eye(2), table, cov.Sigma)
    # under C -> cI: term1 scales like c, term2 like sqrt(c)
    assert scaled.term1 == pytest.approx(4.0 * rep.term1, rel=1e-9)
    assert scaled.term2 == pytest.approx(2.0 * rep.term2, rel=1e-9)
