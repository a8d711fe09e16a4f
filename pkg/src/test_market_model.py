import math
from dataclasses import dataclass

import numpy as np
import pytest

from exceptions import ConfigError
from market_model import (ConstantDemand, ExponentialDemand, FeasibleBox, LinearCost, LinearDemand, LogisticDemand,
                          MarketModel, Policy, QuadraticCost, check_assumptions, logistic_demand, objective_via_queue,
                          objective_via_waiting, project)

BOX = FeasibleBox(1.0, 20.0, 0.1, 10.0)


def _joint():
    return MarketModel(LogisticDemand(10.0, 4.1), QuadraticCost(0.1), 1.0, BOX)


def test_logistic_demand_at_reference_price():
    assert logistic_demand(4.1, 10.0, 4.1) == pytest.approx(5.0)
    demand = LogisticDemand(10.0, 4.1)
    assert demand.slope(4.1) == pytest.approx(-2.5)


def test_logistic_curvature_matches_slope_differences():
    demand = LogisticDemand(10.0, 4.1)
    h = 1e-5
    for p in (2.0, 4.1, 6.0):
        numeric = (demand.slope(p + h) - demand.slope(p - h)) / (2 * h)
        assert demand.curvature(p) == pytest.approx(numeric, rel=1e-6, abs=1e-9)


def test_other_demand_curves():
    assert ConstantDemand(6.385).rate(3.0) == 6.385
    assert ConstantDemand(6.385).slope(3.0) == 0.0
    assert np.allclose(ConstantDemand(2.0).rate(np.array([1.0, 2.0])), [2.0, 2.0])
    linear = LinearDemand(5.0, 0.5)
    assert linear.rate(4.0) == pytest.approx(3.0)
    assert linear.rate(20.0) == 0.0
    assert linear.slope(4.0) == -0.5
    expo = ExponentialDemand(2.0, 0.5)
    assert expo.slope(1.0) == pytest.approx(-0.5 * math.exp(1.5))
    assert expo.scaled(2.0).rate(1.0) == pytest.approx(2 * expo.rate(1.0))


def test_cost_curves_and_rescaling():
    quad = QuadraticCost(0.1)
    assert quad.cost(10.0) == pytest.approx(10.0)
    assert quad.slope(10.0) == pytest.approx(2.0)
    big = quad.rescaled(10.0)
    assert big.cost(100.0) == pytest.approx(math.sqrt(10.0) * quad.cost(10.0))
    assert big.slope(100.0) == pytest.approx(math.sqrt(10.0) * quad.slope(10.0) / 10.0)
    assert big.rescaled(10.0).weight == pytest.approx(10.0)
    lin = LinearCost(0.2)
    assert lin.cost(12.0) == pytest.approx(2.4)
    assert lin.slope(12.0) == 0.2


def test_invalid_parameters_raise_config_errors():
    with pytest.raises(ConfigError):
        Policy(0.0, 1.0)
    with pytest.raises(ConfigError):
        FeasibleBox(5.0, 1.0, 0.1, 10.0)
    with pytest.raises(ConfigError):
        LogisticDemand(-1.0, 4.1)
    with pytest.raises(ConfigError):
        QuadraticCost(-0.1)


def test_projection_clamps_and_is_idempotent():
    assert project(BOX, [25.0, -3.0]) == Policy(20.0, 0.1)
    inside = Policy(7.0, 4.0)
    assert project(BOX, inside) == inside
    once = project(BOX, np.array([-1.0, 11.0]))
    assert project(BOX, once) == once


def test_projection_is_nonexpansive():
    rng = np.random.default_rng(3)
    for _ in range(200):
        x, y = rng.uniform(-30, 30, size=(2, 2))
        px, py = project(BOX, x).as_array(), project(BOX, y).as_array()
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12


def test_scaled_model_grows_staffing_bill_like_sqrt_of_size():
    model = _joint()
    big = model.scaled(10.0)
    assert big.rate(4.1) == pytest.approx(10 * model.rate(4.1))
    assert big.box.mu_hi == pytest.approx(200.0)
    assert big.box.p_hi == model.box.p_hi
    assert float(big.cost.cost(70.0)) == pytest.approx(math.sqrt(10.0) * float(model.cost.cost(7.0)))


def test_littles_law_forms_agree_for_mm1():
    model = _joint()
    policy = Policy(10.0, 4.1)
    # M/M/1 at lambda=5, mu=10: E[W]=0.1, E[Q]=1
    via_w = objective_via_waiting(model, policy, 0.1)
    via_q = objective_via_queue(model, policy, 1.0)
    assert via_w == pytest.approx(via_q)
    assert via_q == pytest.approx(1.0 + 10.0 - 4.1 * 5.0)


def test_check_assumptions_warns_on_logistic_box():
    warnings = check_assumptions(_joint())
    assert any("uniformly stable" in w for w in warnings)
    assert any("convexity" in w for w in warnings)


def test_check_assumptions_clean_for_linear_demand():
    model = MarketModel(LinearDemand(5.0, 0.5), QuadraticCost(0.1), 1.0, FeasibleBox(6.0, 20.0, 0.1, 10.0))
    assert check_assumptions(model) == []


@dataclass(frozen=True)
class _RisingDemand:
    def rate(self, p):
        return 1.0 + p

    def slope(self, p):
        return np.ones_like(np.asarray(p, dtype=float))

    def curvature(self, p):
        return np.zeros_like(np.asarray(p, dtype=float))

    def scaled(self, factor):
        return self


def test_check_assumptions_rejects_increasing_demand():
    model = MarketModel(_RisingDemand(), QuadraticCost(0.1), 1.0, BOX)
    with pytest.raises(ConfigError, match="non-increasing"):
        check_assumptions(model)
