import numpy as np
import pytest

import oracles
from distributions import Purpose, RandomStream
from exceptions import EstimatorError
from gradient import (BOTH, Coordinate, draw_coordinate, estimate_gradient, steady_partials_oracle, tail_mean,
                      tail_window)
from market_model import FeasibleBox, LogisticDemand, MarketModel, Policy, QuadraticCost
from queue_engine import SimulationStreams, run_cycle, warm_state

MODEL = MarketModel(LogisticDemand(10.0, 4.1), QuadraticCost(0.1), 1.0, FeasibleBox(1.0, 20.0, 0.1, 10.0))


def test_tail_window_bounds():
    assert tail_window(10, 0.5) == slice(5, 10)
    assert tail_window(21, 0.5) == slice(10, 21)
    assert tail_window(1, 0.5) == slice(0, 1)
    for xi in (0.0, 1.0, -0.2):
        with pytest.raises(EstimatorError):
            tail_window(10, xi)


@pytest.mark.parametrize("mu", [9.0, 10.0, 12.0, 15.0, 18.0])
@pytest.mark.parametrize("p", [4.1, 5.0])
def test_partials_match_finite_differences(mu, p):
    policy = Policy(mu, p)
    summary = oracles.mm1_steady(MODEL.rate(p), mu)
    assert summary.rho <= 0.8
    exact = steady_partials_oracle(MODEL, policy, summary.mean_W, summary.mean_X)
    fd = oracles.fd_gradient(MODEL, oracles.mm1_steady, policy, step=1e-4)
    assert np.allclose(exact, fd, rtol=1e-4, atol=0)


def test_partials_match_finite_differences_for_mg1():
    steady = lambda lam, mu: oracles.mg1_steady(lam, mu, 8.0)
    policy = Policy(16.0, 3.5)
    summary = steady(MODEL.rate(policy.p), policy.mu)
    exact = steady_partials_oracle(MODEL, policy, summary.mean_W, summary.mean_X)
    assert np.allclose(exact, oracles.fd_gradient(MODEL, steady, policy), rtol=1e-4, atol=0)


def test_negative_means_rejected():
    with pytest.raises(ValueError):
        steady_partials_oracle(MODEL, Policy(10.0, 4.1), -0.1, 0.2)


def test_coin_is_fair_and_skipped_when_one_coordinate_is_live():
    coin = RandomStream(2021, 0, Purpose.COIN)
    draws = [draw_coordinate(coin, BOTH) for _ in range(4000)]
    share = draws.count(Coordinate.PRICE) / len(draws)
    assert 0.46 < share < 0.54

    used, untouched = RandomStream(7, 0, Purpose.COIN), RandomStream(7, 0, Purpose.COIN)
    assert draw_coordinate(used, (Coordinate.MU,)) == Coordinate.MU
    assert used.uniform() == untouched.uniform()


def test_estimate_updates_exactly_one_coordinate():
    policy = Policy(10.0, 4.1)
    streams = SimulationStreams.for_replication(8, 0)
    state = warm_state(MODEL, policy, 1000, streams)
    record = run_cycle(MODEL, policy, 200, state, streams)
    estimate = estimate_gradient(MODEL, policy, record, 0.5, streams.coin)
    assert np.count_nonzero(estimate.h) == 1
    assert estimate.tail_mean == pytest.approx(tail_mean(record, 0.5))

    price_only = estimate_gradient(MODEL, policy, record, 0.5, streams.coin, live=(Coordinate.PRICE,))
    assert price_only.coordinate_drawn == Coordinate.PRICE
    assert price_only.h[0] == 0.0


def test_long_cycle_estimate_is_nearly_unbiased():
    policy = Policy(10.0, 4.1)  # rho = 0.5
    summary = oracles.mm1_steady(MODEL.rate(policy.p), policy.mu)
    target = steady_partials_oracle(MODEL, policy, summary.mean_W, summary.mean_X)
    streams = SimulationStreams.for_replication(2021, 0)
    record = run_cycle(MODEL, policy, 100_000, warm_state(MODEL, policy, 5000, streams), streams)
    for index, coordinate in enumerate((Coordinate.MU, Coordinate.PRICE)):
        estimate = estimate_gradient(MODEL, policy, record, 0.5, streams.coin, live=(coordinate,))
        assert estimate.h[index] == pytest.approx(target[index], rel=0.02)
