"""Randomized one-coordinate IPA gradient estimator for the steady profit loss.

Both partial derivatives depend on the queue only through E[W] + E[X] (steady
wait plus observed busy age), so a cycle's tail average of W + X plugged into
the closed-form partials gives the estimate.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from distributions import RandomStream
from exceptions import EstimatorError
from market_model import MarketModel, Policy
from queue_engine import CycleRecord


class Coordinate(str, Enum):
    MU = "mu"
    PRICE = "price"


BOTH = (Coordinate.MU, Coordinate.PRICE)


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    h: np.ndarray  # (d/dmu, d/dp); exactly one entry nonzero
    coordinate_drawn: Coordinate
    tail_mean: float


def tail_window(d_k: int, xi: float) -> slice:
    """Indices n > floor(xi * d_k) as a 0-based slice"""
    if not 0 < xi < 1:
        raise EstimatorError(f"burn-in fraction must lie in (0, 1), got {xi}")
    start = math.floor(xi * d_k)
    if start >= d_k:
        raise EstimatorError(f"no observations left after burn-in: d_k={d_k}, xi={xi}")
    return slice(start, d_k)


def tail_mean(record: CycleRecord, xi: float) -> float:
    window = tail_window(record.d_k, xi)
    return float(np.mean(record.waits[window] + record.busy_ages[window]))


def price_partial(model: MarketModel, policy: Policy, queue_term: float) -> float:
    lam = model.rate(policy.p)
    slope = float(model.demand.slope(policy.p))
    return -lam - policy.p * slope + model.h0 * slope * (queue_term + 1.0 / policy.mu)


def mu_partial(model: MarketModel, policy: Policy, queue_term: float) -> float:
    lam = model.rate(policy.p)
    return float(model.cost.slope(policy.mu)) - model.h0 * (lam / policy.mu) * (queue_term + 1.0 / policy.mu)


def steady_partials_oracle(model: MarketModel, policy: Policy, mean_W: float, mean_X: float) -> np.ndarray:
    """Exact (df/dmu, df/dp) at the supplied steady means"""
    if mean_W < 0 or mean_X < 0:
        raise ValueError(f"steady means must be >= 0, got ({mean_W}, {mean_X})")
    queue_term = mean_W + mean_X
    return np.array([mu_partial(model, policy, queue_term), price_partial(model, policy, queue_term)])


def draw_coordinate(coin_stream: RandomStream, live: Iterable[Coordinate] = BOTH) -> Coordinate:
    live = tuple(live)
    if len(live) == 1:
        return live[0]
    return Coordinate.PRICE if coin_stream.uniform() < 0.5 else Coordinate.MU


def estimate_gradient(model: MarketModel, policy: Policy, record: CycleRecord, xi: float,
                      coin_stream: RandomStream, live: Iterable[Coordinate] = BOTH) -> GradientEstimate:
    average = tail_mean(record, xi)
    coordinate = draw_coordinate(coin_stream, live)
    h = np.zeros(2)
    if coordinate == Coordinate.PRICE:
        h[1] = price_partial(model, policy, average)
    else:
        h[0] = mu_partial(model, policy, average)
    return GradientEstimate(h, coordinate, average)
