"""One operational cycle of the controlled single-server FIFO queue.

Customer 0 is the one that entered service when the previous cycle closed; the
cycle runs until customers 1..d_k have entered service. Waiting times follow the
Lindley recursion and busy ages the observed-busy-time recursion, with the
leftover customers (arrived under the previous price) using the previous
arrival rate.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from numba import njit

from distributions import EXPONENTIAL, Purpose, RandomStream, UnitVariateSpec, draw_many
from exceptions import SimulationError
from market_model import MarketModel, Policy

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["cycle", "n", "wait", "busy_age", "service", "interarrival", "price_paid"]


@njit(cache=True)
def lindley_path(w0, x0, services, gaps):
    """Waits and busy ages for customers 1..d plus the clock time at which customer d enters service.

    services[i] is the service time of the customer ahead (S_i, i = 0..d-1) and
    gaps[i] the interarrival time before customer i+1.
    """
    d = gaps.shape[0]
    waits = np.empty(d)
    ages = np.empty(d)
    w = w0
    x = x0
    arrival = -w0
    for i in range(d):
        w = w + services[i] - gaps[i]
        if w < 0.0:
            w = 0.0
        if w > 0.0:
            x = x + gaps[i]
        else:
            x = 0.0
        arrival += gaps[i]
        waits[i] = w
        ages[i] = x
    return waits, ages, arrival + w


@dataclass(frozen=True)
class SimulationStreams:
    """Per-replication randomness: one stream per purpose plus the variate families"""
    arrivals: RandomStream
    services: RandomStream
    coin: RandomStream
    arrival_spec: UnitVariateSpec = EXPONENTIAL
    service_spec: UnitVariateSpec = EXPONENTIAL

    @classmethod
    def for_replication(cls, seed, replication, arrival_spec=EXPONENTIAL, service_spec=EXPONENTIAL):
        base = RandomStream(seed, replication)
        return cls(base.for_purpose(Purpose.ARRIVALS), base.for_purpose(Purpose.SERVICES),
                   base.for_purpose(Purpose.COIN), arrival_spec, service_spec)

    def warm_up(self) -> "SimulationStreams":
        """Burn-in streams of the same replication, disjoint from the cycle streams"""
        base = RandomStream(self.arrivals.seed, self.arrivals.stream_id)
        return replace(self, arrivals=base.for_purpose(Purpose.WARMUP_ARRIVALS),
                       services=base.for_purpose(Purpose.WARMUP_SERVICES))


@dataclass(frozen=True, eq=False)
class CycleState:
    w0: float
    x0: float
    q_carry: int
    prev_policy: Policy
    prev_rate: float
    # unit interarrivals already drawn for the leftover customers (and possibly beyond)
    carried: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.w0 < 0 or self.x0 < 0 or self.q_carry < 1:
            raise SimulationError(f"invalid carried state w0={self.w0}, x0={self.x0}, q={self.q_carry}")

    @classmethod
    def empty(cls, model: MarketModel, policy: Policy) -> "CycleState":
        return cls(0.0, 0.0, 1, policy, model.rate(policy.p))


@dataclass(frozen=True, eq=False)
class CycleRecord:
    waits: np.ndarray
    busy_ages: np.ndarray
    services: np.ndarray
    interarrivals: np.ndarray
    prices: np.ndarray
    q_k: int
    t_k: float
    d_k: int
    holding: float
    revenue: float
    staffing: float
    next_state: CycleState

    @property
    def cost(self) -> float:
        return self.holding - self.revenue + self.staffing

    def trace_rows(self, cycle: int):
        # service received by customer n is known here only for n < d_k
        for i in range(self.d_k):
            service = self.services[i + 1] if i + 1 < self.d_k else ""
            yield [cycle, i + 1, self.waits[i], self.busy_ages[i], service, self.interarrivals[i], self.prices[i]]


class Leftover(NamedTuple):
    count: int
    draws: np.ndarray


def leftover_count(w0: float, rate_prev: float, stream: RandomStream, spec: UnitVariateSpec = EXPONENTIAL,
                   pending: np.ndarray = None) -> Leftover:
    """Customers present when the carried customer enters service: 1 + arrivals during its wait.

    Every unit interarrival drawn here is returned in order so the cycle reuses
    them as its first interarrival times.
    """
    if w0 < 0 or rate_prev <= 0:
        raise SimulationError(f"leftover count needs w0 >= 0 and a positive rate, got ({w0}, {rate_prev})")
    draws = np.empty(0) if pending is None else np.asarray(pending, dtype=float)
    chunk = max(8, int(2.0 * rate_prev * w0) + 1)
    while True:
        arrived = int(np.searchsorted(np.cumsum(draws / rate_prev), w0, side="right"))
        if arrived < draws.shape[0]:
            return Leftover(1 + arrived, draws)
        draws = np.concatenate([draws, draw_many(spec, stream, chunk)])


def run_cycle(model: MarketModel, policy_k: Policy, d_k: int, state_in: CycleState,
              streams: SimulationStreams) -> CycleRecord:
    if d_k < 1:
        raise SimulationError(f"cycle length must be >= 1, got {d_k}")
    rate_k = model.rate(policy_k.p)
    if not rate_k > 0:
        raise SimulationError(f"demand is zero at price {policy_k.p}; the cycle cannot complete")
    if not model.box.contains(policy_k):
        raise SimulationError(f"policy {policy_k} lies outside the feasible box")

    q = state_in.q_carry
    carried = state_in.carried
    if carried.shape[0] < d_k:
        unit_gaps = np.concatenate([carried, draw_many(streams.arrival_spec, streams.arrivals, d_k - carried.shape[0])])
        pending = None
    else:
        unit_gaps = carried[:d_k]
        pending = carried[d_k:]

    old = np.arange(1, d_k + 1) <= q
    gaps = unit_gaps / np.where(old, state_in.prev_rate, rate_k)
    services = draw_many(streams.service_spec, streams.services, d_k) / policy_k.mu
    waits, ages, t_k = lindley_path(state_in.w0, state_in.x0, services, gaps)
    prices = np.where(old, state_in.prev_policy.p, policy_k.p)

    holding = model.h0 * (waits.sum() + services.sum())
    revenue = float(prices.sum())
    staffing = float(model.cost.cost(policy_k.mu)) * t_k

    w_end = float(waits[-1])
    leftover = leftover_count(w_end, rate_k, streams.arrivals, streams.arrival_spec, pending)
    next_state = CycleState(w_end, float(ages[-1]), leftover.count, policy_k, rate_k, leftover.draws)
    logger.debug("cycle d=%d q=%d t=%.4f wait_end=%.4f", d_k, q, t_k, w_end)
    return CycleRecord(waits, ages, services, gaps, prices, q, float(t_k), d_k,
                       float(holding), revenue, staffing, next_state)


def warm_state(model: MarketModel, policy: Policy, burn_in: int, streams: SimulationStreams) -> CycleState:
    """State after `burn_in` customers at a fixed policy from empty, a stand-in for a stationary start.

    The burn-in draws come from the warm-up streams and only the leftover count
    is drawn from `streams.arrivals`, so customer n of the first cycle sees the
    same unit variates as it would after an empty start.
    """
    state = CycleState.empty(model, policy)
    if burn_in < 1:
        return state
    warmed = run_cycle(model, policy, burn_in, state, streams.warm_up()).next_state
    rate = model.rate(policy.p)
    leftover = leftover_count(warmed.w0, rate, streams.arrivals, streams.arrival_spec)
    return CycleState(warmed.w0, warmed.x0, leftover.count, policy, rate, leftover.draws)
