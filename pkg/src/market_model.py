"""Economics of the priced single-server queue: demand, staffing cost, feasible box, objective."""
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Protocol, Sequence, Union

import numpy as np

from exceptions import ConfigError

logger = logging.getLogger(__name__)


# Built-in curves as plain functions; the curve classes below delegate to them

def logistic_demand(p, M0, a):
    """M0 * exp(a-p) / (1 + exp(a-p))"""
    return M0 / (1.0 + np.exp(p - a))


def logistic_demand_slope(p, M0, a):
    e = np.exp(a - p)
    return -M0 * e / (1.0 + e) ** 2


def quadratic_cost(mu, c0):
    return c0 * mu ** 2


def quadratic_cost_slope(mu, c0):
    return 2.0 * c0 * mu


def linear_cost(mu, c0):
    return c0 * mu


def _like(x, value):
    """`value` shaped like the scalar or array `x`"""
    return value if np.ndim(x) == 0 else np.full(np.shape(x), value, dtype=float)


class DemandCurve(Protocol):
    def rate(self, p): ...

    def slope(self, p): ...

    def curvature(self, p): ...

    def scaled(self, factor: float) -> "DemandCurve": ...


class CostCurve(Protocol):
    def cost(self, mu): ...

    def slope(self, mu): ...

    def rescaled(self, factor: float) -> "CostCurve": ...


@dataclass(frozen=True)
class LogisticDemand:
    M0: float
    a: float

    def __post_init__(self):
        if self.M0 <= 0:
            raise ConfigError(f"demand.M0 must be > 0, got {self.M0}")

    def rate(self, p):
        return logistic_demand(p, self.M0, self.a)

    def slope(self, p):
        return logistic_demand_slope(p, self.M0, self.a)

    def curvature(self, p):
        s = 1.0 / (1.0 + np.exp(p - self.a))
        return self.M0 * s * (1.0 - s) * (1.0 - 2.0 * s)

    def scaled(self, factor):
        return replace(self, M0=self.M0 * factor)


@dataclass(frozen=True)
class ConstantDemand:
    """Price-insensitive arrivals, for staffing-only studies"""
    level: float

    def __post_init__(self):
        if self.level <= 0:
            raise ConfigError(f"demand.rate must be > 0, got {self.level}")

    def rate(self, p):
        return _like(p, self.level)

    def slope(self, p):
        return _like(p, 0.0)

    def curvature(self, p):
        return self.slope(p)

    def scaled(self, factor):
        return replace(self, level=self.level * factor)


@dataclass(frozen=True)
class LinearDemand:
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta < 0:
            raise ConfigError(f"linear demand needs alpha > 0 and beta >= 0, got ({self.alpha}, {self.beta})")

    def rate(self, p):
        return np.maximum(self.alpha - self.beta * p, 0.0)

    def slope(self, p):
        return np.where(self.alpha - self.beta * np.asarray(p, dtype=float) > 0, -self.beta, 0.0)[()]

    def curvature(self, p):
        return _like(p, 0.0)

    def scaled(self, factor):
        return replace(self, alpha=self.alpha * factor, beta=self.beta * factor)


@dataclass(frozen=True)
class ExponentialDemand:
    a: float
    b: float

    def __post_init__(self):
        if self.b <= 0:
            raise ConfigError(f"exponential demand needs b > 0, got {self.b}")

    def rate(self, p):
        return np.exp(self.a - self.b * p)

    def slope(self, p):
        return -self.b * self.rate(p)

    def curvature(self, p):
        return self.b ** 2 * self.rate(p)

    def scaled(self, factor):
        return replace(self, a=self.a + math.log(factor))


@dataclass(frozen=True)
class QuadraticCost:
    """weight * c0 * (mu / scale)^2; see `rescaled` for how scale and weight move together"""
    c0: float
    scale: float = 1.0
    weight: float = 1.0

    def __post_init__(self):
        if self.c0 < 0:
            raise ConfigError(f"cost.c0 must be >= 0, got {self.c0}")

    def cost(self, mu):
        return self.weight * quadratic_cost(mu / self.scale, self.c0)

    def slope(self, mu):
        return self.weight * quadratic_cost_slope(mu / self.scale, self.c0) / self.scale

    def rescaled(self, factor):
        """The bill for a system `factor` times larger.

        Capacity is measured per base-size unit and the bill grows like sqrt(factor):
        faster than the O(1) holding cost and slower than the O(factor) revenue, which
        is the regime where the optimal utilization tends to one.
        """
        return replace(self, scale=self.scale * factor, weight=self.weight * math.sqrt(factor))


@dataclass(frozen=True)
class LinearCost:
    c0: float
    scale: float = 1.0
    weight: float = 1.0

    def __post_init__(self):
        if self.c0 < 0:
            raise ConfigError(f"cost.c0 must be >= 0, got {self.c0}")

    def cost(self, mu):
        return self.weight * linear_cost(mu / self.scale, self.c0)

    def slope(self, mu):
        return _like(mu, self.weight * self.c0 / self.scale)

    def rescaled(self, factor):
        return replace(self, scale=self.scale * factor, weight=self.weight * math.sqrt(factor))


@dataclass(frozen=True)
class Policy:
    mu: float
    p: float

    def __post_init__(self):
        if not (self.mu > 0 and self.p > 0):
            raise ConfigError(f"policy needs mu > 0 and p > 0, got ({self.mu}, {self.p})")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.p])


@dataclass(frozen=True)
class FeasibleBox:
    mu_lo: float
    mu_hi: float
    p_lo: float
    p_hi: float

    def __post_init__(self):
        errors = []
        if not 0 < self.mu_lo < self.mu_hi:
            errors.append(f"box needs 0 < mu_lo < mu_hi, got [{self.mu_lo}, {self.mu_hi}]")
        if not 0 < self.p_lo < self.p_hi:
            errors.append(f"box needs 0 < p_lo < p_hi, got [{self.p_lo}, {self.p_hi}]")
        if errors:
            raise ConfigError(errors)

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.mu_lo, self.p_lo])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.mu_hi, self.p_hi])

    def contains(self, policy: Policy) -> bool:
        return self.mu_lo <= policy.mu <= self.mu_hi and self.p_lo <= policy.p <= self.p_hi


def project(box: FeasibleBox, raw_policy: Union[Policy, Sequence[float], np.ndarray]) -> Policy:
    """Componentwise clamp of (mu, p) into the box"""
    x = raw_policy.as_array() if isinstance(raw_policy, Policy) else np.asarray(raw_policy, dtype=float)
    clamped = np.clip(x, box.lower, box.upper)
    return Policy(float(clamped[0]), float(clamped[1]))


@dataclass(frozen=True)
class MarketModel:
    demand: DemandCurve
    cost: CostCurve
    h0: float
    box: FeasibleBox

    def __post_init__(self):
        if self.h0 < 0:
            raise ConfigError(f"h0 must be >= 0, got {self.h0}")

    def rate(self, p: float) -> float:
        return float(self.demand.rate(p))

    def utilization(self, policy: Policy) -> float:
        return self.rate(policy.p) / policy.mu

    def scaled(self, factor: float) -> "MarketModel":
        """The same economics for a system `factor` times larger (heavy-traffic scaling)"""
        box = replace(self.box, mu_lo=self.box.mu_lo * factor, mu_hi=self.box.mu_hi * factor)
        return replace(self, demand=self.demand.scaled(factor), cost=self.cost.rescaled(factor), box=box)


def objective_via_waiting(model: MarketModel, policy: Policy, mean_W: float, mean_service_slot: float = None) -> float:
    """Steady profit loss through Little's law: h0*lambda*(E[W] + E[S]) + c(mu) - p*lambda"""
    if mean_W < 0:
        raise ValueError(f"mean_W must be >= 0, got {mean_W}")
    if mean_service_slot is None:
        mean_service_slot = 1.0 / policy.mu
    lam = model.rate(policy.p)
    return model.h0 * lam * (mean_W + mean_service_slot) + float(model.cost.cost(policy.mu)) - policy.p * lam


def objective_via_queue(model: MarketModel, policy: Policy, mean_Q_system: float) -> float:
    lam = model.rate(policy.p)
    return model.h0 * mean_Q_system + float(model.cost.cost(policy.mu)) - policy.p * lam


def check_assumptions(model: MarketModel, grid_points: int = 201) -> List[str]:
    """Grid checks of the modelling assumptions.

    Monotonicity failures raise; uniform stability and the sufficient convexity
    condition on the price coordinate only produce warnings.
    """
    box = model.box
    prices = np.linspace(box.p_lo, box.p_hi, grid_points)
    rates = np.asarray(model.demand.rate(prices), dtype=float)
    errors = []
    if np.any(np.diff(rates) > 1e-12 * max(1.0, float(np.max(rates)))):
        errors.append("demand must be non-increasing in price on the box")
    mus = np.linspace(box.mu_lo, box.mu_hi, grid_points)
    costs = np.asarray(model.cost.cost(mus), dtype=float)
    if np.any(np.diff(costs) < -1e-12 * max(1.0, float(np.max(np.abs(costs))))):
        errors.append("staffing cost must be non-decreasing in mu on the box")
    if errors:
        raise ConfigError(errors)

    warnings = []
    lam_max = model.rate(box.p_lo)
    if not lam_max < box.mu_lo:
        warnings.append(f"box is not uniformly stable: lambda(p_lo)={lam_max:.4g} >= mu_lo={box.mu_lo:.4g}")
    slope = np.asarray(model.demand.slope(prices), dtype=float)
    curvature = np.asarray(model.demand.curvature(prices), dtype=float)
    bad = 2.0 * slope + prices * curvature > 1e-12
    if np.any(bad):
        warnings.append("demand-side convexity condition 2*lambda'(p) + p*lambda''(p) <= 0 fails for "
                        f"p in [{prices[bad].min():.3g}, {prices[bad].max():.3g}]")
    for message in warnings:
        logger.warning(message)
    return warnings
