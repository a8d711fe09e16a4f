"""Ground-truth references: closed-form steady states, the exact optimizer, finite differences,
and long-run simulation estimates.
"""
import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from distributions import Family, Purpose, RandomStream, UnitVariateSpec, draw_many
from exceptions import OracleError
from gradient import Coordinate
from market_model import MarketModel, Policy, objective_via_queue
from queue_engine import lindley_path

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SteadyStateSummary:
    mean_W: float
    mean_X: float
    mean_Q_system: float
    rho: float
    se_W: float = math.nan
    se_X: float = math.nan


SteadyFn = Callable[[float, float], SteadyStateSummary]


def _check_stable(lam, mu):
    if lam < 0 or mu <= 0:
        raise OracleError(f"rates must satisfy lambda >= 0, mu > 0, got ({lam}, {mu})")
    if lam >= mu:
        raise OracleError(f"unstable queue: rho = {lam / mu:.4g} >= 1")


def mm1_steady(lam: float, mu: float) -> SteadyStateSummary:
    _check_stable(lam, mu)
    rho = lam / mu
    mean_W = lam / (mu * (mu - lam))
    # E[X] = -mu * dE[W]/dmu - E[W]
    mean_X = lam * (2.0 * mu - lam) / (mu * (mu - lam) ** 2) - mean_W
    return SteadyStateSummary(mean_W, mean_X, rho / (1.0 - rho), rho)


def mg1_steady(lam: float, mu: float, scv_service: float) -> SteadyStateSummary:
    """Pollaczek-Khinchine means; E[X] from the same mu-derivative identity"""
    _check_stable(lam, mu)
    rho = lam / mu
    mean_W = lam * (1.0 + scv_service) / (2.0 * mu ** 2 * (1.0 - rho))
    mean_X = lam * (1.0 + scv_service) / (2.0 * (mu - lam) ** 2)
    return SteadyStateSummary(mean_W, mean_X, lam * mean_W + rho, rho)


def oracle_for(arrival_spec: UnitVariateSpec, service_spec: UnitVariateSpec) -> Optional[SteadyFn]:
    """The closed form matching the workload, or None when no closed form exists"""
    if arrival_spec.family != Family.EXPONENTIAL:
        return None
    if service_spec.family == Family.EXPONENTIAL:
        return mm1_steady
    return functools.partial(mg1_steady, scv_service=service_spec.scv)


def analytic_objective(model: MarketModel, steady_fn: SteadyFn) -> Callable[[float, float], float]:
    """f(mu, p) from a closed form; +inf off the stable region"""
    def f(mu, p):
        lam = model.rate(p)
        if not mu > lam:
            return math.inf
        summary = steady_fn(lam, mu)
        return objective_via_queue(model, Policy(mu, p), summary.mean_Q_system)
    return f


def mm1_objective(model: MarketModel, policy: Policy) -> float:
    return analytic_objective(model, mm1_steady)(policy.mu, policy.p)


def mg1_objective(model: MarketModel, policy: Policy, scv_service: float) -> float:
    return analytic_objective(model, functools.partial(mg1_steady, scv_service=scv_service))(policy.mu, policy.p)


def optimize_analytic(model: MarketModel, steady_fn: SteadyFn, grid: int = 200, refine_tol: float = 1e-6,
                      frozen: Iterable[Coordinate] = (), anchor: Policy = None,
                      stability_margin: float = 1e-6) -> Tuple[Policy, float]:
    """Grid search over the box, then Nelder-Mead refinement of the free coordinates.

    Frozen coordinates are held at `anchor`'s value.
    """
    frozen = set(frozen)
    if frozen and anchor is None:
        raise OracleError("frozen coordinates need an anchor policy")
    f = analytic_objective(model, steady_fn)
    box = model.box
    mus = [anchor.mu] if Coordinate.MU in frozen else np.linspace(box.mu_lo, box.mu_hi, grid)
    ps = [anchor.p] if Coordinate.PRICE in frozen else np.linspace(box.p_lo, box.p_hi, grid)

    best = (math.inf, None, None)
    for mu in mus:
        for p in ps:
            value = f(mu, p)
            if value < best[0]:
                best = (value, float(mu), float(p))
    if best[1] is None:
        raise OracleError("no stable policy on the grid")
    _, mu0, p0 = best

    free = [c for c in (Coordinate.MU, Coordinate.PRICE) if c not in frozen]
    if free:
        bounds = {Coordinate.MU: (box.mu_lo, box.mu_hi), Coordinate.PRICE: (box.p_lo, box.p_hi)}
        start = {Coordinate.MU: mu0, Coordinate.PRICE: p0}

        def unpack(z):
            values = dict(zip(free, z))
            return values.get(Coordinate.MU, mu0), values.get(Coordinate.PRICE, p0)

        result = minimize(lambda z: f(*unpack(z)), x0=[start[c] for c in free], method="Nelder-Mead",
                          bounds=[bounds[c] for c in free],
                          options={"xatol": refine_tol, "fatol": 1e-14, "maxiter": 20000, "maxfev": 40000})
        mu0, p0 = unpack(result.x)

    policy = Policy(float(mu0), float(p0))
    rho = model.utilization(policy)
    if rho > 1.0 - stability_margin:
        raise OracleError(f"minimizer sits on the stability boundary (rho = {rho:.6g})")
    value = f(policy.mu, policy.p)
    logger.info("analytic optimum mu*=%.5f p*=%.5f f*=%.6f rho*=%.4f", policy.mu, policy.p, value, rho)
    return policy, value


def fd_gradient(model: MarketModel, steady_fn: SteadyFn, policy: Policy, step: float = 1e-4) -> np.ndarray:
    """Central differences of the analytic objective, ordered (d/dmu, d/dp)"""
    f = analytic_objective(model, steady_fn)
    d_mu = (f(policy.mu + step, policy.p) - f(policy.mu - step, policy.p)) / (2.0 * step)
    d_p = (f(policy.mu, policy.p + step) - f(policy.mu, policy.p - step)) / (2.0 * step)
    return np.array([d_mu, d_p])


def sample_path(model: MarketModel, policy: Policy, spec_arrival: UnitVariateSpec, spec_service: UnitVariateSpec,
                customers: int, stream: RandomStream):
    """Waits and busy ages of `customers` arrivals from an empty system at a fixed policy"""
    lam = model.rate(policy.p)
    gaps = draw_many(spec_arrival, stream.for_purpose(Purpose.ARRIVALS), customers) / lam
    services = draw_many(spec_service, stream.for_purpose(Purpose.SERVICES), customers) / policy.mu
    waits, ages, _ = lindley_path(0.0, 0.0, services, gaps)
    return waits, ages


def _batch_se(values: np.ndarray, batches: int) -> float:
    if batches < 2:
        return math.nan
    usable = values[: values.shape[0] // batches * batches]
    means = usable.reshape(batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def simulate_steady(model: MarketModel, policy: Policy, spec_arrival: UnitVariateSpec,
                    spec_service: UnitVariateSpec, warmup: int, samples: int, stream: RandomStream,
                    batches: int = 50) -> SteadyStateSummary:
    """Burn-in estimate of the steady means with batch-means standard errors.

    Short runs use one batch per sample; below two batches the errors are NaN.
    """
    if warmup < 1 or samples < 1:
        raise ValueError(f"need warmup >= 1 and samples >= 1, got ({warmup}, {samples})")
    batches = min(batches, samples)
    lam = model.rate(policy.p)
    rho = lam / policy.mu
    if rho >= 1:
        logger.warning("simulating an overloaded queue (rho = %.3f); sample means will not settle", rho)
    waits, ages = sample_path(model, policy, spec_arrival, spec_service, warmup + samples, stream)
    waits, ages = waits[warmup:], ages[warmup:]
    mean_W = float(waits.mean())
    return SteadyStateSummary(mean_W, float(ages.mean()), lam * mean_W + rho, rho,
                              _batch_se(waits, batches), _batch_se(ages, batches))
