"""Monte Carlo regret: cumulative regret against the served-customer clock, its
transient/suboptimality split, the sqrt-regret vs log(M_L) fit, and the
heavy-traffic scaling sweep.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.stats import linregress

from controller import Schedule, Trajectory, default_window, freeze, run_replications
from exceptions import ConfigError, OracleError
from market_model import MarketModel, Policy

logger = logging.getLogger(__name__)

REGRET_COLUMNS = ["checkpoint", "M_L", "regret_mean", "regret_se", "sqrt_regret"]
SUMMARY_COLUMNS = ["c", "d", "r2", "replications"]
DECOMPOSITION_COLUMNS = ["checkpoint", "M_L", "r1_mean", "r1_se", "r2_mean", "r2_se"]
HEAVY_TRAFFIC_COLUMNS = ["n", "p_n", "mu_n_over_n", "rho_n"]

# share of early checkpoints left out of the regression
FIT_SKIP = 0.2
# customers served at the optimum before a control replication starts
CONTROL_WARM_UP = 5000


def _mean_se(samples: np.ndarray):
    """Column means and standard errors over replications (rows)"""
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])
    return mean, se


class RegretFit(NamedTuple):
    c: float
    d: float
    r2: float
    first_checkpoint: int


def fit_sqrt_regret(served: np.ndarray, regret_mean: np.ndarray, skip: float = FIT_SKIP) -> RegretFit:
    """Least squares sqrt(R) = c * ln(M_L) + d over checkpoints past the first `skip` share"""
    start = int(math.floor(skip * served.shape[0]))
    x = np.log(served[start:])
    y = np.sqrt(np.maximum(regret_mean[start:], 0.0))
    if x.shape[0] < 3:
        return RegretFit(math.nan, math.nan, math.nan, start + 1)
    fit = linregress(x, y)
    return RegretFit(float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2), start + 1)


@dataclass(eq=False)
class RegretDecomposition:
    """Cumulative transient (R1) and suboptimality (R2) regret, averaged over replications"""
    r1_mean: np.ndarray
    r1_se: np.ndarray
    r2_mean: np.ndarray
    r2_se: np.ndarray


@dataclass(eq=False)
class RegretReport:
    served: np.ndarray
    regret_mean: np.ndarray
    regret_se: np.ndarray
    fit: RegretFit
    replications: int
    decomposition: Optional[RegretDecomposition] = None

    @property
    def sqrt_regret(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.regret_mean, 0.0))

    def rows(self):
        sqrt_regret = self.sqrt_regret
        for k in range(self.served.shape[0]):
            yield [k + 1, int(self.served[k]), self.regret_mean[k], self.regret_se[k], sqrt_regret[k]]

    def summary_row(self):
        return [self.fit.c, self.fit.d, self.fit.r2, self.replications]

    def decomposition_rows(self):
        if self.decomposition is None:
            return
        dec = self.decomposition
        for k in range(self.served.shape[0]):
            yield [k + 1, int(self.served[k]), dec.r1_mean[k], dec.r1_se[k], dec.r2_mean[k], dec.r2_se[k]]


def _excess(trajectory: Trajectory, optimal_value: float) -> np.ndarray:
    return trajectory.cost - optimal_value * trajectory.t


def _check_controls(trajectories, controls):
    if controls is not None and len(controls) != len(trajectories):
        raise ValueError(f"need one control per replication, got {len(controls)} for {len(trajectories)}")


def regret_samples(trajectories: Sequence[Trajectory], optimal_value: float,
                   controls: Optional[Sequence[Trajectory]] = None) -> np.ndarray:
    """Cumulative regret per replication (rows) and checkpoint (columns).

    A control is a replication pinned at the optimum on the same arrival and
    service variates; its excess cost has mean zero and is subtracted cycle by cycle.
    """
    _check_controls(trajectories, controls)
    rows = []
    for r, traj in enumerate(trajectories):
        excess = _excess(traj, optimal_value)
        if controls is not None:
            excess = excess - _excess(controls[r], optimal_value)
        rows.append(np.cumsum(excess))
    return np.vstack(rows)


def decompose_regret(trajectories: Sequence[Trajectory], model: MarketModel, optimal_value: float,
                     oracle_f: Optional[Callable[[float, float], float]],
                     controls: Optional[Sequence[Trajectory]] = None) -> RegretDecomposition:
    """R2 charges the analytic gap of the played policy over each cycle's clock time; R1 is the rest"""
    if oracle_f is None:
        raise OracleError("decomposition requires oracle")
    if len(trajectories) < 2:
        raise ValueError("decomposition needs at least 2 replications")
    _check_controls(trajectories, controls)
    r1, r2 = [], []
    for r, traj in enumerate(trajectories):
        f_played = np.array([oracle_f(mu, p) for mu, p in zip(traj.mu, traj.p)])
        if not np.all(np.isfinite(f_played)):
            # unstable played policies have no finite steady loss
            logger.warning("trajectory visits unstable policies; R1/R2 split is undefined there")
        transient = traj.cost - f_played * traj.t
        if controls is not None:
            transient = transient - _excess(controls[r], optimal_value)
        r2.append(np.cumsum((f_played - optimal_value) * traj.t))
        r1.append(np.cumsum(transient))
    r1_mean, r1_se = _mean_se(np.vstack(r1))
    r2_mean, r2_se = _mean_se(np.vstack(r2))
    return RegretDecomposition(r1_mean, r1_se, r2_mean, r2_se)


def regret_report(trajectories: Sequence[Trajectory], model: MarketModel, optimal_value: float,
                  oracle_f=None, skip: float = FIT_SKIP,
                  controls: Optional[Sequence[Trajectory]] = None) -> RegretReport:
    if len(trajectories) < 2:
        raise ValueError(f"regret estimation needs at least 2 replications, got {len(trajectories)}")
    served = trajectories[0].served
    mean, se = _mean_se(regret_samples(trajectories, optimal_value, controls))
    fit = fit_sqrt_regret(served, mean, skip)
    decomposition = None
    if oracle_f is not None:
        decomposition = decompose_regret(trajectories, model, optimal_value, oracle_f, controls)
    logger.info("regret fit over checkpoints %d..%d: c=%.4f d=%.4f R^2=%.4f",
                fit.first_checkpoint, served.shape[0], fit.c, fit.d, fit.r2)
    return RegretReport(served, mean, se, fit, len(trajectories), decomposition)


def control_replications(model: MarketModel, schedule: Schedule, optimal_policy: Policy, seed: int,
                         replications: int, threads: int = 1, warm_up: int = CONTROL_WARM_UP,
                         **run_kwargs) -> List[Trajectory]:
    """Replications frozen at the optimum, started near stationarity, sharing each learner's variates"""
    kwargs = {k: v for k, v in run_kwargs.items() if k in ("arrival_spec", "service_spec", "progress")}
    return run_replications(model, schedule, optimal_policy, seed, replications, threads,
                            mode=freeze("mu", "price"), warm_start=warm_up, **kwargs)


def estimate_regret(model: MarketModel, schedule: Schedule, initial_policy: Policy, optimum, replications: int,
                    seed: int, threads: int = 1, oracle_f=None, paired: bool = True, **run_kwargs) -> RegretReport:
    """`optimum` is the (Policy, value) pair from the analytic optimizer or a trusted external value.

    With `paired` every replication is matched with a control run at the optimum
    on common random numbers.
    """
    if replications < 2:
        raise ValueError(f"regret estimation needs at least 2 replications, got {replications}")
    optimal_policy, optimal_value = optimum
    trajectories = run_replications(model, schedule, initial_policy, seed, replications, threads,
                                    optimum=optimal_policy, **run_kwargs)
    controls = None
    if paired:
        controls = control_replications(model, schedule, optimal_policy, seed, replications, threads, **run_kwargs)
    return regret_report(trajectories, model, optimal_value, oracle_f, controls=controls)


class HeavyTrafficRow(NamedTuple):
    n: int
    p_n: float
    mu_n_over_n: float
    rho_n: float


def scaled_schedule(template: Schedule, ratio: float) -> Schedule:
    """Cycle lengths grow with the system; steps act on the normalized (mu/ratio, p) problem"""
    return replace(template, d0=template.d0 * ratio, d_log=template.d_log * ratio,
                   mu_gain=template.mu_gain * ratio, p_gain=template.p_gain / ratio)


def heavy_traffic_sweep(base_model: MarketModel, scales: Sequence[int], schedule_template: Schedule,
                        replications: int, seed: int, initial_policy: Policy, base_size: float = None,
                        window=None, threads: int = 1, **run_kwargs) -> List[HeavyTrafficRow]:
    """Controller averages of (p, mu) over the late window for each market size n.

    `base_size` is the market size the base model describes (the demand curve's M0
    when not given); the initial staffing level is scaled with the system.
    """
    if base_size is None:
        base_size = getattr(base_model.demand, "M0", None)
        if base_size is None:
            raise ConfigError(f"{type(base_model.demand).__name__} has no market size; pass base_size")
    if not base_size > 0:
        raise ConfigError(f"base_size must be > 0, got {base_size}")
    first, last = window or default_window(schedule_template.cycles)
    rows = []
    for n in scales:
        ratio = n / base_size
        model = base_model.scaled(ratio)
        schedule = scaled_schedule(schedule_template, ratio)
        start = Policy(initial_policy.mu * ratio, initial_policy.p)
        trajectories = run_replications(model, schedule, start, seed, replications, threads, **run_kwargs)
        means = [t.window_mean(first, last) for t in trajectories]
        p_n = float(np.mean([m.p for m in means]))
        mu_n = float(np.mean([m.mu for m in means]))
        rho_n = model.rate(p_n) / mu_n
        logger.info("n=%d: p_n=%.4f mu_n=%.4f rho_n=%.4f", n, p_n, mu_n, rho_n)
        rows.append(HeavyTrafficRow(int(n), p_n, mu_n / n, rho_n))
    return rows
