"""Online projected SGD over (mu, p): run a cycle, estimate the gradient, step, project."""
import logging
import math
import sys
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from distributions import EXPONENTIAL, UnitVariateSpec
from exceptions import ConfigError, DivergenceError
from gradient import BOTH, Coordinate, estimate_gradient
from market_model import MarketModel, Policy, project
from queue_engine import CycleState, SimulationStreams, run_cycle, warm_state

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ["cycle", "mu", "p", "h_mu", "h_p", "D_k", "T_k", "cost", "M_k"]


@dataclass(frozen=True)
class Schedule:
    d0: float
    d_log: float
    eta0: float
    xi: float = 0.5
    cycles: int = 500
    mu_gain: float = 1.0
    p_gain: float = 1.0
    constant_eta: bool = False

    def __post_init__(self):
        errors = []
        if self.d0 < 1:
            errors.append(f"schedule.d0 must be >= 1, got {self.d0}")
        if self.d_log < 0:
            errors.append(f"schedule.d_log must be >= 0, got {self.d_log}")
        if self.eta0 <= 0:
            errors.append(f"schedule.eta0 must be > 0, got {self.eta0}")
        if not 0 < self.xi < 1:
            errors.append(f"schedule.xi must lie in (0, 1), got {self.xi}")
        if self.cycles < 1:
            errors.append(f"schedule.cycles must be >= 1, got {self.cycles}")
        if self.mu_gain <= 0 or self.p_gain <= 0:
            errors.append("schedule gains must be > 0")
        if errors:
            raise ConfigError(errors)

    def cycle_length(self, k: int) -> int:
        return int(math.ceil(self.d0 + self.d_log * math.log(k)))

    def step_size(self, k: int) -> float:
        return self.eta0 if self.constant_eta else self.eta0 / k

    @property
    def gains(self) -> np.ndarray:
        return np.array([self.mu_gain, self.p_gain])


@dataclass(frozen=True)
class Mode:
    """Which coordinates the controller is allowed to move"""
    frozen: frozenset = frozenset()

    @property
    def live(self) -> Tuple[Coordinate, ...]:
        return tuple(c for c in BOTH if c not in self.frozen)

    @property
    def label(self) -> str:
        if not self.frozen:
            return "joint"
        return "freeze " + "+".join(sorted(c.value for c in self.frozen))


JOINT = Mode()


def freeze(*coordinates) -> Mode:
    try:
        return Mode(frozenset(Coordinate(c) for c in coordinates))
    except ValueError:
        raise ConfigError(f"can only freeze 'price' or 'mu', got {coordinates}")


@dataclass(eq=False)
class Trajectory:
    mu: np.ndarray
    p: np.ndarray
    h_mu: np.ndarray
    h_p: np.ndarray
    d: np.ndarray
    t: np.ndarray
    cost: np.ndarray
    rho: np.ndarray
    # squared distance to the optimum, only when one was supplied
    distance: Optional[np.ndarray] = None
    trace: List[list] = field(default_factory=list)

    @property
    def cycles(self) -> int:
        return self.mu.shape[0]

    @property
    def served(self) -> np.ndarray:
        return np.cumsum(self.d)

    def window_mean(self, first: int, last: int) -> Policy:
        """Average policy over cycles first..last (1-based, inclusive)"""
        sl = slice(first - 1, last)
        return Policy(float(self.mu[sl].mean()), float(self.p[sl].mean()))

    def rows(self):
        served = self.served
        for k in range(self.cycles):
            yield [k + 1, self.mu[k], self.p[k], self.h_mu[k], self.h_p[k], int(self.d[k]), self.t[k],
                   self.cost[k], int(served[k])]


def default_window(cycles: int) -> Tuple[int, int]:
    """Cycles 300-500 on a 500-cycle run, the same proportion otherwise"""
    return max(1, int(round(0.6 * cycles))), cycles


def run(model: MarketModel, schedule: Schedule, initial_policy: Policy, seed: int, *, replication: int = 0,
        arrival_spec: UnitVariateSpec = EXPONENTIAL, service_spec: UnitVariateSpec = EXPONENTIAL,
        mode: Mode = JOINT, warm_start: int = 0, optimum: Policy = None, keep_trace: bool = False) -> Trajectory:
    streams = SimulationStreams.for_replication(seed, replication, arrival_spec, service_spec)
    x = project(model.box, initial_policy)
    live = mode.live
    gains = schedule.gains
    if warm_start:
        state = warm_state(model, x, warm_start, streams)
    else:
        state = CycleState.empty(model, x)

    L = schedule.cycles
    out = {name: np.empty(L) for name in ("mu", "p", "h_mu", "h_p", "t", "cost", "rho")}
    d_used = np.empty(L, dtype=np.int64)
    trace = []
    for k in range(1, L + 1):
        d_k = schedule.cycle_length(k)
        record = run_cycle(model, x, d_k, state, streams)
        if keep_trace:
            trace.extend(record.trace_rows(k))
        h = np.zeros(2)
        if live:
            h = estimate_gradient(model, x, record, schedule.xi, streams.coin, live).h

        i = k - 1
        out["mu"][i], out["p"][i] = x.mu, x.p
        out["h_mu"][i], out["h_p"][i] = h
        out["t"][i], out["cost"][i] = record.t_k, record.cost
        out["rho"][i] = model.utilization(x)
        d_used[i] = d_k

        raw = x.as_array() - schedule.step_size(k) * gains * h
        if not np.all(np.isfinite(raw)):
            raise DivergenceError(f"policy became non-finite at cycle {k}: {raw}")
        x = project(model.box, raw)
        state = record.next_state

    distance = None
    if optimum is not None:
        distance = (out["mu"] - optimum.mu) ** 2 + (out["p"] - optimum.p) ** 2
    logger.debug("replication %d finished at mu=%.4f p=%.4f", replication, x.mu, x.p)
    return Trajectory(out["mu"], out["p"], out["h_mu"], out["h_p"], d_used, out["t"], out["cost"], out["rho"],
                      distance, trace)


def _run_task(task):
    args, kwargs = task
    return run(*args, **kwargs)


def run_replications(model: MarketModel, schedule: Schedule, initial_policy: Policy, seed: int, replications: int,
                     threads: int = 1, progress: bool = None, **kwargs) -> List[Trajectory]:
    """Independent controller runs, returned in replication order"""
    tasks = [((model, schedule, initial_policy, seed), dict(kwargs, replication=r)) for r in range(replications)]
    if progress is None:
        progress = sys.stdout.isatty()
    if threads <= 1 or replications == 1:
        return [_run_task(t) for t in tqdm(tasks, desc="replications", disable=not progress)]
    with Pool(processes=min(threads, replications)) as pool:
        return list(tqdm(pool.imap(_run_task, tasks), total=len(tasks), desc="replications", disable=not progress))
