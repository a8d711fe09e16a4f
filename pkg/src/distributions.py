"""Seeded unit-mean variate generators for interarrival and service times.

Every family is parameterized by its squared coefficient of variation (SCV) and
always has mean 1; the queue engine rescales by the arrival or service rate.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Optional

import numpy as np

from exceptions import ConfigError

logger = logging.getLogger(__name__)


class Family(str, Enum):
    EXPONENTIAL = "exponential"
    HYPEREXP2 = "hyperexp2"
    ERLANG = "erlang"
    LOGNORMAL = "lognormal"
    DETERMINISTIC = "deterministic"


class Purpose(IntEnum):
    """Independent stream roles inside one replication"""
    ARRIVALS = 0
    SERVICES = 1
    COIN = 2
    WARMUP_ARRIVALS = 3
    WARMUP_SERVICES = 4


@dataclass(frozen=True)
class UnitVariateSpec:
    family: Family
    scv: float
    phases: int = 1

    @property
    def light_tailed(self) -> bool:
        return self.family != Family.LOGNORMAL

    @property
    def branch_probability(self) -> float:
        # Balanced-means H2: p1/rate1 == p2/rate2 == 1/2
        return 0.5 * (1.0 + math.sqrt((self.scv - 1.0) / (self.scv + 1.0)))

    @property
    def branch_rates(self):
        p1 = self.branch_probability
        return 2.0 * p1, 2.0 * (1.0 - p1)

    @property
    def log_sigma(self) -> float:
        return math.sqrt(math.log1p(self.scv))

    @property
    def log_location(self) -> float:
        return -0.5 * math.log1p(self.scv)

    def describe(self) -> str:
        if self.family == Family.ERLANG:
            return f"erlang(n={self.phases}, scv={self.scv:g})"
        return f"{self.family.value}(scv={self.scv:g})"


def make_spec(family, scv: Optional[float] = None, phases: Optional[int] = None) -> UnitVariateSpec:
    """Validate a family/SCV pair and return the unit-mean spec"""
    try:
        family = Family(family)
    except ValueError:
        raise ConfigError(f"unknown distribution family '{family}'")

    if scv is not None and scv <= 0 and family != Family.DETERMINISTIC:
        raise ConfigError(f"scv must be > 0, got {scv}")

    if family == Family.EXPONENTIAL:
        if scv is not None and not math.isclose(scv, 1.0):
            raise ConfigError(f"exponential has scv 1, got {scv}")
        return UnitVariateSpec(family, 1.0)

    if family == Family.DETERMINISTIC:
        if scv not in (None, 0, 0.0):
            raise ConfigError(f"deterministic has scv 0, got {scv}")
        return UnitVariateSpec(family, 0.0)

    if family == Family.ERLANG:
        if phases is None and scv is not None:
            phases = round(1.0 / scv)
        if phases is None or int(phases) != phases or phases < 1:
            raise ConfigError(f"erlang needs a positive integer phase count, got {phases}")
        phases = int(phases)
        if scv is not None and not math.isclose(scv, 1.0 / phases, rel_tol=1e-9):
            raise ConfigError(f"erlang with {phases} phases has scv {1.0 / phases:g}, got {scv}")
        return UnitVariateSpec(family, 1.0 / phases, phases)

    if scv is None:
        raise ConfigError(f"{family.value} needs an scv")

    if family == Family.HYPEREXP2:
        if scv <= 1:
            raise ConfigError(f"hyperexp2 needs scv > 1, got {scv}")
        return UnitVariateSpec(family, float(scv))

    spec = UnitVariateSpec(family, float(scv))
    logger.warning("lognormal %s has no moment generating function; light-tail condition does not hold",
                   spec.describe())
    return spec


EXPONENTIAL = UnitVariateSpec(Family.EXPONENTIAL, 1.0)


class RandomStream:
    """Counter-based generator keyed by (seed, stream_id[, purpose]).

    The same key always reproduces the same sequence, and every family consumes a
    fixed number of underlying draws per variate, so the sequence does not depend
    on how callers chunk their requests.
    """

    def __init__(self, seed: int, stream_id: int, purpose: Optional[Purpose] = None):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.purpose = purpose
        key = (self.stream_id,) if purpose is None else (self.stream_id, int(purpose))
        self.generator = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=key)))

    def for_purpose(self, purpose: Purpose) -> "RandomStream":
        return RandomStream(self.seed, self.stream_id, purpose)

    def uniform(self) -> float:
        return float(self.generator.random())

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id}, purpose={self.purpose})"


def draw_many(spec: UnitVariateSpec, stream: RandomStream, size: int) -> np.ndarray:
    gen = stream.generator
    family = spec.family
    if family == Family.EXPONENTIAL:
        return gen.standard_exponential(size)
    if family == Family.ERLANG:
        return gen.gamma(spec.phases, 1.0 / spec.phases, size)
    if family == Family.LOGNORMAL:
        return gen.lognormal(spec.log_location, spec.log_sigma, size)
    if family == Family.DETERMINISTIC:
        return np.ones(size)
    # H2 from interleaved uniform pairs: even picks the branch, odd is inverted
    u = gen.random(2 * size)
    rate1, rate2 = spec.branch_rates
    rates = np.where(u[0::2] < spec.branch_probability, rate1, rate2)
    return -np.log1p(-u[1::2]) / rates


def draw(spec: UnitVariateSpec, stream: RandomStream) -> float:
    return float(draw_many(spec, stream, 1)[0])
