"""Process settings from .env and validated experiment files from configs/*.json."""
import json
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv

from controller import JOINT, Mode, Schedule, freeze
from distributions import UnitVariateSpec, make_spec
from exceptions import ConfigError
from market_model import (ConstantDemand, ExponentialDemand, FeasibleBox, LinearCost, LinearDemand, LogisticDemand,
                          MarketModel, Policy, QuadraticCost)

# Load environment variables from parent directory
dotenv_path = os.path.join(os.path.dirname(__file__), '..', '.env')
load_dotenv(dotenv_path)

DEFAULT_SEED = 2021


@dataclass(frozen=True)
class Settings:
    """QUEUE_LAB_* environment values; None where the environment is silent"""
    log_level: str
    out_dir: Optional[str]
    threads: Optional[int]
    seed: Optional[int]

    @classmethod
    def from_env(cls) -> "Settings":
        try:
            threads = os.getenv('QUEUE_LAB_THREADS')
            seed = os.getenv('QUEUE_LAB_SEED')
            threads = max(1, int(threads)) if threads else None
            seed = int(seed) if seed else None
        except ValueError as e:
            raise ConfigError(f"bad QUEUE_LAB_* value in environment: {e}")
        return cls(log_level=os.getenv('QUEUE_LAB_LOG_LEVEL', 'INFO').upper(),
                   out_dir=os.getenv('QUEUE_LAB_OUT_DIR') or None,
                   threads=threads,
                   seed=seed)


def resolve(flag, env, file_value, default=None):
    """CLI flag over .env over the experiment file"""
    for value in (flag, env, file_value):
        if value is not None:
            return value
    return default


@dataclass(frozen=True)
class RunOptions:
    replications: int = 100
    seed: int = DEFAULT_SEED
    threads: Optional[int] = None
    warm_start: int = 0


@dataclass(frozen=True)
class SweepOptions:
    scales: Tuple[int, ...]
    base_size: float
    window: Optional[Tuple[int, int]] = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: MarketModel
    arrival_spec: UnitVariateSpec
    service_spec: UnitVariateSpec
    schedule: Schedule
    initial: Policy
    mode: Mode
    run: RunOptions
    out_dir: str
    trace: bool = False
    oracle: bool = True
    oracle_grid: int = 200
    decompose: bool = True
    # regret against a control replication at the optimum on common random numbers
    paired: bool = True
    sweep: Optional[SweepOptions] = None
    raw: Dict[str, Any] = field(default_factory=dict, repr=False)

    def with_overrides(self, settings: Settings, seed=None, threads=None, out=None) -> "ExperimentConfig":
        run = replace(self.run, seed=resolve(seed, settings.seed, self.run.seed),
                      threads=resolve(threads, settings.threads, self.run.threads, os.cpu_count() or 1))
        env_out = os.path.join(settings.out_dir, self.name) if settings.out_dir else None
        out_dir = resolve(out, env_out, self.out_dir or None, os.path.join("output", self.name))
        return replace(self, run=run, out_dir=out_dir)


class _Collector:
    """Runs builders, turning each ConfigError into messages prefixed by a dotted path"""

    def __init__(self):
        self.errors: List[str] = []

    def build(self, path, builder, *args, **kwargs):
        try:
            return builder(*args, **kwargs)
        except ConfigError as e:
            self.errors.extend(f"{path}: {message}" for message in e.errors)
        except (TypeError, ValueError) as e:
            self.errors.append(f"{path}: {e}")
        return None

    def block(self, parent: dict, key: str, path: str, required: bool = True) -> dict:
        value = parent.get(key)
        if value is None:
            if required:
                self.errors.append(f"{path}: missing")
            return {}
        if not isinstance(value, dict):
            self.errors.append(f"{path}: must be an object")
            return {}
        return value

    def number(self, block: dict, key: str, path: str, default=None, kind=float):
        value = block.get(key, default)
        if value is None:
            self.errors.append(f"{path}.{key}: missing")
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.errors.append(f"{path}.{key}: must be a number, got {value!r}")
            return None
        if kind is int and value != int(value):
            self.errors.append(f"{path}.{key}: must be an integer, got {value!r}")
            return None
        return kind(value)


def _pair(c: _Collector, block: dict, key: str, path: str):
    value = block.get(key)
    if not (isinstance(value, list) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value)):
        c.errors.append(f"{path}.{key}: must be a [low, high] pair")
        return None
    return float(value[0]), float(value[1])


def _demand(c: _Collector, block: dict, path: str):
    family = block.get("family", "logistic")
    if family == "logistic":
        args = (c.number(block, "M0", path), c.number(block, "a", path))
        cls = LogisticDemand
    elif family == "constant":
        args = (c.number(block, "rate", path),)
        cls = ConstantDemand
    elif family == "linear":
        args = (c.number(block, "alpha", path), c.number(block, "beta", path))
        cls = LinearDemand
    elif family == "exponential":
        args = (c.number(block, "a", path), c.number(block, "b", path))
        cls = ExponentialDemand
    else:
        c.errors.append(f"{path}.family: unknown demand family '{family}'")
        return None
    if any(a is None for a in args):
        return None
    return c.build(path, cls, *args)


def _cost(c: _Collector, block: dict, path: str):
    family = block.get("family", "quadratic")
    classes = {"quadratic": QuadraticCost, "linear": LinearCost}
    if family not in classes:
        c.errors.append(f"{path}.family: unknown cost family '{family}'")
        return None
    c0 = c.number(block, "c0", path)
    return None if c0 is None else c.build(path, classes[family], c0)


def _model(c: _Collector, block: dict):
    demand = _demand(c, c.block(block, "demand", "model.demand"), "model.demand")
    cost = _cost(c, c.block(block, "cost", "model.cost"), "model.cost")
    h0 = c.number(block, "h0", "model", default=1.0)
    box_block = c.block(block, "box", "model.box")
    mu_range = _pair(c, box_block, "mu", "model.box")
    p_range = _pair(c, box_block, "p", "model.box")
    box = None
    if mu_range and p_range:
        box = c.build("model.box", FeasibleBox, *mu_range, *p_range)
    if None in (demand, cost, h0, box):
        return None
    return c.build("model", MarketModel, demand, cost, h0, box)


def _variate(c: _Collector, block: dict, path: str):
    if not block:
        return c.build(path, make_spec, "exponential")
    return c.build(path, make_spec, block.get("family", "exponential"), block.get("scv"), block.get("phases"))


def _schedule(c: _Collector, block: dict):
    path = "schedule"
    values = dict(d0=c.number(block, "d0", path), d_log=c.number(block, "d_log", path, default=0.0),
                  eta0=c.number(block, "eta0", path), xi=c.number(block, "xi", path, default=0.5),
                  cycles=c.number(block, "cycles", path, default=500, kind=int),
                  mu_gain=c.number(block, "mu_gain", path, default=1.0),
                  p_gain=c.number(block, "p_gain", path, default=1.0))
    if any(v is None for v in values.values()):
        return None
    return c.build(path, Schedule, constant_eta=bool(block.get("constant_eta", False)), **values)


def _mode(c: _Collector, block: dict):
    frozen = block.get("freeze", [])
    if isinstance(frozen, str):
        frozen = [frozen]
    return c.build("mode.freeze", freeze, *frozen) if frozen else JOINT


def _run(c: _Collector, block: dict):
    path = "run"
    replications = c.number(block, "replications", path, default=100, kind=int)
    seed = c.number(block, "seed", path, default=DEFAULT_SEED, kind=int)
    warm_start = c.number(block, "warm_start", path, default=0, kind=int)
    threads = block.get("threads")
    if threads is not None and (not isinstance(threads, int) or threads < 1):
        c.errors.append(f"run.threads: must be a positive integer, got {threads!r}")
    if replications is not None and replications < 1:
        c.errors.append(f"run.replications: must be >= 1, got {replications}")
    if warm_start is not None and warm_start < 0:
        c.errors.append(f"run.warm_start: must be >= 0, got {warm_start}")
    if None in (replications, seed, warm_start):
        return None
    return RunOptions(replications, seed, threads, warm_start)


def _sweep(c: _Collector, block: dict, model: Optional[MarketModel], schedule: Optional[Schedule]):
    if not block:
        return None
    scales = block.get("scales")
    if not (isinstance(scales, list) and scales and all(isinstance(n, int) and n > 0 for n in scales)):
        c.errors.append("sweep.scales: must be a non-empty list of positive integers")
        return None
    default_size = getattr(model.demand, "M0", None) if model else None
    base_size = c.number(block, "base_size", "sweep", default=default_size)
    if base_size is not None and base_size <= 0:
        c.errors.append(f"sweep.base_size: must be > 0, got {base_size}")
        base_size = None
    window = block.get("window")
    if window is not None:
        window = _pair(c, block, "window", "sweep")
        window = tuple(int(w) for w in window) if window else None
    if window and schedule is not None:
        first, last = window
        if not 1 <= first <= last <= schedule.cycles:
            c.errors.append(f"sweep.window: must satisfy 1 <= first <= last <= {schedule.cycles} cycles, "
                            f"got [{first}, {last}]")
            window = None
    if base_size is None:
        return None
    return SweepOptions(tuple(scales), base_size, window)


def parse_config(data: dict, name: str = "experiment") -> ExperimentConfig:
    """Build and validate every block, raising one ConfigError listing all problems"""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    c = _Collector()
    model = _model(c, c.block(data, "model", "model"))
    dists = c.block(data, "distributions", "distributions", required=False)
    arrival = _variate(c, c.block(dists, "arrival", "distributions.arrival", required=False), "distributions.arrival")
    service = _variate(c, c.block(dists, "service", "distributions.service", required=False), "distributions.service")
    schedule = _schedule(c, c.block(data, "schedule", "schedule"))
    initial_block = c.block(data, "initial", "initial")
    mu0, p0 = c.number(initial_block, "mu", "initial"), c.number(initial_block, "p", "initial")
    initial = c.build("initial", Policy, mu0, p0) if None not in (mu0, p0) else None
    mode = _mode(c, c.block(data, "mode", "mode", required=False))
    run = _run(c, c.block(data, "run", "run", required=False))
    output = c.block(data, "output", "output", required=False)
    oracle = c.block(data, "oracle", "oracle", required=False)
    regret = c.block(data, "regret", "regret", required=False)
    sweep = _sweep(c, c.block(data, "sweep", "sweep", required=False), model, schedule)
    grid = c.number(oracle, "grid", "oracle", default=200, kind=int)
    if c.errors:
        raise ConfigError(c.errors)
    return ExperimentConfig(
        name=data.get("name", name), model=model, arrival_spec=arrival, service_spec=service, schedule=schedule,
        initial=initial, mode=mode, run=run, out_dir=output.get("dir", ""), trace=bool(output.get("trace", False)),
        oracle=bool(oracle.get("enabled", True)), oracle_grid=grid, decompose=bool(regret.get("decompose", True)),
        paired=bool(regret.get("paired", True)),
        sweep=sweep, raw=data)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}")
    name = os.path.splitext(os.path.basename(path))[0]
    return parse_config(data, name)
