#!/usr/bin/env python3
"""Experiment runner: optimize, regret, sweep and validate subcommands writing CSV artifacts."""
import argparse
import csv
import logging
import math
import os
import sys

import numpy as np

import controller
import oracles
import regret_lab
from config import DEFAULT_SEED, Settings, load_config
from distributions import RandomStream, make_spec
from exceptions import ConfigError, OracleError
from gradient import steady_partials_oracle
from market_model import FeasibleBox, LogisticDemand, MarketModel, Policy, QuadraticCost, check_assumptions, project
from queue_engine import TRACE_COLUMNS, lindley_path

logger = logging.getLogger("queue_lab")

VALIDATE_COLUMNS = ["check", "passed", "measured", "tolerance"]


def write_csv(out_dir, filename, header, rows):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, filename)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    logger.info("wrote %s", path)
    return path


def load_experiment(args, settings):
    if not args.config:
        raise ConfigError("--config is required for this command")
    config = load_config(args.config).with_overrides(settings, args.seed, args.threads, args.out)
    check_assumptions(config.model)
    logger.info("experiment %s: arrivals %s, services %s, mode %s, seed %d, threads %d", config.name,
                config.arrival_spec.describe(), config.service_spec.describe(), config.mode.label,
                config.run.seed, config.run.threads)
    return config


def analytic_optimum(config):
    """(Policy, value, f) from the closed form matching the workload, or None"""
    steady_fn = oracles.oracle_for(config.arrival_spec, config.service_spec)
    if steady_fn is None or not config.oracle:
        logger.info("no analytic oracle for %s/%s arrivals/services", config.arrival_spec.family.value,
                    config.service_spec.family.value)
        return None
    policy, value = oracles.optimize_analytic(config.model, steady_fn, grid=config.oracle_grid,
                                              frozen=config.mode.frozen, anchor=config.initial)
    return policy, value, oracles.analytic_objective(config.model, steady_fn)


def _run_kwargs(config):
    return dict(arrival_spec=config.arrival_spec, service_spec=config.service_spec, mode=config.mode,
                warm_start=config.run.warm_start)


def _mean_trajectory_rows(trajectories):
    stacked = np.stack([np.array(list(t.rows()), dtype=float) for t in trajectories])
    for row in stacked.mean(axis=0):
        yield [int(row[0])] + list(row[1:5]) + [int(row[5]), row[6], row[7], int(row[8])]


def cmd_optimize(config):
    optimum = analytic_optimum(config)
    trajectories = controller.run_replications(
        config.model, config.schedule, config.initial, config.run.seed, config.run.replications, config.run.threads,
        optimum=optimum[0] if optimum else None, **_run_kwargs(config))
    write_csv(config.out_dir, "trajectory.csv", controller.TRAJECTORY_COLUMNS, trajectories[0].rows())
    write_csv(config.out_dir, "trajectory_mean.csv", controller.TRAJECTORY_COLUMNS,
              _mean_trajectory_rows(trajectories))
    if config.trace:
        traced = controller.run(config.model, config.schedule, config.initial, config.run.seed, replication=0,
                                keep_trace=True, **_run_kwargs(config))
        write_csv(config.out_dir, "trace.csv", TRACE_COLUMNS, traced.trace)

    first, last = controller.default_window(config.schedule.cycles)
    means = [t.window_mean(first, last) for t in trajectories]
    mu_bar = float(np.mean([m.mu for m in means]))
    p_bar = float(np.mean([m.p for m in means]))
    summary = {"mu_bar": mu_bar, "p_bar": p_bar, "window": f"{first}-{last}",
               "replications": config.run.replications}
    print(f"Final-window averages (cycles {first}-{last}): mu = {mu_bar:.4f}, p = {p_bar:.4f}")
    if optimum:
        policy, value, _ = optimum
        distance = math.hypot(mu_bar - policy.mu, p_bar - policy.p)
        summary.update(mu_star=policy.mu, p_star=policy.p, f_star=value, distance=distance)
        print(f"Analytic optimum: mu* = {policy.mu:.4f}, p* = {policy.p:.4f}, distance = {distance:.4f}")
    write_csv(config.out_dir, "summary.csv", list(summary), [list(summary.values())])
    return 0


def cmd_regret(config):
    optimum = analytic_optimum(config)
    if optimum is None:
        raise OracleError(f"regret decomposition requires oracle: none for {config.arrival_spec.describe()} "
                          f"arrivals (or oracle disabled); configure exponential arrivals")
    policy, value, f = optimum
    report = regret_lab.estimate_regret(config.model, config.schedule, config.initial, (policy, value),
                                        config.run.replications, config.run.seed, config.run.threads,
                                        oracle_f=f if config.decompose else None, paired=config.paired,
                                        **_run_kwargs(config))
    write_csv(config.out_dir, "regret.csv", regret_lab.REGRET_COLUMNS, report.rows())
    write_csv(config.out_dir, "regret_summary.csv", regret_lab.SUMMARY_COLUMNS, [report.summary_row()])
    if report.decomposition is not None:
        write_csv(config.out_dir, "decomposition.csv", regret_lab.DECOMPOSITION_COLUMNS, report.decomposition_rows())
    print(f"sqrt(R) = {report.fit.c:.4f} * ln(M_L) + {report.fit.d:.4f}  (R^2 = {report.fit.r2:.4f}, "
          f"{report.replications} replications)")
    return 0


def cmd_sweep(config):
    if config.sweep is None:
        raise ConfigError("sweep: block required for the sweep command")
    rows = regret_lab.heavy_traffic_sweep(
        config.model, config.sweep.scales, config.schedule, config.run.replications, config.run.seed,
        config.initial, base_size=config.sweep.base_size, window=config.sweep.window, threads=config.run.threads,
        **_run_kwargs(config))
    write_csv(config.out_dir, "heavy_traffic.csv", regret_lab.HEAVY_TRAFFIC_COLUMNS, rows)
    for row in rows:
        print(f"n = {row.n:>5}: p_n = {row.p_n:.4f}, mu_n/n = {row.mu_n_over_n:.4f}, rho_n = {row.rho_n:.4f}")
    return 0


# Oracle cross-checks run by `validate`; each returns (passed, measured, tolerance)

def _joint_model():
    return MarketModel(LogisticDemand(10.0, 4.1), QuadraticCost(0.1), 1.0, FeasibleBox(1.0, 20.0, 0.1, 10.0))


def check_ipa_vs_fd(seed):
    model = _joint_model()
    policy = Policy(10.0, 4.1)
    lam = model.rate(policy.p)
    exact = oracles.mm1_steady(lam, policy.mu)
    fd = oracles.fd_gradient(model, oracles.mm1_steady, policy)
    simulated = oracles.simulate_steady(model, policy, make_spec("exponential"), make_spec("exponential"),
                                        20_000, 400_000, RandomStream(seed, 0))
    closed = steady_partials_oracle(model, policy, exact.mean_W, exact.mean_X)
    estimate = steady_partials_oracle(model, policy, simulated.mean_W, simulated.mean_X)
    closed_err = float(np.max(np.abs(closed - fd) / np.abs(fd)))
    sim_err = float(np.max(np.abs(estimate - fd) / np.abs(fd)))
    return [("ipa_closed_form_vs_fd", closed_err <= 1e-4, closed_err, 1e-4),
            ("ipa_simulated_vs_fd", sim_err <= 0.02, sim_err, 0.02)]


def check_pk_vs_simulation(seed):
    model = _joint_model()
    policy = Policy(10.0, 4.1)
    service = make_spec("hyperexp2", 2.0)
    sim = oracles.simulate_steady(model, policy, make_spec("exponential"), service, 20_000, 1_000_000,
                                  RandomStream(seed, 1))
    exact = oracles.mg1_steady(model.rate(policy.p), policy.mu, service.scv)
    w_score = abs(sim.mean_W - exact.mean_W) / sim.se_W
    x_score = abs(sim.mean_X - exact.mean_X) / sim.se_X
    return [("pk_vs_simulation", w_score <= 3.0, w_score, 3.0),
            ("busy_age_identity", x_score <= 3.0, x_score, 3.0)]


def check_coupling(seed):
    rng = RandomStream(seed, 2).generator
    services = rng.standard_exponential(5000) / 10.0
    gaps = rng.standard_exponential(5000) / 5.0
    low, _, _ = lindley_path(0.0, 0.0, services, gaps)
    high, _, _ = lindley_path(3.0, 1.0, services, gaps)
    monotone_gap = float(np.min(high - low))
    idle = np.flatnonzero(high == 0.0)
    collapse_gap = float(np.max(np.abs(high[idle[0]:] - low[idle[0]:]))) if idle.size else math.inf
    return [("lindley_monotonicity", monotone_gap >= 0.0, monotone_gap, 0.0),
            ("coupling_collapse", collapse_gap == 0.0, collapse_gap, 0.0)]


def check_projection(seed):
    box = FeasibleBox(1.0, 20.0, 0.1, 10.0)
    points = RandomStream(seed, 3).generator.uniform(-30.0, 30.0, size=(1000, 2))
    projected = np.array([project(box, x).as_array() for x in points])
    again = np.array([project(box, x).as_array() for x in projected])
    idempotence = float(np.max(np.abs(projected - again)))
    moved = np.linalg.norm(projected[1:] - projected[:-1], axis=1)
    original = np.linalg.norm(points[1:] - points[:-1], axis=1)
    expansion = float(np.max(moved - original))
    return [("projection_idempotence", idempotence == 0.0, idempotence, 0.0),
            ("projection_nonexpansive", expansion <= 1e-12, expansion, 1e-12)]


VALIDATION_CHECKS = [check_ipa_vs_fd, check_pk_vs_simulation, check_coupling, check_projection]


def cmd_validate(out_dir, seed):
    results = []
    for check in VALIDATION_CHECKS:
        results.extend(check(seed))
    write_csv(out_dir, "validate.csv", VALIDATE_COLUMNS,
              [[name, str(bool(passed)).lower(), measured, tolerance] for name, passed, measured, tolerance in results])
    failed = [name for name, passed, _, _ in results if not passed]
    for name, passed, measured, tolerance in results:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {measured:.6g} (tolerance {tolerance:g})")
    if failed:
        logger.error("validation failed: %s", ", ".join(failed))
        return 1
    return 0


def build_parser():
    parser = argparse.ArgumentParser(description='Online pricing and staffing of a GI/GI/1 queue')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, help_text in [('optimize', 'Run the online controller and write the trajectory'),
                            ('regret', 'Estimate regret against the analytic optimum'),
                            ('sweep', 'Heavy-traffic scaling sweep'),
                            ('validate', 'Oracle cross-checks with pass/fail report')]:
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument('--config', help='Path to an experiment JSON file', required=name != 'validate')
        sub.add_argument('--seed', type=int, help='Override the experiment seed')
        sub.add_argument('--threads', type=int, help='Cap on parallel replications')
        sub.add_argument('--out', help='Output directory')
        sub.add_argument('--log-level', help='Logging level (default from QUEUE_LAB_LOG_LEVEL or INFO)')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        settings = Settings.from_env()
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return 2
    logging.basicConfig(
        stream=sys.stdout,
        level=getattr(logging, (args.log_level or settings.log_level).upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        force=True,
    )

    try:
        if args.command == 'validate':
            seed = args.seed if args.seed is not None else (settings.seed or DEFAULT_SEED)
            out_dir = args.out or os.path.join(settings.out_dir or 'output', 'validate')
            return cmd_validate(out_dir, seed)
        config = load_experiment(args, settings)
        commands = {'optimize': cmd_optimize, 'regret': cmd_regret, 'sweep': cmd_sweep}
        return commands[args.command](config)
    except ConfigError as e:
        for message in e.errors:
            logger.error("Config error: %s", message)
        return 2
    except Exception as e:
        logger.error("Error running %s: %s", args.command, str(e))
        logger.debug("traceback", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
