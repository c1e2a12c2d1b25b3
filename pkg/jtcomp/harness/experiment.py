"""Seeded Monte-Carlo experiments over drops, thresholds, edge SNRs and algorithms.

Seeds follow a counter scheme: drop `d` of master seed `m` is drawn from
`SeedSequence([m, d])`, and algorithm `a` on that drop uses `SeedSequence([m, d, crc32(a)])`, so
no result depends on the order or the set of algorithms that run next to it.
"""
import concurrent.futures
import csv
import dataclasses
import logging
import math
import os
import zlib

import numpy as np
from more_itertools import unique_everseen

from jtcomp.errors import ConfigurationError, JtcompError, SupportError
from jtcomp.solvers.baselines import PsoOptions, pso_solve, zf_precoder
from jtcomp.solvers.bnb import BnbOptions, branch_and_bound
from jtcomp.solvers.conic import CvxpyBackend
from jtcomp.solvers.ssocp import SsocpOptions, ssocp_solve
from jtcomp.solvers.wmmse import WmmseOptions, wmmse_solve
from jtcomp.system.feedback import backhaul_load, full_cooperation, mask_csi, relative_threshold
from jtcomp.system.metrics import SinrMode, evaluate
from jtcomp.system.scenario import build_scenario, draw_drop, scenario_with
from jtcomp.util.async_lookahead_iterator import AsyncLookaheadIterator
from jtcomp.util.config import format_threshold, parse_threshold, require
from jtcomp.util.log import BraceMessage as __, log_table, stopwatch
from jtcomp.util.utils import progress

logger = logging.getLogger(__name__)

RATE_FIELDS = ["drop_id", "seed", "algorithm", "mode", "threshold_db", "edge_snr_db", "n_t", "num_users",
               "expected_rate_bps_hz", "actual_rate_bps_hz", "iterations", "restarts_used", "wall_ms", "csi_coeffs",
               "precoder_weights", "status"]
BOUND_FIELDS = ["drop_id", "mode", "bb_ub", "bb_lb", "ssocp_rate", "rounds", "feasibility_calls"]
BNB_ROUND_FIELDS = ["drop_id", "mode", "round", "upper", "lower"]
RESTART_FIELDS = ["n_t", "num_users", "algorithm", "restarts", "mean_best_rate", "count"]
TRACE_FIELDS = ["drop_id", "algorithm", "restart", "iteration", "objective"]
SUMMARY_FIELDS = ["algorithm", "mode", "threshold_db", "edge_snr_db", "mean_expected", "mean_actual", "count"]
CDF_FIELDS = ["algorithm", "threshold_db", "edge_snr_db", "value", "probability"]


@dataclasses.dataclass(frozen=True)
class Algorithm:
    token: str
    solver: str
    mode: SinrMode

    @property
    def full_csi(self):
        return self.mode is SinrMode.FULL


ALGORITHMS = {a.token: a for a in [
    Algorithm("SSOCP", "ssocp", SinrMode.FULL),
    Algorithm("SSOCP_0", "ssocp", SinrMode.LIMITED_ZERO),
    Algorithm("SSOCP_lambda_PL0", "ssocp", SinrMode.LIMITED_LAMBDA),
    Algorithm("SSOCP_PL0", "ssocp", SinrMode.LIMITED_NAIVE),
    Algorithm("MSE", "wmmse", SinrMode.FULL),
    Algorithm("MSE_lambda_PL0", "wmmse", SinrMode.LIMITED_LAMBDA),
    Algorithm("PSO", "pso", SinrMode.FULL),
    Algorithm("PSO_0", "pso", SinrMode.LIMITED_ZERO),
    Algorithm("ZF", "zf", SinrMode.FULL),
]}


def _algorithm_key(token):
    return "".join(c for c in str(token).replace("λ", "lambda").lower() if c.isalnum())


_ALGORITHM_KEYS = {_algorithm_key(token): algorithm for token, algorithm in ALGORITHMS.items()}


def parse_algorithm(token):
    """Legend token to Algorithm; case, underscores and braces are ignored and λ may stand for "lambda"."""
    try:
        return _ALGORITHM_KEYS[_algorithm_key(token)]
    except KeyError:
        raise ConfigurationError("algorithms", "unknown algorithm '{}', expected one of {}".format(
            token, sorted(ALGORITHMS)))


def drop_seed(master, drop_id):
    return int(np.random.SeedSequence([master, drop_id]).generate_state(1)[0])


def algorithm_seed(master, drop_id, token):
    return np.random.SeedSequence([master, drop_id, zlib.crc32(token.encode("utf-8"))])


@dataclasses.dataclass(frozen=True)
class Settings:
    """Everything a worker process needs, as plain picklable values."""
    scenario: object
    seed: int
    drops: int
    thresholds_db: tuple
    edge_snr_db: tuple
    algorithms: tuple
    ssocp: SsocpOptions
    wmmse: WmmseOptions
    pso: PsoOptions
    bnb: BnbOptions
    certify_drops: int
    certify_modes: tuple
    certify_threshold_db: float
    certify_retries: int
    trace_threshold_db: float
    restart_n_t: tuple
    restart_drops: int
    restart_max: int
    restart_algorithms: tuple
    restart_threshold_db: float
    workers: int
    out_dir: str
    record_timing: bool
    progress_delay: float

    @classmethod
    def from_config(cls, config):
        backend = CvxpyBackend.from_config(config.get_config("conic")) if "conic" in config else None
        algorithms = [parse_algorithm(token) for token in require(config, "algorithms", "get_list")]
        modes = tuple(SinrMode.parse(mode) for mode in config.get_list("certify_modes", []))
        settings = cls(
            scenario=build_scenario(config),
            seed=int(require(config, "seed", "get_int")),
            drops=int(require(config, "drops", "get_int")),
            thresholds_db=tuple(parse_threshold(t, "thresholds_db") for t in require(config, "thresholds_db",
                                                                                   "get_list")),
            edge_snr_db=tuple(float(s) for s in config.get_list("edge_snr_db", [config.get("cell_edge_snr_db")])),
            algorithms=tuple(unique_everseen(algorithms)),
            ssocp=SsocpOptions.from_config(config.get_config("ssocp", {}), backend=backend),
            wmmse=WmmseOptions.from_config(config.get_config("wmmse", {}), backend=backend),
            pso=PsoOptions.from_config(config.get_config("pso", {})),
            bnb=BnbOptions.from_config(config.get_config("bnb", {}), backend=backend),
            certify_drops=int(config.get_int("certify_drops", 20)),
            certify_modes=tuple(unique_everseen(modes)),
            certify_threshold_db=parse_threshold(config.get("certify_threshold_db", 3), "certify_threshold_db"),
            certify_retries=int(config.get_int("bnb.certify_retries", 20)),
            trace_threshold_db=parse_threshold(config.get("trace_threshold_db", 3), "trace_threshold_db"),
            restart_n_t=tuple(int(n) for n in config.get_list("restarts.n_t", [1, 2, 3])),
            restart_drops=int(config.get_int("restarts.drops", 20)),
            restart_max=int(config.get_int("restarts.max_restarts", 10)),
            restart_algorithms=tuple(unique_everseen(
                parse_algorithm(token) for token in config.get_list("restarts.algorithms", ["SSOCP", "PSO"]))),
            restart_threshold_db=parse_threshold(config.get("restarts.threshold_db", "inf"),
                                                 "restarts.threshold_db"),
            workers=int(config.get_int("harness.workers", 1)),
            out_dir=str(config.get("harness.out_dir", "results")),
            record_timing=bool(config.get_bool("harness.record_timing", False)),
            progress_delay=float(config.get("harness.progress_delay_s", 10)))
        if settings.drops < 0 or settings.certify_drops < 0:
            raise ConfigurationError("drops", "drop counts must be >= 0")
        if settings.workers < 1:
            raise ConfigurationError("harness.workers", "need at least one worker")
        if settings.restart_drops < 0 or settings.restart_max < 1 or min(settings.restart_n_t, default=1) < 1:
            raise ConfigurationError("restarts", "restart study needs drops >= 0, max_restarts >= 1 and n_t >= 1")
        if any(a.solver == "zf" for a in settings.restart_algorithms):
            raise ConfigurationError("restarts.algorithms", "zero forcing has no random initialization")
        return settings


def _format(value):
    if isinstance(value, float):
        return "nan" if math.isnan(value) else "{:.10g}".format(value)
    return value


def _solve(algorithm, settings, realization, masked, seed):
    """(precoder, iterations, restarts_used) of one algorithm on one masked instance."""
    if algorithm.solver == "ssocp":
        precoder, trace = ssocp_solve(masked, dataclasses.replace(settings.ssocp, mode=algorithm.mode, rng_seed=seed))
    elif algorithm.solver == "wmmse":
        precoder, trace = wmmse_solve(masked, dataclasses.replace(settings.wmmse, mode=algorithm.mode, rng_seed=seed))
    elif algorithm.solver == "pso":
        precoder, trace = pso_solve(masked, dataclasses.replace(settings.pso, mode=algorithm.mode, rng_seed=seed))
    else:
        return zf_precoder(realization), 0, 1
    return precoder, trace.iterations, trace.restarts_used


def _run_algorithm(algorithm, settings, realization, coop, drop_id, threshold_db, snr_db):
    masked = mask_csi(realization, coop, settings.scenario.weights)
    row = dict(drop_id=drop_id, seed=realization.seed, algorithm=algorithm.token, mode=algorithm.mode.value,
               threshold_db=format_threshold(threshold_db), edge_snr_db=_format(float(snr_db)),
               n_t=realization.n_t, num_users=realization.num_users, expected_rate_bps_hz=math.nan,
               actual_rate_bps_hz=math.nan, iterations=0, restarts_used=0, wall_ms=0,
               csi_coeffs=backhaul_load(coop, realization.n_t)[0], precoder_weights=0, status="failed")
    try:
        with stopwatch(algorithm.token, logger) as timing:
            precoder, iterations, restarts = _solve(algorithm, settings, realization, masked,
                                                    algorithm_seed(settings.seed, drop_id, algorithm.token))
        precoder.validate(coop, realization.max_power)
        if not algorithm.full_csi and not np.array_equal(precoder.support, coop.mask):
            raise SupportError("{} produced weights outside the fed-back links".format(algorithm.token))
        report = evaluate(realization, masked, precoder, algorithm.mode)
    except (JtcompError, ArithmeticError, ValueError) as e:
        logger.warning(__("Drop {} {} at T={} dB failed: {}", drop_id, algorithm.token, threshold_db, e))
        return row
    row.update(status="ok", expected_rate_bps_hz=report.rate_design, actual_rate_bps_hz=report.rate_true,
               iterations=iterations, restarts_used=restarts, precoder_weights=precoder.weight_count,
               wall_ms=int(round(timing["seconds"] * 1000)) if settings.record_timing else 0)
    return row


def run_drop(job):
    """All rows of one drop: every edge SNR, threshold and algorithm."""
    settings, drop_id = job
    rows = []
    for snr_db in settings.edge_snr_db:
        scenario = scenario_with(settings.scenario, cell_edge_snr_db=snr_db)
        realization = draw_drop(scenario, drop_seed(settings.seed, drop_id))
        full_rows = {}
        for threshold_db in settings.thresholds_db:
            coop = relative_threshold(realization, threshold_db)
            for algorithm in settings.algorithms:
                if algorithm.full_csi:
                    # full-CSI designs ignore the threshold, solve once per drop and SNR
                    if algorithm.token not in full_rows:
                        full_rows[algorithm.token] = _run_algorithm(
                            algorithm, settings, realization, full_cooperation(realization.num_bs,
                                                                               realization.num_users),
                            drop_id, threshold_db, snr_db)
                    row = dict(full_rows[algorithm.token], threshold_db=format_threshold(threshold_db))
                else:
                    row = _run_algorithm(algorithm, settings, realization, coop, drop_id, threshold_db, snr_db)
                rows.append(row)
    return rows


def _map_drops(func, jobs, settings, verb):
    executor = concurrent.futures.ProcessPoolExecutor(settings.workers) if settings.workers > 1 else None
    try:
        results = AsyncLookaheadIterator(executor, func, jobs, logger=logger, parallelism=settings.workers)
        for result in progress(results, delay=settings.progress_delay, logger=logger, verb=verb, objects="drops"):
            yield result
    finally:
        if executor is not None:
            executor.shutdown()


def cdf_points(samples):
    """Empirical CDF: (value, i / n) for the i-th smallest sample, one step per distinct value."""
    values = np.sort(np.asarray(list(samples), dtype=float), kind="stable")
    if values.size == 0:
        raise ValueError("the empirical CDF needs at least one sample")
    probabilities = np.arange(1, values.size + 1) / values.size
    last = np.append(values[1:] != values[:-1], True)
    return list(zip(values[last].tolist(), probabilities[last].tolist()))


def _groups(rows):
    groups = {}
    for row in rows:
        key = (row["algorithm"], row["mode"], row["threshold_db"], row["edge_snr_db"])
        groups.setdefault(key, []).append(row)
    return groups


def summary_table(rows):
    summary = []
    for (algorithm, mode, threshold, snr), group in _groups(rows).items():
        expected = [r["expected_rate_bps_hz"] for r in group if not math.isnan(r["expected_rate_bps_hz"])]
        actual = [r["actual_rate_bps_hz"] for r in group if not math.isnan(r["actual_rate_bps_hz"])]
        summary.append(dict(algorithm=algorithm, mode=mode, threshold_db=threshold, edge_snr_db=snr,
                            mean_expected=float(np.mean(expected)) if expected else math.nan,
                            mean_actual=float(np.mean(actual)) if actual else math.nan, count=len(actual)))
    return summary


def cdf_table(rows):
    table = []
    for (algorithm, _, threshold, snr), group in _groups(rows).items():
        actual = [r["actual_rate_bps_hz"] for r in group if not math.isnan(r["actual_rate_bps_hz"])]
        if actual:
            table.extend(dict(algorithm=algorithm, threshold_db=threshold, edge_snr_db=snr, value=value,
                              probability=probability) for value, probability in cdf_points(actual))
    return table


def write_csv(path, fields, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _format(row[key]) for key in fields})
    logger.info(__("Wrote {} rows to {}", len(rows), path))


@dataclasses.dataclass
class ExperimentResult:
    rates: list
    summary: list
    cdf: list


def run_experiment(config, out_dir=None):
    """Run the configured sweep; writes rates.csv, summary.csv and cdf.csv into `out_dir` if given."""
    settings = config if isinstance(config, Settings) else Settings.from_config(config)
    logger.info(__("Running {} drops x {} thresholds x {} SNRs x {} algorithms", settings.drops,
                   len(settings.thresholds_db), len(settings.edge_snr_db), len(settings.algorithms)))
    rates = []
    for rows in _map_drops(run_drop, [(settings, d) for d in range(settings.drops)], settings, "Simulated"):
        rates.extend(rows)
    result = ExperimentResult(rates, summary_table(rates), cdf_table(rates))
    log_table(logger, logging.INFO, "Mean rates [bps/Hz]",
              [[s["algorithm"], s["threshold_db"], s["edge_snr_db"], s["mean_expected"], s["mean_actual"], s["count"]]
               for s in result.summary],
              headers=["algorithm", "T [dB]", "SNR [dB]", "expected", "actual", "n"])
    if out_dir is not None:
        write_csv(os.path.join(out_dir, "rates.csv"), RATE_FIELDS, result.rates)
        write_csv(os.path.join(out_dir, "summary.csv"), SUMMARY_FIELDS, result.summary)
        write_csv(os.path.join(out_dir, "cdf.csv"), CDF_FIELDS, result.cdf)
    return result


def _masked_for_mode(realization, mode, threshold_db, weights):
    if mode is SinrMode.FULL:
        coop = full_cooperation(realization.num_bs, realization.num_users)
    else:
        coop = relative_threshold(realization, threshold_db)
    return mask_csi(realization, coop, weights)


def certify_drop(job):
    """bounds.csv and bnb_rounds.csv rows of one drop: branch and bound next to an SSOCP run with many restarts."""
    settings, drop_id = job
    realization = draw_drop(settings.scenario, drop_seed(settings.seed, drop_id))
    bounds, rounds = [], []
    for mode in settings.certify_modes:
        masked = _masked_for_mode(realization, mode, settings.certify_threshold_db, settings.scenario.weights)
        result = branch_and_bound(masked, mode, settings.bnb)
        options = dataclasses.replace(settings.ssocp, mode=mode, max_retries=settings.certify_retries,
                                      rng_seed=algorithm_seed(settings.seed, drop_id, "certify/" + mode.value))
        try:
            _, trace = ssocp_solve(masked, options)
            ssocp_rate = trace.best
        except JtcompError as e:
            logger.warning(__("Drop {} SSOCP in mode {} failed: {}", drop_id, mode.value, e))
            ssocp_rate = math.nan
        bounds.append(dict(drop_id=drop_id, mode=mode.value, bb_ub=result.upper, bb_lb=result.lower,
                           ssocp_rate=ssocp_rate, rounds=result.rounds, feasibility_calls=result.feasibility_calls))
        rounds.extend(dict(drop_id=drop_id, mode=mode.value, round=r, upper=upper, lower=lower)
                      for r, upper, lower in result.history)
    return bounds, rounds


@dataclasses.dataclass
class CertificationResult:
    bounds: list
    rounds: list


def certify(config, out_dir=None, drop_ids=None):
    """Branch and bound on the listed drops; writes bounds.csv and the per-round brackets to bnb_rounds.csv."""
    settings = config if isinstance(config, Settings) else Settings.from_config(config)
    drop_ids = list(range(settings.certify_drops)) if drop_ids is None else list(drop_ids)
    result = CertificationResult([], [])
    for bounds, rounds in _map_drops(certify_drop, [(settings, d) for d in drop_ids], settings, "Certified"):
        result.bounds.extend(bounds)
        result.rounds.extend(rounds)
    log_table(logger, logging.INFO, "Branch and bound brackets",
              [[r["drop_id"], r["mode"], r["bb_lb"], r["bb_ub"], r["ssocp_rate"], r["rounds"]]
               for r in result.bounds],
              headers=["drop", "mode", "LB", "UB", "SSOCP", "rounds"])
    if out_dir is not None:
        write_csv(os.path.join(out_dir, "bounds.csv"), BOUND_FIELDS, result.bounds)
        write_csv(os.path.join(out_dir, "bnb_rounds.csv"), BNB_ROUND_FIELDS, result.rounds)
    return result


def trace(config, drop_id=0, out_dir=None):
    """Convergence traces of SSOCP, WMMSE and PSO on one drop, each in its configured mode."""
    settings = config if isinstance(config, Settings) else Settings.from_config(config)
    realization = draw_drop(settings.scenario, drop_seed(settings.seed, drop_id))
    rows = []
    for name, solver, options in (("SSOCP", ssocp_solve, settings.ssocp), ("MSE", wmmse_solve, settings.wmmse),
                                  ("PSO", pso_solve, settings.pso)):
        masked = _masked_for_mode(realization, options.mode, settings.trace_threshold_db, settings.scenario.weights)
        label = "{}:{}".format(name, options.mode.value)
        try:
            _, solve_trace = solver(masked, dataclasses.replace(
                options, rng_seed=algorithm_seed(settings.seed, drop_id, label)))
        except JtcompError as e:
            logger.warning(__("Trace of {} on drop {} failed: {}", label, drop_id, e))
            continue
        rows.extend(dict(drop_id=drop_id, algorithm=label, restart=restart, iteration=iteration, objective=objective)
                    for restart, iteration, objective in solve_trace.rows())
    if out_dir is not None:
        write_csv(os.path.join(out_dir, "trace.csv"), TRACE_FIELDS, rows)
    return rows


def _with_restarts(algorithm, settings, count, seed):
    if algorithm.solver == "ssocp":
        return ssocp_solve, dataclasses.replace(settings.ssocp, mode=algorithm.mode, max_retries=count, rng_seed=seed)
    if algorithm.solver == "wmmse":
        return wmmse_solve, dataclasses.replace(settings.wmmse, mode=algorithm.mode, max_retries=count, rng_seed=seed)
    if algorithm.solver == "pso":
        return pso_solve, dataclasses.replace(settings.pso, mode=algorithm.mode, restarts=count, rng_seed=seed)
    raise ConfigurationError("restarts.algorithms", "{} has no random initialization".format(algorithm.token))


def best_of_restarts(restart_best):
    """Best design rate found within the first k restarts, for k = 1..n; failed restarts contribute nothing."""
    return np.fmax.accumulate(np.asarray(restart_best, dtype=float)).tolist()


def restart_drop(job):
    """Best-of-k rates of one drop for every antenna count of the study, with the cluster fully loaded."""
    settings, drop_id = job
    rows = []
    for n_t in settings.restart_n_t:
        num_users = settings.scenario.num_bs * n_t
        scenario = scenario_with(settings.scenario, n_t=n_t, num_users=num_users, user_weights=(1.0,) * num_users)
        realization = draw_drop(scenario, drop_seed(settings.seed, drop_id))
        for algorithm in settings.restart_algorithms:
            masked = _masked_for_mode(realization, algorithm.mode, settings.restart_threshold_db, scenario.weights)
            label = "restarts/{}/{}".format(n_t, algorithm.token)
            solver, options = _with_restarts(algorithm, settings, settings.restart_max,
                                             algorithm_seed(settings.seed, drop_id, label))
            try:
                _, solve_trace = solver(masked, options)
                curve = best_of_restarts(solve_trace.restart_best)
            except JtcompError as e:
                logger.warning(__("Drop {} {} with N_T={} failed: {}", drop_id, algorithm.token, n_t, e))
                curve = [math.nan] * settings.restart_max
            rows.extend(dict(drop_id=drop_id, n_t=n_t, num_users=num_users, algorithm=algorithm.token,
                             restarts=k + 1, best_rate=rate) for k, rate in enumerate(curve))
    return rows


def restart_table(rows):
    groups = {}
    for row in rows:
        groups.setdefault((row["n_t"], row["num_users"], row["algorithm"], row["restarts"]), []).append(
            row["best_rate"])
    table = []
    for (n_t, num_users, algorithm, restarts), rates in groups.items():
        found = [rate for rate in rates if not math.isnan(rate)]
        table.append(dict(n_t=n_t, num_users=num_users, algorithm=algorithm, restarts=restarts,
                          mean_best_rate=float(np.mean(found)) if found else math.nan, count=len(found)))
    return table


def restart_study(config, out_dir=None):
    """Mean best-of-k design rate over drops for k = 1..restarts.max_restarts; writes restarts.csv."""
    settings = config if isinstance(config, Settings) else Settings.from_config(config)
    rows = []
    jobs = [(settings, d) for d in range(settings.restart_drops)]
    for result in _map_drops(restart_drop, jobs, settings, "Restarted"):
        rows.extend(result)
    table = restart_table(rows)
    log_table(logger, logging.INFO, "Best of k restarts [bps/Hz]",
              [[r["n_t"], r["algorithm"], r["restarts"], r["mean_best_rate"], r["count"]] for r in table
               if r["restarts"] == settings.restart_max],
              headers=["N_T", "algorithm", "k", "mean", "n"])
    if out_dir is not None:
        write_csv(os.path.join(out_dir, "restarts.csv"), RESTART_FIELDS, table)
    return table
