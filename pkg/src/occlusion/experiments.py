"""Experiment drivers shared by the CLI and the acceptance suite.

Each replication produces two summary rows, one for the plain chain
estimator and one for the occluded estimator built on the same run.
CSV columns are the stable interchange surface consumed by the plotting
front end; see the README for the exact schemas.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import ising as ising_mod
from .config import GmmConfig, IsingConfig
from .core import ChainTrace, OcclusionResult, RegionPartition, occlude, occluded_estimate
from .errors import ConfigError
from .gaussian import (
    GaussianMixture,
    dominant_component_proposal,
    laplace_approximation,
    rwm_kernel,
)
from .runtime import RunConfig, RunReport, orchestrate, seed_stream
from .theory import acf

SUMMARY_COLUMNS = [
    "replication",
    "estimator",
    "estimate",
    "lag1_acf",
    "occlusion_proportion",
    "pool_proportion",
    "N",
    "k",
    "beta",
    "kernel",
    "elapsed_seconds",
]

TRACE_COLUMNS = ["t", "region", "f_x", "s", "f_z"]

ACF_COLUMNS = ["lag", "acf_chain", "acf_occluded", "degenerate_chain", "degenerate_occluded"]


@dataclass(frozen=True)
class SummaryRow:
    replication: int
    estimator: str
    estimate: float
    lag1_acf: float
    occlusion_proportion: float
    pool_proportion: float
    N: int
    k: int
    beta: Optional[float]
    kernel: str
    elapsed_seconds: float

    def as_record(self) -> list:
        return [
            self.replication,
            self.estimator,
            repr(self.estimate),
            repr(self.lag1_acf),
            repr(self.occlusion_proportion),
            repr(self.pool_proportion),
            self.N,
            self.k,
            "" if self.beta is None else repr(self.beta),
            self.kernel,
            repr(self.elapsed_seconds),
        ]


def replication_seed(master_seed: int, index: int) -> int:
    """Stable per-replication integer seed derived from the master seed."""
    ss = np.random.SeedSequence(entropy=(int(master_seed), int(index)))
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def write_summary(path, rows: list[SummaryRow]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow(row.as_record())


def write_trace(path, trace: ChainTrace, result: OcclusionResult, f) -> None:
    f_x = trace.f_values if trace.f_values is not None else np.array(
        [f(x) for x in trace.states]
    )
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACE_COLUMNS)
        for t in range(len(trace)):
            writer.writerow(
                [
                    t,
                    int(trace.regions[t]),
                    repr(float(f_x[t])),
                    int(result.indicators[t]),
                    repr(float(f(result.occluded_states[t]))),
                ]
            )


def _summary_pair(
    replication: int,
    trace: ChainTrace,
    result: OcclusionResult,
    report: RunReport,
    f,
    *,
    n_field: int,
    k_field: int,
    beta: Optional[float],
    kernel_name: str,
    deterministic: bool,
) -> tuple[SummaryRow, SummaryRow]:
    f_x = trace.f_values if trace.f_values is not None else np.array(
        [f(x) for x in trace.states]
    )
    f_z = np.array([f(z) for z in result.occluded_states])
    lag_chain = acf(f_x, 1)
    lag_occ = acf(f_z, 1)
    # Wall clock is excluded from reproducible outputs.
    elapsed = 0.0 if deterministic else report.elapsed_seconds
    chain_row = SummaryRow(
        replication=replication,
        estimator="chain",
        estimate=float(np.mean(f_x)),
        lag1_acf=float(lag_chain.values[1]),
        occlusion_proportion=0.0,
        pool_proportion=0.0,
        N=n_field,
        k=k_field,
        beta=beta,
        kernel=kernel_name,
        elapsed_seconds=elapsed,
    )
    occluded_row = SummaryRow(
        replication=replication,
        estimator="occluded",
        estimate=float(np.mean(f_z)),
        lag1_acf=float(lag_occ.values[1]),
        occlusion_proportion=result.occlusion_proportion,
        pool_proportion=result.pool_proportion,
        N=n_field,
        k=k_field,
        beta=beta,
        kernel=kernel_name,
        elapsed_seconds=elapsed,
    )
    return chain_row, occluded_row


def _run_config(cfg, seed: int) -> RunConfig:
    attempts = cfg.attempts_per_worker
    if attempts is None and cfg.deterministic and cfg.c_rej > 0:
        attempts = cfg.steps  # one attempt per chain step and worker
    return RunConfig(
        c_rej=cfg.c_rej,
        seed=seed,
        steps=cfg.steps,
        seconds=cfg.seconds,
        attempts_per_worker=attempts,
        deterministic=cfg.deterministic,
    )


def run_gmm_experiment(cfg: GmmConfig, out_dir=None) -> list[SummaryRow]:
    """Random walk Metropolis with occlusion on the bimodal mixture."""
    d = cfg.dimension
    mean_second = np.zeros(d)
    mean_second[0] = cfg.mode_location
    mixture = GaussianMixture(
        weight_second=cfg.weight_second, mean_second=mean_second, var_second=cfg.sigma2
    )
    if cfg.proposal == "dominant-component":
        proposal = dominant_component_proposal(mixture)
    else:
        proposal = laplace_approximation(
            mixture,
            gd_step=cfg.laplace_gd_step,
            gd_iters=cfg.laplace_gd_iters,
            grad_tol=cfg.laplace_grad_tol,
        )
    partition = RegionPartition.from_thresholds(cfg.thresholds)
    kernel = rwm_kernel(mixture.log_density, d, cfg.step_size)

    def first_coordinate(x) -> float:
        return float(x[0])

    rows: list[SummaryRow] = []
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    for rep in range(cfg.replications):
        seed = replication_seed(cfg.seed, rep)
        run_config = _run_config(cfg, seed)
        started = time.monotonic()
        trace, pools, report = orchestrate(
            kernel, mixture, proposal, partition, run_config, np.zeros(d), f=first_coordinate
        )
        result = occlude(trace, pools, seed_stream(seed, run_config.c_rej + 1))
        occluded_estimate(first_coordinate, result)
        report.elapsed_seconds = time.monotonic() - started
        rows.extend(
            _summary_pair(
                rep,
                trace,
                result,
                report,
                first_coordinate,
                n_field=d,
                k_field=0,
                beta=None,
                kernel_name="rwm",
                deterministic=cfg.deterministic,
            )
        )
        if out_path is not None:
            write_trace(
                out_path / f"trace_gmm_d{d}_rep{rep}.csv", trace, result, first_coordinate
            )
    if out_path is not None:
        write_summary(out_path / "summary.csv", rows)
    return rows


def _make_kernel(name: str, graph: ising_mod.SpinGraph):
    if name == "metropolis":
        return ising_mod.MetropolisKernel(graph)
    if name == "wolff":
        return ising_mod.WolffKernel(graph)
    raise ConfigError(f"unknown kernel {name!r}")


def run_ising_experiment(cfg: IsingConfig, out_dir=None) -> list[SummaryRow]:
    """Grid of (k, N, temperature, kernel) cells with replicated runs.

    Each cell draws one block-model graph, calibrates region thresholds from
    a Wolff run, then runs the replications with fresh Swendsen-Wang
    initialisations.
    """
    rows: list[SummaryRow] = []
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    cell_index = 0
    for k in cfg.ks:
        for n in cfg.ns:
            for temp in cfg.temperatures:
                for kernel_name in cfg.kernels:
                    cell_seed = replication_seed(cfg.seed, 100_000 + cell_index)
                    cell_index += 1
                    rows.extend(
                        _run_ising_cell(cfg, k, n, temp, kernel_name, cell_seed)
                    )
    if out_path is not None:
        write_summary(out_path / "summary.csv", rows)
    return rows


def _run_ising_cell(
    cfg: IsingConfig, k: int, n: int, temp, kernel_name: str, cell_seed: int
) -> list[SummaryRow]:
    rng_setup = seed_stream(cell_seed, 0)
    graph, membership = ising_mod.sbm_graph(
        n, k, rng_setup, intra=cfg.intra, inter=cfg.inter, beta=temp.beta, j=cfg.j
    )
    variational = ising_mod.variational_build(
        graph, membership, beta_tilde=cfg.beta_tilde_scale * temp.beta, epsilon=temp.epsilon
    )
    calibration = ising_mod.threshold_calibration(
        graph, variational, cfg.calibration_steps, seed_stream(cell_seed, 1)
    )
    target = ising_mod.IsingTarget(graph)
    kernel = _make_kernel(kernel_name, graph)
    rows: list[SummaryRow] = []
    for rep in range(cfg.replications):
        seed = replication_seed(cell_seed, rep)
        init = ising_mod.swendsen_wang_init(
            graph,
            cfg.sw_target_uncoupled,
            seed_stream(seed, 9_999),
            block_length=cfg.sw_block_length,
        )
        run_config = _run_config(cfg, seed)
        started = time.monotonic()
        trace, pools, report = orchestrate(
            kernel,
            target,
            variational,
            calibration.partition,
            run_config,
            init,
            f=ising_mod.magnetisation,
        )
        result = occlude(trace, pools, seed_stream(seed, run_config.c_rej + 1))
        occluded_estimate(ising_mod.magnetisation, result)
        report.elapsed_seconds = time.monotonic() - started
        rows.extend(
            _summary_pair(
                rep,
                trace,
                result,
                report,
                ising_mod.magnetisation,
                n_field=n,
                k_field=k,
                beta=temp.beta,
                kernel_name=kernel_name,
                deterministic=cfg.deterministic,
            )
        )
    return rows


def acf_table(trace_path, max_lag: int) -> list[list]:
    """Rows of lagged autocorrelations for the chain and occluded columns."""
    f_x: list[float] = []
    f_z: list[float] = []
    with open(trace_path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ConfigError(f"{trace_path}: empty trace file")
        try:
            ix = header.index("f_x")
            iz = header.index("f_z")
        except ValueError as exc:
            raise ConfigError(f"{trace_path}: missing required column: {exc}") from exc
        for lineno, record in enumerate(reader, start=2):
            try:
                f_x.append(float(record[ix]))
                f_z.append(float(record[iz]))
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"{trace_path}: malformed CSV at line {lineno}: {exc}") from exc
    if len(f_x) <= max_lag:
        raise ConfigError("trace shorter than requested max_lag")
    chain = acf(np.asarray(f_x), max_lag)
    occluded = acf(np.asarray(f_z), max_lag)
    rows = []
    for lag in range(max_lag + 1):
        rows.append(
            [
                lag,
                repr(float(chain.values[lag])),
                repr(float(occluded.values[lag])),
                int(chain.degenerate),
                int(occluded.degenerate),
            ]
        )
    return rows


def write_acf(path, rows: list[list]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ACF_COLUMNS)
        writer.writerows(rows)
