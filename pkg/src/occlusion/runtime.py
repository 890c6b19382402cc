"""Worker orchestration: one chain worker plus embarrassingly parallel
rejection workers.

The chain runs on the calling thread; each rejection worker owns a private
pool and an independent RNG stream, and shares nothing with the others but
the read-only models and a stop flag.  Pools merge in worker-index order so
that count-based runs are reproducible bit for bit.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    ChainTrace,
    MarkovKernel,
    OcclusionResult,
    RegionPartition,
    RestrictedPool,
    State,
    TargetModel,
    VariationalModel,
    log_rn_derivative,
    occlude,
    occluded_estimate,
    rejection_attempt,
)
from .errors import ConfigError

CHAIN_WORKER_INDEX = 0


@dataclass(frozen=True)
class RunConfig:
    """Stop condition, worker count and seeding for one orchestrated run.

    Exactly one of ``steps`` / ``seconds`` drives the chain.  Fixed
    ``attempts_per_worker`` bounds the rejection workers instead of the stop
    flag; deterministic runs require count-based conditions everywhere.
    """

    c_rej: int
    seed: int
    steps: Optional[int] = None
    seconds: Optional[float] = None
    attempts_per_worker: Optional[int] = None
    deterministic: bool = False

    def __post_init__(self) -> None:
        if self.c_rej < 0:
            raise ConfigError("c_rej must be >= 0")
        if (self.steps is None) == (self.seconds is None):
            raise ConfigError("exactly one of steps/seconds must be set")
        if self.steps is not None and self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.seconds is not None and not self.seconds > 0:
            raise ConfigError("seconds must be > 0")
        if self.attempts_per_worker is not None:
            if self.steps is None:
                raise ConfigError("attempts_per_worker requires a step-count run")
            if self.attempts_per_worker < 0:
                raise ConfigError("attempts_per_worker must be >= 0")
        if self.deterministic:
            if self.seconds is not None:
                raise ConfigError("wall-clock stop is not reproducible; use steps")
            if self.c_rej > 0 and self.attempts_per_worker is None:
                raise ConfigError(
                    "deterministic runs with rejection workers need attempts_per_worker"
                )


@dataclass
class RunReport:
    """Bookkeeping from one orchestrated run."""

    chain_length: int
    pool_counts: np.ndarray
    attempts_per_worker: list[int]
    accepted_per_worker: list[int]
    elapsed_seconds: float
    alpha_hat: np.ndarray = field(default_factory=lambda: np.zeros(0))


def seed_stream(master_seed: int, worker_index: int) -> np.random.Generator:
    """Independent, replayable RNG stream for a worker index.

    Index 0 is the chain worker, 1..C_rej the rejection workers; higher
    indices are free for postprocessing stages.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(worker_index,))
    return np.random.Generator(np.random.PCG64(ss))


def _rejection_worker(
    worker_index: int,
    target: TargetModel,
    q: VariationalModel,
    partition: RegionPartition,
    rng: np.random.Generator,
    stop: threading.Event,
    max_attempts: Optional[int],
    out_accepts: list,
    counters: dict,
    errors: list,
) -> None:
    # Receives only the shared read-only models: no chain state crosses here.
    attempts = 0
    try:
        if max_attempts is not None:
            for _ in range(max_attempts):
                attempts += 1
                hit = rejection_attempt(target, q, partition, rng)
                if hit is not None:
                    out_accepts.append(hit)
        else:
            while not stop.is_set():
                attempts += 1
                hit = rejection_attempt(target, q, partition, rng)
                if hit is not None:
                    out_accepts.append(hit)
    except BaseException as exc:  # surfaced after join
        errors.append(exc)
    finally:
        counters[worker_index] = attempts


def orchestrate(
    kernel: MarkovKernel,
    target: TargetModel,
    q: VariationalModel,
    partition: RegionPartition,
    config: RunConfig,
    initial_state: State,
    f: Optional[Callable[[State], float]] = None,
) -> tuple[ChainTrace, RestrictedPool, RunReport]:
    """Run the chain and the rejection workers until the stop condition.

    Returns the chain trace (with cached ``f`` values when given), the
    merged per-region pools, and a run report.
    """
    stop = threading.Event()
    worker_accepts: list[list] = [[] for _ in range(config.c_rej)]
    counters: dict[int, int] = {}
    errors: list[BaseException] = []
    threads = []
    start = time.monotonic()
    for j in range(1, config.c_rej + 1):
        t = threading.Thread(
            target=_rejection_worker,
            args=(
                j,
                target,
                q,
                partition,
                seed_stream(config.seed, j),
                stop,
                config.attempts_per_worker,
                worker_accepts[j - 1],
                counters,
                errors,
            ),
            daemon=True,
        )
        threads.append(t)
        t.start()

    rng_chain = seed_stream(config.seed, CHAIN_WORKER_INDEX)
    states: list[State] = []
    regions: list[int] = []
    f_values: list[float] = []
    x = initial_state
    try:
        if config.steps is not None:
            plan = range(config.steps)
            deadline = None
        else:
            plan = iter(int, 1)  # unbounded; broken by the deadline below
            deadline = start + float(config.seconds)
        for _ in plan:
            if deadline is not None and time.monotonic() >= deadline:
                break
            x = kernel.step(x, rng_chain)
            states.append(x)
            regions.append(partition.region_of_log(log_rn_derivative(x, target, q)))
            if f is not None:
                f_values.append(float(f(x)))
    finally:
        stop.set()
        for t in threads:
            t.join()
    elapsed = time.monotonic() - start
    if errors:
        raise errors[0]

    pools = RestrictedPool(n_regions=partition.n_regions)
    for accepts in worker_accepts:  # worker-index order: deterministic merge
        for region, y in accepts:
            pools.add(region, y)

    trace = ChainTrace(
        states=states,
        regions=np.asarray(regions, dtype=np.int64),
        f_values=np.asarray(f_values) if f is not None else None,
    )
    visit_counts = np.bincount(trace.regions, minlength=partition.n_regions + 1)[1:]
    counts = pools.counts
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha_hat = np.minimum(1.0, counts / visit_counts)
    alpha_hat[visit_counts == 0] = np.nan
    report = RunReport(
        chain_length=len(trace),
        pool_counts=counts,
        attempts_per_worker=[counters.get(j, 0) for j in range(1, config.c_rej + 1)],
        accepted_per_worker=[len(a) for a in worker_accepts],
        elapsed_seconds=elapsed,
        alpha_hat=alpha_hat,
    )
    return trace, pools, report


def run_occlusion(
    kernel: MarkovKernel,
    target: TargetModel,
    q: VariationalModel,
    partition: RegionPartition,
    f: Callable[[State], float],
    *,
    initial_state: State,
    steps: Optional[int] = None,
    seconds: Optional[float] = None,
    c_rej: int = 0,
    seed: int = 0,
    deterministic: bool = False,
    attempts_per_worker: Optional[int] = None,
) -> tuple[ChainTrace, RestrictedPool, OcclusionResult]:
    """Full occlusion pass: orchestrate, occlude, estimate."""
    config = RunConfig(
        c_rej=c_rej,
        seed=seed,
        steps=steps,
        seconds=seconds,
        attempts_per_worker=attempts_per_worker,
        deterministic=deterministic,
    )
    trace, pools, _report = orchestrate(
        kernel, target, q, partition, config, initial_state, f=f
    )
    rng_post = seed_stream(seed, config.c_rej + 1)
    result = occlude(trace, pools, rng_post)
    occluded_estimate(f, result)
    return trace, pools, result
