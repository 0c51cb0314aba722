"""Budget-aware fixed-level splitting estimator.

The failure probability is factorised over a level schedule: each stage draws
checkpoints from the previous stage's pool (uniformly, with replacement),
propagates them until they reach the next threshold, the horizon or the
absorbing failure set, and reports the fraction that made it.  A stage keeps
attempting until it has banked both enough successes and enough attempts, so
downstream pools never run dry while estimates retain a minimum resolution.
Every simulated step is charged against one global step budget; runs that
exhaust it before completing all stages, or that lose every trajectory at some
stage, report an estimate of zero with the cause flagged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from resplit.analysis import chain_prediction, classical_rel_variance, stage_prediction
from resplit.core import (
    BudgetLedger,
    Checkpoint,
    EmptyPoolError,
    LevelSchedule,
    Simulator,
    stream,
)

__all__ = [
    "LevelRecord",
    "SmcConfig",
    "SmcDiagnostics",
    "SmcReport",
    "next_pool_size",
    "predict_diagnostics",
    "resample_pool",
    "run_level",
    "run_smc",
]

SimFactory = Callable[[np.random.Generator], Simulator]


@dataclass(frozen=True)
class SmcConfig:
    """Splitting controls: stopping targets, pool sizing, budget."""

    success_target: int = 20
    attempt_target: int = 100
    initial_pool: int = 20
    pool_min: int = 20
    pool_max: int = 200
    safety_factor: float = 1.5
    prob_floor: float = 0.05
    budget_steps: int = 5_000_000
    batch_size: int = 1

    def __post_init__(self) -> None:
        if self.success_target < 1:
            raise ValueError(f"success_target must be >= 1, got {self.success_target}")
        if self.attempt_target < 1:
            raise ValueError(f"attempt_target must be >= 1, got {self.attempt_target}")
        if self.initial_pool < 1:
            raise ValueError(f"initial_pool must be >= 1, got {self.initial_pool}")
        if not 1 <= self.pool_min <= self.pool_max:
            raise ValueError(
                f"need 1 <= pool_min <= pool_max, got {self.pool_min}, {self.pool_max}"
            )
        if self.safety_factor <= 0.0:
            raise ValueError(f"safety_factor must be > 0, got {self.safety_factor}")
        if not 0.0 < self.prob_floor <= 1.0:
            raise ValueError(f"prob_floor must be in (0, 1], got {self.prob_floor}")
        if self.budget_steps < 1:
            raise ValueError(f"budget_steps must be >= 1, got {self.budget_steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class LevelRecord:
    """Outcome of one stage: counts, estimate, cost, and the retained checkpoints."""

    level: int
    attempts: int
    successes: int
    p_hat: float
    cost_steps: int
    stopping_met: bool
    next_pool_size: int | None = None
    checkpoints: tuple[Checkpoint, ...] = ()
    success_attempts: tuple[int, ...] = ()  # attempt index that produced each checkpoint


@dataclass(frozen=True)
class SmcReport:
    """Result of a full splitting run."""

    levels: tuple[LevelRecord, ...]
    estimate: float
    cost_steps_used: int
    budget_exhausted: bool
    extinction_level: int | None
    resolution_floor: float

    @property
    def stage_estimates(self) -> tuple[float, ...]:
        return tuple(rec.p_hat for rec in self.levels)


def next_pool_size(p_hat: float, cfg: SmcConfig) -> int:
    """Pool size for the next stage: enough attempts to bank the success target.

    Scales the success target by ``safety_factor / max(p_hat, prob_floor)``
    and clamps into ``[pool_min, pool_max]``.
    """
    if not 0.0 <= p_hat <= 1.0:
        raise ValueError(f"stage estimate must be in [0, 1], got {p_hat}")
    demand = math.ceil(cfg.safety_factor * cfg.success_target / max(p_hat, cfg.prob_floor))
    return min(cfg.pool_max, max(cfg.pool_min, demand))


def resample_pool(
    checkpoints: Sequence[Checkpoint], size: int, rng: np.random.Generator
) -> list[Checkpoint]:
    """Draw the next stage's pool uniformly with replacement from the survivors."""
    if len(checkpoints) == 0:
        raise EmptyPoolError("cannot resample from zero surviving checkpoints")
    if size < 1:
        raise ValueError(f"pool size must be >= 1, got {size}")
    indices = rng.integers(0, len(checkpoints), size=size)
    return [checkpoints[i] for i in indices]


def run_level(
    sim: Simulator,
    pool: Sequence[Checkpoint],
    level: int,
    schedule: LevelSchedule,
    cfg: SmcConfig,
    ledger: BudgetLedger,
    seed: int,
) -> LevelRecord:
    """Estimate one stage probability from ``pool`` by repeated attempts.

    Each attempt restores a uniformly drawn checkpoint and steps it forward
    until it crosses the stage threshold (success, new checkpoint captured),
    reaches the horizon (failure), or the budget runs out mid-flight (attempt
    void: cost paid, counted as neither).  The absorbing failure set sits at
    the top threshold, so crossing checks subsume absorption.  Attempts run in
    batches of ``cfg.batch_size``; the stopping condition (success and attempt
    targets both met) is evaluated only at batch boundaries.
    """
    if len(pool) == 0:
        raise EmptyPoolError(f"stage {level} started with an empty pool")
    target = schedule.target(level)
    prop_rng = stream(seed, "level-propagate", level)
    select_rng = stream(seed, "level-select", level)
    pool = list(pool)
    n_pool = len(pool)

    attempts = 0
    successes = 0
    checkpoints: list[Checkpoint] = []
    success_attempts: list[int] = []
    stopping_met = False
    s_tar = cfg.success_target
    a_tar = cfg.attempt_target
    batch = cfg.batch_size
    next_level = level + 1

    # hot path: the attempt loop below runs ~A_tar times per stage and the
    # step loop up to horizon times per attempt, so per-sim constants are
    # hoisted and the ledger is kept in a local flushed on every exit
    cap = math.inf if ledger.budget is None else ledger.budget
    used = ledger.used
    cost_before = used
    horizon = sim.horizon_steps
    step = sim.step
    coordinate = sim.coordinate
    restore = sim.restore
    take_snapshot = sim.snapshot

    sel_buf: list[int] = []
    sel_pos = 0
    truncated = False
    try:
        while True:
            if successes >= s_tar and attempts >= a_tar:
                stopping_met = True
                break
            for _ in range(batch):
                if used >= cap:
                    truncated = True
                    break
                if sel_pos == len(sel_buf):
                    sel_buf = select_rng.integers(0, n_pool, size=512).tolist()
                    sel_pos = 0
                source = pool[sel_buf[sel_pos]]
                sel_pos += 1
                g = source.coordinate  # recorded at capture; restore reproduces it
                if g >= target:
                    # source already past this threshold (multi-level jump or
                    # checkpointed failure): immediate success, zero steps
                    checkpoints.append(Checkpoint(source.snapshot, next_level, source.hit_step, g))
                    success_attempts.append(attempts)
                    successes += 1
                    attempts += 1
                    continue
                restore(source.snapshot)
                j = source.hit_step  # snapshots restore to the recorded step
                hit = None
                while j < horizon:
                    if used >= cap:
                        truncated = True
                        break
                    step(prop_rng)
                    used += 1
                    j += 1
                    g = coordinate()
                    if g >= target:
                        hit = Checkpoint(take_snapshot(), next_level, j, g)
                        break
                if truncated:
                    break
                if hit is not None:
                    checkpoints.append(hit)
                    success_attempts.append(attempts)
                    successes += 1
                attempts += 1
            if truncated:
                break
    finally:
        ledger.used = used

    return LevelRecord(
        level=level,
        attempts=attempts,
        successes=successes,
        p_hat=successes / attempts if attempts else 0.0,
        cost_steps=used - cost_before,
        stopping_met=stopping_met,
        checkpoints=tuple(checkpoints),
        success_attempts=tuple(success_attempts),
    )


def _initial_pool(factory: SimFactory, schedule: LevelSchedule, cfg: SmcConfig, seed: int):
    pool = []
    base = schedule.thresholds[0]
    for i in range(cfg.initial_pool):
        sim = factory(stream(seed, "init", i))
        g = sim.coordinate()
        if g < base:
            raise ValueError(
                f"fresh initial state has coordinate {g} below the base threshold {base}"
            )
        pool.append(Checkpoint(sim.snapshot(), 0, sim.step_index, g))
    return pool


def run_smc(factory: SimFactory, schedule: LevelSchedule, cfg: SmcConfig, seed: int) -> SmcReport:
    """Full splitting run over the schedule; estimate is the product of stage ratios.

    Returns an estimate of zero, with flags, when some stage lost every
    trajectory (extinction) or the step budget ran out before the final stage
    finished.  Identical ``(factory, schedule, cfg, seed)`` give an identical
    report, bit for bit.
    """
    stages = schedule.stage_count
    ledger = BudgetLedger(cfg.budget_steps)
    pool = _initial_pool(factory, schedule, cfg, seed)
    sim = factory(stream(seed, "worker"))

    records: list[LevelRecord] = []
    budget_exhausted = False
    extinction_level: int | None = None
    completed = True

    for level in range(stages):
        rec = run_level(sim, pool, level, schedule, cfg, ledger, seed)
        if not rec.stopping_met:
            # only the budget interrupts a stage before its targets are met
            records.append(rec)
            budget_exhausted = True
            if rec.successes == 0:
                extinction_level = level
            completed = False
            break
        if level < stages - 1:
            size = next_pool_size(rec.p_hat, cfg)
            rec = replace(rec, next_pool_size=size)
            records.append(rec)
            pool = resample_pool(rec.checkpoints, size, stream(seed, "resample", level))
            if ledger.exhausted:
                budget_exhausted = True
                completed = False
                break
        else:
            records.append(rec)

    estimate = 0.0
    if completed:
        estimate = 1.0
        for rec in records:
            estimate *= rec.p_hat

    return SmcReport(
        levels=tuple(records),
        estimate=estimate,
        cost_steps_used=ledger.used,
        budget_exhausted=budget_exhausted,
        extinction_level=extinction_level,
        resolution_floor=1.0 / (cfg.attempt_target**stages),
    )


@dataclass(frozen=True)
class SmcDiagnostics:
    """Predicted estimator quality, with observed stage estimates substituted in."""

    defined: bool
    stage_rel_bias: tuple[float, ...] = ()
    stage_rel_var: tuple[float, ...] = ()
    rel_bias: float | None = None
    rel_var: float | None = None
    rel_bias_first_order: float | None = None
    rel_var_first_order: float | None = None
    classical_rel_var: float | None = None


def predict_diagnostics(report: SmcReport, cfg: SmcConfig) -> SmcDiagnostics:
    """Stopping-bias and variance predictions for a completed run.

    Per stage both relative bias and relative variance are
    ``(1 - p_hat) / success_target``; stages compose multiplicatively, and the
    fixed-effort variance formula (attempt counts standing in for the common
    effort) is included for comparison.  Undefined when the run reported zero.
    """
    if report.estimate <= 0.0 or any(rec.p_hat <= 0.0 for rec in report.levels):
        return SmcDiagnostics(defined=False)
    stages = [stage_prediction(rec.p_hat, cfg.success_target) for rec in report.levels]
    chain = chain_prediction(stages)
    classical = classical_rel_variance(
        [rec.p_hat for rec in report.levels], [rec.attempts for rec in report.levels]
    )
    return SmcDiagnostics(
        defined=True,
        stage_rel_bias=tuple(s.rel_bias for s in stages),
        stage_rel_var=tuple(s.rel_var for s in stages),
        rel_bias=chain.rel_bias,
        rel_var=chain.rel_var,
        rel_bias_first_order=chain.rel_bias_first_order,
        rel_var_first_order=chain.rel_var_first_order,
        classical_rel_var=classical,
    )
