"""Naive Monte Carlo baseline at a matched step budget.

Runs as many full trajectories as the step budget affords (or an explicit
count), each from a fresh initial state, and reports the hit fraction.  The
report carries the accounting needed to compare against splitting runs: the
smallest resolvable probability ``1 / N`` and the predicted relative variance
``(1 - p) / (p N)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from resplit.core import Simulator, stream

__all__ = ["McConfig", "McReport", "mc_plan", "run_mc"]


@dataclass(frozen=True)
class McConfig:
    """Either a step budget (trajectory count derived) or an explicit count."""

    budget_steps: int | None = 5_000_000
    trajectories: int | None = None

    def __post_init__(self) -> None:
        if (self.budget_steps is None) == (self.trajectories is None):
            raise ValueError("set exactly one of budget_steps and trajectories")
        if self.budget_steps is not None and self.budget_steps < 1:
            raise ValueError(f"budget_steps must be >= 1, got {self.budget_steps}")
        if self.trajectories is not None and self.trajectories < 1:
            raise ValueError(f"trajectories must be >= 1, got {self.trajectories}")


def mc_plan(cfg: McConfig, horizon_steps: int) -> tuple[int, float]:
    """Trajectory count and resolution floor, before any simulation.

    With a step budget the count is ``budget // horizon``: every planned
    trajectory must be affordable at full length.
    """
    if horizon_steps < 1:
        raise ValueError(f"horizon_steps must be >= 1, got {horizon_steps}")
    if cfg.trajectories is not None:
        count = cfg.trajectories
    else:
        count = cfg.budget_steps // horizon_steps
        if count < 1:
            raise ValueError(
                f"budget of {cfg.budget_steps} steps is below one {horizon_steps}-step trajectory"
            )
    return count, 1.0 / count


@dataclass(frozen=True)
class McReport:
    trajectories: int
    hits: int
    estimate: float
    cost_steps_used: int
    min_resolvable: float
    rel_var_pred: float | None  # (1 - p)(p N)^-1, None when no hits landed


def run_mc(
    factory: Callable[[np.random.Generator], Simulator], cfg: McConfig, seed: int
) -> McReport:
    """Run the planned trajectories; each stops at its first absorption or the horizon."""
    probe = factory(stream(seed, "mc-probe"))
    count, min_resolvable = mc_plan(cfg, probe.horizon_steps)

    hits = 0
    cost = 0
    for i in range(count):
        rng = stream(seed, "mc-traj", i)
        sim = factory(rng)
        horizon = sim.horizon_steps
        step = sim.step
        failed = sim.is_failure()
        start = sim.step_index
        j = start
        while not failed and j < horizon:
            step(rng)
            j += 1
            failed = sim.is_failure()
        cost += j - start
        hits += failed

    estimate = hits / count
    rel_var = None
    if hits > 0 and estimate < 1.0:
        rel_var = (1.0 - estimate) / (estimate * count)
    elif hits == count:
        rel_var = 0.0
    return McReport(
        trajectories=count,
        hits=hits,
        estimate=estimate,
        cost_steps_used=cost,
        min_resolvable=min_resolvable,
        rel_var_pred=rel_var,
    )
