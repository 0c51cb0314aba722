"""Shared primitives: simulation clock, budget ledger, checkpoints, level schedules, RNG streams.

Everything here is engine-agnostic.  Simulators are restartable state machines
that advance one step at a time and can be snapshotted and restored by value;
the splitting and plain Monte Carlo drivers are written against that contract
only, so any model exposing it can be plugged in.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Any, Protocol, runtime_checkable

import numpy as np

__all__ = [
    "BudgetLedger",
    "Checkpoint",
    "EmptyPoolError",
    "HorizonExceededError",
    "LevelSchedule",
    "SimTime",
    "Simulator",
    "derive_seed",
    "stream",
]


class HorizonExceededError(RuntimeError):
    """Raised when a simulator is asked to step past its horizon."""


class EmptyPoolError(RuntimeError):
    """Raised when a checkpoint pool would be resampled from zero survivors."""


@dataclass(frozen=True, slots=True)
class SimTime:
    """Discrete simulation clock: step ``j`` of ``horizon_steps``, each ``step_seconds`` long."""

    step_index: int
    step_seconds: float
    horizon_steps: int

    def __post_init__(self) -> None:
        if self.step_seconds <= 0.0:
            raise ValueError(f"step_seconds must be positive, got {self.step_seconds}")
        if self.horizon_steps < 1:
            raise ValueError(f"horizon_steps must be >= 1, got {self.horizon_steps}")
        if not 0 <= self.step_index <= self.horizon_steps:
            raise ValueError(
                f"step_index {self.step_index} outside [0, {self.horizon_steps}]"
            )

    @property
    def seconds(self) -> float:
        return self.step_index * self.step_seconds

    @property
    def horizon_seconds(self) -> float:
        return self.horizon_steps * self.step_seconds

    @property
    def at_horizon(self) -> bool:
        return self.step_index >= self.horizon_steps


def horizon_step_count(horizon_seconds: float, step_seconds: float) -> int:
    """Number of steps in a horizon; the horizon must be an integer number of steps."""
    if step_seconds <= 0.0:
        raise ValueError(f"step_seconds must be positive, got {step_seconds}")
    steps = round(horizon_seconds / step_seconds)
    if steps < 1 or not math.isclose(steps * step_seconds, horizon_seconds, rel_tol=1e-9):
        raise ValueError(
            f"horizon {horizon_seconds} s is not an integral number of {step_seconds} s steps"
        )
    return steps


class BudgetLedger:
    """Counts simulation steps against a hard cap.

    ``budget=None`` means unlimited (used by side computations that are
    accounted but not capped).  Charging never overshoots: callers check
    ``remaining`` before spending.
    """

    __slots__ = ("budget", "used")

    def __init__(self, budget: int | None) -> None:
        if budget is not None:
            if budget < 1:
                raise ValueError(f"budget must be >= 1 step, got {budget}")
            budget = int(budget)
        self.budget = budget
        self.used = 0

    @property
    def remaining(self) -> float:
        if self.budget is None:
            return math.inf
        return self.budget - self.used

    @property
    def exhausted(self) -> bool:
        return self.budget is not None and self.used >= self.budget

    def charge(self, steps: int = 1) -> None:
        if steps < 0:
            raise ValueError("cannot charge a negative step count")
        new_used = self.used + steps
        if self.budget is not None and new_used > self.budget:
            raise ValueError(
                f"charge of {steps} steps overruns budget ({self.used}/{self.budget} used)"
            )
        self.used = new_used

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        cap = "inf" if self.budget is None else str(self.budget)
        return f"BudgetLedger(used={self.used}, budget={cap})"


@dataclass(frozen=True, slots=True)
class Checkpoint:
    """A restorable state captured when a trajectory first reached a level.

    ``snapshot`` is the opaque value returned by ``Simulator.snapshot``;
    ``coordinate`` is the reaction-coordinate value at capture time, which may
    exceed the level threshold when a single step jumps several levels.
    """

    snapshot: Any
    level_index: int
    hit_step: int
    coordinate: float

    def __post_init__(self) -> None:
        if self.level_index < 0:
            raise ValueError(f"level_index must be >= 0, got {self.level_index}")
        if self.hit_step < 0:
            raise ValueError(f"hit_step must be >= 0, got {self.hit_step}")


@dataclass(frozen=True)
class LevelSchedule:
    """Strictly increasing reaction-coordinate thresholds ``l_0 < ... < l_K``.

    Stage ``k`` estimates the probability of reaching ``thresholds[k+1]`` from
    checkpoints at ``thresholds[k]``; the top threshold is the failure set.
    """

    thresholds: tuple[float, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if len(self.thresholds) < 2:
            raise ValueError("a schedule needs at least two thresholds (one stage)")
        for lo, hi in zip(self.thresholds, self.thresholds[1:]):
            if not lo < hi:
                raise ValueError(f"thresholds must be strictly increasing, got {self.thresholds}")
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
            if len(self.labels) != len(self.thresholds):
                raise ValueError(
                    f"{len(self.labels)} labels for {len(self.thresholds)} thresholds"
                )

    @property
    def stage_count(self) -> int:
        return len(self.thresholds) - 1

    @property
    def top(self) -> float:
        return self.thresholds[-1]

    def target(self, stage: int) -> float:
        """Threshold a stage-``stage`` attempt must reach."""
        if not 0 <= stage < self.stage_count:
            raise IndexError(f"stage {stage} outside [0, {self.stage_count})")
        return self.thresholds[stage + 1]


@runtime_checkable
class Simulator(Protocol):
    """Restartable single-trajectory simulator.

    ``snapshot`` must return a value copy: mutating the live simulator never
    changes an existing snapshot, and restoring one must reproduce the saved
    state bit for bit.  ``step`` consumes randomness only from the generator
    it is handed, so distinct generators give independent continuations.
    """

    @property
    def step_index(self) -> int: ...

    @property
    def horizon_steps(self) -> int: ...

    def step(self, rng: np.random.Generator) -> None: ...

    def snapshot(self) -> Any: ...

    def restore(self, snap: Any) -> None: ...

    def coordinate(self) -> float: ...

    def is_failure(self) -> bool: ...


def _purpose_code(purpose: str) -> int:
    return int.from_bytes(hashlib.blake2b(purpose.encode(), digest_size=8).digest(), "little")


def stream(master_seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Independent counter-based generator keyed by ``(master_seed, purpose, indices)``.

    Streams with distinct keys are statistically independent, and a given key
    yields the same draw sequence on every platform, so results depend only on
    the seed and the order in which each consumer uses its own stream.
    """
    entropy = (int(master_seed) & _SEED_MASK, _purpose_code(purpose), *(int(i) for i in indices))
    seq = np.random.SeedSequence(entropy=entropy)
    return np.random.Generator(np.random.Philox(seq))


_SEED_MASK = (1 << 63) - 1


def derive_seed(master_seed: int, *parts: object) -> int:
    """Deterministic child seed for a labelled piece of work (sweep point, replication).

    Floats are canonicalised through ``repr`` so the same grid value always
    hashes identically regardless of how it was produced.
    """
    blob = repr(int(master_seed)).encode()
    for part in parts:
        if isinstance(part, float) and part.is_integer():
            part = int(part)  # 2.0 and 2 address the same grid point
        blob += b"|" + repr(part).encode()
    digest = hashlib.blake2b(blob, digest_size=8).digest()
    return int.from_bytes(digest, "little") & _SEED_MASK
