"""Delay-critical network model with persistence-triggered failure.

A single queue is fed at constant load and drained at a capacity that follows
a logistic function of a scalar health state.  Health recovers at a
configurable rate when capacity is depressed and is knocked down by a
log-AR(1) stress process.  Service delay is backlog over capacity; when the
delay stays at or above the threshold for a full grace window the system has
failed to recover in time and the trajectory is absorbed.

The reaction coordinate ``g`` maps a state onto ``[0, 2]``: the closeness of
the current delay to its threshold (capped at 1) plus the filled fraction of
the grace window.  ``g == 2`` exactly on the failure set, so level schedules
over ``g`` interpolate between "nominal" and "failed".
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from resplit.core import HorizonExceededError, LevelSchedule, SimTime, horizon_step_count

__all__ = [
    "NetParams",
    "NetSimulator",
    "NetState",
    "PolicyContext",
    "baseline_params",
    "capacity",
    "default_levels",
    "is_failure",
    "reaction_coordinate",
    "service_delay",
    "simulator_factory",
    "step_dynamics",
]

_HEALTH_CLIP = 50.0  # logistic input clamp; capacity saturates far before this


@dataclass(frozen=True)
class NetParams:
    """Model constants.  Defaults reproduce the documented baseline profile."""

    arrival_load: float = 0.7
    step_seconds: float = 0.05
    horizon_seconds: float = 60.0
    initial_backlog: float = 0.0
    initial_health: float = 0.95
    recovery_rate: float = 0.2
    recovery_exponent: float = 2.0
    stress_persistence: float = 0.75
    stress_log_mean: float = -5.0
    stress_log_sd: float = 0.55
    delay_threshold: float = 0.1
    grace_seconds: float = 5.0
    initial_log_stress: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.arrival_load < 1.0:
            raise ValueError(f"arrival_load must be in (0, 1), got {self.arrival_load}")
        horizon_step_count(self.horizon_seconds, self.step_seconds)  # validates both
        if self.initial_backlog < 0.0:
            raise ValueError(f"initial_backlog must be >= 0, got {self.initial_backlog}")
        if self.recovery_rate <= 0.0:
            raise ValueError(f"recovery_rate must be > 0, got {self.recovery_rate}")
        if self.recovery_rate * self.step_seconds > 1.0:
            raise ValueError(
                f"recovery_rate {self.recovery_rate} unstable for step {self.step_seconds} s"
            )
        if self.recovery_exponent <= 1.0:
            raise ValueError(f"recovery_exponent must be > 1, got {self.recovery_exponent}")
        if not 0.0 <= self.stress_persistence < 1.0:
            raise ValueError(
                f"stress_persistence must be in [0, 1), got {self.stress_persistence}"
            )
        if self.stress_log_sd < 0.0:
            # 0 is allowed: it freezes the stress at its mean, handy for exact tests
            raise ValueError(f"stress_log_sd must be >= 0, got {self.stress_log_sd}")
        if self.delay_threshold <= 0.0:
            raise ValueError(f"delay_threshold must be > 0, got {self.delay_threshold}")
        if self.grace_seconds <= 0.0:
            raise ValueError(f"grace_seconds must be > 0, got {self.grace_seconds}")

    @property
    def horizon_steps(self) -> int:
        return horizon_step_count(self.horizon_seconds, self.step_seconds)

    @property
    def grace_steps(self) -> int:
        # ceil with a guard so 5.0 / 0.05 lands on 100, not 101
        return max(1, math.ceil(self.grace_seconds / self.step_seconds - 1e-9))

    @property
    def start_log_stress(self) -> float:
        if self.initial_log_stress is None:
            return self.stress_log_mean
        return self.initial_log_stress


@dataclass(frozen=True, slots=True)
class NetState:
    """Full model state at one step: enough to restart the trajectory exactly."""

    step_index: int
    backlog: float
    health: float
    log_stress: float
    exceed_count: int


@dataclass(frozen=True, slots=True)
class PolicyContext:
    """Active mitigation setting: the recovery rate (and its exponent) in force."""

    recovery_rate: float
    recovery_exponent: float

    def __post_init__(self) -> None:
        if self.recovery_rate <= 0.0:
            raise ValueError(f"recovery_rate must be > 0, got {self.recovery_rate}")
        if self.recovery_exponent <= 1.0:
            raise ValueError(f"recovery_exponent must be > 1, got {self.recovery_exponent}")


def baseline_params() -> NetParams:
    """The documented default operating point."""
    return NetParams()


def default_levels() -> LevelSchedule:
    """Default splitting schedule over ``g``: faint congestion, onset, critical, failed."""
    return LevelSchedule(
        thresholds=(0.0, 0.1, 1.0, 1.5, 2.0),
        labels=("nominal", "onset", "degraded", "critical", "failed"),
    )


def capacity(health: float) -> float:
    """Service capacity in (0, 1): logistic in the health state."""
    h = -_HEALTH_CLIP if health < -_HEALTH_CLIP else (_HEALTH_CLIP if health > _HEALTH_CLIP else health)
    return 1.0 / (1.0 + math.exp(-h))


def service_delay(state: NetState) -> float:
    """Current backlog expressed in time units at the current capacity."""
    return state.backlog / capacity(state.health)


def is_failure(state: NetState, params: NetParams) -> bool:
    """True once the delay threshold has been exceeded for the whole grace window."""
    return state.exceed_count >= params.grace_steps


def reaction_coordinate(state: NetState, params: NetParams) -> float:
    """Progress towards failure in [0, 2]; exactly 2 on the failure set.

    Sum of the delay's closeness to threshold (capped at 1) and the filled
    fraction of the grace window.  The failure branch is pinned to 2 so the
    equivalence ``g == 2  <=>  failed`` holds even if the queue drains on the
    very step the window fills.
    """
    grace = params.grace_steps
    if state.exceed_count >= grace:
        return 2.0
    ratio = service_delay(state) / params.delay_threshold
    if ratio > 1.0:
        ratio = 1.0
    return ratio + state.exceed_count / grace


def step_dynamics(
    state: NetState, params: NetParams, ctx: PolicyContext, gamma: float
) -> NetState:
    """One step of the dynamics, as a pure function of the pre-step state.

    The queue, health and persistence updates all read the time-``j`` values:
    in particular the delay that feeds the exceedance counter is the pre-step
    one.  ``gamma`` is the standard-normal stress innovation.
    """
    if state.step_index >= params.horizon_steps:
        raise HorizonExceededError(
            f"step {state.step_index} is already at the {params.horizon_steps}-step horizon"
        )
    c = capacity(state.health)
    backlog = state.backlog + (params.arrival_load - c) * params.step_seconds
    if backlog < 0.0:
        backlog = 0.0
    health = (
        state.health
        + ctx.recovery_rate * (1.0 - c) ** ctx.recovery_exponent
        - math.exp(state.log_stress)
    )
    log_stress = (
        params.stress_persistence * state.log_stress
        + (1.0 - params.stress_persistence) * params.stress_log_mean
        + gamma * params.stress_log_sd
    )
    delay = state.backlog / c
    if delay >= params.delay_threshold:
        exceed = state.exceed_count + 1
        if exceed > params.grace_steps:
            exceed = params.grace_steps
    else:
        exceed = 0
    return NetState(
        step_index=state.step_index + 1,
        backlog=backlog,
        health=health,
        log_stress=log_stress,
        exceed_count=exceed,
    )


class NetSimulator:
    """Stateful, restartable trajectory of the network model.

    The step arithmetic mirrors :func:`step_dynamics` line for line (kept
    inline for speed; the equivalence is locked by a bit-exactness test).
    Snapshots are plain value tuples including the active policy, so restoring
    a checkpoint also restores the mitigation setting that produced it.
    """

    __slots__ = (
        "params", "_j", "_backlog", "_health", "_log_stress", "_exceed",
        "_nu", "_phi", "_horizon", "_grace", "_load", "_dt", "_delta",
        "_rho", "_mu_blend", "_sigma",
    )

    def __init__(self, params: NetParams, ctx: PolicyContext | None = None) -> None:
        self.params = params
        if ctx is None:
            ctx = PolicyContext(params.recovery_rate, params.recovery_exponent)
        self._horizon = params.horizon_steps
        self._grace = params.grace_steps
        self._load = params.arrival_load
        self._dt = params.step_seconds
        self._delta = params.delay_threshold
        self._rho = params.stress_persistence
        self._mu_blend = (1.0 - params.stress_persistence) * params.stress_log_mean
        self._sigma = params.stress_log_sd
        self.set_policy(ctx)
        self._j = 0
        self._backlog = params.initial_backlog
        self._health = params.initial_health
        self._log_stress = params.start_log_stress
        self._exceed = 0

    @property
    def step_index(self) -> int:
        return self._j

    @property
    def horizon_steps(self) -> int:
        return self._horizon

    @property
    def time(self) -> SimTime:
        return SimTime(self._j, self._dt, self._horizon)

    @property
    def policy(self) -> PolicyContext:
        return PolicyContext(self._nu, self._phi)

    def set_policy(self, ctx: PolicyContext) -> None:
        """Switch the active mitigation setting (takes effect from the next step)."""
        if ctx.recovery_rate * self._dt > 1.0:
            raise ValueError(
                f"recovery_rate {ctx.recovery_rate} unstable for step {self._dt} s"
            )
        self._nu = ctx.recovery_rate
        self._phi = ctx.recovery_exponent

    def state(self) -> NetState:
        return NetState(self._j, self._backlog, self._health, self._log_stress, self._exceed)

    def snapshot(self) -> tuple:
        return (
            self._j, self._backlog, self._health, self._log_stress, self._exceed,
            self._nu, self._phi,
        )

    def restore(self, snap: tuple) -> None:
        (
            self._j, self._backlog, self._health, self._log_stress, self._exceed,
            self._nu, self._phi,
        ) = snap

    def step(self, rng: np.random.Generator) -> None:
        j = self._j
        if j >= self._horizon:
            raise HorizonExceededError(
                f"step {j} is already at the {self._horizon}-step horizon"
            )
        h = self._health
        hc = -_HEALTH_CLIP if h < -_HEALTH_CLIP else (_HEALTH_CLIP if h > _HEALTH_CLIP else h)
        c = 1.0 / (1.0 + math.exp(-hc))
        b = self._backlog
        backlog = b + (self._load - c) * self._dt
        if backlog < 0.0:
            backlog = 0.0
        self._backlog = backlog
        self._health = h + self._nu * (1.0 - c) ** self._phi - math.exp(self._log_stress)
        self._log_stress = (
            self._rho * self._log_stress + self._mu_blend
            + rng.standard_normal() * self._sigma
        )
        delay = b / c
        if delay >= self._delta:
            exceed = self._exceed + 1
            if exceed > self._grace:
                exceed = self._grace
            self._exceed = exceed
        else:
            self._exceed = 0
        self._j = j + 1

    def coordinate(self) -> float:
        exceed = self._exceed
        grace = self._grace
        if exceed >= grace:
            return 2.0
        h = self._health
        hc = -_HEALTH_CLIP if h < -_HEALTH_CLIP else (_HEALTH_CLIP if h > _HEALTH_CLIP else h)
        c = 1.0 / (1.0 + math.exp(-hc))
        ratio = self._backlog / c / self._delta
        if ratio > 1.0:
            ratio = 1.0
        return ratio + exceed / grace

    def delay(self) -> float:
        return service_delay(self.state())

    def is_failure(self) -> bool:
        return self._exceed >= self._grace


def simulator_factory(params: NetParams) -> Callable[[np.random.Generator], NetSimulator]:
    """Factory with the engine-facing signature; the initial state is deterministic."""

    def make(_rng: np.random.Generator) -> NetSimulator:
        return NetSimulator(params)

    return make
