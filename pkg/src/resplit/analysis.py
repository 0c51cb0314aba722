"""Estimator diagnostics: stopping-bias/variance predictions and exact stage oracles.

A stage that keeps drawing attempts until it has seen ``s`` successes reports
``p_hat = s / A`` with ``A`` the (random) attempt count.  The prediction
formulas here give the leading-order relative bias and variance of that ratio
and of products of independent stages; the ``exact_stage_*`` functions sum the
underlying negative-binomial series directly and serve as an independent
reference the sampling engines can be checked against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

__all__ = [
    "ChainPrediction",
    "StagePrediction",
    "chain_prediction",
    "classical_rel_variance",
    "exact_stage_mean",
    "exact_stage_moments",
    "geometric_spread",
    "normal_interval",
    "stage_prediction",
    "wilson_interval",
]


@dataclass(frozen=True, slots=True)
class StagePrediction:
    """Leading-order behaviour of one success-stopped stage estimator."""

    p: float
    success_target: int
    rel_bias: float
    rel_var: float
    mean_attempts: float
    var_attempts: float


def stage_prediction(p: float, success_target: int) -> StagePrediction:
    """Predicted relative bias/variance of ``p_hat`` for a stage stopped at ``success_target`` successes.

    Both the relative bias and the relative variance are ``(1 - p) / success_target``;
    the attempt count has mean ``success_target / p`` and variance
    ``success_target * (1 - p) / p**2``.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"stage probability must be in (0, 1], got {p}")
    if success_target < 1:
        raise ValueError(f"success_target must be >= 1, got {success_target}")
    q = (1.0 - p) / success_target
    return StagePrediction(
        p=p,
        success_target=success_target,
        rel_bias=q,
        rel_var=q,
        mean_attempts=success_target / p,
        var_attempts=success_target * (1.0 - p) / (p * p),
    )


def _stage_series(p: float, success_target: int, tol: float) -> tuple[float, float]:
    """Sum ``E[(s/A)^m]`` for m = 1, 2 over the attempt-count law, tail-certified below ``tol``."""
    s = success_target
    if p == 1.0:
        return 1.0, 1.0
    # A = s + F with F ~ NegBin(s, p) counting pre-success failures.  Each term
    # carries weight (s/(s+f))^m <= 1, so the truncated tail is bounded by the
    # survival mass, which we grow the cutoff until it certifies below tol.
    cutoff = int(stats.nbinom.isf(tol / 4.0, s, p)) + 16
    for _ in range(64):
        if float(stats.nbinom.sf(cutoff, s, p)) < tol:
            break
        cutoff *= 2
    else:  # pragma: no cover - isf would have to be wildly off
        raise RuntimeError(f"could not certify series tail below {tol} for p={p}, s={s}")
    f = np.arange(cutoff + 1)
    weights = np.exp(stats.nbinom.logpmf(f, s, p))
    ratio = s / (s + f)
    return float(weights @ ratio), float(weights @ (ratio * ratio))


def exact_stage_mean(p: float, success_target: int, *, tol: float = 1e-12) -> float:
    """Exact ``E[s / A]`` for a stage stopped at its ``s``-th success, by series summation.

    For ``success_target=1`` this is the geometric-law value ``-p ln p / (1-p)``.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"stage probability must be in (0, 1], got {p}")
    if success_target < 1:
        raise ValueError(f"success_target must be >= 1, got {success_target}")
    mean, _ = _stage_series(p, success_target, tol)
    return mean


def exact_stage_moments(p: float, success_target: int, *, tol: float = 1e-12) -> tuple[float, float]:
    """Exact ``(mean, variance)`` of ``s / A`` by series summation."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"stage probability must be in (0, 1], got {p}")
    if success_target < 1:
        raise ValueError(f"success_target must be >= 1, got {success_target}")
    mean, second = _stage_series(p, success_target, tol)
    return mean, max(second - mean * mean, 0.0)


@dataclass(frozen=True, slots=True)
class ChainPrediction:
    """Relative bias/variance of a product of independent stage estimators."""

    rel_bias: float
    rel_var: float
    rel_bias_first_order: float
    rel_var_first_order: float


def chain_prediction(stages: Iterable[StagePrediction | tuple[float, float]]) -> ChainPrediction:
    """Compose per-stage relative bias/variance into the product estimator's.

    Accepts ``StagePrediction`` objects or bare ``(rel_bias, rel_var)`` pairs.
    Exact under stage independence:

    - bias factor: ``prod(1 + b_k) - 1``
    - variance:    ``prod((1 + b_k)^2 + v_k) - prod(1 + b_k)^2``

    plus the small-error linearisations ``sum(b_k)`` and ``sum(v_k)``.
    """
    bias_prod = 1.0
    second_prod = 1.0
    bias_sum = 0.0
    var_sum = 0.0
    count = 0
    for stage in stages:
        if isinstance(stage, StagePrediction):
            b, v = stage.rel_bias, stage.rel_var
        else:
            b, v = stage
        if v < 0.0:
            raise ValueError(f"relative variance must be >= 0, got {v}")
        m = 1.0 + b
        bias_prod *= m
        second_prod *= m * m + v
        bias_sum += b
        var_sum += v
        count += 1
    if count == 0:
        raise ValueError("chain_prediction needs at least one stage")
    return ChainPrediction(
        rel_bias=bias_prod - 1.0,
        rel_var=second_prod - bias_prod * bias_prod,
        rel_bias_first_order=bias_sum,
        rel_var_first_order=var_sum,
    )


def classical_rel_variance(stage_probs: Sequence[float], pool_sizes: int | Sequence[int]) -> float:
    """Fixed-effort splitting variance ``sum (1 - p_k) / (p_k * M_k)``.

    ``pool_sizes`` may be a single common effort or one value per stage.  This
    ignores stopping effects entirely and is reported as a diagnostic only.
    """
    probs = list(stage_probs)
    if not probs:
        raise ValueError("need at least one stage probability")
    if isinstance(pool_sizes, (int, np.integer)):
        sizes: list[int] = [int(pool_sizes)] * len(probs)
    else:
        sizes = [int(m) for m in pool_sizes]
        if len(sizes) != len(probs):
            raise ValueError(f"{len(sizes)} pool sizes for {len(probs)} stages")
    total = 0.0
    for p, m in zip(probs, sizes):
        if not 0.0 < p <= 1.0:
            raise ValueError(f"stage probability must be in (0, 1], got {p}")
        if m < 1:
            raise ValueError(f"pool size must be >= 1, got {m}")
        total += (1.0 - p) / (p * m)
    return total


def wilson_interval(hits: int, trials: int, conf: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (well-behaved at 0 hits)."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not 0 <= hits <= trials:
        raise ValueError(f"hits {hits} outside [0, {trials}]")
    z = float(stats.norm.ppf(0.5 + conf / 2.0))
    phat = hits / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if hits == 0 else max(centre - half, 0.0)
    hi = 1.0 if hits == trials else min(centre + half, 1.0)
    return lo, hi


def normal_interval(estimate: float, rel_sd: float, conf: float = 0.95) -> tuple[float, float]:
    """Normal-approximation interval from an estimate and its relative standard deviation."""
    if estimate < 0.0 or rel_sd < 0.0:
        raise ValueError("estimate and rel_sd must be >= 0")
    z = float(stats.norm.ppf(0.5 + conf / 2.0))
    half = z * rel_sd * estimate
    return max(estimate - half, 0.0), estimate + half


def geometric_spread(values: Sequence[float]) -> float:
    """Geometric standard deviation ``exp(std(log x))`` of strictly positive values."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        raise ValueError("need at least two values")
    if np.any(arr <= 0.0):
        raise ValueError("geometric spread requires strictly positive values")
    return float(np.exp(np.std(np.log(arr), ddof=1)))
