"""Zeroth-order gradient estimators and estimator-error diagnostics.

Perturbation directions come from a counter-based stream: the triple
``(seed, stream, position)`` fully determines ``v``, so any draw can be
reproduced without replaying the ones before it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidComparisonError, InvalidParameterError


@dataclass(frozen=True, eq=False)
class Perturbation:
    v: np.ndarray
    seed_position: int = 0


def draw_perturbation(seed: int, position: int, p: int, stream: int = 0) -> Perturbation:
    """Standard normal direction reproducible from ``(seed, stream, position)``."""
    rng = np.random.default_rng([int(seed), int(stream), int(position)])
    v = rng.standard_normal(p)
    v.setflags(write=False)
    return Perturbation(v=v, seed_position=int(position))


def draw_directions(seed: int, n: int, p: int) -> np.ndarray:
    """Batch of ``n`` i.i.d. standard normal directions, for Monte Carlo checks."""
    return np.random.default_rng(seed).standard_normal((n, p))


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    g: np.ndarray
    phi_plus: float
    phi_base: float
    delta: float
    v: Perturbation


def _check_delta(delta):
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")


def feedback_two_point_estimate(phi_base: float, phi_plus: float,
                                v: Perturbation, delta: float) -> GradientEstimate:
    """``(v / delta) (phi_plus - phi_base)`` from two sequential plant measurements."""
    _check_delta(delta)
    g = v.v / delta * (phi_plus - phi_base)
    return GradientEstimate(g=g, phi_plus=float(phi_plus), phi_base=float(phi_base),
                            delta=float(delta), v=v)


def two_point_oracle(f: Callable, u, v: Perturbation, delta: float) -> GradientEstimate:
    """Static two-point estimate ``(v / delta) (f(u + delta v) - f(u))``."""
    _check_delta(delta)
    u = np.asarray(u, dtype=float)
    base = float(f(u))
    plus = float(f(u + delta * v.v))
    return feedback_two_point_estimate(base, plus, v, delta)


def one_point_residual_estimate(phi_now: float, phi_prev: float,
                                v_now: Perturbation, delta: float) -> GradientEstimate:
    """Residual-feedback estimate reusing the previous iteration's measurement."""
    _check_delta(delta)
    g = v_now.v / delta * (phi_now - phi_prev)
    return GradientEstimate(g=g, phi_plus=float(phi_now), phi_base=float(phi_prev),
                            delta=float(delta), v=v_now)


def estimator_error(g_feedback: GradientEstimate,
                    g_ideal: GradientEstimate) -> tuple[np.ndarray, float]:
    if g_feedback.delta != g_ideal.delta:
        raise InvalidComparisonError(
            f"estimates use different delta ({g_feedback.delta} vs {g_ideal.delta})"
        )
    if not np.array_equal(g_feedback.v.v, g_ideal.v.v):
        raise InvalidComparisonError("estimates use different perturbation directions")
    e = g_feedback.g - g_ideal.g
    return e, float(e @ e)


def two_point_oracle_batch(f_batch: Callable, u, V: np.ndarray, delta: float) -> np.ndarray:
    """Row-wise two-point estimates for a batch of directions ``V`` (n x p).

    ``f_batch`` maps an ``(m, p)`` array of points to ``m`` values.
    """
    _check_delta(delta)
    u = np.asarray(u, dtype=float)
    base = float(np.asarray(f_batch(u[None, :]))[0])
    plus = np.asarray(f_batch(u + delta * V), dtype=float)
    return V * ((plus - base) / delta)[:, None]
