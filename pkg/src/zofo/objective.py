"""Quadratic steady-state loss, its reduced form, and Gaussian smoothing."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DegenerateObjectiveError, InvalidParameterError
from .plant import PlantModel, steady_state_output


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """``Phi(u, y) = u^T R1 u + R2^T u + ||y||^2`` with ``R1 = R3^T R3``."""

    R1: np.ndarray
    R2: np.ndarray
    R3: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        R1 = np.atleast_2d(np.array(self.R1, dtype=float))
        R2 = np.array(self.R2, dtype=float).reshape(-1)
        p = R2.shape[0]
        if R1.shape != (p, p):
            raise ConfigurationError(f"R1 has shape {R1.shape}, expected ({p}, {p})")
        R1 = 0.5 * (R1 + R1.T)
        if self.R3 is None:
            w, V = np.linalg.eigh(R1)
            if w.min() < -1e-10 * max(1.0, abs(w).max()):
                raise ConfigurationError("R1 must be positive semidefinite")
            R3 = np.sqrt(np.clip(w, 0.0, None))[:, None] * V.T
        else:
            R3 = np.atleast_2d(np.array(self.R3, dtype=float))
            if R3.shape[1] != p:
                raise ConfigurationError(f"R3 has {R3.shape[1]} columns, expected {p}")
        for arr in (R1, R2, R3):
            arr.setflags(write=False)
        object.__setattr__(self, "R1", R1)
        object.__setattr__(self, "R2", R2)
        object.__setattr__(self, "R3", R3)

    @classmethod
    def from_factor(cls, R3, R2, seed=None) -> "QuadraticObjective":
        R3 = np.atleast_2d(np.array(R3, dtype=float))
        return cls(R1=R3.T @ R3, R2=R2, R3=R3, seed=seed)

    @property
    def p(self) -> int:
        return self.R2.shape[0]

    def value(self, u, y) -> float:
        return phi(self, u, y)

    def grad_u(self, u) -> np.ndarray:
        return 2.0 * self.R1 @ u + self.R2

    def grad_y(self, y) -> np.ndarray:
        return 2.0 * np.asarray(y, dtype=float)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "R3": self.R3.tolist(), "R2": self.R2.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "QuadraticObjective":
        return cls.from_factor(data["R3"], data["R2"], seed=data.get("seed"))


@dataclass(frozen=True, eq=False)
class CallableObjective:
    """Wraps an arbitrary loss ``func(u, y) -> float``; no analytic gradients."""

    func: Callable[[np.ndarray, np.ndarray], float]

    def value(self, u, y) -> float:
        return float(self.func(u, y))


def random_objective(seed: int, p: int = 5) -> QuadraticObjective:
    """Objective with ``R3`` and ``R2`` entries drawn from U(0, 1)."""
    rng = np.random.default_rng(seed)
    R3 = rng.uniform(size=(p, p))
    R2 = rng.uniform(size=p)
    return QuadraticObjective.from_factor(R3, R2, seed=seed)


def phi(obj: QuadraticObjective, u, y) -> float:
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != (obj.p,):
        raise ConfigurationError(f"u has shape {u.shape}, expected ({obj.p},)")
    if y.ndim != 1:
        raise ConfigurationError(f"y must be a vector, got shape {y.shape}")
    return float(u @ obj.R1 @ u + obj.R2 @ u + y @ y)


@dataclass(frozen=True)
class DerivedConstants:
    L: float
    M_phi: float | None = None
    M: float | None = None
    note: str = ""


@dataclass(frozen=True, eq=False)
class ReducedObjective:
    """The loss composed with the plant's steady-state output map."""

    objective: QuadraticObjective
    plant: PlantModel

    def __post_init__(self):
        if self.plant.dims[1] != self.objective.p:
            raise ConfigurationError(
                f"plant has {self.plant.dims[1]} inputs, objective expects {self.objective.p}"
            )
        if self.plant.dims[2] == 0:  # pragma: no cover
            raise ConfigurationError("plant has no outputs")

    @cached_property
    def hessian(self) -> np.ndarray:
        G = self.plant.G
        return 2.0 * (self.objective.R1 + G.T @ G)

    @cached_property
    def linear_term(self) -> np.ndarray:
        return self.objective.R2 + 2.0 * self.plant.G.T @ self.plant.H

    def __call__(self, u) -> float:
        return tilde_phi(self, u)


def tilde_phi(red: ReducedObjective, u) -> float:
    return phi(red.objective, u, steady_state_output(red.plant, u))


def grad_tilde_phi(red: ReducedObjective, u) -> np.ndarray:
    u = red.plant.check_input(u)
    return red.hessian @ u + red.linear_term


def analytic_minimizer(red: ReducedObjective) -> tuple[np.ndarray, float]:
    """Unique stationary point of the reduced quadratic and its value."""
    Hm = red.hessian
    w = np.linalg.eigvalsh(Hm)
    if w.min() <= 1e-12 * max(1.0, w.max()):
        raise DegenerateObjectiveError(
            f"R1 + G^T G is not positive definite (smallest eigenvalue {w.min():.3g})"
        )
    u_star = -np.linalg.solve(Hm, red.linear_term)
    return u_star, tilde_phi(red, u_star)


def derived_constants(red: ReducedObjective, center=None, radius: float | None = None,
                      outputs=None) -> DerivedConstants:
    """Smoothness constant and local Lipschitz estimates.

    ``L`` is exact for the quadratic case. ``||y||^2`` is not globally
    Lipschitz, so ``M_phi`` is only reported over an operating region: either
    a ball of ``radius`` around ``center`` in input space, or a set of
    observed ``outputs``.
    """
    L = float(np.linalg.eigvalsh(red.hessian).max())
    M_phi = M = None
    note = "M_phi undefined without an operating region"
    if outputs is not None:
        Y = np.atleast_2d(np.asarray(outputs, dtype=float))
        M_phi = 2.0 * float(np.linalg.norm(Y, axis=1).max())
        note = "M_phi = 2 max ||y|| over observed outputs"
    elif radius is not None:
        c = np.zeros(red.objective.p) if center is None else np.asarray(center, float)
        G_norm = float(np.linalg.norm(red.plant.G, 2))
        M_phi = 2.0 * (float(np.linalg.norm(steady_state_output(red.plant, c))) + G_norm * radius)
        M = float(np.linalg.norm(grad_tilde_phi(red, c))) + L * radius
        note = f"local estimates over ball of radius {radius}"
    return DerivedConstants(L=L, M_phi=M_phi, M=M, note=note)


def gaussian_smoothed_value(
    f: Callable,
    u,
    delta: float,
    n_samples: int,
    seed: int,
    vectorized: bool = False,
) -> tuple[float, float]:
    """Monte Carlo estimate of ``E_v[f(u + delta v)]`` and its standard error.

    With ``vectorized=True`` ``f`` receives an ``(n_samples, p)`` array and must
    return one value per row.
    """
    if delta < 0:
        raise InvalidParameterError(f"delta must be non-negative, got {delta}")
    if n_samples < 2:
        raise InvalidParameterError(f"n_samples must be at least 2, got {n_samples}")
    u = np.asarray(u, dtype=float)
    if delta == 0:
        return float(f(u[None, :])[0] if vectorized else f(u)), 0.0
    rng = np.random.default_rng(seed)
    points = u + delta * rng.standard_normal((n_samples, u.shape[0]))
    if vectorized:
        vals = np.asarray(f(points), dtype=float)
    else:
        vals = np.fromiter((f(pt) for pt in points), dtype=float, count=n_samples)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_samples))


def central_difference_gradient(f: Callable, u, step: float | None = None) -> np.ndarray:
    """Central finite-difference gradient with step ``1e-5 * max(1, ||u||)``."""
    u = np.asarray(u, dtype=float)
    h = 1e-5 * max(1.0, float(np.linalg.norm(u))) if step is None else step
    g = np.empty_like(u)
    for i in range(u.shape[0]):
        e = np.zeros_like(u)
        e[i] = h
        g[i] = (f(u + e) - f(u - e)) / (2 * h)
    return g
