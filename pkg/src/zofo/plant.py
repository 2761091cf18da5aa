"""Discrete-time plant with a quadratic residual around its steady state.

The simulated plant is

    x_{t+1} = A x_t + B u_t + E d_x + F (x_t - x_ss(u_t)) kron (x_t - x_ss(u_t))
    y_t     = C x_t + D d_y

with ``x_ss(u) = (I - A)^{-1} (B u + E d_x)``. The quadratic term vanishes at
the steady state, so ``x_ss(u)`` is a fixed point of the dynamics for every
constant input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigurationError, InvalidParameterError, ModelInvalidError

DEFAULT_DIMS = (10, 5, 5, 5)
DEFAULT_A_NORM = 0.05
DEFAULT_F_NORM = 0.01


def _as_matrix(value, shape, name):
    arr = np.array(value, dtype=float)
    if arr.ndim == 1 and shape[1] == 1 and arr.shape[0] == shape[0]:
        arr = arr.reshape(shape)
    if arr.shape != shape:
        raise ConfigurationError(f"{name} has shape {arr.shape}, expected {shape}")
    arr.setflags(write=False)
    return arr


def _as_vector(value, size, name):
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.shape != (size,):
        raise ConfigurationError(f"{name} has length {arr.shape[0]}, expected {size}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PlantModel:
    """Immutable description of the plant matrices and constant disturbances.

    ``F`` has shape ``(n, n*n)`` and multiplies the Kronecker square of the
    deviation from steady state. Metadata (seed, target norms) is carried
    along for serialization only.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray
    d_x: np.ndarray
    d_y: np.ndarray
    seed: int | None = None
    a_norm: float | None = None
    f_norm: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        B = np.atleast_2d(np.array(self.B, dtype=float))
        C = np.atleast_2d(np.array(self.C, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ConfigurationError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        if B.shape[0] != n:
            raise ConfigurationError(f"B has {B.shape[0]} rows, expected {n}")
        p = B.shape[1]
        if C.shape[1] != n:
            raise ConfigurationError(f"C has {C.shape[1]} columns, expected {n}")
        q = C.shape[0]
        d_x = np.array(self.d_x, dtype=float).reshape(-1)
        r = d_x.shape[0]
        object.__setattr__(self, "A", _as_matrix(A, (n, n), "A"))
        object.__setattr__(self, "B", _as_matrix(B, (n, p), "B"))
        object.__setattr__(self, "C", _as_matrix(C, (q, n), "C"))
        object.__setattr__(self, "D", _as_matrix(self.D, (q, r), "D"))
        object.__setattr__(self, "E", _as_matrix(self.E, (n, r), "E"))
        object.__setattr__(self, "F", _as_matrix(self.F, (n, n * n), "F"))
        object.__setattr__(self, "d_x", _as_vector(d_x, r, "d_x"))
        object.__setattr__(self, "d_y", _as_vector(self.d_y, r, "d_y"))

    @property
    def dims(self) -> tuple[int, int, int, int]:
        n, p = self.B.shape
        return n, p, self.C.shape[0], self.d_x.shape[0]

    @cached_property
    def _ss_operators(self):
        n = self.A.shape[0]
        I_minus_A = np.eye(n) - self.A
        try:
            cond = np.linalg.cond(I_minus_A)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - numpy edge
            raise ModelInvalidError(f"I - A is singular: {exc}") from exc
        if not np.isfinite(cond) or cond > 1e14:
            raise ModelInvalidError(f"I - A is singular (condition number {cond:.3g})")
        gain = np.linalg.solve(I_minus_A, self.B)
        offset = np.linalg.solve(I_minus_A, self.E @ self.d_x)
        return gain, offset

    @cached_property
    def _drift(self) -> np.ndarray:
        return self.E @ self.d_x

    @cached_property
    def _output_offset(self) -> np.ndarray:
        return self.D @ self.d_y

    @cached_property
    def G(self) -> np.ndarray:
        """Steady-state input-to-output sensitivity ``C (I - A)^{-1} B``."""
        gain, _ = self._ss_operators
        G = self.C @ gain
        G.setflags(write=False)
        return G

    @cached_property
    def H(self) -> np.ndarray:
        """Steady-state output at zero input, ``C (I - A)^{-1} E d_x + D d_y``."""
        _, offset = self._ss_operators
        H = self.C @ offset + self.D @ self.d_y
        H.setflags(write=False)
        return H

    def check_input(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.B.shape[1],):
            raise ConfigurationError(
                f"input has shape {u.shape}, expected ({self.B.shape[1]},)"
            )
        return u

    def to_dict(self) -> dict:
        n, p, q, r = self.dims
        return {
            "dims": [n, p, q, r],
            "seed": self.seed,
            "a_norm": self.a_norm,
            "f_norm": self.f_norm,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
            "E": self.E.tolist(),
            "F": self.F.tolist(),
            "d_x": self.d_x.tolist(),
            "d_y": self.d_y.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PlantModel":
        try:
            model = cls(
                A=data["A"], B=data["B"], C=data["C"], D=data["D"],
                E=data["E"], F=data["F"], d_x=data["d_x"], d_y=data["d_y"],
                seed=data.get("seed"), a_norm=data.get("a_norm"),
                f_norm=data.get("f_norm"),
            )
        except KeyError as exc:
            raise ConfigurationError(f"plant config is missing key {exc}") from exc
        if "dims" in data and tuple(data["dims"]) != model.dims:
            raise ConfigurationError(
                f"declared dims {tuple(data['dims'])} do not match matrices {model.dims}"
            )
        return model


@dataclass(frozen=True, eq=False)
class PlantState:
    x: np.ndarray
    t: int = 0
    last_y: np.ndarray | None = None


def initial_state(model: PlantModel, x0) -> PlantState:
    x0 = np.array(x0, dtype=float).reshape(-1)
    if x0.shape != (model.dims[0],):
        raise ConfigurationError(f"x0 has length {x0.shape[0]}, expected {model.dims[0]}")
    return PlantState(x=x0, t=0, last_y=model.C @ x0 + model.D @ model.d_y)


def steady_state_state(model: PlantModel, u) -> np.ndarray:
    """Equilibrium state ``(I - A)^{-1} (B u + E d_x)`` for a constant input."""
    u = model.check_input(u)
    gain, offset = model._ss_operators
    return gain @ u + offset


def steady_state_output(model: PlantModel, u) -> np.ndarray:
    u = model.check_input(u)
    return model.G @ u + model.H


def sensitivity(model: PlantModel) -> np.ndarray:
    return model.G


def step(model: PlantModel, state: PlantState, u) -> PlantState:
    """Advance the plant by one sample under input ``u``."""
    u = model.check_input(u)
    x = state.x
    dev = x - steady_state_state(model, u)
    # outer(dev, dev).ravel() is the Kronecker square of a vector
    x_next = model.A @ x + model.B @ u + model._drift + model.F @ np.outer(dev, dev).ravel()
    y_next = model.C @ x_next + model._output_offset
    return PlantState(x=x_next, t=state.t + 1, last_y=y_next)


def estimate_mu(model: PlantModel, input_trace: Iterable, x0) -> float:
    """Largest squared gap between the measured and steady-state output.

    The trace is simulated from ``x0``; for each applied input ``u_t`` the
    output ``y_{t+1}`` is compared with ``h(u_t)``.
    """
    state = initial_state(model, x0)
    worst = None
    for u in input_trace:
        state = step(model, state, u)
        gap = state.last_y - steady_state_output(model, u)
        val = float(gap @ gap)
        worst = val if worst is None else max(worst, val)
    if worst is None:
        raise ConfigurationError("input trace is empty")
    return worst


def generate_random_plant(
    seed: int,
    dims=DEFAULT_DIMS,
    a_norm: float = DEFAULT_A_NORM,
    f_norm: float = DEFAULT_F_NORM,
) -> PlantModel:
    """Draw a random plant: uniform matrices, rescaled A and F, Gaussian disturbances.

    Parameters
    ----------
    seed : int
        Seed of the generator stream; equal seeds give bit-identical models.
    dims : tuple of int
        ``(n, p, q, r)`` state, input, output and disturbance dimensions.
    a_norm : float
        Target spectral norm of ``A``; must lie in ``[0, 1)``.
    f_norm : float
        Target induced 1-norm (max column sum) of ``F``.
    """
    if not 0 <= a_norm < 1:
        raise InvalidParameterError(f"a_norm must lie in [0, 1), got {a_norm}")
    if f_norm < 0:
        raise InvalidParameterError(f"f_norm must be non-negative, got {f_norm}")
    n, p, q, r = (int(d) for d in dims)
    if min(n, p, q, r) < 1:
        raise ConfigurationError(f"dims must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    A = rng.uniform(size=(n, n))
    B = rng.uniform(size=(n, p))
    C = rng.uniform(size=(q, n))
    D = rng.uniform(size=(q, r))
    E = rng.uniform(size=(n, r))
    F = rng.uniform(size=(n, n * n))
    d_x = rng.standard_normal(r)
    d_y = rng.standard_normal(r)
    A *= a_norm / np.linalg.norm(A, 2)
    F *= f_norm / np.linalg.norm(F, 1)
    return PlantModel(
        A=A, B=B, C=C, D=D, E=E, F=F, d_x=d_x, d_y=d_y,
        seed=seed, a_norm=a_norm, f_norm=f_norm,
    )


def save_instance(path, model: PlantModel, objective=None) -> None:
    """Write plant (and optionally objective) as a JSON config file."""
    payload = {"plant": model.to_dict()}
    if objective is not None:
        payload["objective"] = objective.to_dict()
    text = json.dumps(payload, indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_instance(path):
    """Read a config written by :func:`save_instance`.

    Returns ``(plant, objective_or_None)``.
    """
    from .objective import QuadraticObjective

    data = json.loads(Path(path).read_text(encoding="utf-8"))
    plant = PlantModel.from_dict(data["plant"])
    obj = data.get("objective")
    return plant, (QuadraticObjective.from_dict(obj) if obj is not None else None)
