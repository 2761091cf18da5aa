"""Parameter selection and explicit convergence bounds for the two-point controller."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import InvalidParameterError


@dataclass(frozen=True)
class TheoryConstants:
    """Problem constants entering the bounds.

    ``phi_delta_u0`` is (an upper estimate of) the Gaussian-smoothed reduced
    objective at the initial input; see :func:`smoothed_initial_value`.
    ``M`` (Lipschitz constant of the reduced objective) is carried for
    reporting only.
    """

    L: float
    M_phi: float
    p: int
    mu: float
    eps: float
    eps_phi: float
    phi_low: float = 0.0
    phi_delta_u0: float = 1.0
    M: float | None = None

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SelectedParameters:
    eta: float
    delta: float
    delta_sq: float
    mu1: float
    mu2: float
    T_min: int
    c1: float
    c2: float
    c3: float
    feasible: bool
    binding: str | None  # "mu1", "mu2" or None when feasible

    def to_dict(self):
        return asdict(self)


def _positive(**values):
    for name, val in values.items():
        if not (val > 0 and math.isfinite(val)):
            raise InvalidParameterError(f"{name} must be positive and finite, got {val}")


def c2_constant(p: int) -> float:
    return float((p + 6) ** 3 + (p + 4) ** 2)


def c3_constant(M_phi: float, p: int) -> float:
    return 2.0 * M_phi**2 * p * (8 * p + 33) / (p + 4)


def smoothed_initial_value(phi_u0: float, L: float, p: int, delta: float) -> float:
    """Conservative upper value of the smoothed objective at ``u0``."""
    return phi_u0 + smoothing_gap_bound(L, p, delta)


def select_parameters(tc: TheoryConstants) -> SelectedParameters:
    """Stepsize, smoothing parameter and iteration count for eps-stationarity.

    Infeasibility (``mu`` above either admissibility threshold) is reported
    through ``feasible``/``binding`` rather than raised.
    """
    _positive(L=tc.L, M_phi=tc.M_phi, mu=tc.mu, eps=tc.eps, eps_phi=tc.eps_phi)
    if int(tc.p) != tc.p or tc.p < 1:
        raise InvalidParameterError(f"p must be a positive integer, got {tc.p}")
    if tc.phi_delta_u0 < tc.phi_low:
        raise InvalidParameterError("phi_delta_u0 must not be below phi_low")
    L, M, p, mu = float(tc.L), float(tc.M_phi), int(tc.p), float(tc.mu)

    c2 = c2_constant(p)
    c3 = c3_constant(M, p)
    eta = 1.0 / (16.0 * L * (p + 4))
    delta_sq = math.sqrt(4.0 * M**2 * mu * p * (8 * p + 33) / (L**2 * (p + 4) * c2))
    mu1 = (p + 4) * tc.eps**2 / (16.0 * L**2 * M**2 * p * (8 * p + 33) * c2)
    mu2 = (p + 4) * c2 * tc.eps_phi**2 / (M**2 * p**3 * (8 * p + 33))
    c1 = 128.0 * L * (p + 4) * (tc.phi_delta_u0 - tc.phi_low)
    T_min = math.ceil(2.0 * c1 / tc.eps)

    binding = None
    if mu > min(mu1, mu2):
        binding = "mu1" if mu1 <= mu2 else "mu2"
    return SelectedParameters(
        eta=eta, delta=math.sqrt(delta_sq), delta_sq=delta_sq, mu1=mu1, mu2=mu2,
        T_min=T_min, c1=c1, c2=c2, c3=c3, feasible=binding is None, binding=binding,
    )


def theorem1_terms(tc: TheoryConstants, eta: float, delta: float, T: int) -> tuple[float, float, float, float]:
    """The four non-negative terms of the explicit average-gradient bound."""
    L, M, p, mu = tc.L, tc.M_phi, tc.p, tc.mu
    if not 0 < eta < 1.0 / (8.0 * L * (p + 4)):
        raise InvalidParameterError(
            f"eta={eta} outside (0, 1/(8L(p+4))) = (0, {1.0 / (8.0 * L * (p + 4)):.6g})"
        )
    _positive(delta=delta)
    if T < 1:
        raise InvalidParameterError(f"T must be at least 1, got {T}")
    if mu < 0:
        raise InvalidParameterError(f"mu must be non-negative, got {mu}")
    shrink = 1.0 - 8.0 * L * eta * (p + 4)
    return (
        4.0 * (tc.phi_delta_u0 - tc.phi_low) / (T * eta * shrink),
        12.0 * L**3 * eta * delta**2 * (p + 4) ** 3 / shrink,
        8.0 * M**2 * mu * p * (2.0 * L * eta + 1.0) / (delta**2 * shrink),
        delta**2 * L**2 * (p + 6) ** 3 / 2.0,
    )


def theorem1_bound(tc: TheoryConstants, eta: float, delta: float, T: int) -> float:
    """Upper bound on ``(1/T) sum_k E||grad tilde_phi(u_k)||^2``."""
    return float(sum(theorem1_terms(tc, eta, delta, T)))


def lemma2_bound(M_phi: float, mu: float, p: int, delta: float) -> float:
    """Bound ``4 M_phi^2 mu p / delta^2`` on the mean squared estimator error."""
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    return 4.0 * M_phi**2 * mu * p / delta**2


def smoothing_gap_bound(L: float, p: int, delta: float) -> float:
    if delta < 0:
        raise InvalidParameterError(f"delta must be non-negative, got {delta}")
    return delta**2 * L * p / 2.0


def max_delta_for_precision(L: float, p: int, eps_phi: float) -> float:
    """Largest delta keeping the smoothed objective within ``eps_phi``."""
    _positive(L=L, eps_phi=eps_phi)
    return math.sqrt(2.0 * eps_phi / (L * p))
