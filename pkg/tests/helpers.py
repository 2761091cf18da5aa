import numpy as np
from mpmath import mp, mpf, sqrt

from zofo.objective import QuadraticObjective
from zofo.plant import PlantModel

ACCEPTANCE_LINES = []


def scalar_plant(a=0.5, b=1.0, c=1.0, e=1.0, f=0.0, d_x=0.0, d_y=0.0, d=0.0):
    return PlantModel(A=[[a]], B=[[b]], C=[[c]], D=[[d]], E=[[e]], F=[[f]], d_x=[d_x], d_y=[d_y])


def scalar_objective(r1=1.0, r2=0.0):
    return QuadraticObjective(R1=[[r1]], R2=[r2])


def zero_plant(n, p, q, r):
    z = np.zeros
    return PlantModel(A=z((n, n)), B=z((n, p)), C=z((q, n)), D=z((q, r)), E=z((n, r)),
                      F=z((n, n * n)), d_x=z(r), d_y=z(r))


def mp_select(L, M, mu, p, eps, eps_phi, phi_low=0.0, phi_delta_u0=1.0, dps=50):
    """Independent arbitrary-precision evaluation of the parameter selection rule."""
    with mp.workdps(dps):
        L, M, mu, eps, eps_phi = (mpf(repr(float(v))) for v in (L, M, mu, eps, eps_phi))
        phi_low, phi0 = mpf(repr(float(phi_low))), mpf(repr(float(phi_delta_u0)))
        p = mpf(p)
        c2 = (p + 6) ** 3 + (p + 4) ** 2
        out = {
            "eta": 1 / (16 * L * (p + 4)),
            "delta_sq": sqrt(4 * M**2 * mu * p * (8 * p + 33) / (L**2 * (p + 4) * c2)),
            "mu1": (p + 4) * eps**2 / (16 * L**2 * M**2 * p * (8 * p + 33) * c2),
            "mu2": (p + 4) * c2 * eps_phi**2 / (M**2 * p**3 * (8 * p + 33)),
            "c1": 128 * L * (p + 4) * (phi0 - phi_low),
            "c2": c2,
            "c3": 2 * M**2 * p * (8 * p + 33) / (p + 4),
        }
        out["delta"] = sqrt(out["delta_sq"])
        out["T_min"] = int(mp.ceil(2 * out["c1"] / eps))
        return out


def sig_digits_match(value, reference, digits=12):
    reference = float(reference)
    if reference == 0:
        return value == 0
    return abs(value - reference) <= 0.5 * 10.0 ** (1 - digits) * abs(reference)


def exact_fo_closed_loop(plant, objective, eta):
    """Iteration matrix of exact-gradient control on the plant with the quadratic term dropped.

    State is ``(x_k, u_k)`` with ``x_k`` the plant state before update ``k``.
    """
    A, B, C = plant.A, plant.B, plant.C
    G, R1 = plant.G, objective.R1
    n, p = B.shape
    top = np.hstack([A, B])
    bottom = np.hstack([-2 * eta * G.T @ C @ A, np.eye(p) - 2 * eta * R1 - 2 * eta * G.T @ C @ B])
    return np.vstack([top, bottom])


def exact_fo_steps_needed(plant, objective, eta, tol, dist0):
    """Steps for ``rho^k * dist0`` to reach ``tol`` under the linear contraction rate."""
    rho = max(abs(np.linalg.eigvals(exact_fo_closed_loop(plant, objective, eta))))
    return int(np.ceil(np.log(tol / dist0) / np.log(rho))), rho
