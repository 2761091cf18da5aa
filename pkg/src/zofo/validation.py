"""Numerical checks of the estimator properties and convergence bounds.

Each check returns :class:`Check` records carrying the measured quantity, the
bound it is compared against, and a pass flag. Statistical checks use a
three-standard-error tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import plant as plant_mod
from .controllers import ControllerConfig, Method, init_controller_state, run_closed_loop, two_point_rgf_update
from .estimators import estimator_error, feedback_two_point_estimate, two_point_oracle_batch, two_point_oracle
from .objective import (
    ReducedObjective,
    analytic_minimizer,
    derived_constants,
    random_objective,
    tilde_phi,
)
from .theory import (
    TheoryConstants,
    lemma2_bound,
    select_parameters,
    smoothed_initial_value,
    smoothing_gap_bound,
    theorem1_bound,
)

N_SE = 3.0


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    bound: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{tag}] {self.name}: measured={self.measured:.6g} bound={self.bound:.6g}{extra}"


def _norm_moments(n_samples, p, rng, chunk=100_000):
    """Sample means and standard errors of ||v||, ||v||^2, ||v||^4."""
    sums = np.zeros(3)
    sq = np.zeros(3)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        r2 = np.einsum("ij,ij->i", v := rng.standard_normal((m, p)), v)
        powers = np.stack([np.sqrt(r2), r2, r2 * r2])
        sums += powers.sum(axis=1)
        sq += (powers * powers).sum(axis=1)
        done += m
    mean = sums / n_samples
    var = (sq / n_samples - mean**2) * n_samples / (n_samples - 1)
    return mean, np.sqrt(np.maximum(var, 0.0) / n_samples)


def gaussian_moment_checks(n_samples: int = 1_000_000, seed: int = 0, dims=(1, 5, 20)) -> list[Check]:
    """Moments of a standard normal vector against ``p^{t/2}`` and ``(p+t)^{t/2}``."""
    rng = np.random.default_rng(seed)
    out = []
    for p in dims:
        mean, se = _norm_moments(n_samples, p, rng)
        out.append(Check(f"gaussian E||v|| <= sqrt(p), p={p}",
                         bool(mean[0] <= np.sqrt(p) + N_SE * se[0]), mean[0], np.sqrt(p),
                         f"se={se[0]:.3g}"))
        out.append(Check(f"gaussian E||v||^2 = p, p={p}",
                         bool(abs(mean[1] - p) <= N_SE * se[1]), mean[1], p,
                         f"se={se[1]:.3g}"))
        out.append(Check(f"gaussian E||v||^4 <= (p+4)^2, p={p}",
                         bool(mean[2] <= (p + 4) ** 2 + N_SE * se[2]), mean[2], (p + 4) ** 2,
                         f"se={se[2]:.3g}"))
    return out


def random_quadratic(seed: int, p: int):
    """``f(u) = u^T Q u + b^T u`` with ``Q = R^T R``; returns ``(Q, b)``."""
    rng = np.random.default_rng(seed)
    R = rng.uniform(-1, 1, size=(p, p))
    return R.T @ R, rng.uniform(-1, 1, size=p)


def _quad_batch(Q, b):
    return lambda X: np.einsum("ij,jk,ik->i", X, Q, X) + X @ b


def smoothing_gap_checks(n_samples: int = 200_000, seed: int = 0, p: int = 4,
                     delta: float = 0.2) -> list[Check]:
    """Monte Carlo smoothing gap of a convex quadratic versus ``delta^2 tr(Q)``."""
    Q, b = random_quadratic(seed, p)
    f = _quad_batch(Q, b)
    rng = np.random.default_rng(seed + 1)
    u = rng.standard_normal(p)
    samples = f(u + delta * rng.standard_normal((n_samples, p))) - f(u[None, :])[0]
    gap = samples.mean()
    se = samples.std(ddof=1) / np.sqrt(n_samples)
    exact = delta**2 * np.trace(Q)
    L = 2.0 * np.linalg.eigvalsh(Q).max()
    bound = smoothing_gap_bound(L, p, delta)
    return [
        Check("smoothing MC gap matches delta^2 tr(Q)", bool(abs(gap - exact) <= N_SE * se),
              gap, exact, f"se={se:.3g}"),
        Check("smoothing |gap| <= delta^2 L p / 2", bool(abs(exact) <= bound), abs(exact), bound),
    ]


def oracle_moment_checks(n_samples: int = 200_000, seed: int = 0, p: int = 3, n_points: int = 5,
                  delta: float = 0.05) -> list[Check]:
    """Unbiasedness and second moment of the static two-point oracle on a quadratic."""
    Q, b = random_quadratic(seed, p)
    f = _quad_batch(Q, b)
    L = 2.0 * np.linalg.eigvalsh(Q).max()
    rng = np.random.default_rng(seed + 2)
    out = []
    for j in range(n_points):
        u = rng.standard_normal(p)
        # smoothing only shifts a quadratic by a constant, so grad f_delta = grad f
        grad = 2.0 * Q @ u + b
        est = two_point_oracle_batch(f, u, rng.standard_normal((n_samples, p)), delta)
        mean = est.mean(axis=0)
        se = est.std(axis=0, ddof=1) / np.sqrt(n_samples)
        z = np.abs(mean - grad) / se
        out.append(Check(f"oracle unbiased at point {j}", bool(np.all(z <= N_SE)),
                         float(z.max()), N_SE, "max |mean - grad| / se over coordinates"))
        second = float(np.einsum("ij,ij->i", est, est).mean())
        bound = 4 * (p + 4) * float(grad @ grad) + 3 * delta**2 * L**2 * (p + 4) ** 3
        out.append(Check(f"oracle second moment at point {j}", bool(second <= bound),
                         second, bound))
    return out


def paired_estimator_errors(plant, objective, eta: float, delta: float, n_updates: int = 1000,
                            seed: int = 0, u0=None):
    """Run the two-point feedback controller and pair each estimate with the static oracle.

    Returns ``(errors_sq, mu_hat, m_phi)`` where ``errors_sq[k]`` is the squared
    difference between the feedback estimate and the oracle on the reduced
    objective, using the same direction; ``mu_hat`` and ``m_phi`` are measured
    on the same trajectory.
    """
    red = ReducedObjective(objective, plant)
    cfg = ControllerConfig(Method.TWO_POINT_RGF, eta, delta, seed)
    p = plant.dims[1]
    u0 = np.zeros(p) if u0 is None else np.asarray(u0, dtype=float)
    pstate = plant_mod.initial_state(plant, plant_mod.steady_state_state(plant, u0))
    state = init_controller_state(u0)
    errs = np.empty(n_updates)
    mu_hat = 0.0
    y_sup = 0.0
    for k in range(n_updates):
        u_k = state.u_base
        state, pstate, rec = two_point_rgf_update(cfg, state, plant, pstate, objective)
        fb = feedback_two_point_estimate(rec.phi_base, rec.phi_plus, state.v_current, delta)
        ideal = two_point_oracle(red, u_k, state.v_current, delta)
        errs[k] = estimator_error(fb, ideal)[1]
        for u, y in rec.applied:
            h = plant_mod.steady_state_output(plant, u)
            mu_hat = max(mu_hat, float((y - h) @ (y - h)))
            y_sup = max(y_sup, float(np.linalg.norm(y)), float(np.linalg.norm(h)))
    return errs, mu_hat, 2.0 * y_sup


def closed_loop_parameter_selection(plant, objective, seeds=range(10), budget: int = 10_000,
                        eps: float = 1e-2, eps_phi: float = 1e-2, pilot_delta: float = 1e-2,
                        iterations: int = 5, rtol: float = 1e-2, u0=None):
    """Bound-optimal stepsize and smoothing parameter with ``mu`` measured in closed loop.

    ``mu`` depends on the trajectory, which depends on ``delta``. Starting from
    ``pilot_delta`` the selection is iterated: run, measure the largest output
    deviation and output norm across seeds, reselect, until ``delta`` moves by
    less than ``rtol`` relative. Returns
    ``(TheoryConstants, SelectedParameters, runs)`` for the last iteration.
    """
    red = ReducedObjective(objective, plant)
    p = plant.dims[1]
    u0 = np.zeros(p) if u0 is None else np.asarray(u0, dtype=float)
    L = derived_constants(red).L
    _, low = analytic_minimizer(red)
    eta = 1.0 / (16.0 * L * (p + 4))
    delta = pilot_delta
    tc = sel = runs = None
    for _ in range(iterations):
        runs = [run_closed_loop(ControllerConfig(Method.TWO_POINT_RGF, eta, delta, s), plant,
                                objective, u0=u0, total_plant_steps=budget) for s in seeds]
        mu = max(r.mu_hat for r in runs)
        m_phi = max(r.m_phi for r in runs)
        tc = TheoryConstants(
            L=L, M_phi=m_phi, p=p, mu=mu, eps=eps, eps_phi=eps_phi, phi_low=low,
            phi_delta_u0=smoothed_initial_value(tilde_phi(red, u0), L, p, delta),
        )
        sel = select_parameters(tc)
        if abs(sel.delta - delta) <= rtol * delta:
            break
        delta = sel.delta
    return tc, sel, runs


def estimator_error_check(plant, objective, eta, delta, n_updates: int = 1000, seed: int = 0) -> Check:
    errs, mu_hat, m_phi = paired_estimator_errors(plant, objective, eta, delta, n_updates, seed)
    p = plant.dims[1]
    bound = lemma2_bound(m_phi, mu_hat, p, delta)
    mean = float(errs.mean())
    return Check("estimator error mean ||e||^2 <= 4 M_phi^2 mu p / delta^2", bool(mean <= bound), mean,
                 bound, f"mu_hat={mu_hat:.3g} M_phi={m_phi:.3g} n={n_updates}")


def average_gradient_checks(plant, objective, seeds=range(10), budget: int = 10_000,
                    selection=None) -> list[Check]:
    """Average squared gradient norm of each seed against the explicit bound.

    ``selection`` is a precomputed ``closed_loop_parameter_selection`` result for the same
    instance, seeds and budget.
    """
    tc, sel, runs = selection or closed_loop_parameter_selection(plant, objective, seeds, budget)
    # bound constants are re-measured on the final runs themselves
    tc = replace(tc, mu=max(r.mu_hat for r in runs), M_phi=max(r.m_phi for r in runs))
    out = []
    for r in runs:
        T = r.n_updates
        lhs = float(np.mean(r.grad_norm_sq))
        rhs = theorem1_bound(tc, sel.eta, sel.delta, T)
        out.append(Check(f"average gradient bound seed {r.seed}", bool(np.isfinite(lhs) and lhs <= rhs), lhs,
                         rhs, f"eta={sel.eta:.4g} delta={sel.delta:.4g} T={T}"))
    return out


def plant_settling_checks(n_plants: int = 20, steps: int = 1000, tol: float = 1e-8,
                          seed: int = 0) -> list[Check]:
    out = []
    for i in range(n_plants):
        model = plant_mod.generate_random_plant(seed + i)
        rng = np.random.default_rng([seed, i])
        u = rng.standard_normal(model.dims[1])
        x_ss = plant_mod.steady_state_state(model, u)
        state = plant_mod.initial_state(model, np.zeros(model.dims[0]))
        dist = float(np.linalg.norm(state.x - x_ss))
        t = 0
        while dist > tol and t < steps:
            state = plant_mod.step(model, state, u)
            dist = float(np.linalg.norm(state.x - x_ss))
            t += 1
        out.append(Check(f"plant {seed + i} settles within {steps} steps", dist <= tol, dist,
                         tol, f"steps={t}"))
    return out


def exact_fo_check(plant, objective, eta: float = 1e-3, budget: int = 30_000,
                   tol: float = 1e-6) -> Check:
    red = ReducedObjective(objective, plant)
    u_star, _ = analytic_minimizer(red)
    series = run_closed_loop(ControllerConfig(Method.EXACT_GRADIENT, eta, seed=0), plant,
                             objective, total_plant_steps=budget, record_stride=budget)
    dist = float(np.linalg.norm(series.final_u - u_star))
    return Check("exact FO reaches the analytic minimizer", dist <= tol, dist, tol,
                 f"eta={eta} steps={budget}")


def seed0_instance():
    return plant_mod.generate_random_plant(0), random_objective(0)


def run_suite(name: str, samples: int, seed: int = 0) -> list[Check]:
    if name == "lemmas":
        return (gaussian_moment_checks(samples, seed) + smoothing_gap_checks(samples, seed)
                + oracle_moment_checks(samples, seed))
    if name == "bounds":
        plant, objective = seed0_instance()
        selection = closed_loop_parameter_selection(plant, objective)
        _, sel, _ = selection
        return [estimator_error_check(plant, objective, sel.eta, sel.delta, seed=seed)] + \
            average_gradient_checks(plant, objective, selection=selection)
    if name == "plant":
        plant, objective = seed0_instance()
        return plant_settling_checks(seed=seed) + [exact_fo_check(plant, objective)]
    raise ValueError(f"unknown suite {name!r}")
