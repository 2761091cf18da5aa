"""Closed-loop feedback-optimization controllers.

Four update rules drive the same plant:

* ``TwoPointRGF``: measure at the current input, measure again at a randomly
  perturbed input one plant step later, step along the two-point estimate.
  Each update takes two plant steps.
* ``IdealizedTwoPoint``: same estimate, but the plant is reset to the
  steady state of each applied input, so both measurements are exact
  reduced-objective values.
* ``OnePointResidual``: one perturbed measurement per update; the previous
  measurement serves as the baseline.
* ``ExactGradient``: gradient step using the true steady-state sensitivity.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from . import plant as plant_mod
from .errors import (
    ConfigurationError,
    DegenerateObjectiveError,
    EmptySeriesError,
    InvalidParameterError,
)
from .estimators import (
    Perturbation,
    draw_perturbation,
    feedback_two_point_estimate,
    one_point_residual_estimate,
)
from .metrics import MetricSeries
from .objective import (
    QuadraticObjective,
    ReducedObjective,
    analytic_minimizer,
    central_difference_gradient,
    grad_tilde_phi,
    tilde_phi,
)
from .plant import PlantModel, PlantState


class Method(str, enum.Enum):
    TWO_POINT_RGF = "TwoPointRGF"
    IDEALIZED_TWO_POINT = "IdealizedTwoPoint"
    ONE_POINT_RESIDUAL = "OnePointResidual"
    EXACT_GRADIENT = "ExactGradient"

    @property
    def stream(self) -> int:
        return list(Method).index(self)

    @property
    def steps_per_update(self) -> int:
        return 2 if self in (Method.TWO_POINT_RGF, Method.IDEALIZED_TWO_POINT) else 1


class Phase(str, enum.Enum):
    BASE = "Base"
    PERTURBED = "Perturbed"


@dataclass(frozen=True)
class ControllerConfig:
    method: Method
    eta: float
    delta: float = 5e-5
    seed: int = 0
    stream: int | None = None  # perturbation stream; defaults to the method's own

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.eta < 0:
            raise InvalidParameterError(f"eta must be non-negative, got {self.eta}")
        if self.method is not Method.EXACT_GRADIENT and not self.delta > 0:
            raise InvalidParameterError(f"delta must be positive, got {self.delta}")

    @property
    def perturbation_stream(self) -> int:
        return self.method.stream if self.stream is None else int(self.stream)

    def to_dict(self):
        out = {"method": self.method.value, "eta": self.eta, "delta": self.delta,
               "seed": self.seed}
        if self.stream is not None:
            out["stream"] = self.stream
        return out


# Reference stepsizes for the four-way comparison, all at delta = 5e-5.
REFERENCE_STEPSIZES = {
    Method.TWO_POINT_RGF: 40e-5,
    Method.IDEALIZED_TWO_POINT: 40e-5,
    Method.ONE_POINT_RESIDUAL: 2.5e-5,
    Method.EXACT_GRADIENT: 100e-5,
}
REFERENCE_DELTA = 5e-5


@dataclass(frozen=True, eq=False)
class ControllerState:
    u_base: np.ndarray
    phase: Phase = Phase.BASE
    v_current: Perturbation | None = None
    phi_base: float | None = None
    phi_prev: float | None = None
    iteration: int = 0
    plant_steps: int = 0


@dataclass(frozen=True, eq=False)
class UpdateRecord:
    u_base: np.ndarray
    g: np.ndarray
    phi_base: float | None
    phi_plus: float | None
    applied: tuple  # (u, y) pairs, one per plant step taken


def init_controller_state(u0) -> ControllerState:
    u0 = np.array(u0, dtype=float)
    return ControllerState(u_base=u0)


def _measure(objective, u, y):
    return objective.value(u, y)


def _draw(cfg: ControllerConfig, state: ControllerState, p: int, v):
    if v is not None:
        if isinstance(v, Perturbation):
            return v
        return Perturbation(v=np.asarray(v, dtype=float), seed_position=state.iteration)
    return draw_perturbation(cfg.seed, state.iteration, p, stream=cfg.perturbation_stream)


def _require(cfg, *methods):
    if cfg.method not in methods:
        raise ConfigurationError(f"controller configured for {cfg.method.value}")


def two_point_half_step(cfg, state, plant, plant_state, objective, v=None):
    """Advance the two-point controller by exactly one plant step.

    In the base phase the unperturbed input is applied and measured; in the
    perturbed phase the perturbed input is applied, measured, and the base
    input is updated. Returns ``(state, plant_state, applied_u, y)``.
    """
    _require(cfg, Method.TWO_POINT_RGF, Method.IDEALIZED_TWO_POINT)
    idealized = cfg.method is Method.IDEALIZED_TWO_POINT
    p = plant.dims[1]
    if state.phase is Phase.BASE:
        u = state.u_base
    else:
        u = state.u_base + cfg.delta * state.v_current.v
    if idealized:
        x_ss = plant_mod.steady_state_state(plant, u)
        plant_state = PlantState(x=x_ss, t=plant_state.t, last_y=plant_state.last_y)
    plant_state = plant_mod.step(plant, plant_state, u)
    y = plant_state.last_y
    measured = _measure(objective, u, y)
    if state.phase is Phase.BASE:
        state = replace(
            state,
            phase=Phase.PERTURBED,
            phi_base=measured,
            v_current=_draw(cfg, state, p, v),
            plant_steps=state.plant_steps + 1,
        )
    else:
        est = feedback_two_point_estimate(state.phi_base, measured, state.v_current, cfg.delta)
        state = replace(
            state,
            phase=Phase.BASE,
            u_base=state.u_base - cfg.eta * est.g,
            phi_prev=measured,
            iteration=state.iteration + 1,
            plant_steps=state.plant_steps + 1,
        )
    return state, plant_state, u, y


def _two_point_update(cfg, state, plant, plant_state, objective, v):
    if state.phase is not Phase.BASE:
        raise ConfigurationError("update must start in the base phase")
    u_start = state.u_base
    state, plant_state, u1, y1 = two_point_half_step(cfg, state, plant, plant_state, objective, v)
    perturbation = state.v_current
    phi_base = state.phi_base
    state, plant_state, u2, y2 = two_point_half_step(cfg, state, plant, plant_state, objective)
    g = perturbation.v / cfg.delta * (state.phi_prev - phi_base)
    record = UpdateRecord(u_base=u_start, g=g, phi_base=phi_base, phi_plus=state.phi_prev,
                          applied=((u1, y1), (u2, y2)))
    state = replace(state, v_current=perturbation)
    return state, plant_state, record


def two_point_rgf_update(cfg, state, plant, plant_state, objective, v=None):
    """One full update of the two-timescale two-point controller (two plant steps)."""
    _require(cfg, Method.TWO_POINT_RGF)
    return _two_point_update(cfg, state, plant, plant_state, objective, v)


def idealized_two_point_update(cfg, state, plant, plant_state, objective, v=None):
    """Two-point update with the plant restarted at steady state before each measurement."""
    _require(cfg, Method.IDEALIZED_TWO_POINT)
    return _two_point_update(cfg, state, plant, plant_state, objective, v)


def one_point_warm_up(cfg, state, plant, plant_state, objective):
    """Unperturbed measurement that seeds the residual baseline (one plant step)."""
    _require(cfg, Method.ONE_POINT_RESIDUAL)
    u = state.u_base
    plant_state = plant_mod.step(plant, plant_state, u)
    y = plant_state.last_y
    state = replace(state, phi_prev=_measure(objective, u, y),
                    plant_steps=state.plant_steps + 1)
    return state, plant_state, (u, y)


def one_point_residual_update(cfg, state, plant, plant_state, objective, v=None):
    """One residual-feedback update: a single perturbed measurement.

    If no baseline measurement exists yet, a warm-up step is taken first.
    """
    _require(cfg, Method.ONE_POINT_RESIDUAL)
    applied = ()
    if state.phi_prev is None:
        state, plant_state, pair = one_point_warm_up(cfg, state, plant, plant_state, objective)
        applied = (pair,)
    p = plant.dims[1]
    pert = _draw(cfg, state, p, v)
    u = state.u_base + cfg.delta * pert.v
    plant_state = plant_mod.step(plant, plant_state, u)
    y = plant_state.last_y
    phi_now = _measure(objective, u, y)
    est = one_point_residual_estimate(phi_now, state.phi_prev, pert, cfg.delta)
    record = UpdateRecord(u_base=state.u_base, g=est.g, phi_base=state.phi_prev,
                          phi_plus=phi_now, applied=applied + ((u, y),))
    state = replace(
        state,
        u_base=state.u_base - cfg.eta * est.g,
        v_current=pert,
        phi_prev=phi_now,
        iteration=state.iteration + 1,
        plant_steps=state.plant_steps + 1,
    )
    return state, plant_state, record


def exact_gradient_update(cfg, state, plant, plant_state, objective, v=None):
    """Gradient step using the measured output and the steady-state sensitivity."""
    _require(cfg, Method.EXACT_GRADIENT)
    if not (hasattr(objective, "grad_u") and hasattr(objective, "grad_y")):
        raise ConfigurationError("exact-gradient control needs an objective with analytic gradients")
    u = state.u_base
    plant_state = plant_mod.step(plant, plant_state, u)
    y = plant_state.last_y
    g = objective.grad_u(u) + plant.G.T @ objective.grad_y(y)
    record = UpdateRecord(u_base=u, g=g, phi_base=None, phi_plus=None, applied=((u, y),))
    state = replace(
        state,
        u_base=u - cfg.eta * g,
        iteration=state.iteration + 1,
        plant_steps=state.plant_steps + 1,
    )
    return state, plant_state, record


UPDATES = {
    Method.TWO_POINT_RGF: two_point_rgf_update,
    Method.IDEALIZED_TWO_POINT: idealized_two_point_update,
    Method.ONE_POINT_RESIDUAL: one_point_residual_update,
    Method.EXACT_GRADIENT: exact_gradient_update,
}


def controller_update(cfg, state, plant, plant_state, objective, v=None):
    return UPDATES[cfg.method](cfg, state, plant, plant_state, objective, v)


def n_updates_for_budget(method: Method, budget: int) -> int:
    """Number of complete updates that fit in a plant-step budget."""
    method = Method(method)
    if method is Method.ONE_POINT_RESIDUAL:
        return max(budget - 1, 0)
    return budget // method.steps_per_update


DIVERGENCE_LIMIT = 1e50


def _bounded(vec) -> bool:
    norm = float(np.sqrt(vec @ vec))
    return np.isfinite(norm) and norm < DIVERGENCE_LIMIT


def _steps_before(method: Method, k: int) -> int:
    """Plant steps consumed before update ``k`` starts in an uninterrupted run."""
    if method is Method.ONE_POINT_RESIDUAL:
        return k + 1
    return k * method.steps_per_update


def _metric_functions(plant, objective):
    if isinstance(objective, QuadraticObjective):
        red = ReducedObjective(objective, plant)
        try:
            _, low = analytic_minimizer(red)
        except DegenerateObjectiveError:
            low = None
        return (lambda u: tilde_phi(red, u)), (lambda u: grad_tilde_phi(red, u)), low

    def reduced(u):
        return objective.value(u, plant_mod.steady_state_output(plant, u))

    return reduced, (lambda u: central_difference_gradient(reduced, u)), None


def run_closed_loop(cfg: ControllerConfig, plant: PlantModel, objective, x0=None, u0=None,
                    total_plant_steps: int = 10_000, record_stride: int = 1,
                    keep_inputs: bool = False, keep_trace: bool = False) -> MetricSeries:
    """Run one controller until the plant-step budget is exhausted.

    Defaults: ``u0 = 0`` and ``x0`` at the steady state of ``u0``. Metrics are
    recorded at the input each update starts from, every ``record_stride``
    updates. A run whose input or state leaves a ball of radius
    ``DIVERGENCE_LIMIT`` stops early; its remaining points are ``+inf``. The run also tracks the largest squared output deviation from
    steady state (``mu_hat``) and twice the largest output norm seen
    (``m_phi``), both measured or steady-state, for use in error bounds.
    """
    if record_stride < 1:
        raise InvalidParameterError(f"record_stride must be positive, got {record_stride}")
    n_updates = n_updates_for_budget(cfg.method, total_plant_steps)
    if total_plant_steps < 2 or n_updates < 1:
        raise EmptySeriesError(
            f"budget of {total_plant_steps} plant steps leaves no complete "
            f"{cfg.method.value} update"
        )
    p = plant.dims[1]
    u0 = np.zeros(p) if u0 is None else plant.check_input(np.array(u0, dtype=float))
    if x0 is None:
        x0 = plant_mod.steady_state_state(plant, u0)
    pstate = plant_mod.initial_state(plant, x0)
    state = init_controller_state(u0)
    value_fn, grad_fn, low = _metric_functions(plant, objective)

    update = UPDATES[cfg.method]
    idx, steps, grads, gaps, inputs = [], [], [], [], []
    mu_hat = 0.0
    y_sup = 0.0
    trace = []

    def track(u, y):
        nonlocal mu_hat, y_sup
        h = plant_mod.steady_state_output(plant, u)
        d = y - h
        mu_hat = max(mu_hat, float(d @ d))
        y_sup = max(y_sup, float(np.sqrt(y @ y)), float(np.sqrt(h @ h)))
        if keep_trace:
            trace.append(u)

    if cfg.method is Method.ONE_POINT_RESIDUAL:
        state, pstate, pair = one_point_warm_up(cfg, state, plant, pstate, objective)
        track(*pair)

    diverged_at = None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_updates):
            if k % record_stride == 0:
                u = state.u_base
                g = grad_fn(u)
                idx.append(k)
                steps.append(state.plant_steps)
                grads.append(float(g @ g))
                gaps.append(value_fn(u) - low if low is not None else np.nan)
                if keep_inputs:
                    inputs.append(u.copy())
            state, pstate, record = update(cfg, state, plant, pstate, objective)
            for pair in record.applied:
                track(*pair)
            if not (_bounded(state.u_base) and _bounded(pstate.x)):
                diverged_at = k + 1
                break
    if diverged_at is not None:
        # remaining recorded points of a diverged run are reported as +inf
        for k in range(diverged_at, n_updates):
            if k % record_stride == 0:
                idx.append(k)
                steps.append(_steps_before(cfg.method, k))
                grads.append(np.inf)
                gaps.append(np.inf if low is not None else np.nan)
                if keep_inputs:
                    inputs.append(np.full(p, np.nan))

    params = cfg.to_dict()
    params["diverged_at"] = diverged_at
    params["budget"] = total_plant_steps
    params["record_stride"] = record_stride
    series = MetricSeries(
        method=cfg.method.value,
        seed=cfg.seed,
        update_index=np.asarray(idx, dtype=np.int64),
        plant_step=np.asarray(steps, dtype=np.int64),
        grad_norm_sq=np.asarray(grads, dtype=float),
        optimality_gap=np.asarray(gaps, dtype=float),
        inputs=np.asarray(inputs) if keep_inputs else None,
        final_u=state.u_base.copy(),
        params=params,
        mu_hat=mu_hat,
        m_phi=2.0 * y_sup,
        n_updates=n_updates,
        plant_steps_used=state.plant_steps,
    )
    if keep_trace:
        series.params["input_trace"] = np.asarray(trace)
        series.params["x0"] = np.asarray(x0, dtype=float)
    return series
