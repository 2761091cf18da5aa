import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import exact_fo_steps_needed, scalar_objective, scalar_plant
from zofo.controllers import (
    REFERENCE_DELTA,
    REFERENCE_STEPSIZES,
    ControllerConfig,
    Method,
    Phase,
    controller_update,
    exact_gradient_update,
    idealized_two_point_update,
    init_controller_state,
    n_updates_for_budget,
    one_point_residual_update,
    one_point_warm_up,
    run_closed_loop,
    two_point_half_step,
    two_point_rgf_update,
)
from zofo.errors import ConfigurationError, EmptySeriesError, InvalidParameterError
from zofo.estimators import two_point_oracle
from zofo.objective import (
    CallableObjective,
    QuadraticObjective,
    ReducedObjective,
    analytic_minimizer,
    random_objective,
    tilde_phi,
)
from zofo.plant import PlantModel, generate_random_plant, initial_state, steady_state_state

CONST = CallableObjective(lambda u, y: 1.0)


def settled(plant, u):
    return initial_state(plant, steady_state_state(plant, u))


def paired_mean_gap(method, eta, delta, plant, obj, seeds=range(10), budget=10_000):
    # shared stream: both methods see the same perturbation sequence per seed
    runs = [run_closed_loop(ControllerConfig(method, eta, delta, s, stream=0), plant, obj,
                            total_plant_steps=budget) for s in seeds]
    return np.mean([r.optimality_gap for r in runs], axis=0)


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        ControllerConfig(Method.TWO_POINT_RGF, -1.0)
    with pytest.raises(InvalidParameterError):
        ControllerConfig(Method.TWO_POINT_RGF, 1e-3, delta=0.0)
    assert ControllerConfig("ExactGradient", 1e-3, delta=0.0).method is Method.EXACT_GRADIENT
    assert Method.TWO_POINT_RGF.steps_per_update == 2
    assert Method.ONE_POINT_RESIDUAL.steps_per_update == 1


def test_reference_parameters():
    assert REFERENCE_DELTA == 5e-5
    assert REFERENCE_STEPSIZES[Method.TWO_POINT_RGF] == 40e-5
    assert REFERENCE_STEPSIZES[Method.IDEALIZED_TWO_POINT] == 40e-5
    assert REFERENCE_STEPSIZES[Method.ONE_POINT_RESIDUAL] == 2.5e-5
    assert REFERENCE_STEPSIZES[Method.EXACT_GRADIENT] == 100e-5


def test_wrong_method_rejected(seed0):
    plant, obj = seed0
    cfg = ControllerConfig(Method.EXACT_GRADIENT, 1e-3)
    with pytest.raises(ConfigurationError):
        two_point_rgf_update(cfg, init_controller_state(np.zeros(5)), plant,
                             settled(plant, np.zeros(5)), obj)


# two_point_rgf_update

def test_rgf_zero_perturbation_keeps_input(seed0):
    plant, obj = seed0
    cfg = ControllerConfig(Method.TWO_POINT_RGF, 40e-5, 5e-5)
    u = np.full(5, 0.2)
    state, _, rec = two_point_rgf_update(cfg, init_controller_state(u), plant, settled(plant, u),
                                         obj, v=np.zeros(5))
    np.testing.assert_array_equal(rec.g, 0.0)
    np.testing.assert_array_equal(state.u_base, u)


def test_rgf_equal_measurements_keep_input(seed0):
    plant, _ = seed0
    cfg = ControllerConfig(Method.TWO_POINT_RGF, 40e-5, 5e-5)
    u = np.full(5, 0.2)
    state, _, rec = two_point_rgf_update(cfg, init_controller_state(u), plant, settled(plant, u), CONST)
    assert rec.phi_base == rec.phi_plus
    np.testing.assert_array_equal(state.u_base, u)


def test_rgf_two_plant_steps_per_update(seed0):
    plant, obj = seed0
    cfg = ControllerConfig(Method.TWO_POINT_RGF, 1e-5, 5e-3)
    state, pstate = init_controller_state(np.zeros(5)), settled(plant, np.zeros(5))
    for k in range(1, 6):
        state, pstate, rec = two_point_rgf_update(cfg, state, plant, pstate, obj)
        assert state.plant_steps == 2 * k and pstate.t == 2 * k
        assert len(rec.applied) == 2
        assert state.phase is Phase.BASE and state.iteration == k


def test_half_steps_alternate_phases(seed0):
    plant, obj = seed0
    cfg = ControllerConfig(Method.TWO_POINT_RGF, 1e-5, 5e-3)
    state, pstate = init_controller_state(np.zeros(5)), settled(plant, np.zeros(5))
    state, pstate, u1, _ = two_point_half_step(cfg, state, plant, pstate, obj)
    assert state.phase is Phase.PERTURBED and np.array_equal(u1, np.zeros(5))
    state, pstate, u2, _ = two_point_half_step(cfg, state, plant, pstate, obj)
    assert state.phase is Phase.BASE
    np.testing.assert_allclose(u2, 5e-3 * state.v_current.v)


def test_rgf_reproducible(seed0):
    plant, obj = seed0
    cfg = ControllerConfig(Method.TWO_POINT_RGF, 1e-5, 5e-3, seed=3)
    a = run_closed_loop(cfg, plant, obj, total_plant_steps=400, keep_inputs=True)
    b = run_closed_loop(cfg, plant, obj, total_plant_steps=400, keep_inputs=True)
    np.testing.assert_array_equal(a.inputs, b.inputs)
    c = run_closed_loop(ControllerConfig(Method.TWO_POINT_RGF, 1e-5, 5e-3, seed=4), plant, obj,
                        total_plant_steps=400, keep_inputs=True)
    assert not np.array_equal(a.inputs, c.inputs)


@pytest.mark.xfail(strict=True, reason="feedback two-point loop is unstable at eta/delta = 8 on "
                   "this instance; see decisions ledger")
def test_rgf_reference_stepsize_gradient_trend(seed0):
    plant, obj = seed0
    s = run_closed_loop(ControllerConfig(Method.TWO_POINT_RGF, 40e-5, 5e-5, 0), plant, obj,
                        total_plant_steps=2000)
    g = s.grad_norm_sq
    assert np.all(np.isfinite(g))
    assert g[-100:].mean() < g[:100].mean()


def test_rgf_gradient_trend_at_stable_stepsize(seed0):
    plant, obj = seed0
    s = run_closed_loop(ControllerConfig(Method.TWO_POINT_RGF, 1e-5, 5e-3, 0), plant, obj,
                        total_plant_steps=2000)
    g = s.grad_norm_sq
    assert np.all(np.isfinite(g))
    assert g[-100:].mean() < 0.5 * g[:100].mean()


# idealized_two_point_update

def test_idealized_measures_steady_state_loss(seed0):
    plant, obj = seed0
    red = ReducedObjective(obj, plant)
    cfg = ControllerConfig(Method.IDEALIZED_TWO_POINT, 40e-5, 5e-5)
    u = np.linspace(-1, 1, 5)
    pstate = initial_state(plant, np.zeros(10))  # far from steady state on purpose
    state, _, rec = idealized_two_point_update(cfg, init_controller_state(u), plant, pstate, obj)
    v = state.v_current.v
    assert rec.phi_base == pytest.approx(tilde_phi(red, u), rel=1e-12)
    assert rec.phi_plus == pytest.approx(tilde_phi(red, u + 5e-5 * v), rel=1e-12)


def test_idealized_equals_oracle_on_linear_plant():
    plant = generate_random_plant(6, f_norm=0.0)
    obj = random_objective(6)
    red = ReducedObjective(obj, plant)
    cfg = ControllerConfig(Method.IDEALIZED_TWO_POINT, 1e-3, 1e-2)
    state, pstate = init_controller_state(np.zeros(5)), settled(plant, np.zeros(5))
    for _ in range(5):
        u = state.u_base
        state, pstate, rec = idealized_two_point_update(cfg, state, plant, pstate, obj)
        oracle = two_point_oracle(red, u, state.v_current, 1e-2)
        np.testing.assert_allclose(rec.g, oracle.g, rtol=1e-9, atol=1e-9)


def test_idealized_at_least_as_fast_as_feedback(seed0):
    # speed is compared on the seed-averaged gap curve: time-average and first
    # update below a fixed threshold; final values sit at a common noise floor
    plant, obj = seed0
    eta, delta = 4e-5, 5e-3
    ideal = paired_mean_gap(Method.IDEALIZED_TWO_POINT, eta, delta, plant, obj)
    rgf = paired_mean_gap(Method.TWO_POINT_RGF, eta, delta, plant, obj)
    assert np.all(np.isfinite(rgf))
    assert ideal.mean() <= rgf.mean()
    threshold = 5.0
    assert np.argmax(ideal <= threshold) <= np.argmax(rgf <= threshold)
    assert rgf.min() <= threshold


# one_point_residual_update

def test_residual_equal_measurements_keep_input(seed0):
    plant, _ = seed0
    cfg = ControllerConfig(Method.ONE_POINT_RESIDUAL, 2.5e-5, 5e-5)
    u = np.ones(5)
    state, pstate, _ = one_point_warm_up(cfg, init_controller_state(u), plant, settled(plant, u), CONST)
    state, _, rec = one_point_residual_update(cfg, state, plant, pstate, CONST)
    np.testing.assert_array_equal(state.u_base, u)


def test_residual_first_update_uses_warm_up(seed0):
    plant, obj = seed0
    cfg = ControllerConfig(Method.ONE_POINT_RESIDUAL, 2.5e-5, 5e-5)
    u = np.zeros(5)
    state, pstate, rec = one_point_residual_update(cfg, init_controller_state(u), plant,
                                                   settled(plant, u), obj)
    assert len(rec.applied) == 2 and state.plant_steps == 2
    (u0, y0), _ = rec.applied
    assert rec.phi_base == pytest.approx(obj.value(u0, y0))
    state2, _, rec2 = one_point_residual_update(cfg, state, plant, pstate, obj)
    assert len(rec2.applied) == 1 and rec2.phi_base == rec.phi_plus


def test_residual_slower_than_two_point_methods(reference_comparison):
    result, _ = reference_comparison
    final = {m: result.final[m]["grad_norm_sq"]["mean"] for m in result.methods}
    assert final["OnePointResidual"] > final["IdealizedTwoPoint"]
    assert final["OnePointResidual"] > final["ExactGradient"]


# exact_gradient_update

def test_exact_stationary_at_minimizer(seed0):
    plant, obj = seed0
    u_star, _ = analytic_minimizer(ReducedObjective(obj, plant))
    cfg = ControllerConfig(Method.EXACT_GRADIENT, 100e-5)
    state, _, rec = exact_gradient_update(cfg, init_controller_state(u_star), plant,
                                          settled(plant, u_star), obj)
    assert np.linalg.norm(state.u_base - u_star) <= 1e-8


def test_exact_trivial_objective_never_moves():
    d = generate_random_plant(0).to_dict()
    d["C"] = np.zeros((5, 10)).tolist()
    plant = PlantModel.from_dict(d)
    obj = QuadraticObjective(R1=np.zeros((5, 5)), R2=np.zeros(5))
    u0 = np.arange(5.0)
    s = run_closed_loop(ControllerConfig(Method.EXACT_GRADIENT, 1e-2), plant, obj, u0=u0,
                        total_plant_steps=50, keep_inputs=True)
    np.testing.assert_array_equal(s.inputs, np.tile(u0, (50, 1)))
    np.testing.assert_array_equal(s.final_u, u0)


def test_exact_needs_analytic_gradients(seed0):
    plant, _ = seed0
    with pytest.raises(ConfigurationError):
        exact_gradient_update(ControllerConfig(Method.EXACT_GRADIENT, 1e-3),
                              init_controller_state(np.zeros(5)), plant,
                              settled(plant, np.zeros(5)), CONST)


@pytest.mark.xfail(strict=True, reason="slowest closed-loop mode needs about 2.2e4 steps at "
                   "eta = 1e-3; see decisions ledger")
def test_exact_reference_stepsize_within_ten_thousand_steps(seed0):
    plant, obj = seed0
    u_star, _ = analytic_minimizer(ReducedObjective(obj, plant))
    s = run_closed_loop(ControllerConfig(Method.EXACT_GRADIENT, 100e-5), plant, obj,
                        total_plant_steps=10_000, record_stride=10_000)
    assert np.linalg.norm(s.final_u - u_star) <= 1e-6


def test_exact_reference_stepsize_reaches_minimizer(seed0):
    plant, obj = seed0
    u_star, _ = analytic_minimizer(ReducedObjective(obj, plant))
    needed, rho = exact_fo_steps_needed(plant, obj, 100e-5, 1e-6, np.linalg.norm(u_star))
    assert rho < 1
    budget = int(1.1 * needed)
    s = run_closed_loop(ControllerConfig(Method.EXACT_GRADIENT, 100e-5), plant, obj,
                        total_plant_steps=budget, record_stride=budget)
    assert np.linalg.norm(s.final_u - u_star) <= 1e-6


# run_closed_loop

def test_exact_scalar_geometric_contraction():
    plant = scalar_plant(a=0.0, b=2.0, c=1.5, e=1.0, d_x=0.3, d=1.0, d_y=-0.2)
    obj = scalar_objective(1.0, 0.7)
    G = plant.G[0, 0]
    H = plant.H[0]
    lam = 2 * (1.0 + G * G)
    eta = 0.05
    u_star = -(0.7 + 2 * G * H) / lam
    s = run_closed_loop(ControllerConfig(Method.EXACT_GRADIENT, eta), plant, obj, u0=[3.0],
                        total_plant_steps=40, keep_inputs=True)
    k = np.arange(40)
    expected = u_star + (1 - eta * lam) ** k * (3.0 - u_star)
    np.testing.assert_allclose(s.inputs[:, 0], expected, rtol=1e-12, atol=1e-13)


def test_zero_stepsize_keeps_everything_constant(seed0):
    plant, obj = seed0
    s = run_closed_loop(ControllerConfig(Method.TWO_POINT_RGF, 0.0, 5e-5), plant, obj,
                        u0=np.ones(5), total_plant_steps=200, keep_inputs=True)
    assert np.all(s.inputs == 1.0)
    assert np.all(s.grad_norm_sq == s.grad_norm_sq[0])


def test_budget_to_updates(seed0):
    plant, obj = seed0
    s = run_closed_loop(ControllerConfig(Method.TWO_POINT_RGF, 1e-5, 5e-3), plant, obj,
                        total_plant_steps=2000)
    assert s.n_updates == 1000 and len(s) == 1000 and s.plant_steps_used == 2000
    np.testing.assert_array_equal(s.plant_step, 2 * np.arange(1000))
    r = run_closed_loop(ControllerConfig(Method.ONE_POINT_RESIDUAL, 1e-6, 5e-3), plant, obj,
                        total_plant_steps=2000)
    assert r.n_updates == 1999 and r.plant_steps_used == 2000
    assert r.plant_step[0] == 1


@pytest.mark.parametrize("method,budget", [(Method.TWO_POINT_RGF, 1), (Method.EXACT_GRADIENT, 1),
                                           (Method.ONE_POINT_RESIDUAL, 1), (Method.TWO_POINT_RGF, 0)])
def test_empty_budget(seed0, method, budget):
    plant, obj = seed0
    with pytest.raises(EmptySeriesError):
        run_closed_loop(ControllerConfig(method, 1e-5, 5e-3), plant, obj, total_plant_steps=budget)


def test_divergence_marked_and_filled(seed0):
    plant, obj = seed0
    s = run_closed_loop(ControllerConfig(Method.TWO_POINT_RGF, 40e-5, 5e-5), plant, obj,
                        total_plant_steps=1000)
    k = s.params["diverged_at"]
    assert k is not None and len(s) == 500
    assert np.all(np.isinf(s.grad_norm_sq[k:])) and np.all(np.isinf(s.optimality_gap[k:]))
    np.testing.assert_array_equal(s.plant_step, 2 * np.arange(500))


def test_record_stride(seed0):
    plant, obj = seed0
    full = run_closed_loop(ControllerConfig(Method.EXACT_GRADIENT, 1e-3), plant, obj,
                           total_plant_steps=100)
    thin = run_closed_loop(ControllerConfig(Method.EXACT_GRADIENT, 1e-3), plant, obj,
                           total_plant_steps=100, record_stride=7)
    np.testing.assert_array_equal(thin.update_index, np.arange(0, 100, 7))
    np.testing.assert_array_equal(thin.grad_norm_sq, full.grad_norm_sq[::7])


def test_callable_objective_uses_finite_differences(seed0):
    plant, obj = seed0
    wrapped = CallableObjective(obj.value)
    a = run_closed_loop(ControllerConfig(Method.TWO_POINT_RGF, 1e-5, 5e-3), plant, wrapped,
                        total_plant_steps=20)
    b = run_closed_loop(ControllerConfig(Method.TWO_POINT_RGF, 1e-5, 5e-3), plant, obj,
                        total_plant_steps=20)
    np.testing.assert_allclose(a.grad_norm_sq, b.grad_norm_sq, rtol=1e-5)
    assert np.all(np.isnan(a.optimality_gap))


def test_controller_update_dispatch(seed0):
    plant, obj = seed0
    for method in Method:
        cfg = ControllerConfig(method, 1e-5, 5e-3)
        state, pstate, rec = controller_update(cfg, init_controller_state(np.zeros(5)), plant,
                                               settled(plant, np.zeros(5)), obj)
        assert state.iteration == 1
        assert state.plant_steps == len(rec.applied)


@settings(max_examples=30, deadline=None)
@given(method=st.sampled_from(list(Method)), budget=st.integers(2, 500))
def test_update_count_arithmetic(method, budget):
    n = n_updates_for_budget(method, budget)
    used = n * method.steps_per_update + (1 if method is Method.ONE_POINT_RESIDUAL else 0)
    assert used <= budget
    assert budget - used < method.steps_per_update
