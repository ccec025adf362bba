import numpy as np
import pytest

from ncpde import backends as bk
from ncpde import calculus as ca
from ncpde import coords as co
from ncpde import dirichlet as dr
from ncpde import evolution as ev
from conftest import SIGMA_X, THETA_IRR, make_rng


# ---------------------------------------------------------------------------
# Gelfand triple assembly
# ---------------------------------------------------------------------------


def test_triple_dimensions_and_gram_torus():
    sp = dr.build_space(bk.NCTorus(1, THETA_IRR))
    tr = ev.assemble_triple(sp)
    assert tr.dim_real == 18
    diag = sorted(np.diag(tr.e_gram))
    ns = range(-1, 2)
    expected = sorted(1.0 + n * n + m * m for n in ns for m in ns) * 2
    assert np.allclose(sorted(diag), sorted(expected))
    assert np.array_equal(tr.m_gram, np.eye(18))


def test_triple_qubit_v_gram_spectrum(qubit_space):
    tr = ev.assemble_triple(qubit_space)
    evals = np.linalg.eigvalsh(tr.e_gram)
    # complex spectrum {1, 1, 5, 5}, doubled by the real coordinates
    assert np.allclose(sorted(evals), [1, 1, 1, 1, 5, 5, 5, 5])
    assert tr.condition == pytest.approx(5.0)


def test_triple_dual_riesz_inverts_embedding(qubit_space):
    tr = ev.assemble_triple(qubit_space)
    rng = make_rng(100)
    x = rng.standard_normal(tr.dim_real)
    r = tr.dual_riesz(x)
    # <r, v>_V = <x, v>_H for all v, by construction
    assert np.allclose(tr.e_gram @ r, x)


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------


def test_heat_step_tracks_exact_decay():
    # exact solution of the mode ODE: u(t) = e^{-t} U; first-order stepping
    sp = dr.build_space(bk.NCTorus(1, THETA_IRR))
    U = bk.monomial(sp.backend, 1, 0)
    prob = ev.EvolutionProblem(sp, "heat", U, horizon=1.0, dt=1e-3)
    res = ev.solve_evolution(prob)
    exact = co.realify_vector(bk.to_l2(bk.scale(np.exp(-1.0), U)))
    err = np.linalg.norm(res.states[-1] - exact)
    assert err <= 2e-3
    assert res.solve_residual_max <= 1e-12


def test_heat_kernel_data_is_stationary(torus2_space):
    one = bk.unit(torus2_space.backend)
    prob = ev.EvolutionProblem(torus2_space, "heat", one, horizon=0.5, dt=0.1)
    res = ev.solve_evolution(prob)
    assert np.abs(res.states - res.states[0]).max() == 0.0


def test_transport_free_continuity_is_constant(torus2_space):
    U = bk.monomial(torus2_space.backend, 1, 0)
    prob = ev.EvolutionProblem(torus2_space, "continuity", U, horizon=0.5, dt=0.1,
                               epsilon=0.0)
    res = ev.solve_evolution(prob)
    assert np.abs(res.states - res.states[0]).max() == 0.0
    assert any("epsilon=0" in f for f in res.flags)


def test_heat_qubit_matches_scalar_ode(qubit, qubit_space):
    # oracle: the whole trajectory is e^{-4t} sigma_x (rate from the
    # double-commutator eigenvalue, checked independently in test_dirichlet)
    u0 = bk.element(qubit, SIGMA_X)
    dt = 1e-3
    prob = ev.EvolutionProblem(qubit_space, "heat", u0, horizon=1.0, dt=dt)
    res = ev.solve_evolution(prob)
    worst = 0.0
    for k, t in enumerate(res.times):
        exact = co.realify_vector(bk.to_l2(bk.scale(np.exp(-4.0 * t), u0)))
        worst = max(worst, np.linalg.norm(res.states[k] - exact))
    assert worst <= 6.0 * dt   # first order in dt


def test_convergence_orders(qubit, qubit_space):
    u0 = bk.element(qubit, SIGMA_X)
    errs = {"implicit-euler": [], "crank-nicolson": []}
    for scheme in errs:
        for dt in (1e-2, 5e-3, 2.5e-3):
            prob = ev.EvolutionProblem(qubit_space, "heat", u0, horizon=1.0,
                                       dt=dt, scheme=scheme)
            errs[scheme].append(ev.solve_evolution(prob).terminal_error_vs_oracle)
    for e1, e2 in zip(errs["implicit-euler"], errs["implicit-euler"][1:]):
        assert 0.4 <= e2 / e1 <= 0.6
    for e1, e2 in zip(errs["crank-nicolson"], errs["crank-nicolson"][1:]):
        assert 0.2 <= e2 / e1 <= 0.3


def test_implicit_euler_is_unconditionally_stable(torus2_space):
    rng = make_rng(101)
    u0 = bk.random_element(torus2_space.backend, rng)
    prob = ev.EvolutionProblem(torus2_space, "heat", u0, horizon=5.0, dt=0.5)
    res = ev.solve_evolution(prob)
    norms = np.linalg.norm(res.states, axis=1)
    assert np.all(np.diff(norms) <= 1e-13)


# ---------------------------------------------------------------------------
# Conservation and certificates
# ---------------------------------------------------------------------------


def _constant_flow_problem(space, eps=0.1, dt=1e-2, horizon=1.0, scheme="implicit-euler"):
    U = bk.monomial(space.backend, 1, 0)
    V = bk.monomial(space.backend, 0, 1)
    u0 = bk.unit(space.backend) + bk.scale(0.3, U) + bk.scale(0.2, V)
    h = ca.gradient(space, U)
    return ev.EvolutionProblem(space, "continuity", u0, horizon=horizon, dt=dt,
                               scheme=scheme, epsilon=eps, flow=[h], flow_times=[0.0])


def test_viscous_continuity_conserves_trace(torus2_space):
    res = ev.solve_evolution(_constant_flow_problem(torus2_space), rng=make_rng(102))
    assert np.abs(res.conservation_defect).max() <= 1e-10
    # the run actually moves: it is not a frozen state
    assert np.abs(res.states[-1] - res.states[0]).max() > 1e-3


def test_conservation_with_source_tracks_injected_mass(torus2_space):
    sp = torus2_space
    U = bk.monomial(sp.backend, 1, 0)
    src = bk.unit(sp.backend) + U     # injects trace mass at unit rate
    prob = ev.EvolutionProblem(sp, "heat", U, horizon=0.5, dt=1e-2,
                               source=[src], source_times=[0.0])
    res = ev.solve_evolution(prob)
    assert np.abs(res.conservation_defect).max() <= 1e-10
    # and the trace really grew by about horizon * 1
    unit_r = co.realify_vector(bk.to_l2(bk.unit(sp.backend)))
    assert (res.states[-1] @ unit_r - res.states[0] @ unit_r) == pytest.approx(0.5, rel=1e-6)


def test_coercivity_margin_nonnegative_for_viscous_runs(torus2_space):
    res = ev.solve_evolution(_constant_flow_problem(torus2_space, eps=0.05, dt=0.05),
                             rng=make_rng(103), probes=8)
    assert res.coercivity_margin is not None
    assert res.coercivity_margin.min() >= -1e-9
    assert res.boundedness_ratio is not None
    assert res.boundedness_ratio.max() < np.inf


def test_epsilon_zero_flags_unverified_hypotheses(torus2_space):
    prob = _constant_flow_problem(torus2_space, eps=0.0, dt=0.05, horizon=0.2)
    res = ev.solve_evolution(prob, rng=make_rng(104))
    assert any("unverified" in f for f in res.flags)
    assert res.coercivity_margin is None


def test_flow_interpolation_is_linear():
    sp = dr.build_space(bk.NCTorus(1, THETA_IRR))
    U = bk.monomial(sp.backend, 1, 0)
    h0 = ca.gradient(sp, U)
    h1 = 3.0 * h0
    prob = ev.EvolutionProblem(sp, "continuity", U, horizon=1.0, dt=0.5, epsilon=0.1,
                               flow=[h0, h1], flow_times=[0.0, 1.0])
    mid = ev.flow_at(prob, 0.5)
    expected = 2.0 * h0
    assert max(bk.norm_l2(a - b) for a, b in zip(mid.parts, expected.parts)) <= 1e-14


# ---------------------------------------------------------------------------
# Discrete energy identity and weak derivative
# ---------------------------------------------------------------------------


def test_discrete_energy_identity(qubit, qubit_space):
    # ||u(T)||^2 + 2 int_0^T E[u] dt = ||u0||^2, up to first order in dt
    u0 = bk.element(qubit, SIGMA_X)
    dt, T = 1e-3, 1.0
    prob = ev.EvolutionProblem(qubit_space, "heat", u0, horizon=T, dt=dt)
    res = ev.solve_evolution(prob)
    gen_r = co.realify_operator(qubit_space.generator)
    energies = np.array([x @ (gen_r @ x) for x in res.states])
    integral = dt * (0.5 * energies[0] + energies[1:-1].sum() + 0.5 * energies[-1])
    lhs = np.linalg.norm(res.states[-1]) ** 2 + 2.0 * integral
    rhs = np.linalg.norm(res.states[0]) ** 2
    # exact identity residual for the scalar mode is O(dt); scale by ||u0||^2
    assert abs(lhs - rhs) <= 20.0 * dt * rhs


def test_weak_derivative_identity_on_trajectory(qubit, qubit_space):
    # int <du/dt, v> phi dt = - int <u, v> phi' dt for smooth phi vanishing
    # at the endpoints, evaluated with trapezoidal quadrature
    u0 = bk.element(qubit, SIGMA_X)
    dt, T = 1e-3, 1.0
    prob = ev.EvolutionProblem(qubit_space, "heat", u0, horizon=T, dt=dt)
    res = ev.solve_evolution(prob)
    rng = make_rng(105)
    v = co.realify_vector(bk.to_l2(bk.random_element(qubit, rng)))
    a = res.states @ v                      # scalar signal <u(t), v>_H (real part)
    t = res.times
    phi = np.sin(np.pi * t / T) ** 2
    dphi = 2.0 * np.sin(np.pi * t / T) * np.cos(np.pi * t / T) * np.pi / T
    da = np.diff(a) / dt                    # difference quotient, piecewise constant
    phi_mid = 0.5 * (phi[:-1] + phi[1:])
    lhs = float(np.sum(da * phi_mid) * dt)
    rhs = -float(np.trapezoid(a * dphi, t))
    assert abs(lhs - rhs) <= 5e-5 * max(abs(rhs), 1.0)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def test_problem_validation(qubit, qubit_space):
    u0 = bk.element(qubit, SIGMA_X)
    with pytest.raises(ValueError):
        ev.EvolutionProblem(qubit_space, "wave", u0, horizon=1.0, dt=0.1)
    with pytest.raises(ValueError):
        ev.EvolutionProblem(qubit_space, "heat", u0, horizon=1.0, dt=-0.1)
    with pytest.raises(ValueError):
        ev.EvolutionProblem(qubit_space, "heat", u0, horizon=1.0, dt=0.1, scheme="rk4")
    with pytest.raises(bk.BackendMismatch):
        z2 = dr.build_space(bk.CyclicGroup(2, (0.0, 1.0)))
        ev.EvolutionProblem(z2, "heat", u0, horizon=1.0, dt=0.1)


def test_horizon_must_be_step_multiple(qubit, qubit_space):
    prob = ev.EvolutionProblem(qubit_space, "heat", bk.element(qubit, SIGMA_X),
                               horizon=1.0, dt=0.3)
    with pytest.raises(ValueError):
        ev.solve_evolution(prob)
