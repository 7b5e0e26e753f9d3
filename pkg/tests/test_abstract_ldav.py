import math

import numpy as np
import pytest

from thermo_network.network.model import initial_state
from thermo_network.scenario import demos
from thermo_network.simulation.abstract_ldav import (
    AbstractState, LagrangianSystem, LdavOptions, constraint_residual, degenerate_directions, embed_open_system,
    energy, integrate_abstract, project_velocity, solve_accel,
)
from thermo_network.simulation.integrator import integrate_model
from thermo_network.utils.errors import ConstraintRankError, DomainError, ScopeError


def oscillator():
    return LagrangianSystem(n=1, m=0, L=lambda t, q, v: 0.5 * v[0] ** 2 - 0.5 * q[0] ** 2, time_dependent=False)


def coupled_masses():
    """Two unit masses, a spring on the first, and the velocity constraint v1 - v2 = 0."""
    return LagrangianSystem(
        n=2, m=1,
        L=lambda t, q, v: 0.5 * v[0] ** 2 + 0.5 * v[1] ** 2 - 0.5 * q[0] ** 2,
        A=lambda t, q, v: np.array([[1.0, -1.0]]),
        B=lambda t, q, v: np.array([0.0]),
        time_dependent=False,
    )


def test_unconstrained_oscillator_acceleration():
    sol = solve_accel(oscillator(), 0.0, np.array([0.7]), np.array([0.2]))
    assert sol.a[0] == pytest.approx(-0.7, abs=1e-8)
    assert sol.lam.size == 0


def test_unconstrained_oscillator_trajectory():
    sys = oscillator()
    traj = integrate_abstract(sys, AbstractState(0.0, np.array([1.0]), np.array([0.0])), 1.0, LdavOptions(h=1e-2))
    assert traj.times[-1] == pytest.approx(1.0)
    assert traj.q[-1, 0] == pytest.approx(math.cos(1.0), abs=1e-7)
    assert traj.v[-1, 0] == pytest.approx(-math.sin(1.0), abs=1e-7)
    energies = [energy(sys, s.t, s.state.q, s.state.v) for s in traj.samples]
    np.testing.assert_allclose(energies, 0.5, atol=1e-7)


def test_constrained_masses_multiplier():
    a, lam = solve_accel(coupled_masses(), 0.0, np.array([1.0, 0.0]), np.array([0.0, 0.0]))
    np.testing.assert_allclose(a, [-0.5, -0.5], atol=1e-6)
    assert lam[0] == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize('time_dependent, expected', [(True, -4.0 / 3.0), (False, 0.0)])
def test_growing_mass_explicit_time_term(time_dependent, expected):
    # L = (1 + t) v^2 / 2 conserves (1 + t) v, so a = -v / (1 + t)
    sys = LagrangianSystem(n=1, m=0, L=lambda t, q, v: 0.5 * (1.0 + t) * v[0] ** 2, time_dependent=time_dependent)
    sol = solve_accel(sys, 0.5, np.array([0.0]), np.array([2.0]))
    assert sol.a[0] == pytest.approx(expected, abs=1e-6)


def test_constrained_masses_trajectory():
    sys = coupled_masses()
    state0 = AbstractState(0.0, np.array([1.0, 0.0]), np.array([0.0, 0.0]))
    traj = integrate_abstract(sys, state0, 2.0, LdavOptions(h=1e-2, sample_dt=0.5))
    assert len(traj.samples) == 5
    q1 = np.cos(traj.times / math.sqrt(2.0))
    np.testing.assert_allclose(traj.q[:, 0], q1, atol=1e-7)
    np.testing.assert_allclose(traj.q[:, 1], q1 - 1.0, atol=1e-7)
    np.testing.assert_allclose(traj.v[:, 0], traj.v[:, 1], atol=1e-8)
    final = traj.samples[-1]
    assert final.lam[0] == pytest.approx(final.state.q[0] / 2, abs=1e-6)


def test_project_velocity_onto_constraint():
    sys = coupled_masses()
    q = np.zeros(2)
    assert constraint_residual(sys, 0.0, q, [1.0, 0.0])[0] == 1.0
    v = project_velocity(sys, 0.0, q, [1.0, 0.0])
    np.testing.assert_allclose(v, [0.5, 0.5])
    assert constraint_residual(sys, 0.0, q, v)[0] == pytest.approx(0.0, abs=1e-15)


def test_zero_constraint_row_is_rank_deficient():
    sys = LagrangianSystem(n=2, m=1, L=coupled_masses().L, A=lambda t, q, v: np.zeros((1, 2)),
                           B=lambda t, q, v: np.zeros(1))
    with pytest.raises(ConstraintRankError):
        solve_accel(sys, 0.0, np.ones(2), np.zeros(2))


def test_degenerate_direction_without_constraint():
    sys = LagrangianSystem(n=2, m=0, L=lambda t, q, v: 0.5 * v[0] ** 2 + v[1] * q[0], time_dependent=False)
    assert degenerate_directions(sys, 0.0, np.ones(2), np.zeros(2)) == [1]
    with pytest.raises(ConstraintRankError):
        solve_accel(sys, 0.0, np.ones(2), np.zeros(2))


@pytest.mark.parametrize('kwargs', [{'n': 0, 'm': 0}, {'n': 2, 'm': 2}, {'n': 2, 'm': 1}])
def test_invalid_system_shapes(kwargs):
    with pytest.raises(DomainError):
        LagrangianSystem(L=lambda t, q, v: 0.0, **kwargs)


def test_tank_embedding_reproduces_the_rhs(tank):
    embedding = embed_open_system(tank)
    assert list(embedding.names) == ['S', 'N', 'Gamma', 'W', 'Sigma']
    assert degenerate_directions(embedding, 0.0, np.ones(5), np.zeros(5)) == [0, 1, 2, 3, 4]

    state = initial_state(tank)
    z = embedding.from_system_state(state)
    sol = solve_accel(embedding, state.t, z.q, z.v)
    assert sol.lam[0] == pytest.approx(1.0, rel=1e-6)
    np.testing.assert_allclose(sol.v, z.v, rtol=1e-6, atol=1e-9)
    np.testing.assert_array_equal(embedding.to_system_state(z).y, state.y)


def test_piston_embedding_round_trip(piston):
    embedding = embed_open_system(piston)
    assert embedding.names[:2] == ['q', 'x']
    state = initial_state(piston)
    np.testing.assert_array_equal(embedding.to_system_state(embedding.from_system_state(state)).y, state.y)


def test_wrong_affine_sign_changes_the_velocities(tank):
    embedding = embed_open_system(tank, affine_sign=-1.0)
    state = initial_state(tank)
    z = embedding.from_system_state(state)
    sol = solve_accel(embedding, state.t, z.q, z.v)
    assert sol.lam[0] == pytest.approx(1.0, rel=1e-6)
    assert not np.allclose(sol.v, z.v, rtol=1e-3)


@pytest.mark.parametrize('build', [demos.two_compartment, demos.heat_matter])
def test_embedding_scope(build):
    with pytest.raises(ScopeError):
        embed_open_system(build())


@pytest.mark.slow
@pytest.mark.parametrize('build', [demos.tank, demos.piston])
def test_embedding_follows_the_direct_integration(build, fixed_step):
    model = build()
    embedding = embed_open_system(model)
    state0 = initial_state(model)
    direct = integrate_model(model, state0, fixed_step(1e-2, 1.0, sample_dt=0.1))
    abstract = integrate_abstract(embedding, embedding.from_system_state(state0), 1.0,
                                  LdavOptions(h=1e-2, sample_dt=0.1))
    np.testing.assert_allclose(abstract.times, direct.times, atol=1e-12)
    for sample, reference in zip(abstract.samples, direct.samples):
        y = embedding.to_system_state(sample.state).y
        scale = np.maximum(1.0, np.abs(reference.state.y))
        assert np.max(np.abs(y - reference.state.y) / scale) <= 1e-6
