from dataclasses import replace

import numpy as np
import pytest

from thermo_network.network.model import SystemState, initial_state, state_layout
from thermo_network.scenario import demos
from thermo_network.simulation.dynamics import Dynamics
from thermo_network.simulation.integrator import (
    COMPLETED, GUARD_STOP, RK4, RK45, STEP_LIMIT, IntegrationOptions, integrate, integrate_model, rk4_step,
    rkf45_step, sample_diagnostics,
)
from thermo_network.utils.errors import DomainError, IntegrityError


def decay(t, y):
    return -y


def test_rk4_step_on_linear_decay():
    y = np.array([1.0, 2.0])
    h = 0.1
    expected = y * (1 - h + h ** 2 / 2 - h ** 3 / 6 + h ** 4 / 24)
    np.testing.assert_allclose(rk4_step(decay, 0.0, y, h), expected, rtol=1e-14)


def test_rkf45_error_estimate_is_small_and_update_accurate():
    y = np.array([1.0])
    y_new, error = rkf45_step(decay, 0.0, y, 0.1)
    assert y_new[0] == pytest.approx(np.exp(-0.1), rel=1e-6)
    assert 0 < abs(error[0]) < 1e-6


def test_adaptive_integration_of_decay(tank):
    layout = state_layout(tank)
    state0 = SystemState(0.0, np.ones(len(layout)), layout)
    options = IntegrationOptions(method=RK45, t_final=2.0, h0=1e-3, h_min=1e-12, h_max=0.5,
                                 abs_tol=1e-12, rel_tol=1e-12, sample_dt=0.5)
    traj = integrate(decay, state0, options.t_final, options)
    assert traj.termination.status == COMPLETED
    np.testing.assert_allclose(traj.times, [0.0, 0.5, 1.0, 1.5, 2.0])
    np.testing.assert_allclose(traj.states[:, 0], np.exp(-traj.times), rtol=1e-9)
    assert traj.samples[0].diagnostics is None


def test_samples_land_on_sample_times(tank):
    options = IntegrationOptions(method=RK45, t_final=1.0, h0=1e-3, h_min=1e-9, h_max=0.1, sample_dt=0.3)
    traj = integrate_model(tank, initial_state(tank), options)
    np.testing.assert_allclose(traj.times, [0.0, 0.3, 0.6, 0.9, 1.0], rtol=0, atol=1e-12)
    assert traj.times[-1] == 1.0
    assert traj.name == 'tank'
    assert traj.final.diagnostics is not None


def test_rk45_agrees_with_fine_rk4(tank, fixed_step):
    adaptive = integrate_model(tank, initial_state(tank), IntegrationOptions(t_final=1.0, sample_dt=1.0))
    fine = integrate_model(tank, initial_state(tank), fixed_step(1e-3, 1.0))
    np.testing.assert_allclose(adaptive.final.state.y, fine.final.state.y, rtol=1e-7)


def self_convergence_factor(model, fixed_step, h, t_final):
    finals = []
    for step in (h, h / 2, h / 4):
        traj = integrate_model(model, initial_state(model), fixed_step(step, t_final))
        assert traj.termination.completed
        finals.append(traj.final.state.y)
    coarse = np.max(np.abs(finals[0] - finals[1]))
    fine = np.max(np.abs(finals[1] - finals[2]))
    return coarse / fine


@pytest.mark.parametrize('build', [lambda: demos.piston(lambda_fr=0.0), demos.two_compartment])
def test_rk4_self_convergence(build, fixed_step):
    factor = self_convergence_factor(build(), fixed_step, 0.2, 4.0)
    assert 12.0 <= factor <= 20.0


def test_guard_stop_when_tank_drains(tank, fixed_step):
    model = replace(tank, ports=(demos.outlet('drain', 'tank', 1.0),))
    traj = integrate_model(model, initial_state(model), fixed_step(0.01, 10.0, sample_dt=0.5))
    assert traj.termination.status == GUARD_STOP
    assert not traj.termination.completed
    N0 = tank.compartments[0].N0
    assert traj.termination.t == pytest.approx(N0, abs=0.02)
    assert traj.termination.reason
    assert all(sample.state['N'] > 0 for sample in traj.samples)
    assert traj.rejected > 0


def test_step_limit_stops_the_run(tank, fixed_step):
    options = replace(fixed_step(0.01, 1.0, sample_dt=0.05), max_steps=12)
    traj = integrate_model(tank, initial_state(tank), options)
    assert traj.termination.status == STEP_LIMIT
    assert not traj.termination.completed
    assert 'step limit 12' in traj.termination.reason
    assert traj.steps == 12
    assert traj.termination.t == pytest.approx(0.12)
    assert traj.times[-1] == pytest.approx(0.10)


def test_initial_state_outside_domain(tank, short_options):
    state = initial_state(tank)
    y = state.y.copy()
    y[state.layout.index('N')] = 0.0
    with pytest.raises(IntegrityError):
        integrate(Dynamics(tank), SystemState(0.0, y, state.layout), 1.0, short_options)


def test_non_finite_rhs_is_an_integrity_error(tank):
    layout = state_layout(tank)
    state0 = SystemState(0.0, np.ones(len(layout)), layout)

    def blow_up(t, y):
        return np.full_like(y, np.inf)

    with pytest.raises(IntegrityError):
        integrate(blow_up, state0, 1.0, IntegrationOptions(method=RK4, t_final=1.0, sample_dt=1.0))


def test_trajectory_accessors(tank, short_options):
    traj = integrate_model(tank, initial_state(tank), short_options)
    assert traj.states.shape == (len(traj.samples), 5)
    np.testing.assert_array_equal(traj.column('N'), traj.states[:, 1])
    assert traj.diagnostic('I').shape == (len(traj.samples),)
    final = traj.final
    assert sample_diagnostics(tank, final.state, final.t).E == pytest.approx(final.diagnostics.E)
    assert traj.steps > 0


@pytest.mark.parametrize('kwargs', [
    {'method': 'euler'},
    {'t_final': 0.0},
    {'h0': 1.0, 'h_max': 0.1},
    {'h0': 1e-12, 'h_min': 1e-9},
    {'sample_dt': -1.0},
    {'abs_tol': float('nan')},
    {'max_steps': 0},
])
def test_invalid_options(kwargs):
    with pytest.raises(DomainError):
        IntegrationOptions(**kwargs)


def test_options_from_config():
    config = {'integration': {'method': 'rk4', 'h0': 1e-2, 'h_max': 1e-2, 'unused': 5}}
    options = IntegrationOptions.from_config(config, t_final=3.0, sample_dt=None)
    assert options.method == RK4
    assert options.h0 == 1e-2
    assert options.t_final == 3.0
    assert options.sample_dt == IntegrationOptions().sample_dt


@pytest.mark.slow
def test_isolated_network_conserves_energy_and_moles(isolated_heat_matter, fixed_step):
    traj = integrate_model(isolated_heat_matter, initial_state(isolated_heat_matter),
                           fixed_step(0.01, 100.0, sample_dt=1.0))
    assert traj.steps >= 10_000
    E = traj.diagnostic('E')
    N = traj.diagnostic('N_total')
    assert np.max(np.abs(E - E[0])) <= 1e-8 * abs(E[0])
    assert np.max(np.abs(N - N[0])) <= 1e-8 * N[0]
