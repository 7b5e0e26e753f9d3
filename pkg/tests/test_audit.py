import math
from dataclasses import replace

import numpy as np
import pytest

from thermo_network.analysis.audit import (
    CROSS_VALIDATION, ENTROPY_BOOKKEEPING, EQUILIBRIUM, FAIL, FIRST_LAW, GAUGE_INVARIANCE, MOLE_BALANCE,
    ONSAGER_ADMISSIBILITY, PASS, SECOND_LAW, AuditReport, AuditTolerances, CheckResult, applicable_checks,
    centered_derivative, cross_validation_audit, entropy_bookkeeping_audit, equilibrium_audit, first_law_audit,
    gauge_invariance_audit, is_isolated, mole_balance_audit, onsager_admissibility_audit, run_audits, second_law_audit,
)
from thermo_network.network.model import ONSAGER_2X2, CouplingSpec, initial_state
from thermo_network.scenario import demos
from thermo_network.simulation.integrator import integrate_model
from thermo_network.utils.errors import AuditPreconditionError, ScopeError

TRAJECTORY_CHECKS = (
    (FIRST_LAW, first_law_audit),
    (SECOND_LAW, second_law_audit),
    (ENTROPY_BOOKKEEPING, entropy_bookkeeping_audit),
    (MOLE_BALANCE, mole_balance_audit),
)

# fixed-step reruns at 1e-2 keep the gauge and cross-validation audits quick
QUICK = AuditTolerances(cross_validation_h=1e-2)


def simulate(model, options, mutation=None):
    return integrate_model(model, initial_state(model), options, mutation=mutation)


@pytest.mark.parametrize('name', demos.demo_names())
def test_demo_trajectories_obey_the_balances(name, short_options):
    model, _ = demos.build_demo(name)
    traj = simulate(model, short_options)
    assert traj.termination.completed
    for check, audit in TRAJECTORY_CHECKS:
        result = audit(model, traj)
        assert result.check == check
        assert result.verdict == PASS, result


def test_low_pressure_inlet_violates_the_second_law(short_options):
    model = demos.tank_with_inlet(300.0, 0.5e5)
    result = second_law_audit(model, simulate(model, short_options))
    assert result.verdict == FAIL
    assert result.max_violation > 1e-3
    assert result.detail == "negative entropy production"


@pytest.mark.parametrize('build, mutation, audit', [
    (demos.tank, 'port_flow', mole_balance_audit),
    (demos.tank, 'port_mixing', first_law_audit),
    (demos.tank, 'port_advected_entropy', entropy_bookkeeping_audit),
    (demos.heat_matter, 'source_entropy', entropy_bookkeeping_audit),
    (demos.two_compartment, 'diffusion', second_law_audit),
    (demos.heat_matter, 'heat_exchange', second_law_audit),
])
def test_sign_flipped_terms_are_caught(build, mutation, audit, short_options):
    model = build()
    clean = audit(model, simulate(model, short_options))
    broken = audit(model, simulate(model, short_options, mutation))
    assert clean.passed
    assert not broken.passed
    assert broken.t is not None


def test_reversed_friction_is_caught(piston, short_options):
    options = replace(short_options, t_final=0.4, sample_dt=0.01, h_max=0.01, h0=1e-3)
    traj = simulate(piston, options, 'friction')
    assert traj.termination.completed
    assert abs(traj.column('xdot')[-1]) > 0.1
    assert second_law_audit(piston, traj).verdict == FAIL


def test_gauge_invariance(tank, two_compartment, short_options):
    assert gauge_invariance_audit(tank, short_options, QUICK).passed
    assert gauge_invariance_audit(two_compartment, short_options, QUICK).passed


def test_gauge_audit_catches_reference_dependent_entropy(tank, short_options):
    result = gauge_invariance_audit(tank, short_options, QUICK, mutation='port_advected_entropy')
    assert result.verdict == FAIL
    assert result.detail


def test_energy_offset_of_onsager_network(heat_matter, short_options):
    assert gauge_invariance_audit(heat_matter, short_options, QUICK).passed


def test_equilibrium_needs_an_isolated_model(tank, short_options):
    traj = simulate(tank, short_options)
    with pytest.raises(AuditPreconditionError):
        equilibrium_audit(tank, traj)

    (result,) = run_audits(tank, traj, short_options, checks=[EQUILIBRIUM]).checks
    assert result.verdict == FAIL
    assert result.tolerance == 0.0
    assert result.max_violation == math.inf
    assert 'isolated' in result.detail


def test_equilibrium_catches_reversed_heat_exchange(isolated_heat_matter, short_options):
    traj = simulate(isolated_heat_matter, short_options, 'heat_exchange')
    assert equilibrium_audit(isolated_heat_matter, traj).verdict == FAIL


@pytest.mark.slow
def test_isolated_network_relaxes(isolated_heat_matter):
    _, options = demos.build_demo('isolated-heat-matter')
    traj = simulate(isolated_heat_matter, options)
    result = equilibrium_audit(isolated_heat_matter, traj)
    assert result.passed, result
    assert result.max_violation < 1e-6


def test_cross_validation_scope(two_compartment):
    with pytest.raises(ScopeError):
        cross_validation_audit(two_compartment)


@pytest.mark.slow
@pytest.mark.parametrize('build', [demos.tank, demos.piston])
def test_cross_validation_agrees(build, short_options):
    assert cross_validation_audit(build(), short_options, QUICK).passed


@pytest.mark.slow
def test_cross_validation_catches_a_wrong_embedding(tank, short_options):
    result = cross_validation_audit(tank, short_options, QUICK, affine_sign=-1.0)
    assert result.verdict == FAIL
    assert result.max_violation > 1e-3


def test_onsager_admissibility(tank, heat_matter):
    assert onsager_admissibility_audit(tank).detail == "no onsager couplings"
    assert onsager_admissibility_audit(heat_matter).passed

    indefinite = CouplingSpec(('c1', 'c2'), ONSAGER_2X2, L=((1.0, 2.0), (2.0, 1.0)))
    result = onsager_admissibility_audit(replace(heat_matter, couplings=(indefinite,)))
    assert result.verdict == FAIL
    assert 'c1-c2' in result.detail


def test_centered_derivative_is_exact_on_polynomials():
    t = np.linspace(0.0, 1.0, 11)
    times, derivative = centered_derivative(t, 3 * t ** 2 - 2 * t + 1)
    np.testing.assert_allclose(times, t[1:-1])
    np.testing.assert_allclose(derivative, 6 * times - 2, atol=1e-12)

    _, derivative = centered_derivative(t, t ** 4)
    np.testing.assert_allclose(derivative[1:-1], 4 * times[1:-1] ** 3, atol=1e-12)

    uneven = np.array([0.0, 0.1, 0.25, 0.3, 0.6, 1.0])
    times, derivative = centered_derivative(uneven, uneven ** 2)
    np.testing.assert_allclose(derivative, 2 * times, atol=1e-12)


def test_centered_derivative_needs_three_samples():
    with pytest.raises(AuditPreconditionError):
        centered_derivative([0.0, 1.0], [0.0, 1.0])


def test_applicable_checks(tank, two_compartment, isolated_heat_matter):
    assert is_isolated(isolated_heat_matter)
    assert not is_isolated(tank)
    assert applicable_checks(tank) == [FIRST_LAW, SECOND_LAW, ENTROPY_BOOKKEEPING, MOLE_BALANCE,
                                       GAUGE_INVARIANCE, CROSS_VALIDATION, ONSAGER_ADMISSIBILITY]
    assert CROSS_VALIDATION not in applicable_checks(two_compartment)
    assert EQUILIBRIUM in applicable_checks(isolated_heat_matter)


def test_run_audits_keeps_check_order(two_compartment, short_options):
    checks = [MOLE_BALANCE, FIRST_LAW, ONSAGER_ADMISSIBILITY]
    report = run_audits(two_compartment, simulate(two_compartment, short_options), short_options,
                        checks=checks, max_workers=2)
    assert [c.check for c in report.checks] == checks
    assert report.passed
    data = report.to_dict()
    assert data['scenario'] == 'two-compartment'
    assert data['verdict'] == PASS
    assert data['checks'][0]['check'] == MOLE_BALANCE


def test_run_audits_rejects_unknown_checks(tank, short_options):
    with pytest.raises(ValueError):
        run_audits(tank, simulate(tank, short_options), checks=['zeroth_law'])


def test_report_verdict_and_failures():
    ok = CheckResult(FIRST_LAW, 0.0, 1.0, 1e-6, PASS)
    bad = CheckResult(SECOND_LAW, 0.5, 2.0, 1e-10, FAIL, "negative entropy production")
    report = AuditReport('x', [ok, bad])
    assert report.verdict == FAIL
    assert report.failed() == [bad]
    assert bad.to_dict()['detail'] == "negative entropy production"


def test_tolerances_from_config():
    tolerances = AuditTolerances.from_config({'audit': {'first_law_tol': 1e-3, 'bogus': 1}}, seed=4)
    assert tolerances.first_law_tol == 1e-3
    assert tolerances.seed == 4
    assert tolerances.mole_tol == AuditTolerances().mole_tol


@pytest.mark.slow
@pytest.mark.parametrize('name', demos.demo_names())
def test_every_demo_passes_the_full_audit(name):
    model, options = demos.build_demo(name)
    report = run_audits(model, simulate(model, options), options)
    assert report.passed, [c for c in report.checks if not c.passed]
