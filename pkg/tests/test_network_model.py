from dataclasses import replace

import numpy as np
import pytest

from thermo_network.network.model import (
    DIFFUSION_G, NON_SIMPLE, ONSAGER_2X2, SIMPLE_DIFFUSION, SIMPLE_SINGLE, CompartmentSpec, CouplingSpec,
    HeatSourceSpec, MechanicsSpec, NetworkModel, PortSpec, SystemState, initial_state, onsager_violations,
    state_layout, validate,
)
from thermo_network.network.time_functions import TimeFunction
from thermo_network.scenario import demos
from thermo_network.utils.errors import StructuralError, ValidationError

const = TimeFunction.constant


def rules(model):
    return {v.rule for v in validate(model)}


@pytest.mark.parametrize('name', demos.demo_names())
def test_demos_are_valid(name):
    model, _ = demos.build_demo(name)
    assert validate(model) == []


@pytest.mark.parametrize('build', [demos.parallel_membrane, demos.parallel_heat_membrane])
def test_parallel_demos_join_the_ends_through_every_element(build):
    model = build()
    ends = {'c1', 'c2'}
    elements = [c.id for c in model.compartments if c.id not in ends]
    assert len(elements) >= 2
    assert {frozenset(c.pair) for c in model.couplings} == {frozenset((end, m)) for end in ends for m in elements}
    assert {port.compartment for port in model.ports} == ends


def test_parallel_heat_membrane_has_no_heaters():
    model = demos.parallel_heat_membrane()
    assert model.system_class == NON_SIMPLE
    assert model.sources == ()
    assert {c.kind for c in model.couplings} == {ONSAGER_2X2}
    assert [port.compartment for port in model.ports] == ['c1', 'c2']


def test_heat_matter_heats_both_compartments():
    model = demos.heat_matter()
    assert sorted(source.compartment for source in model.sources) == ['c1', 'c2']
    assert demos.isolated_heat_matter().sources == ()


def test_single_class_needs_one_compartment(tank):
    model = replace(tank, compartments=tank.compartments + (demos.compartment('extra', 0.1, 300.0, 1e5),))
    assert 'compartment_count' in rules(model)


def test_duplicate_ids(two_compartment):
    c1 = two_compartment.compartments[0]
    assert 'unique_id' in rules(replace(two_compartment, compartments=(c1, c1)))


def test_non_positive_volume_and_moles(tank):
    model = replace(tank, compartments=(CompartmentSpec('tank', 0.0, 1.0, -1.0),))
    assert {'positive_V', 'positive_N0'} <= rules(model)


def test_port_reference_and_inlet_state(tank):
    model = replace(tank, ports=(PortSpec('inlet', 'nowhere', const(0.01)),))
    assert {'reference', 'positive_T_in', 'positive_p_in'} <= rules(model)


def test_outflow_port_needs_no_inlet_state(tank):
    model = replace(tank, ports=(demos.outlet('drain', 'tank', 0.01),))
    assert validate(model) == []


def test_sources_only_in_non_simple(tank):
    model = replace(tank, sources=(HeatSourceSpec('heater', 'tank', const(0.01), const(400.0)),))
    assert 'system_class' in rules(model)


def test_couplings_not_allowed_in_simple_single(tank):
    model = replace(tank, couplings=(CouplingSpec(('tank', 'tank'), DIFFUSION_G, G=1.0),))
    assert {'system_class', 'pair'} <= rules(model)


def test_onsager_only_in_non_simple(two_compartment):
    coupling = CouplingSpec(('c1', 'c2'), ONSAGER_2X2, L=demos.HEAT_MATTER_L)
    assert 'system_class' in rules(replace(two_compartment, couplings=(coupling,)))


def test_negative_conductance(two_compartment):
    model = replace(two_compartment, couplings=(CouplingSpec(('c1', 'c2'), DIFFUSION_G, G=-1.0),))
    assert 'conductance' in rules(model)


def test_duplicate_pair(two_compartment):
    couplings = (CouplingSpec(('c1', 'c2'), G=1e-4), CouplingSpec(('c2', 'c1'), G=1e-4, id='back'))
    assert 'unique_pair' in rules(replace(two_compartment, couplings=couplings))


def test_onsager_symmetry_violation():
    coupling = CouplingSpec(('a', 'b'), ONSAGER_2X2, L=((1.0, 0.2), (0.3, 1.0)))
    assert [v.rule for v in onsager_violations(coupling)] == ['onsager_symmetry']


def test_onsager_indefinite_matrix():
    coupling = CouplingSpec(('a', 'b'), ONSAGER_2X2, L=((1.0, 2.0), (2.0, 1.0)))
    violations = onsager_violations(coupling)
    assert [v.rule for v in violations] == ['onsager_psd']
    assert 'smallest eigenvalue' in violations[0].message


def test_onsager_semidefinite_boundary_accepted():
    coupling = CouplingSpec(('a', 'b'), ONSAGER_2X2, L=((1.0, 1.0), (1.0, 1.0)))
    assert onsager_violations(coupling) == []


def test_mechanical_class_needs_mechanics(piston):
    assert 'mechanics' in rules(replace(piston, mechanics=None))


def test_piston_slaving(piston):
    mech = replace(piston.mechanics, q0=2.0)
    assert 'piston_slaving' in rules(replace(piston, mechanics=mech))


def test_velocity_for_unknown_port(piston):
    mech = replace(piston.mechanics, port_velocities={'ghost': const(1.0)})
    assert 'reference' in rules(replace(piston, mechanics=mech))


def test_unknown_system_class(tank):
    assert 'system_class' in rules(replace(tank, system_class='plasma'))


def test_violation_text_names_entity_and_rule(tank):
    (violation,) = validate(replace(tank, compartments=(CompartmentSpec('tank', -1.0, 1.0, 1.0),)))
    assert str(violation).startswith('compartment tank:')
    assert str(violation).endswith('[positive_V]')


def test_initial_state_rejects_invalid_model(tank):
    with pytest.raises(ValidationError) as excinfo:
        initial_state(replace(tank, compartments=(CompartmentSpec('tank', 0.1, 1.0, 0.0),)))
    assert len(excinfo.value.violations) == 1


@pytest.mark.parametrize('build, labels', [
    (demos.tank, ('S', 'N', 'Sigma', 'Gamma', 'W')),
    (demos.piston, ('S', 'N', 'q', 'qdot', 'x', 'xdot', 'Sigma', 'Gamma', 'W')),
    (demos.two_compartment, ('S', 'N^1', 'N^2', 'Sigma', 'Gamma', 'W_1', 'W_2')),
    (demos.heat_matter, ('S_1', 'S_2', 'N^1', 'N^2', 'Sigma_1', 'Sigma_2', 'Gamma^1', 'Gamma^2', 'W_1', 'W_2')),
])
def test_state_layouts(build, labels):
    layout = state_layout(build())
    assert layout.labels == labels
    assert len(layout) == len(labels)


def test_layout_is_deterministic(heat_matter):
    assert state_layout(heat_matter) == state_layout(demos.heat_matter())


def test_layout_index_of_unknown_label(tank):
    with pytest.raises(KeyError):
        state_layout(tank).index('q')


def test_initial_state_values(tank, piston, two_compartment):
    state = initial_state(tank)
    c = tank.compartments[0]
    assert state['S'] == c.S0
    assert state['N'] == c.N0
    assert state['Sigma'] == state['Gamma'] == state['W'] == 0.0

    assert initial_state(piston)['q'] == pytest.approx(piston.compartments[0].V / piston.mechanics.A_section)

    shared = initial_state(two_compartment)
    assert shared['S'] == pytest.approx(sum(c.S0 for c in two_compartment.compartments))


def test_pack_unpack(heat_matter):
    state = initial_state(heat_matter)
    view = state.unpack()
    assert list(view) == list(state.layout.labels)
    packed = SystemState.pack(state.layout, view, t=state.t)
    np.testing.assert_array_equal(packed.y, state.y)


def test_pack_rejects_mismatched_view(tank):
    layout = state_layout(tank)
    view = initial_state(tank).unpack()
    del view['W']
    with pytest.raises(StructuralError):
        SystemState.pack(layout, view)
    view['W'] = 0.0
    view['q'] = 1.0
    with pytest.raises(StructuralError):
        SystemState.pack(layout, view)


def test_state_vector_length_checked(tank):
    with pytest.raises(StructuralError):
        SystemState(0.0, np.zeros(3), state_layout(tank))


def test_coupling_default_id():
    assert CouplingSpec(('c1', 'c2')).id == 'c1-c2'


def test_model_classes(tank, heat_matter):
    assert not tank.is_multi
    assert heat_matter.is_multi
    assert heat_matter.compartment_index('c2') == 1
    with pytest.raises(KeyError):
        heat_matter.compartment_index('c9')
    assert tank.system_class == SIMPLE_SINGLE
    assert demos.two_compartment().system_class == SIMPLE_DIFFUSION
    assert heat_matter.system_class == NON_SIMPLE


def test_mechanics_port_velocity_default(piston):
    assert piston.mechanics.port_velocity('inlet')(3.0) == 0.0
    mech = MechanicsSpec(M=1.0, A_section=1.0, port_velocities={'inlet': const(2.0)})
    assert mech.port_velocity('inlet')(0.0) == 2.0
