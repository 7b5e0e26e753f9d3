"""
Ready-made networks, one per worked example of open-system thermodynamics.

All demos use dry air (``GasSpec.default_air``) and start near 300 K and 1 bar. The
parameter values are engineering defaults chosen so that every run relaxes over seconds,
not milliseconds; they do not reproduce any published numbers. Port inlets are kept at a
higher pressure than the compartment they feed and heat sources hotter than the
compartment they heat, so every demo satisfies the second law.
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

from thermo_network.network.model import (
    DIFFUSION_G, NON_SIMPLE, ONSAGER_2X2, SIMPLE_DIFFUSION, SIMPLE_MECHANICAL, SIMPLE_SINGLE, CompartmentSpec,
    CouplingSpec, HeatSourceSpec, MechanicsSpec, NetworkModel, PortSpec,
)
from thermo_network.network.time_functions import TimeFunction
from thermo_network.properties.gas_props import GasSpec, molar_entropy
from thermo_network.simulation.integrator import RK45, IntegrationOptions

logger = logging.getLogger(__name__)

AIR = GasSpec.default_air()
const = TimeFunction.constant

DEMO_OPTIONS = IntegrationOptions(method=RK45, t_final=10.0, h0=1e-3, h_min=1e-9, h_max=0.1,
                                  abs_tol=1e-9, rel_tol=1e-9, sample_dt=0.05)

# Onsager matrix shared by the heat/matter demos: [[L_HH, L_HM], [L_MH, L_MM]]
HEAT_MATTER_L = ((1.0e6, 30.0), (30.0, 0.02))
ELEMENT_L = ((5.0e5, 10.0), (10.0, 0.01))


def compartment(name: str, V: float, T: float, p: float, gas: GasSpec = AIR) -> CompartmentSpec:
    """Compartment of volume V filled with gas at (T, p)."""
    N = p * V / (gas.R * T)
    return CompartmentSpec(name, V, N * molar_entropy(gas, T, p), N)


def inlet(name: str, target: str, J: float, T: float, p: float) -> PortSpec:
    return PortSpec(name, target, const(J), const(T), const(p))


def outlet(name: str, target: str, J: float) -> PortSpec:
    return PortSpec(name, target, const(-abs(J)))


def tank() -> NetworkModel:
    """Rigid tank filled through one inlet."""
    return NetworkModel(
        gas=AIR, system_class=SIMPLE_SINGLE, name='tank',
        compartments=(compartment('tank', 0.1, 300.0, 1.0e5),),
        ports=(inlet('inlet', 'tank', 0.01, 350.0, 2.0e5),),
    )


def tank_with_inlet(T_in: float, p_in: float, J: float = 0.01) -> NetworkModel:
    """The tank demo with a different inlet state; p_in below the tank pressure breaks the second law."""
    return replace(tank(), name='tank-inlet', ports=(inlet('inlet', 'tank', J, T_in, p_in),))


def piston(lambda_fr: float = 0.5) -> NetworkModel:
    """Gas under a heavy piston, fed through one inlet; the bulk gas velocity is coupled to the piston by friction."""
    A_section = 0.01
    gas_compartment = compartment('cylinder', 0.01, 300.0, 1.0e5)
    return NetworkModel(
        gas=AIR, system_class=SIMPLE_MECHANICAL, name='piston',
        compartments=(gas_compartment,),
        ports=(inlet('inlet', 'cylinder', 0.002, 320.0, 2.0e5),),
        mechanics=MechanicsSpec(M=1.0e4, A_section=A_section, lambda_fr=lambda_fr,
                                F_ext_q=const(-1.0e5 * A_section)),
    )


def two_compartment() -> NetworkModel:
    """Two vessels joined by a membrane, sharing one temperature, with an inlet and an outlet."""
    return NetworkModel(
        gas=AIR, system_class=SIMPLE_DIFFUSION, name='two-compartment',
        compartments=(compartment('c1', 0.05, 300.0, 1.2e5), compartment('c2', 0.05, 300.0, 1.0e5)),
        ports=(inlet('feed', 'c1', 0.005, 300.0, 2.0e5), outlet('drain', 'c2', 0.005)),
        couplings=(CouplingSpec(('c1', 'c2'), DIFFUSION_G, G=1.0e-4),),
    )


def serial_membrane() -> NetworkModel:
    """Three vessels in series, c1 - c2 - c3, fed at c1 and drained at c3."""
    return NetworkModel(
        gas=AIR, system_class=SIMPLE_DIFFUSION, name='serial-membrane',
        compartments=(compartment('c1', 0.05, 300.0, 1.2e5), compartment('c2', 0.05, 300.0, 1.1e5),
                      compartment('c3', 0.05, 300.0, 1.0e5)),
        ports=(inlet('feed', 'c1', 0.005, 300.0, 2.0e5), outlet('drain', 'c3', 0.004)),
        couplings=(CouplingSpec(('c1', 'c2'), DIFFUSION_G, G=1.0e-4),
                   CouplingSpec(('c2', 'c3'), DIFFUSION_G, G=1.0e-4)),
    )


def parallel_membrane() -> NetworkModel:
    """End vessels c1 and c2 joined through two membrane elements m1 and m2 in parallel; fed at c1, drained at c2."""
    return NetworkModel(
        gas=AIR, system_class=SIMPLE_DIFFUSION, name='parallel-membrane',
        compartments=(compartment('c1', 0.05, 300.0, 1.2e5), compartment('c2', 0.05, 300.0, 1.0e5),
                      compartment('m1', 0.01, 300.0, 1.1e5), compartment('m2', 0.01, 300.0, 1.1e5)),
        ports=(inlet('feed', 'c1', 0.005, 300.0, 2.0e5), outlet('drain', 'c2', 0.004)),
        couplings=(CouplingSpec(('c1', 'm1'), DIFFUSION_G, G=1.0e-4),
                   CouplingSpec(('c2', 'm1'), DIFFUSION_G, G=1.0e-4),
                   CouplingSpec(('c1', 'm2'), DIFFUSION_G, G=5.0e-5),
                   CouplingSpec(('c2', 'm2'), DIFFUSION_G, G=5.0e-5)),
    )


def heat_matter() -> NetworkModel:
    """Two compartments with their own temperatures, coupled for heat and matter, each with a port and a heater."""
    return NetworkModel(
        gas=AIR, system_class=NON_SIMPLE, name='heat-matter',
        compartments=(compartment('c1', 0.05, 320.0, 1.1e5), compartment('c2', 0.05, 300.0, 1.0e5)),
        ports=(inlet('feed', 'c1', 0.002, 320.0, 2.0e5), outlet('drain', 'c2', 0.002)),
        sources=(HeatSourceSpec('heater1', 'c1', const(0.01), const(400.0)),
                 HeatSourceSpec('heater2', 'c2', const(0.005), const(350.0))),
        couplings=(CouplingSpec(('c1', 'c2'), ONSAGER_2X2, L=HEAT_MATTER_L),),
    )


def isolated_heat_matter() -> NetworkModel:
    """The heat-matter pair without ports or heaters; relaxes to a common temperature and chemical potential."""
    return replace(heat_matter(), name='isolated-heat-matter', ports=(), sources=())


def parallel_heat_membrane() -> NetworkModel:
    """End compartments c1 and c2 exchanging heat and matter through two membrane elements m1 and m2 in parallel."""
    return NetworkModel(
        gas=AIR, system_class=NON_SIMPLE, name='parallel-heat-membrane',
        compartments=(compartment('c1', 0.05, 320.0, 1.1e5), compartment('c2', 0.05, 300.0, 1.0e5),
                      compartment('m1', 0.01, 310.0, 1.05e5), compartment('m2', 0.01, 305.0, 1.05e5)),
        ports=(inlet('feed', 'c1', 0.002, 320.0, 2.0e5), outlet('drain', 'c2', 0.002)),
        couplings=(CouplingSpec(('c1', 'm1'), ONSAGER_2X2, L=HEAT_MATTER_L),
                   CouplingSpec(('c2', 'm1'), ONSAGER_2X2, L=HEAT_MATTER_L),
                   CouplingSpec(('c1', 'm2'), ONSAGER_2X2, L=ELEMENT_L),
                   CouplingSpec(('c2', 'm2'), ONSAGER_2X2, L=ELEMENT_L)),
    )


@dataclass(frozen=True)
class Demo:
    name: str
    build: Callable[[], NetworkModel]
    options: IntegrationOptions = DEMO_OPTIONS
    parameters: Dict[str, str] = field(default_factory=dict)

    @property
    def summary(self) -> str:
        return (self.build.__doc__ or '').strip().splitlines()[0]


DEMOS: 'OrderedDict[str, Demo]' = OrderedDict((demo.name, demo) for demo in [
    Demo('tank', tank, parameters={
        'V': '0.1 m3', 'T0, p0': '300 K, 1 bar', 'inlet': 'J = 0.01 mol/s at 350 K, 2 bar'}),
    Demo('piston', piston, parameters={
        'V': '0.01 m3 (A = 0.01 m2, q0 = 1 m)', 'M': '1e4 kg', 'lambda_fr': '0.5 kg/s',
        'F_ext_q': '-1000 N', 'inlet': 'J = 0.002 mol/s at 320 K, 2 bar'}),
    Demo('two-compartment', two_compartment, parameters={
        'c1, c2': '0.05 m3 at 300 K, 1.2 / 1.0 bar', 'G': '1e-4 mol2/(J s)',
        'ports': 'feed 0.005 mol/s at 2 bar into c1, drain 0.005 mol/s from c2'}),
    Demo('serial-membrane', serial_membrane, parameters={
        'c1, c2, c3': '0.05 m3 at 300 K, 1.2 / 1.1 / 1.0 bar', 'G': '1e-4 for both membranes',
        'ports': 'feed 0.005 mol/s into c1, drain 0.004 mol/s from c3'}),
    Demo('parallel-membrane', parallel_membrane, parameters={
        'c1, c2': '0.05 m3 at 300 K, 1.2 / 1.0 bar', 'm1, m2': '0.01 m3 at 300 K, 1.1 bar',
        'G': '1e-4 through m1, 5e-5 through m2', 'ports': 'feed 0.005 mol/s into c1, drain 0.004 mol/s from c2'}),
    Demo('heat-matter', heat_matter, parameters={
        'c1, c2': '0.05 m3 at 320 / 300 K, 1.1 / 1.0 bar', 'L': '[[1e6, 30], [30, 0.02]]',
        'heaters': 'J_S = 0.01 W/K at 400 K on c1, 0.005 W/K at 350 K on c2',
        'ports': 'feed 0.002 mol/s into c1, drain from c2'}),
    Demo('parallel-heat-membrane', parallel_heat_membrane, parameters={
        'c1, c2': '0.05 m3 at 320 / 300 K, 1.1 / 1.0 bar', 'm1, m2': '0.01 m3 at 310 / 305 K, 1.05 bar',
        'L': '[[1e6, 30], [30, 0.02]] through m1, [[5e5, 10], [10, 0.01]] through m2',
        'ports': 'feed 0.002 mol/s into c1, drain 0.002 mol/s from c2'}),
    Demo('isolated-heat-matter', isolated_heat_matter,
         options=replace(DEMO_OPTIONS, t_final=300.0, sample_dt=0.5),
         parameters={'c1, c2': '0.05 m3 at 320 / 300 K, 1.1 / 1.0 bar', 'L': '[[1e6, 30], [30, 0.02]]',
                     't_final': '300 s'}),
])


def demo_names() -> List[str]:
    return list(DEMOS)


def build_demo(name: str) -> Tuple[NetworkModel, IntegrationOptions]:
    try:
        demo = DEMOS[name]
    except KeyError:
        raise KeyError(f"unknown demo {name!r}; available: {', '.join(DEMOS)}") from None
    logger.info(f"Building demo {name}")
    return demo.build(), demo.options


def describe_demos(names: Optional[List[str]] = None) -> str:
    """Catalogue text for ``demo --list``."""
    lines = []
    for name in names or DEMOS:
        demo = DEMOS[name]
        lines.append(f"{demo.name:<24}{demo.summary}")
        for key, value in demo.parameters.items():
            lines.append(f"{'':<26}{key}: {value}")
    return "\n".join(lines)
