"""
Right-hand sides of the four system classes, flux closures, entropy production and the
external power channels.

Sign conventions:
  * port flow J > 0 enters the compartment; inflow carries the prescribed inlet state,
    outflow carries the compartment's own state.
  * for a coupling (k, l), ``Jm`` is the molar flux from k to l and ``Q`` the power
    J^{kl}(T^l - T^k) leaving k towards l.
  * [Q; Jm] = L [1/T^l - 1/T^k; mu_k/T^k - mu_l/T^l], so I = X^T L X >= 0 for PSD L.
  * a diffusion_G coupling is L = diag(0, G (T^k + T^l)/2).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from thermo_network.network.model import (
    DIFFUSION_G, NON_SIMPLE, SIMPLE_DIFFUSION, SIMPLE_MECHANICAL, SIMPLE_SINGLE,
    CouplingSpec, NetworkModel, PortSpec, SystemState, compartment_volumes, state_layout,
)
from thermo_network.properties.gas_props import (
    MolarState, intensive_from_extensive, molar_state_from_Tp, shared_temperature,
)
from thermo_network.utils.errors import DomainError, GeometryError, IntegrityError, ScopeError

logger = logging.getLogger(__name__)

MUTATIONS = (
    'port_flow',
    'port_mixing',
    'port_advected_entropy',
    'source_entropy',
    'diffusion',
    'heat_exchange',
    'friction',
)


@dataclass(frozen=True)
class PortResolution:
    """Flow and intensive state at a port.

    ``mu_a`` is the thermal chemical potential, so h_a = mu_a + T_a s_a holds in every
    class; the mechanical class subtracts the kinetic term where it uses mu^a.
    """
    port: str
    compartment: int
    J: float
    J_S: float
    T_a: float
    p_a: float
    mu_a: float
    s_a: float
    h_a: float
    u_a: float
    v_molar_a: float
    v_a: float = 0.0
    inflow: bool = False


@dataclass(frozen=True)
class SourceResolution:
    source: str
    compartment: int
    J_S: float
    T_H: float


@dataclass(frozen=True)
class FluxSet:
    pairs: Tuple[Tuple[int, int], ...] = ()
    Q: Tuple[float, ...] = ()
    Jm: Tuple[float, ...] = ()
    F_fr_q: float = 0.0
    F_fr_x: float = 0.0

    def exchange_inflow(self, n_compartments: int) -> np.ndarray:
        """Net molar inflow into each compartment from the couplings, sum_l J^{l->k}."""
        inflow = np.zeros(n_compartments)
        for (k, l), jm in zip(self.pairs, self.Jm):
            inflow[k] -= jm
            inflow[l] += jm
        return inflow


@dataclass(frozen=True)
class Diagnostics:
    E: float
    S_total: float
    I: float
    P_W: float
    P_H: float
    P_M: float
    E_dot: float
    first_law_residual: float
    S_dot: float = 0.0
    entropy_inflow: float = 0.0
    N_total: float = 0.0
    port_mole_inflow: float = 0.0
    temperatures: Tuple[float, ...] = ()
    pressures: Tuple[float, ...] = ()
    potentials: Tuple[float, ...] = ()

    @property
    def P_total(self) -> float:
        return self.P_W + self.P_H + self.P_M


@dataclass
class Evaluation:
    t: float
    derivative: np.ndarray
    states: List[MolarState]
    ports: List[PortResolution]
    sources: List[SourceResolution]
    fluxes: FluxSet
    diagnostics: Diagnostics
    terms: Dict[str, float] = field(default_factory=dict)


def onsager_fluxes(coupling: CouplingSpec, T_k: float, T_l: float, mu_k: float, mu_l: float) -> Tuple[float, float]:
    """(Q_kl, Jm_kl) for one coupling."""
    if not (T_k > 0 and T_l > 0):
        raise DomainError('T', min(T_k, T_l))
    X_H = 1.0 / T_l - 1.0 / T_k
    X_M = mu_k / T_k - mu_l / T_l
    if coupling.kind == DIFFUSION_G:
        # reduces to G (mu_k - mu_l) when T_k == T_l
        return 0.0, coupling.G * 0.5 * (T_k + T_l) * X_M
    (L_HH, L_HM), (L_MH, L_MM) = coupling.L
    return L_HH * X_H + L_HM * X_M, L_MH * X_H + L_MM * X_M


# Simple-system entropy production of one compartment from its resolved ports. The four
# forms agree for an ideal gas; outflow ports contribute zero to each.

def entropy_production_port_form(state: MolarState, ports: Sequence[PortResolution]) -> float:
    return sum(r.J * (r.h_a - state.T * r.s_a - state.mu) for r in ports) / state.T


def entropy_production_flux_form(state: MolarState, ports: Sequence[PortResolution]) -> float:
    return sum(r.J_S * (r.T_a - state.T) + r.J * (r.mu_a - state.mu) for r in ports) / state.T


def entropy_production_remark_forms(state: MolarState, ports: Sequence[PortResolution]) -> Tuple[float, float]:
    """Energy/flow-work form and enthalpy form."""
    energy_form = 0.0
    enthalpy_form = 0.0
    for r in ports:
        energy_form += r.J * (state.T * (state.s - r.s_a) - (state.u - r.u_a)
                              - (state.p * state.v - r.p_a * r.v_molar_a))
        enthalpy_form += r.J * ((r.h_a - state.h) - state.T * (r.s_a - state.s))
    return energy_form / state.T, enthalpy_form / state.T


def entropy_production_ideal_gas(c_p: float, R: float, state: MolarState, ports: Sequence[PortResolution]) -> float:
    """Reference-free ideal-gas form; non-negative for every inflow with p_a >= p."""
    total = 0.0
    for r in ports:
        total += r.J * (c_p * (r.T_a - state.T) / state.T
                        - R * math.log(state.p / r.p_a)
                        + c_p * math.log(state.T / r.T_a))
    return total


class Dynamics:
    """Assembled right-hand side of a validated network model.

    ``mutation`` flips the sign of one named term; it exists so the audits can be shown to
    catch a broken right-hand side and is never set for physical runs.
    """

    def __init__(self, model: NetworkModel, mutation: Optional[str] = None):
        if mutation is not None and mutation not in MUTATIONS:
            raise DomainError('mutation', mutation, f"must be one of {', '.join(MUTATIONS)}")
        self.model = model
        self.gas = model.gas
        self.mutation = mutation
        self.layout = state_layout(model)
        self.K = len(model.compartments)
        self.attached_ports = [(model.compartment_index(p.compartment), p) for p in model.ports]
        self._sources = [(model.compartment_index(s.compartment), s) for s in model.sources]
        self._couplings = [(model.compartment_index(c.pair[0]), model.compartment_index(c.pair[1]), c)
                           for c in model.couplings]
        self._assemble = {
            SIMPLE_SINGLE: self._simple_single,
            SIMPLE_MECHANICAL: self._mechanical,
            SIMPLE_DIFFUSION: self._simple_diffusion,
            NON_SIMPLE: self._non_simple,
        }[model.system_class]

    def _sign(self, term: str) -> float:
        return -1.0 if self.mutation == term else 1.0

    # -- state access -------------------------------------------------------------------

    def guard(self, y: np.ndarray) -> Optional[str]:
        """Reason the state is outside the physical domain, or None."""
        if not np.all(np.isfinite(y)):
            return "non-finite state"
        for i, slot in enumerate(self.layout.N):
            if not y[slot] > 0:
                return f"N^{i + 1} = {y[slot]:.6g} is not positive"
        if self.layout.mechanics is not None and not y[self.layout.mechanics[0]] > 0:
            return f"q = {y[self.layout.mechanics[0]]:.6g} is not positive"
        return None

    def _snapshot(self, y: np.ndarray) -> Dict[str, float]:
        return {label: float(value) for label, value in zip(self.layout.labels, y)}

    def _check(self, t: float, y: np.ndarray) -> None:
        reason = self.guard(y)
        if reason is None:
            return
        if reason.startswith('q '):
            raise GeometryError(reason, t=t, snapshot=self._snapshot(y))
        raise IntegrityError(reason, t=t, snapshot=self._snapshot(y))

    def compartment_states(self, y: np.ndarray) -> List[MolarState]:
        volumes = compartment_volumes(self.model, y, self.layout)
        moles = [float(y[slot]) for slot in self.layout.N]
        if self.model.system_class == SIMPLE_DIFFUSION:
            T = shared_temperature(self.gas, float(y[self.layout.S[0]]), moles, volumes)
            return [molar_state_from_Tp(self.gas, T, N * self.gas.R * T / V) for N, V in zip(moles, volumes)]
        return [intensive_from_extensive(self.gas, float(y[s]), N, V)
                for s, N, V in zip(self.layout.S, moles, volumes)]

    def resolve(self, t: float, k: int, port: PortSpec, own: MolarState, xdot: float = 0.0) -> PortResolution:
        J = port.J(t)
        inflow = J > 0
        if inflow:
            try:
                state = molar_state_from_Tp(self.gas, port.T_in(t), port.p_in(t))
            except DomainError as exc:
                raise DomainError(f"port {port.id} {exc.field}", exc.value, exc.rule) from exc
        else:
            state = own
        v_a = xdot
        if self.model.mechanics is not None and inflow:
            v_a = self.model.mechanics.port_velocity(port.id)(t)
        return PortResolution(port=port.id, compartment=k, J=J, J_S=state.s * J,
                              T_a=state.T, p_a=state.p, mu_a=state.mu, s_a=state.s, h_a=state.h,
                              u_a=state.u, v_molar_a=state.v, v_a=v_a, inflow=inflow)

    def _resolve_sources(self, t: float) -> List[SourceResolution]:
        resolved = []
        for k, source in self._sources:
            T_H = source.T_H(t)
            if not T_H > 0:
                raise DomainError(f"source {source.id} T_H", T_H)
            resolved.append(SourceResolution(source.id, k, source.J_S(t), T_H))
        return resolved

    # -- evaluation ---------------------------------------------------------------------

    def evaluate(self, t: float, y: np.ndarray) -> Evaluation:
        y = np.asarray(y, dtype=float)
        self._check(t, y)
        evaluation = self._assemble(t, y)
        if not np.all(np.isfinite(evaluation.derivative)):
            raise IntegrityError("non-finite right-hand side", t=t, snapshot=self._snapshot(y))
        return evaluation

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.evaluate(t, y).derivative

    __call__ = rhs

    def diagnostics(self, t: float, y: np.ndarray) -> Diagnostics:
        return self.evaluate(t, y).diagnostics

    def energy(self, y: np.ndarray) -> float:
        states = self.compartment_states(np.asarray(y, dtype=float))
        moles = [float(y[slot]) for slot in self.layout.N]
        U = sum(N * st.u for N, st in zip(moles, states))
        if self.layout.mechanics is None:
            return U
        mech = self.model.mechanics
        _, qdot, _, xdot = (float(y[i]) for i in self.layout.mechanics)
        return 0.5 * mech.M * qdot ** 2 + 0.5 * self.gas.M0 * moles[0] * xdot ** 2 + U

    def _port_sums(self, T: float, mu: float, ports: Sequence[PortResolution]) -> Tuple[float, float, float]:
        """(mixing, advected entropy, molar inflow) with mutations applied."""
        mixing = self._sign('port_mixing') * sum(r.J * (r.h_a - T * r.s_a - mu) for r in ports)
        advected = self._sign('port_advected_entropy') * sum(r.s_a * r.J for r in ports)
        inflow = self._sign('port_flow') * sum(r.J for r in ports)
        return mixing, advected, inflow

    def _finish(self, t, y, dy, states, ports, sources, fluxes, E, E_dot, I, S_dot,
                P_W=0.0, P_M=None, potentials=None, terms=None) -> Evaluation:
        P_H = sum(r.J_S * r.T_H for r in sources)
        if P_M is None:
            P_M = sum(r.J * r.mu_a + r.J_S * r.T_a for r in ports)
        diagnostics = Diagnostics(
            E=E,
            S_total=float(sum(y[s] for s in self.layout.S)),
            I=I,
            P_W=P_W,
            P_H=P_H,
            P_M=P_M,
            E_dot=E_dot,
            first_law_residual=E_dot - (P_W + P_H + P_M),
            S_dot=S_dot,
            entropy_inflow=sum(r.J_S for r in ports) + sum(r.J_S for r in sources),
            N_total=float(sum(y[s] for s in self.layout.N)),
            port_mole_inflow=sum(r.J for r in ports),
            temperatures=tuple(st.T for st in states),
            pressures=tuple(st.p for st in states),
            potentials=tuple(potentials if potentials is not None else (st.mu for st in states)),
        )
        return Evaluation(t, dy, states, list(ports), list(sources), fluxes, diagnostics, dict(terms or {}))

    def _simple_single(self, t: float, y: np.ndarray) -> Evaluation:
        lay = self.layout
        (state,) = self.compartment_states(y)
        ports = [self.resolve(t, k, p, state) for k, p in self.attached_ports]
        T, mu = state.T, state.mu
        mixing, advected, N_dot = self._port_sums(T, mu, ports)

        S_dot = mixing / T + advected
        I = mixing / T
        dy = np.zeros(len(lay))
        dy[lay.S[0]] = S_dot
        dy[lay.N[0]] = N_dot
        dy[lay.Sigma[0]] = I
        dy[lay.Gamma[0]] = T
        dy[lay.W[0]] = mu

        N = float(y[lay.N[0]])
        E = N * state.u
        E_dot = T * S_dot + mu * N_dot
        return self._finish(t, y, dy, [state], ports, [], FluxSet(), E, E_dot, I, S_dot,
                            terms={'port_mixing': I})

    def _mechanical(self, t: float, y: np.ndarray) -> Evaluation:
        lay = self.layout
        mech = self.model.mechanics
        M0 = self.gas.M0
        (state,) = self.compartment_states(y)
        q, qdot, x, xdot = (float(y[i]) for i in lay.mechanics)
        N = float(y[lay.N[0]])
        ports = [self.resolve(t, k, p, state, xdot) for k, p in self.attached_ports]
        T, p, mu_U = state.T, state.p, state.mu

        slip = qdot - xdot
        F_fr_q = -self._sign('friction') * mech.lambda_fr * slip
        F_fr_x = -F_fr_q
        F_ext_q = mech.F_ext_q(t)
        F_ext_x = mech.F_ext_x(t)

        mixing, advected, N_dot = self._port_sums(T, mu_U, ports)
        friction_heat = -F_fr_q * slip
        velocity_mixing = sum(r.J * 0.5 * M0 * (r.v_a - xdot) ** 2 for r in ports)
        momentum_inflow = sum(M0 * r.J * r.v_a for r in ports)

        T_S_dot = friction_heat + velocity_mixing + mixing + T * advected
        S_dot = T_S_dot / T
        qddot = (p * mech.A_section + F_fr_q + F_ext_q) / mech.M
        xddot = (F_fr_x + momentum_inflow + F_ext_x - M0 * N_dot * xdot) / (M0 * N)
        I = (friction_heat + velocity_mixing + mixing) / T
        mu = mu_U - 0.5 * M0 * xdot ** 2

        dy = np.zeros(len(lay))
        dy[lay.S[0]] = S_dot
        dy[lay.N[0]] = N_dot
        dy[list(lay.mechanics)] = [qdot, qddot, xdot, xddot]
        dy[lay.Sigma[0]] = I
        dy[lay.Gamma[0]] = T
        dy[lay.W[0]] = mu

        E = 0.5 * mech.M * qdot ** 2 + 0.5 * M0 * N * xdot ** 2 + N * state.u
        E_dot = (mech.M * qdot * qddot + 0.5 * M0 * N_dot * xdot ** 2 + M0 * N * xdot * xddot
                 + T * S_dot - p * mech.A_section * qdot + mu_U * N_dot)
        P_W = F_ext_q * qdot + F_ext_x * xdot
        P_M = sum(r.J * (0.5 * M0 * r.v_a ** 2 + r.h_a) for r in ports)
        terms = {
            'friction': friction_heat / T,
            'velocity_mixing': velocity_mixing / T,
            'thermal_mixing': mixing / T,
        }
        return self._finish(t, y, dy, [state], ports, [], FluxSet(F_fr_q=F_fr_q, F_fr_x=F_fr_x),
                            E, E_dot, I, S_dot, P_W=P_W, P_M=P_M, potentials=[mu], terms=terms)

    def _exchange(self, states: Sequence[MolarState]) -> FluxSet:
        pairs, Qs, Jms = [], [], []
        for k, l, coupling in self._couplings:
            Q, Jm = onsager_fluxes(coupling, states[k].T, states[l].T, states[k].mu, states[l].mu)
            pairs.append((k, l))
            Qs.append(self._sign('heat_exchange') * Q)
            Jms.append(self._sign('diffusion') * Jm)
        return FluxSet(tuple(pairs), tuple(Qs), tuple(Jms))

    def _simple_diffusion(self, t: float, y: np.ndarray) -> Evaluation:
        lay = self.layout
        states = self.compartment_states(y)
        T = states[0].T
        ports = [self.resolve(t, k, p, states[k]) for k, p in self.attached_ports]
        fluxes = self._exchange(states)

        diffusion = sum(jm * (states[k].mu - states[l].mu) for (k, l), jm in zip(fluxes.pairs, fluxes.Jm))
        N_dot = fluxes.exchange_inflow(self.K)
        mixing = 0.0
        advected = 0.0
        for k in range(self.K):
            at_k = [r for r in ports if r.compartment == k]
            m, a, n = self._port_sums(T, states[k].mu, at_k)
            mixing += m
            advected += a
            N_dot[k] += n

        S_dot = (diffusion + mixing) / T + advected
        I = (diffusion + mixing) / T
        dy = np.zeros(len(lay))
        dy[lay.S[0]] = S_dot
        dy[list(lay.N)] = N_dot
        dy[lay.Sigma[0]] = I
        dy[lay.Gamma[0]] = T
        dy[list(lay.W)] = [st.mu for st in states]

        moles = [float(y[s]) for s in lay.N]
        E = sum(N * st.u for N, st in zip(moles, states))
        E_dot = T * S_dot + sum(st.mu * n for st, n in zip(states, N_dot))
        terms = {'diffusion': diffusion / T, 'port_mixing': mixing / T}
        return self._finish(t, y, dy, states, ports, [], fluxes, E, E_dot, I, S_dot, terms=terms)

    def _non_simple(self, t: float, y: np.ndarray) -> Evaluation:
        lay = self.layout
        states = self.compartment_states(y)
        ports = [self.resolve(t, k, p, states[k]) for k, p in self.attached_ports]
        sources = self._resolve_sources(t)
        fluxes = self._exchange(states)

        heat_in = np.zeros(self.K)
        for (k, l), Q in zip(fluxes.pairs, fluxes.Q):
            heat_in[k] -= Q
            heat_in[l] += Q
        exchange_in = fluxes.exchange_inflow(self.K)

        T_S_dot = np.zeros(self.K)
        Sigma_dot = np.zeros(self.K)
        N_dot = exchange_in.copy()
        for k, st in enumerate(states):
            m, a, n = self._port_sums(st.T, st.mu, [r for r in ports if r.compartment == k])
            at_k = [r for r in sources if r.compartment == k]
            source_mixing = sum(r.J_S * (r.T_H - st.T) for r in at_k)
            source_advected = self._sign('source_entropy') * st.T * sum(r.J_S for r in at_k)
            matter = -exchange_in[k] * st.mu
            T_S_dot[k] = heat_in[k] + matter + m + st.T * a + source_mixing + source_advected
            Sigma_dot[k] = (heat_in[k] + matter + m + source_mixing) / st.T
            N_dot[k] += n

        temperatures = np.array([st.T for st in states])
        S_dot = T_S_dot / temperatures
        dy = np.zeros(len(lay))
        dy[list(lay.S)] = S_dot
        dy[list(lay.N)] = N_dot
        dy[list(lay.Sigma)] = Sigma_dot
        dy[list(lay.Gamma)] = temperatures
        dy[list(lay.W)] = [st.mu for st in states]

        moles = [float(y[s]) for s in lay.N]
        E = sum(N * st.u for N, st in zip(moles, states))
        E_dot = float(np.sum(T_S_dot) + sum(st.mu * n for st, n in zip(states, N_dot)))
        X = [(1.0 / states[l].T - 1.0 / states[k].T, states[k].mu / states[k].T - states[l].mu / states[l].T)
             for k, l in fluxes.pairs]
        terms = {'exchange': sum(Q * xh + jm * xm for (xh, xm), Q, jm in zip(X, fluxes.Q, fluxes.Jm))}
        return self._finish(t, y, dy, states, ports, sources, fluxes, E, E_dot, float(np.sum(Sigma_dot)),
                            float(np.sum(S_dot)), terms=terms)


def _dynamics(model: NetworkModel, expected: Optional[str] = None) -> Dynamics:
    if expected is not None and model.system_class != expected:
        raise ScopeError(f"operation needs a {expected} model, got {model.system_class}")
    return Dynamics(model)


def resolve_port(model: NetworkModel, state: SystemState, t: float, port: Union[str, PortSpec]) -> PortResolution:
    dynamics = Dynamics(model)
    port_id = port if isinstance(port, str) else port.id
    for k, spec in dynamics.attached_ports:
        if spec.id == port_id:
            states = dynamics.compartment_states(state.y)
            xdot = float(state.y[dynamics.layout.mechanics[3]]) if dynamics.layout.mechanics else 0.0
            return dynamics.resolve(t, k, spec, states[k], xdot)
    raise KeyError(port_id)


def rhs_simple_single(model: NetworkModel, state: SystemState, t: float) -> np.ndarray:
    return _dynamics(model, SIMPLE_SINGLE).rhs(t, state.y)


def rhs_mechanical(model: NetworkModel, state: SystemState, t: float) -> np.ndarray:
    return _dynamics(model, SIMPLE_MECHANICAL).rhs(t, state.y)


def rhs_simple_diffusion(model: NetworkModel, state: SystemState, t: float) -> np.ndarray:
    return _dynamics(model, SIMPLE_DIFFUSION).rhs(t, state.y)


def rhs_non_simple(model: NetworkModel, state: SystemState, t: float) -> np.ndarray:
    return _dynamics(model, NON_SIMPLE).rhs(t, state.y)


def power_channels(model: NetworkModel, state: SystemState, t: float) -> Diagnostics:
    return Dynamics(model).diagnostics(t, state.y)


def piston_entropy_terms(model: NetworkModel, state: SystemState, t: float) -> Tuple[float, float, float]:
    """(friction, velocity mixing, thermal mixing) contributions to the piston's I."""
    terms = _dynamics(model, SIMPLE_MECHANICAL).evaluate(t, state.y).terms
    return terms['friction'], terms['velocity_mixing'], terms['thermal_mixing']


@dataclass(frozen=True)
class CompartmentPowerBalance:
    compartment: str
    U_dot: float
    exchanged: float
    port_power: float
    source_power: float

    @property
    def residual(self) -> float:
        return self.U_dot - (self.exchanged + self.port_power + self.source_power)


def compartment_power_balance(model: NetworkModel, state: SystemState, t: float) -> List[CompartmentPowerBalance]:
    """dU_k/dt split into power exchanged with the other compartments, port power and heat-source power."""
    dynamics = _dynamics(model, NON_SIMPLE)
    ev = dynamics.evaluate(t, state.y)
    lay = dynamics.layout
    exchanged = np.zeros(dynamics.K)
    for (k, l), Q in zip(ev.fluxes.pairs, ev.fluxes.Q):
        exchanged[k] -= Q
        exchanged[l] += Q
    balances = []
    for k, (compartment, st) in enumerate(zip(model.compartments, ev.states)):
        U_dot = st.T * ev.derivative[lay.S[k]] + st.mu * ev.derivative[lay.N[k]]
        port_power = sum(r.J * r.h_a for r in ev.ports if r.compartment == k)
        source_power = sum(r.J_S * r.T_H for r in ev.sources if r.compartment == k)
        balances.append(CompartmentPowerBalance(compartment.id, float(U_dot), float(exchanged[k]),
                                                port_power, source_power))
    return balances
