"""
Declarative network model: compartments, ports, heat sources, couplings and the piston,
plus validation and the flat state layout the integrator works on.
"""
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from thermo_network.network.time_functions import ZERO, TimeFunction
from thermo_network.properties.gas_props import GasSpec
from thermo_network.utils.errors import StructuralError, ValidationError

logger = logging.getLogger(__name__)

SIMPLE_SINGLE = 'simple_single'
SIMPLE_MECHANICAL = 'simple_mechanical'
SIMPLE_DIFFUSION = 'simple_diffusion'
NON_SIMPLE = 'non_simple'
SYSTEM_CLASSES = (SIMPLE_SINGLE, SIMPLE_MECHANICAL, SIMPLE_DIFFUSION, NON_SIMPLE)

DIFFUSION_G = 'diffusion_G'
ONSAGER_2X2 = 'onsager_2x2'
COUPLING_KINDS = (DIFFUSION_G, ONSAGER_2X2)

ONSAGER_TOLERANCE = 1e-12
PISTON_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CompartmentSpec:
    id: str
    V: float
    S0: float
    N0: float


@dataclass(frozen=True)
class PortSpec:
    """Signed molar flow J (positive into the compartment) with the inlet state used on inflow."""
    id: str
    compartment: str
    J: TimeFunction
    T_in: TimeFunction = ZERO
    p_in: TimeFunction = ZERO


@dataclass(frozen=True)
class HeatSourceSpec:
    id: str
    compartment: str
    J_S: TimeFunction
    T_H: TimeFunction


@dataclass(frozen=True)
class CouplingSpec:
    pair: Tuple[str, str]
    kind: str = DIFFUSION_G
    G: float = 0.0
    L: Optional[Tuple[Tuple[float, float], Tuple[float, float]]] = None
    id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'pair', tuple(self.pair))
        if self.L is not None:
            object.__setattr__(self, 'L', tuple(tuple(float(x) for x in row) for row in self.L))
        if self.id is None:
            object.__setattr__(self, 'id', f"{self.pair[0]}-{self.pair[1]}" if len(self.pair) == 2 else "coupling")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.L, dtype=float)


@dataclass(frozen=True)
class MechanicsSpec:
    """Piston of mass M in a cylinder of cross-section A_section; V = A_section * q.

    ``q0`` defaults to the compartment volume over the section area.
    """
    M: float
    A_section: float
    lambda_fr: float = 0.0
    F_ext_q: TimeFunction = ZERO
    F_ext_x: TimeFunction = ZERO
    q0: Optional[float] = None
    qdot0: float = 0.0
    x0: float = 0.0
    xdot0: float = 0.0
    port_velocities: Mapping[str, TimeFunction] = field(default_factory=dict)

    def port_velocity(self, port_id: str) -> TimeFunction:
        return self.port_velocities.get(port_id, ZERO)


@dataclass(frozen=True)
class NetworkModel:
    gas: GasSpec
    system_class: str
    compartments: Tuple[CompartmentSpec, ...]
    ports: Tuple[PortSpec, ...] = ()
    sources: Tuple[HeatSourceSpec, ...] = ()
    couplings: Tuple[CouplingSpec, ...] = ()
    mechanics: Optional[MechanicsSpec] = None
    name: str = 'network'

    def __post_init__(self):
        for name in ('compartments', 'ports', 'sources', 'couplings'):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def compartment_ids(self) -> List[str]:
        return [c.id for c in self.compartments]

    def compartment_index(self, compartment_id: str) -> int:
        for k, compartment in enumerate(self.compartments):
            if compartment.id == compartment_id:
                return k
        raise KeyError(compartment_id)

    @property
    def is_multi(self) -> bool:
        return self.system_class in (SIMPLE_DIFFUSION, NON_SIMPLE)


@dataclass(frozen=True)
class Violation:
    entity: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.entity}: {self.message} [{self.rule}]"


def onsager_violations(coupling: CouplingSpec) -> List[Violation]:
    """Symmetry and positive semi-definiteness of an onsager_2x2 coupling matrix."""
    entity = f"coupling {coupling.id}"
    if coupling.L is None or len(coupling.L) != 2 or any(len(row) != 2 for row in coupling.L):
        return [Violation(entity, 'onsager_shape', "L must be a 2x2 matrix")]
    L = coupling.matrix
    if not np.all(np.isfinite(L)):
        return [Violation(entity, 'onsager_shape', "L entries must be finite")]
    scale = np.linalg.norm(L)
    violations = []
    if abs(L[0, 1] - L[1, 0]) > ONSAGER_TOLERANCE * max(scale, 1.0):
        violations.append(Violation(entity, 'onsager_symmetry',
                                    f"Onsager symmetry requires L_HM = L_MH, got {L[0, 1]} and {L[1, 0]}"))
    eigenvalues = np.linalg.eigvalsh(0.5 * (L + L.T))
    if eigenvalues.min() < -ONSAGER_TOLERANCE * scale:
        violations.append(Violation(entity, 'onsager_psd',
                                    f"L must be positive semi-definite, smallest eigenvalue {eigenvalues.min():.6g}"))
    return violations


def _check_unique(kind: str, ids: Sequence[str], violations: List[Violation]) -> None:
    seen = set()
    for item_id in ids:
        if item_id in seen:
            violations.append(Violation(f"{kind} {item_id}", 'unique_id', f"duplicate {kind} id"))
        seen.add(item_id)


def _check_positive_function(entity: str, name: str, fn: TimeFunction, violations: List[Violation]) -> None:
    if fn.bounds()[0] <= 0:
        violations.append(Violation(entity, 'positive_' + name, f"{name} must stay positive, minimum {fn.bounds()[0]}"))


def validate(model: NetworkModel) -> List[Violation]:
    """Every rule the declaration breaks; an empty list means the model is valid."""
    violations: List[Violation] = []
    cls = model.system_class

    if cls not in SYSTEM_CLASSES:
        violations.append(Violation('model', 'system_class',
                                    f"unknown system class {cls!r}, expected one of {', '.join(SYSTEM_CLASSES)}"))
    n = len(model.compartments)
    if cls in (SIMPLE_SINGLE, SIMPLE_MECHANICAL) and n != 1:
        violations.append(Violation('model', 'compartment_count', f"{cls} needs exactly one compartment, got {n}"))
    elif n < 1:
        violations.append(Violation('model', 'compartment_count', "at least one compartment is required"))

    _check_unique('compartment', model.compartment_ids, violations)
    _check_unique('port', [p.id for p in model.ports], violations)
    _check_unique('source', [s.id for s in model.sources], violations)

    for c in model.compartments:
        entity = f"compartment {c.id}"
        if not (c.V > 0 and math.isfinite(c.V)):
            violations.append(Violation(entity, 'positive_V', f"V must be positive, got {c.V}"))
        if not (c.N0 > 0 and math.isfinite(c.N0)):
            violations.append(Violation(entity, 'positive_N0', f"N0 must be positive, got {c.N0}"))
        if not math.isfinite(c.S0):
            violations.append(Violation(entity, 'finite_S0', f"S0 must be finite, got {c.S0}"))

    known = set(model.compartment_ids)
    for port in model.ports:
        entity = f"port {port.id}"
        if port.compartment not in known:
            violations.append(Violation(entity, 'reference', f"unknown compartment {port.compartment!r}"))
        # inlet state is only consulted when the flow can be positive
        if port.J.bounds()[1] > 0:
            _check_positive_function(entity, 'T_in', port.T_in, violations)
            _check_positive_function(entity, 'p_in', port.p_in, violations)

    for source in model.sources:
        entity = f"source {source.id}"
        if cls != NON_SIMPLE:
            violations.append(Violation(entity, 'system_class',
                                        f"heat sources are only allowed in {NON_SIMPLE}, not {cls}"))
        if source.compartment not in known:
            violations.append(Violation(entity, 'reference', f"unknown compartment {source.compartment!r}"))
        _check_positive_function(entity, 'T_H', source.T_H, violations)

    pairs = set()
    for coupling in model.couplings:
        entity = f"coupling {coupling.id}"
        if len(coupling.pair) != 2:
            violations.append(Violation(entity, 'pair', "a coupling joins exactly two compartments"))
            continue
        k, l = coupling.pair
        for ref in (k, l):
            if ref not in known:
                violations.append(Violation(entity, 'reference', f"unknown compartment {ref!r}"))
        if k == l:
            violations.append(Violation(entity, 'pair', "a coupling must join two distinct compartments"))
        key = frozenset((k, l))
        if key in pairs:
            violations.append(Violation(entity, 'unique_pair', f"more than one coupling between {k} and {l}"))
        pairs.add(key)
        if cls not in (SIMPLE_DIFFUSION, NON_SIMPLE):
            violations.append(Violation(entity, 'system_class', f"couplings are not allowed in {cls}"))

        if coupling.kind == DIFFUSION_G:
            if not (coupling.G >= 0 and math.isfinite(coupling.G)):
                violations.append(Violation(entity, 'conductance', f"G must be non-negative, got {coupling.G}"))
        elif coupling.kind == ONSAGER_2X2:
            if cls != NON_SIMPLE:
                violations.append(Violation(entity, 'system_class',
                                            f"{ONSAGER_2X2} couplings are only allowed in {NON_SIMPLE}, not {cls}"))
            violations.extend(onsager_violations(coupling))
        else:
            violations.append(Violation(entity, 'coupling_kind',
                                        f"unknown kind {coupling.kind!r}, expected one of {', '.join(COUPLING_KINDS)}"))

    mech = model.mechanics
    if cls == SIMPLE_MECHANICAL and mech is None:
        violations.append(Violation('model', 'mechanics', f"{SIMPLE_MECHANICAL} needs a mechanics section"))
    if mech is not None:
        if cls != SIMPLE_MECHANICAL:
            violations.append(Violation('mechanics', 'system_class',
                                        f"mechanics are only allowed in {SIMPLE_MECHANICAL}, not {cls}"))
        if not mech.M > 0:
            violations.append(Violation('mechanics', 'positive_M', f"M must be positive, got {mech.M}"))
        if not mech.A_section > 0:
            violations.append(Violation('mechanics', 'positive_A_section',
                                        f"A_section must be positive, got {mech.A_section}"))
        if not mech.lambda_fr >= 0:
            violations.append(Violation('mechanics', 'friction', f"lambda_fr must be non-negative, got {mech.lambda_fr}"))
        port_ids = {p.id for p in model.ports}
        for port_id in mech.port_velocities:
            if port_id not in port_ids:
                violations.append(Violation('mechanics', 'reference', f"velocity given for unknown port {port_id!r}"))
        if mech.q0 is not None and model.compartments and mech.A_section > 0:
            expected = model.compartments[0].V / mech.A_section
            if abs(mech.q0 - expected) > PISTON_TOLERANCE * max(abs(expected), 1.0):
                violations.append(Violation('mechanics', 'piston_slaving',
                                            f"q0 = {mech.q0} inconsistent with V/A_section = {expected}"))

    return violations


@dataclass(frozen=True)
class StateLayout:
    """Slot labels of the flat state vector and the index groups the dynamics use."""
    labels: Tuple[str, ...]
    S: Tuple[int, ...]
    N: Tuple[int, ...]
    Sigma: Tuple[int, ...]
    Gamma: Tuple[int, ...]
    W: Tuple[int, ...]
    mechanics: Optional[Tuple[int, int, int, int]] = None

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no slot {label!r} in layout {list(self.labels)}")


def state_layout(model: NetworkModel) -> StateLayout:
    """Deterministic slot ordering from the system class and the compartment order."""
    K = len(model.compartments)
    cls = model.system_class
    labels: List[str] = []

    def take(names: Sequence[str]) -> Tuple[int, ...]:
        start = len(labels)
        labels.extend(names)
        return tuple(range(start, len(labels)))

    per = [str(k + 1) for k in range(K)]
    mechanics = None
    if cls == SIMPLE_SINGLE:
        S, N = take(['S']), take(['N'])
        Sigma, Gamma, W = take(['Sigma']), take(['Gamma']), take(['W'])
    elif cls == SIMPLE_MECHANICAL:
        S, N = take(['S']), take(['N'])
        mechanics = take(['q', 'qdot', 'x', 'xdot'])
        Sigma, Gamma, W = take(['Sigma']), take(['Gamma']), take(['W'])
    elif cls == SIMPLE_DIFFUSION:
        S, N = take(['S']), take([f"N^{i}" for i in per])
        Sigma, Gamma, W = take(['Sigma']), take(['Gamma']), take([f"W_{i}" for i in per])
    elif cls == NON_SIMPLE:
        S, N = take([f"S_{i}" for i in per]), take([f"N^{i}" for i in per])
        Sigma = take([f"Sigma_{i}" for i in per])
        Gamma = take([f"Gamma^{i}" for i in per])
        W = take([f"W_{i}" for i in per])
    else:
        raise StructuralError(f"no state layout for system class {cls!r}")
    return StateLayout(tuple(labels), S, N, Sigma, Gamma, W, mechanics)


@dataclass
class SystemState:
    t: float
    y: np.ndarray
    layout: StateLayout

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 1 or len(self.y) != len(self.layout):
            raise StructuralError(f"state vector of length {self.y.size} does not match "
                                  f"layout of length {len(self.layout)}")

    def __getitem__(self, label: str) -> float:
        return float(self.y[self.layout.index(label)])

    def unpack(self) -> 'OrderedDict[str, float]':
        return OrderedDict((label, float(value)) for label, value in zip(self.layout.labels, self.y))

    @classmethod
    def pack(cls, layout: StateLayout, view: Mapping[str, float], t: float = 0.0) -> 'SystemState':
        if set(view) != set(layout.labels) or len(view) != len(layout):
            missing = [label for label in layout.labels if label not in view]
            extra = [label for label in view if label not in layout.labels]
            raise StructuralError(f"labeled view does not match layout (missing {missing}, extra {extra})")
        return cls(t, np.array([view[label] for label in layout.labels], dtype=float), layout)


def initial_state(model: NetworkModel) -> SystemState:
    """State at t = 0; displacements and internal entropy start at zero."""
    violations = validate(model)
    if violations:
        raise ValidationError(violations)

    layout = state_layout(model)
    y = np.zeros(len(layout))
    compartments = model.compartments
    if model.system_class == SIMPLE_DIFFUSION:
        y[layout.S[0]] = sum(c.S0 for c in compartments)
    else:
        for slot, c in zip(layout.S, compartments):
            y[slot] = c.S0
    for slot, c in zip(layout.N, compartments):
        y[slot] = c.N0

    if layout.mechanics is not None:
        mech = model.mechanics
        q0 = mech.q0 if mech.q0 is not None else compartments[0].V / mech.A_section
        y[list(layout.mechanics)] = [q0, mech.qdot0, mech.x0, mech.xdot0]

    logger.info(f"Initial state for {model.name} ({model.system_class}, {len(compartments)} compartment(s), "
                f"{len(layout)} slots)")
    return SystemState(0.0, y, layout)


def compartment_volumes(model: NetworkModel, y: np.ndarray, layout: StateLayout) -> List[float]:
    """Current volumes; the piston compartment follows A_section * q."""
    if layout.mechanics is not None:
        return [model.mechanics.A_section * float(y[layout.mechanics[0]])]
    return [c.V for c in model.compartments]


def ports_by_compartment(model: NetworkModel) -> Dict[int, List[PortSpec]]:
    grouped: Dict[int, List[PortSpec]] = {k: [] for k in range(len(model.compartments))}
    for port in model.ports:
        grouped[model.compartment_index(port.compartment)].append(port)
    return grouped
