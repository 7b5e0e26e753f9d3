"""
Scenario documents: a line-oriented format of ``[kind name]`` sections holding
``key = value`` pairs, parsed into a validated NetworkModel plus IntegrationOptions.

    # comments run to the end of the line
    [gas air]
    c_V = 20.786
    [compartment tank]
    V = 0.1
    T0 = 300          # or S0 = <entropy>
    N0 = 4.0
    [port inlet]
    compartment = tank
    J = const 0.01
    T_in = ramp 300 350 0 5
    p_in = table inlet_pressure.txt
    [run tank]
    system_class = simple_single
    t_final = 10

Table files hold two whitespace or comma separated columns (time, value); relative
paths resolve against the scenario's directory.
"""
import logging
import math
import re
from collections import OrderedDict
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from thermo_network.network.model import (
    DIFFUSION_G, ONSAGER_2X2, CompartmentSpec, CouplingSpec, HeatSourceSpec, MechanicsSpec, NetworkModel,
    PortSpec, validate,
)
from thermo_network.network.time_functions import CONSTANT, RAMP, ZERO, TimeFunction
from thermo_network.properties.gas_props import GasSpec, molar_entropy
from thermo_network.simulation.integrator import IntegrationOptions
from thermo_network.utils.errors import DomainError, ScenarioError, ScenarioSemanticError, ScenarioSyntaxError

logger = logging.getLogger(__name__)

GAS = 'gas'
COMPARTMENT = 'compartment'
PORT = 'port'
SOURCE = 'source'
COUPLING = 'coupling'
MECHANICS = 'mechanics'
RUN = 'run'
SECTION_KINDS = (GAS, COMPARTMENT, PORT, SOURCE, COUPLING, MECHANICS, RUN)
NAMED_KINDS = (COMPARTMENT, PORT, SOURCE, COUPLING)
SINGLETON_KINDS = (GAS, MECHANICS, RUN)

GAS_KEYS = ('R', 'c_V', 'c_p', 'T_ref', 'p_ref', 'u_ref', 's_ref', 'M0')
RUN_NUMBERS = ('t_final', 'h0', 'h_min', 'h_max', 'abs_tol', 'rel_tol', 'sample_dt')
MECHANICS_NUMBERS = ('M', 'A_section', 'lambda_fr', 'q0', 'qdot0', 'x0', 'xdot0')
ONSAGER_KEYS = ('L_HH', 'L_HM', 'L_MH', 'L_MM')

KEYS: Dict[str, Tuple[str, ...]] = {
    GAS: GAS_KEYS,
    COMPARTMENT: ('V', 'S0', 'T0', 'N0'),
    PORT: ('compartment', 'J', 'T_in', 'p_in', 'velocity'),
    SOURCE: ('compartment', 'J_S', 'T_H'),
    COUPLING: ('pair', 'kind', 'G') + ONSAGER_KEYS,
    MECHANICS: MECHANICS_NUMBERS + ('F_ext_q', 'F_ext_x'),
    RUN: ('system_class', 'method') + RUN_NUMBERS,
}

TIME_FUNCTION_FORMS = ('<number>', 'const <x>', 'ramp <x0> <x1> <t0> <t1>', 'table <path>')

_IDENTIFIER = re.compile(r'[A-Za-z_][A-Za-z0-9_]*\Z')
_NAME = re.compile(r'[^\s\[\]=#]+\Z')


@dataclass(frozen=True)
class Entry:
    key: str
    value: str
    line: int
    column: int
    value_column: int


@dataclass
class Section:
    kind: str
    name: Optional[str]
    line: int
    column: int
    entries: 'OrderedDict[str, Entry]' = field(default_factory=OrderedDict)

    @property
    def label(self) -> str:
        return f"[{self.kind} {self.name}]" if self.name else f"[{self.kind}]"


@dataclass
class ScenarioDocument:
    sections: List[Section] = field(default_factory=list)

    def of_kind(self, kind: str) -> List[Section]:
        return [s for s in self.sections if s.kind == kind]


# -- syntax ---------------------------------------------------------------------------------

def _decode(text: Union[str, bytes]) -> str:
    if isinstance(text, str):
        return text
    try:
        return text.decode('utf-8')
    except UnicodeDecodeError as exc:
        prefix = text[:exc.start]
        line = prefix.count(b'\n') + 1
        column = exc.start - (prefix.rfind(b'\n') + 1) + 1
        raise ScenarioSyntaxError("invalid UTF-8 byte", line, column) from None


def _strip_comment(raw: str) -> str:
    index = raw.find('#')
    return raw if index < 0 else raw[:index]


def parse_document(text: Union[str, bytes]) -> ScenarioDocument:
    """Sections and entries with source locations; raises ScenarioSyntaxError on the first problem."""
    text = _decode(text)
    document = ScenarioDocument()
    current: Optional[Section] = None

    for number, raw in enumerate(text.split('\n'), start=1):
        raw = raw.rstrip('\r')
        content = _strip_comment(raw)
        stripped = content.strip()
        if not stripped:
            continue
        column = len(content) - len(content.lstrip()) + 1

        if stripped.startswith('['):
            if not stripped.endswith(']'):
                raise ScenarioSyntaxError("unterminated section header", number, column + len(stripped), ["']'"])
            words = stripped[1:-1].split()
            if not words:
                raise ScenarioSyntaxError("empty section header", number, column + 1, list(SECTION_KINDS))
            if words[0] not in SECTION_KINDS:
                raise ScenarioSyntaxError(f"unknown section kind {words[0]!r}", number, column + 1,
                                          list(SECTION_KINDS))
            if len(words) > 2:
                raise ScenarioSyntaxError("section header takes a kind and one name", number, column,
                                          ["']'"])
            kind = words[0]
            name = words[1] if len(words) == 2 else None
            if name is not None and not _NAME.match(name):
                raise ScenarioSyntaxError(f"invalid section name {name!r}", number, column, ["<name>"])
            if name is None and kind in NAMED_KINDS:
                raise ScenarioSyntaxError(f"{kind} section needs a name", number, column + len(stripped) - 1,
                                          ["<name>"])
            current = Section(kind, name, number, column)
            document.sections.append(current)
            continue

        if '=' not in stripped:
            raise ScenarioSyntaxError("expected a section header or a key = value pair", number, column,
                                      ["[kind name]", "key = value"])
        if current is None:
            raise ScenarioSyntaxError("key = value pair outside a section", number, column, ["[kind name]"])

        key_part, _, value_part = content.partition('=')
        key = key_part.strip()
        value = value_part.strip()
        value_column = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        if not _IDENTIFIER.match(key):
            raise ScenarioSyntaxError(f"invalid key {key!r}", number, column, list(KEYS[current.kind]))
        if key not in KEYS[current.kind]:
            raise ScenarioSyntaxError(f"unknown key {key!r} in {current.label}", number, column,
                                      list(KEYS[current.kind]))
        if key in current.entries:
            raise ScenarioSyntaxError(f"duplicate key {key!r} in {current.label}", number, column)
        if not value:
            raise ScenarioSyntaxError(f"missing value for {key!r}", number, value_column, ["<value>"])
        current.entries[key] = Entry(key, value, number, column, value_column)

    return document


def _number(entry: Entry, token: Optional[str] = None, column: Optional[int] = None) -> float:
    token = entry.value if token is None else token
    try:
        value = float(token)
    except ValueError:
        value = None
    if value is None or not math.isfinite(value):
        raise ScenarioSyntaxError(f"expected a finite number for {entry.key!r}, got {token!r}", entry.line,
                                  column or entry.value_column, ["<number>"])
    return value


def _word(entry: Entry, choices: Optional[Sequence[str]] = None) -> str:
    words = entry.value.split()
    if len(words) != 1:
        raise ScenarioSyntaxError(f"expected a single word for {entry.key!r}", entry.line, entry.value_column,
                                  list(choices or ["<word>"]))
    if choices is not None and words[0] not in choices:
        raise ScenarioSyntaxError(f"invalid {entry.key} {words[0]!r}", entry.line, entry.value_column, list(choices))
    return words[0]


def _tokens(entry: Entry) -> List[Tuple[str, int]]:
    return [(m.group(), entry.value_column + m.start()) for m in re.finditer(r'\S+', entry.value)]


def read_table(path: Path) -> Tuple[List[float], List[float]]:
    """Two-column (time, value) table; '#' starts a comment."""
    times, values = [], []
    with open(path) as f:
        for number, raw in enumerate(f, start=1):
            content = _strip_comment(raw).replace(',', ' ').split()
            if not content:
                continue
            if len(content) != 2:
                raise ScenarioSyntaxError(f"table {path} needs two columns", number, 1, ["<time> <value>"])
            try:
                t, value = float(content[0]), float(content[1])
            except ValueError:
                raise ScenarioSyntaxError(f"non-numeric entry in table {path}", number, 1, ["<number>"]) from None
            if not (math.isfinite(t) and math.isfinite(value)):
                raise ScenarioSyntaxError(f"non-finite entry in table {path}", number, 1, ["<number>"])
            times.append(t)
            values.append(value)
    return times, values


def _time_function(entry: Entry, base_dir: Optional[Path]) -> TimeFunction:
    tokens = _tokens(entry)
    head, head_column = tokens[0]
    if len(tokens) == 1 and head not in ('const', 'ramp', 'table'):
        return TimeFunction.constant(_number(entry, head, head_column))
    if head == 'const':
        if len(tokens) != 2:
            raise ScenarioSyntaxError("const takes one number", entry.line, head_column, ['const <x>'])
        return TimeFunction.constant(_number(entry, *tokens[1]))
    if head == 'ramp':
        if len(tokens) != 5:
            raise ScenarioSyntaxError("ramp takes four numbers", entry.line, head_column,
                                      ['ramp <x0> <x1> <t0> <t1>'])
        x0, x1, t0, t1 = (_number(entry, token, column) for token, column in tokens[1:])
        return TimeFunction.ramp(x0, x1, t0, t1)
    if head == 'table':
        if len(tokens) < 2:
            raise ScenarioSyntaxError("table needs a file path", entry.line, head_column, ['table <path>'])
        source = entry.value[tokens[1][1] - entry.value_column:].strip()
        path = Path(source)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        if not path.is_file():
            raise ScenarioSemanticError([f"line {entry.line}, column {tokens[1][1]}: table file not found: {path}"])
        times, values = read_table(path)
        return TimeFunction.table(times, values, source=source)
    raise ScenarioSyntaxError(f"invalid time function {head!r} for {entry.key!r}", entry.line, head_column,
                              list(TIME_FUNCTION_FORMS))


# -- semantics ------------------------------------------------------------------------------

class _Builder:
    """Turns a syntactically valid document into specs, collecting semantic diagnostics."""

    def __init__(self, document: ScenarioDocument, base_dir: Optional[Path]):
        self.document = document
        self.base_dir = base_dir
        self.diagnostics: List[str] = []

    def note(self, section: Section, message: str) -> None:
        self.diagnostics.append(f"{section.label} (line {section.line}): {message}")

    def require(self, section: Section, key: str) -> Optional[Entry]:
        entry = section.entries.get(key)
        if entry is None:
            self.note(section, f"missing key {key!r}")
        return entry

    def number(self, section: Section, key: str) -> float:
        entry = self.require(section, key)
        return 0.0 if entry is None else _number(entry)

    def function(self, section: Section, key: str, default: Optional[TimeFunction] = None) -> TimeFunction:
        entry = section.entries.get(key)
        if entry is None:
            if default is None:
                self.note(section, f"missing key {key!r}")
                return ZERO
            return default
        try:
            return _time_function(entry, self.base_dir)
        except DomainError as exc:
            self.note(section, f"{key}: {exc}")
            return ZERO

    def singleton(self, kind: str) -> Optional[Section]:
        sections = self.document.of_kind(kind)
        for extra in sections[1:]:
            self.note(extra, f"more than one {kind} section")
        return sections[0] if sections else None

    def gas(self) -> GasSpec:
        section = self.singleton(GAS)
        if section is None:
            return GasSpec.default_air()
        values = {key: _number(entry) for key, entry in section.entries.items()}
        if 'c_p' not in values:
            values['c_p'] = values.get('c_V', GasSpec.c_V) + values.get('R', GasSpec.R)
        try:
            return GasSpec(**values)
        except DomainError as exc:
            self.note(section, str(exc))
            return GasSpec.default_air()

    def compartment(self, section: Section, gas: GasSpec) -> CompartmentSpec:
        V = self.number(section, 'V')
        N0 = self.number(section, 'N0')
        has_S0, has_T0 = 'S0' in section.entries, 'T0' in section.entries
        S0 = 0.0
        if has_S0 and has_T0:
            self.note(section, "give either S0 or T0, not both")
        elif has_S0:
            S0 = _number(section.entries['S0'])
        elif has_T0:
            T0 = _number(section.entries['T0'])
            if T0 > 0 and V > 0 and N0 > 0:
                S0 = N0 * molar_entropy(gas, T0, N0 * gas.R * T0 / V)
            elif not T0 > 0:
                self.note(section, f"T0 must be positive, got {T0}")
        else:
            self.note(section, "missing key 'S0' or 'T0'")
        return CompartmentSpec(section.name, V, S0, N0)

    def port(self, section: Section) -> Tuple[PortSpec, Optional[TimeFunction]]:
        compartment = self.require(section, 'compartment')
        port = PortSpec(
            id=section.name,
            compartment=_word(compartment) if compartment else '',
            J=self.function(section, 'J'),
            T_in=self.function(section, 'T_in', ZERO),
            p_in=self.function(section, 'p_in', ZERO),
        )
        velocity = self.function(section, 'velocity', ZERO) if 'velocity' in section.entries else None
        return port, velocity

    def source(self, section: Section) -> HeatSourceSpec:
        compartment = self.require(section, 'compartment')
        return HeatSourceSpec(
            id=section.name,
            compartment=_word(compartment) if compartment else '',
            J_S=self.function(section, 'J_S'),
            T_H=self.function(section, 'T_H'),
        )

    def coupling(self, section: Section) -> CouplingSpec:
        entries = section.entries
        pair_entry = self.require(section, 'pair')
        pair: Tuple[str, ...] = ()
        if pair_entry is not None:
            pair = tuple(pair_entry.value.split())
            if len(pair) != 2:
                raise ScenarioSyntaxError("pair takes two compartment names", pair_entry.line,
                                          pair_entry.value_column, ['<compartment> <compartment>'])
        kind = _word(entries['kind'], (DIFFUSION_G, ONSAGER_2X2)) if 'kind' in entries else DIFFUSION_G
        if kind == DIFFUSION_G:
            for key in ONSAGER_KEYS:
                if key in entries:
                    self.note(section, f"{key} only applies to {ONSAGER_2X2} couplings")
            return CouplingSpec(pair, DIFFUSION_G, G=self.number(section, 'G'), id=section.name)
        if 'G' in entries:
            self.note(section, f"G only applies to {DIFFUSION_G} couplings")
        L = [self.number(section, key) for key in ONSAGER_KEYS]
        return CouplingSpec(pair, ONSAGER_2X2, L=((L[0], L[1]), (L[2], L[3])), id=section.name)

    def mechanics(self, velocities: Dict[str, TimeFunction]) -> Optional[MechanicsSpec]:
        section = self.singleton(MECHANICS)
        if section is None:
            if velocities:
                self.diagnostics.append(f"port velocities given for port(s) {sorted(velocities)} "
                                        f"without a mechanics section")
            return None
        entries = section.entries
        numbers = {key: _number(entries[key]) for key in MECHANICS_NUMBERS if key in entries}
        for key in ('M', 'A_section'):
            numbers[key] = self.number(section, key)
        return MechanicsSpec(
            F_ext_q=self.function(section, 'F_ext_q', ZERO),
            F_ext_x=self.function(section, 'F_ext_x', ZERO),
            port_velocities=dict(velocities),
            **numbers,
        )

    def run(self, defaults: IntegrationOptions) -> Tuple[str, str, IntegrationOptions]:
        section = self.singleton(RUN)
        if section is None:
            self.diagnostics.append("missing [run] section")
            return 'scenario', '', defaults
        system_class = self.require(section, 'system_class')
        entries = section.entries
        overrides = {key: _number(entries[key]) for key in RUN_NUMBERS if key in entries}
        if 'method' in entries:
            overrides['method'] = _word(entries['method'])
        try:
            options = replace(defaults, **overrides)
        except DomainError as exc:
            self.note(section, str(exc))
            options = defaults
        return section.name or 'scenario', _word(system_class) if system_class else '', options


def build_model(document: ScenarioDocument, base_dir: Optional[Path] = None,
                defaults: Optional[IntegrationOptions] = None) -> Tuple[NetworkModel, IntegrationOptions]:
    builder = _Builder(document, base_dir)
    gas = builder.gas()
    compartments = [builder.compartment(s, gas) for s in document.of_kind(COMPARTMENT)]
    ports, velocities = [], {}
    for section in document.of_kind(PORT):
        port, velocity = builder.port(section)
        ports.append(port)
        if velocity is not None:
            velocities[port.id] = velocity
    sources = [builder.source(s) for s in document.of_kind(SOURCE)]
    couplings = [builder.coupling(s) for s in document.of_kind(COUPLING)]
    mechanics = builder.mechanics(velocities)
    name, system_class, options = builder.run(defaults or IntegrationOptions())

    model = NetworkModel(gas=gas, system_class=system_class, compartments=tuple(compartments),
                         ports=tuple(ports), sources=tuple(sources), couplings=tuple(couplings),
                         mechanics=mechanics, name=name)
    if builder.diagnostics:
        raise ScenarioSemanticError(builder.diagnostics)
    violations = validate(model)
    if violations:
        raise ScenarioSemanticError([str(v) for v in violations])
    logger.info(f"Parsed scenario {name}: {system_class}, {len(compartments)} compartment(s), "
                f"{len(ports)} port(s), {len(sources)} source(s), {len(couplings)} coupling(s)")
    return model, options


def parse_scenario(text: Union[str, bytes], base_dir: Optional[Path] = None,
                   defaults: Optional[IntegrationOptions] = None) -> Tuple[NetworkModel, IntegrationOptions]:
    """Parse a scenario document into a validated model and its run options.

    ``defaults`` supplies the integration settings the [run] section does not override.
    Every failure is a ScenarioSyntaxError (located) or a ScenarioSemanticError.
    """
    try:
        return build_model(parse_document(text), base_dir, defaults)
    except ScenarioError:
        raise
    except (DomainError, ValueError, ArithmeticError, OSError, np.linalg.LinAlgError) as exc:
        raise ScenarioSemanticError([str(exc)]) from exc


def load_scenario(path: Union[str, Path], defaults: Optional[IntegrationOptions] = None
                  ) -> Tuple[NetworkModel, IntegrationOptions]:
    path = Path(path)
    return parse_scenario(path.read_bytes(), base_dir=path.parent, defaults=defaults)


# -- serialization --------------------------------------------------------------------------

def _format_number(value: float) -> str:
    return repr(float(value))


def format_time_function(fn: TimeFunction) -> str:
    if fn.kind == CONSTANT:
        return f"const {_format_number(fn.value)}"
    if fn.kind == RAMP:
        return "ramp " + " ".join(_format_number(x) for x in (fn.start, fn.end, fn.t0, fn.t1))
    if fn.source is None:
        raise ScenarioError("a table time function without a source file cannot be serialized")
    return f"table {fn.source}"


def serialize_scenario(model: NetworkModel, options: IntegrationOptions) -> str:
    """Scenario text that parses back to an equal model and options."""
    lines: List[str] = []

    def section(kind: str, name: Optional[str], pairs: Sequence[Tuple[str, str]]) -> None:
        if lines:
            lines.append('')
        lines.append(f"[{kind} {name}]" if name else f"[{kind}]")
        lines.extend(f"{key} = {value}" for key, value in pairs)

    gas = model.gas
    section(GAS, None, [(key, _format_number(getattr(gas, key))) for key in GAS_KEYS])
    for c in model.compartments:
        section(COMPARTMENT, c.id, [('V', _format_number(c.V)), ('S0', _format_number(c.S0)),
                                    ('N0', _format_number(c.N0))])
    mech = model.mechanics
    for port in model.ports:
        pairs = [('compartment', port.compartment), ('J', format_time_function(port.J)),
                 ('T_in', format_time_function(port.T_in)), ('p_in', format_time_function(port.p_in))]
        if mech is not None and port.id in mech.port_velocities:
            pairs.append(('velocity', format_time_function(mech.port_velocities[port.id])))
        section(PORT, port.id, pairs)
    for source in model.sources:
        section(SOURCE, source.id, [('compartment', source.compartment), ('J_S', format_time_function(source.J_S)),
                                    ('T_H', format_time_function(source.T_H))])
    for coupling in model.couplings:
        pairs = [('pair', ' '.join(coupling.pair)), ('kind', coupling.kind)]
        if coupling.kind == ONSAGER_2X2:
            pairs += [(key, _format_number(value))
                      for key, value in zip(ONSAGER_KEYS, (x for row in coupling.L for x in row))]
        else:
            pairs.append(('G', _format_number(coupling.G)))
        section(COUPLING, coupling.id, pairs)
    if mech is not None:
        pairs = [(key, _format_number(getattr(mech, key))) for key in MECHANICS_NUMBERS
                 if getattr(mech, key) is not None]
        pairs += [('F_ext_q', format_time_function(mech.F_ext_q)), ('F_ext_x', format_time_function(mech.F_ext_x))]
        section(MECHANICS, None, pairs)
    run_pairs = [('system_class', model.system_class), ('method', options.method)]
    run_pairs += [(f.name, _format_number(getattr(options, f.name))) for f in fields(options) if f.name in RUN_NUMBERS]
    section(RUN, model.name, run_pairs)
    return "\n".join(lines) + "\n"
