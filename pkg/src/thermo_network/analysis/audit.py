"""
Law checks over simulated trajectories.

Each audit turns one thermodynamic statement into a pass/fail CheckResult: the energy
balance, non-negative entropy production, entropy and mole bookkeeping, invariance under
the non-physical offsets, relaxation of isolated networks, agreement with the abstract
Lagrangian solver, and admissibility of the Onsager matrices.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from thermo_network.network.model import (
    NON_SIMPLE, ONSAGER_2X2, SIMPLE_MECHANICAL, SIMPLE_SINGLE, NetworkModel, initial_state,
)
from thermo_network.simulation.abstract_ldav import LdavOptions, embed_open_system, integrate_abstract
from thermo_network.simulation.dynamics import Diagnostics, Dynamics
from thermo_network.simulation.integrator import RK4, IntegrationOptions, Trajectory, integrate
from thermo_network.utils.errors import AuditPreconditionError, ScopeError

logger = logging.getLogger(__name__)

PASS = 'pass'
FAIL = 'fail'

FIRST_LAW = 'first_law'
SECOND_LAW = 'second_law'
ENTROPY_BOOKKEEPING = 'entropy_bookkeeping'
MOLE_BALANCE = 'mole_balance'
GAUGE_INVARIANCE = 'gauge_invariance'
EQUILIBRIUM = 'equilibrium'
CROSS_VALIDATION = 'cross_validation'
ONSAGER_ADMISSIBILITY = 'onsager_admissibility'
CHECKS = (FIRST_LAW, SECOND_LAW, ENTROPY_BOOKKEEPING, MOLE_BALANCE, GAUGE_INVARIANCE,
          EQUILIBRIUM, CROSS_VALIDATION, ONSAGER_ADMISSIBILITY)

GAUGE_GAMMA_SHIFT = 100.0
GAUGE_W_SHIFT = 1e3
GAUGE_S_REF_SHIFT = 5.0
GAUGE_U_REF_SHIFT = 1e3
UNIFORM_SPACING_RTOL = 1e-9


@dataclass(frozen=True)
class CheckResult:
    check: str
    max_violation: float
    t: Optional[float]
    tolerance: float
    verdict: str
    detail: str = ''

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> Dict[str, Any]:
        return {
            'check': self.check,
            'max_violation': self.max_violation,
            't': self.t,
            'tolerance': self.tolerance,
            'verdict': self.verdict,
            'detail': self.detail,
        }


@dataclass
class AuditReport:
    name: str
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def verdict(self) -> str:
        return PASS if self.passed else FAIL

    def failed(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'scenario': self.name,
            'verdict': self.verdict,
            'checks': [check.to_dict() for check in self.checks],
        }


@dataclass
class AuditTolerances:
    first_law_tol: float = 1e-6
    second_law_tol: float = 1e-10
    entropy_tol: float = 1e-6
    mole_tol: float = 1e-8
    gauge_tol: float = 1e-9
    equilibrium_fraction: float = 1e-6
    cross_validation_tol: float = 1e-5
    cross_validation_h: float = 1e-3
    cross_validation_horizon: float = 1.0
    onsager_samples: int = 1000
    seed: int = 0

    @classmethod
    def from_config(cls, config: Dict[str, Any], **overrides) -> 'AuditTolerances':
        settings = {key: value for key, value in config.get('audit', {}).items()
                    if key in cls.__dataclass_fields__}
        settings.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**settings)


def _result(check: str, violations: np.ndarray, times: np.ndarray, tolerance: float, detail: str = '') -> CheckResult:
    """Verdict from per-sample violations; NaN counts as a failure."""
    violations = np.asarray(violations, dtype=float)
    if violations.size == 0:
        return CheckResult(check, 0.0, None, tolerance, PASS, detail)
    if np.any(np.isnan(violations)):
        i = int(np.argmax(np.isnan(violations)))
        return CheckResult(check, math.inf, float(times[i]), tolerance, FAIL, detail or "non-finite residual")
    i = int(np.argmax(violations))
    worst = float(violations[i])
    verdict = PASS if worst <= tolerance else FAIL
    return CheckResult(check, worst, float(times[i]), tolerance, verdict, detail)


def _log_result(result: CheckResult) -> CheckResult:
    if result.passed:
        logger.info(f"Audit {result.check}: pass (max violation {result.max_violation:.3e})")
    else:
        logger.warning(f"Audit {result.check} failed: max violation {result.max_violation:.3e} "
                       f"at t={result.t} exceeds {result.tolerance:g} {result.detail}".rstrip())
    return result


def trajectory_diagnostics(model: NetworkModel, traj: Trajectory) -> List[Diagnostics]:
    """Stored per-sample diagnostics, recomputed where a sample carries none."""
    dynamics = None
    diagnostics = []
    for sample in traj.samples:
        if sample.diagnostics is None:
            dynamics = dynamics or Dynamics(model)
            diagnostics.append(dynamics.diagnostics(sample.t, sample.state.y))
        else:
            diagnostics.append(sample.diagnostics)
    return diagnostics


def centered_derivative(times: Sequence[float], values: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Derivative at the interior samples.

    Five-point stencil where the four surrounding spacings are equal, the three-point
    non-uniform formula elsewhere. Endpoints are excluded.
    """
    t = np.asarray(times, dtype=float)
    f = np.asarray(values, dtype=float)
    if len(t) < 3:
        raise AuditPreconditionError(f"need at least 3 samples for a centered derivative, got {len(t)}")
    spacing = np.diff(t)
    derivative = np.empty(len(t) - 2)
    for i in range(1, len(t) - 1):
        h0, h1 = spacing[i - 1], spacing[i]
        if 2 <= i <= len(t) - 3:
            local = spacing[i - 2:i + 2]
            if np.all(np.abs(local - local[0]) <= UNIFORM_SPACING_RTOL * local[0]):
                h = local[0]
                derivative[i - 1] = (f[i - 2] - 8 * f[i - 1] + 8 * f[i + 1] - f[i + 2]) / (12 * h)
                continue
        derivative[i - 1] = (h0 ** 2 * f[i + 1] - h1 ** 2 * f[i - 1] + (h1 ** 2 - h0 ** 2) * f[i]) / (h0 * h1 * (h0 + h1))
    return t[1:-1], derivative


def is_isolated(model: NetworkModel) -> bool:
    """No ports, no heat sources and no external forces."""
    if model.ports or model.sources:
        return False
    mech = model.mechanics
    return mech is None or (mech.F_ext_q.is_zero and mech.F_ext_x.is_zero)


def first_law_audit(model: NetworkModel, traj: Trajectory, tolerances: Optional[AuditTolerances] = None) -> CheckResult:
    """Centered-difference dE/dt against P_W + P_H + P_M at interior samples."""
    tol = (tolerances or AuditTolerances()).first_law_tol
    diagnostics = trajectory_diagnostics(model, traj)
    E = np.array([d.E for d in diagnostics])
    P = np.array([d.P_total for d in diagnostics])
    t, E_dot = centered_derivative(traj.times, E)
    violations = np.abs(E_dot - P[1:-1]) / np.maximum(1.0, np.abs(E_dot))
    detail = ''
    if is_isolated(model):
        drift = np.abs(E - E[0]) / max(1.0, abs(E[0]))
        if drift.max() > violations.max(initial=0.0):
            t, violations = traj.times, drift
            detail = "energy drift of an isolated network"
    return _log_result(_result(FIRST_LAW, violations, t, tol, detail))


def second_law_audit(model: NetworkModel, traj: Trajectory, tolerances: Optional[AuditTolerances] = None) -> CheckResult:
    """I >= 0 at every sample and the total internal entropy Sigma never decreases."""
    tol = (tolerances or AuditTolerances()).second_law_tol
    diagnostics = trajectory_diagnostics(model, traj)
    times = traj.times
    I = np.array([d.I for d in diagnostics])
    states = traj.states
    sigma_slots = list(traj.samples[0].state.layout.Sigma)
    Sigma = states[:, sigma_slots].sum(axis=1)

    production = np.maximum(0.0, -I) / max(1.0, float(np.max(np.abs(I))))
    drop = np.zeros_like(Sigma)
    drop[1:] = np.maximum(0.0, -np.diff(Sigma)) / max(1.0, float(np.max(np.abs(Sigma))))
    violations = np.maximum(production, drop)
    i = int(np.argmax(violations)) if violations.size else 0
    if violations.size and violations[i] > tol:
        detail = "negative entropy production" if production[i] >= drop[i] else "internal entropy decreased"
    else:
        detail = ''
    return _log_result(_result(SECOND_LAW, violations, times, tol, detail))


def entropy_bookkeeping_audit(model: NetworkModel, traj: Trajectory,
                              tolerances: Optional[AuditTolerances] = None) -> CheckResult:
    """Centered-difference dS_total/dt against I plus the entropy carried in by ports and sources."""
    tol = (tolerances or AuditTolerances()).entropy_tol
    diagnostics = trajectory_diagnostics(model, traj)
    S = np.array([d.S_total for d in diagnostics])
    expected = np.array([d.I + d.entropy_inflow for d in diagnostics])
    t, S_dot = centered_derivative(traj.times, S)
    violations = np.abs(S_dot - expected[1:-1]) / np.maximum(1.0, np.abs(S_dot))
    return _log_result(_result(ENTROPY_BOOKKEEPING, violations, t, tol))


def mole_balance_audit(model: NetworkModel, traj: Trajectory, tolerances: Optional[AuditTolerances] = None) -> CheckResult:
    """N_total(t) - N_total(0) against the trapezoid integral of the port inflow."""
    tol = (tolerances or AuditTolerances()).mole_tol
    diagnostics = trajectory_diagnostics(model, traj)
    times = traj.times
    N = np.array([d.N_total for d in diagnostics])
    inflow = np.array([d.port_mole_inflow for d in diagnostics])
    integrated = cumulative_trapezoid(inflow, times, initial=0.0)
    violations = np.abs((N - N[0]) - integrated) / max(1.0, abs(N[0]))
    return _log_result(_result(MOLE_BALANCE, violations, times, tol))


# -- reruns --------------------------------------------------------------------------------

def _fixed_step_options(options: Optional[IntegrationOptions], tolerances: AuditTolerances) -> IntegrationOptions:
    h = tolerances.cross_validation_h
    t_final = tolerances.cross_validation_horizon
    sample_dt = t_final
    if options is not None:
        t_final = min(options.t_final, t_final)
        sample_dt = options.sample_dt
    every = max(1, int(round(min(sample_dt, t_final) / h)))
    return IntegrationOptions(method=RK4, t_final=t_final, h0=h, h_min=min(h, 1e-9), h_max=h,
                              sample_dt=every * h)


def _rerun(model: NetworkModel, options: IntegrationOptions, mutation: Optional[str] = None,
           adjust: Optional[Callable[[np.ndarray, Any], None]] = None) -> Trajectory:
    state = initial_state(model)
    if adjust is not None:
        adjust(state.y, state.layout)
    return integrate(Dynamics(model, mutation=mutation), state, options.t_final, options)


def _channels(model: NetworkModel, traj: Trajectory) -> Dict[str, np.ndarray]:
    diagnostics = trajectory_diagnostics(model, traj)
    layout = traj.samples[0].state.layout
    states = traj.states
    return {
        'T': np.array([d.temperatures for d in diagnostics]),
        'p': np.array([d.pressures for d in diagnostics]),
        'N': states[:, list(layout.N)],
        'I': np.array([d.I for d in diagnostics]),
        'Sigma': states[:, list(layout.Sigma)],
    }


def _discrepancy(reference: np.ndarray, other: np.ndarray) -> np.ndarray:
    """Per-sample max deviation, each component scaled by max(1, its largest magnitude)."""
    n = min(len(reference), len(other))
    reference = np.asarray(reference[:n], dtype=float).reshape(n, -1)
    other = np.asarray(other[:n], dtype=float).reshape(n, -1)
    scale = np.maximum(1.0, np.max(np.abs(reference), axis=0))
    return np.max(np.abs(other - reference) / scale, axis=1)


def gauge_invariance_audit(model: NetworkModel, options: Optional[IntegrationOptions] = None,
                           tolerances: Optional[AuditTolerances] = None, mutation: Optional[str] = None) -> CheckResult:
    """Rerun with shifted displacement offsets and reference constants.

    Gamma0/W0 offsets and an s_ref shift (with S0 shifted by N0 ds) must leave T, p, N, I
    and Sigma unchanged. A u_ref shift must move E by N_total du and keep the first-law
    residual; the full channel comparison is skipped for non-simple couplings, whose
    matter force depends on u_ref when the temperatures differ.
    """
    tolerances = tolerances or AuditTolerances()
    run_options = _fixed_step_options(options, tolerances)
    logger.info(f"Gauge audit of {model.name}: fixed-step reruns to t={run_options.t_final:g}")

    base = _rerun(model, run_options, mutation)
    base_channels = _channels(model, base)
    times = base.times
    worst = np.zeros(len(times))
    labels = [''] * len(times)

    def record(name: str, deviation: np.ndarray) -> None:
        for i, value in enumerate(deviation):
            if value > worst[i]:
                worst[i] = value
                labels[i] = name

    def compare(name: str, shifted_model: NetworkModel, traj: Trajectory) -> None:
        channels = _channels(shifted_model, traj)
        for channel, values in base_channels.items():
            record(f"{name} {channel}", _discrepancy(values, channels[channel]))

    def offsets(y: np.ndarray, layout) -> None:
        y[list(layout.Gamma)] += GAUGE_GAMMA_SHIFT
        y[list(layout.W)] += GAUGE_W_SHIFT

    compare('Gamma0/W0 offset', model, _rerun(model, run_options, mutation, offsets))

    ds = GAUGE_S_REF_SHIFT
    s_model = replace(model, gas=model.gas.with_reference_shift(ds=ds),
                      compartments=tuple(replace(c, S0=c.S0 + c.N0 * ds) for c in model.compartments))
    compare('s_ref shift', s_model, _rerun(s_model, run_options, mutation))

    du = GAUGE_U_REF_SHIFT
    u_model = replace(model, gas=model.gas.with_reference_shift(du=du))
    u_traj = _rerun(u_model, run_options, mutation)
    base_diag = trajectory_diagnostics(model, base)
    u_diag = trajectory_diagnostics(u_model, u_traj)
    n = min(len(base_diag), len(u_diag))
    E_scale = max(1.0, max(abs(d.E) for d in base_diag))
    offset = np.array([abs(u.E - b.E - b.N_total * du) / E_scale for b, u in zip(base_diag[:n], u_diag[:n])])
    record('u_ref energy offset', offset)
    P_scale = np.array([max(1.0, abs(d.P_total)) for d in base_diag[:n]])
    residual = np.array([abs(u.first_law_residual - b.first_law_residual) for b, u in zip(base_diag[:n], u_diag[:n])])
    record('u_ref first-law residual', residual / P_scale)
    if not (model.system_class == NON_SIMPLE and model.couplings):
        compare('u_ref shift', u_model, u_traj)

    result = _result(GAUGE_INVARIANCE, worst, times, tolerances.gauge_tol)
    if not result.passed:
        result = replace(result, detail=labels[int(np.argmax(worst))])
    return _log_result(result)


def _spread(values: np.ndarray) -> np.ndarray:
    return values.max(axis=1) - values.min(axis=1)


def equilibrium_audit(model: NetworkModel, traj: Trajectory, tolerances: Optional[AuditTolerances] = None) -> CheckResult:
    """Temperature and chemical-potential spreads decay in an isolated network.

    The violation is the final spread over the initial spread for every channel the
    couplings can relax; S_total must not decrease along the way.
    """
    tolerances = tolerances or AuditTolerances()
    tol = tolerances.equilibrium_fraction
    if not is_isolated(model):
        raise AuditPreconditionError(f"equilibrium audit needs an isolated model; {model.name} has ports, "
                                     f"heat sources or external forces")

    heat = any(c.kind == ONSAGER_2X2 and abs(c.matrix[0, 0]) > 0 for c in model.couplings)
    matter = any((c.kind == ONSAGER_2X2 and abs(c.matrix[1, 1]) > 0) or (c.kind != ONSAGER_2X2 and c.G > 0)
                 for c in model.couplings)
    times = traj.times
    if not (heat or matter):
        return _log_result(CheckResult(EQUILIBRIUM, 0.0, float(times[-1]), tol, PASS, "no relaxation channel"))

    diagnostics = trajectory_diagnostics(model, traj)
    channels = []
    if heat or model.system_class != NON_SIMPLE:
        channels.append(('T', np.array([d.temperatures for d in diagnostics])))
    if matter:
        channels.append(('mu', np.array([d.potentials for d in diagnostics])))

    ratio, worst_channel = 0.0, ''
    for name, values in channels:
        spread = _spread(values)
        scale = max(1.0, float(np.max(np.abs(values))))
        initial = spread[0] if spread[0] > 1e-12 * scale else scale
        value = float(spread[-1] / initial)
        if value >= ratio:
            ratio, worst_channel = value, name

    S_total = np.array([d.S_total for d in diagnostics])
    S_drop = np.maximum(0.0, -np.diff(S_total)) / max(1.0, float(np.max(np.abs(S_total))))
    if S_drop.size and S_drop.max() > tolerances.second_law_tol:
        i = int(np.argmax(S_drop)) + 1
        return _log_result(CheckResult(EQUILIBRIUM, float(S_drop.max()), float(times[i]),
                                       tolerances.second_law_tol, FAIL, "total entropy decreased"))

    verdict = PASS if ratio <= tol else FAIL
    detail = f"{worst_channel} spread ratio" if verdict == FAIL else ''
    return _log_result(CheckResult(EQUILIBRIUM, ratio, float(times[-1]), tol, verdict, detail))


def cross_validation_audit(model: NetworkModel, options: Optional[IntegrationOptions] = None,
                           tolerances: Optional[AuditTolerances] = None, mutation: Optional[str] = None,
                           affine_sign: float = 1.0, ldav_options: Optional[LdavOptions] = None) -> CheckResult:
    """Integrate the specialised dynamics and the Lagrangian embedding with the same RK4 step."""
    tolerances = tolerances or AuditTolerances()
    if model.system_class not in (SIMPLE_SINGLE, SIMPLE_MECHANICAL):
        raise ScopeError(f"cross-validation supports {SIMPLE_SINGLE} and {SIMPLE_MECHANICAL}, "
                         f"not {model.system_class}")
    run_options = _fixed_step_options(options, tolerances)
    embedding = embed_open_system(model, affine_sign)
    ldav = ldav_options or LdavOptions()
    ldav = replace(ldav, h=run_options.h0, sample_dt=run_options.sample_dt)
    logger.info(f"Cross-validating {model.name} to t={run_options.t_final:g} at h={run_options.h0:g}")

    state0 = initial_state(model)
    direct = integrate(Dynamics(model, mutation=mutation), state0, run_options.t_final, run_options)
    abstract = integrate_abstract(embedding, embedding.from_system_state(state0), run_options.t_final, ldav)

    direct_times = direct.times
    pairs = []
    for sample in abstract.samples:
        i = int(np.argmin(np.abs(direct_times - sample.t)))
        if abs(direct_times[i] - sample.t) <= 1e-9 * max(1.0, abs(sample.t)):
            pairs.append((i, embedding.to_system_state(sample.state).y))
    if not pairs:
        return _log_result(CheckResult(CROSS_VALIDATION, math.inf, None, tolerances.cross_validation_tol,
                                       FAIL, "no common sample times"))
    reference = np.array([direct.samples[i].state.y for i, _ in pairs])
    other = np.array([y for _, y in pairs])
    violations = _discrepancy(reference, other)
    times = np.array([direct_times[i] for i, _ in pairs])
    return _log_result(_result(CROSS_VALIDATION, violations, times, tolerances.cross_validation_tol))


def onsager_admissibility_audit(model: NetworkModel, tolerances: Optional[AuditTolerances] = None) -> CheckResult:
    """X^T L X >= 0 over seeded random force vectors for every onsager_2x2 coupling."""
    tolerances = tolerances or AuditTolerances()
    tol = tolerances.second_law_tol
    couplings = [c for c in model.couplings if c.kind == ONSAGER_2X2]
    if not couplings:
        return _log_result(CheckResult(ONSAGER_ADMISSIBILITY, 0.0, None, tol, PASS, "no onsager couplings"))

    rng = np.random.default_rng(tolerances.seed)
    worst, worst_id = 0.0, ''
    for coupling in couplings:
        L = coupling.matrix
        forces = rng.standard_normal((tolerances.onsager_samples, 2))
        bilinear = np.einsum('ij,jk,ik->i', forces, L, forces)
        scale = max(float(np.linalg.norm(L)), 1e-300) * np.sum(forces ** 2, axis=1)
        value = float(np.max(np.maximum(0.0, -bilinear) / scale))
        if value > worst:
            worst, worst_id = value, coupling.id
    verdict = PASS if worst <= tol else FAIL
    detail = f"coupling {worst_id} is not positive semi-definite" if verdict == FAIL else ''
    return _log_result(CheckResult(ONSAGER_ADMISSIBILITY, worst, None, tol, verdict, detail))


def applicable_checks(model: NetworkModel) -> List[str]:
    checks = [FIRST_LAW, SECOND_LAW, ENTROPY_BOOKKEEPING, MOLE_BALANCE, GAUGE_INVARIANCE]
    if is_isolated(model):
        checks.append(EQUILIBRIUM)
    if model.system_class in (SIMPLE_SINGLE, SIMPLE_MECHANICAL):
        checks.append(CROSS_VALIDATION)
    checks.append(ONSAGER_ADMISSIBILITY)
    return checks


def run_audits(model: NetworkModel, traj: Trajectory, options: Optional[IntegrationOptions] = None,
               tolerances: Optional[AuditTolerances] = None, checks: Optional[Sequence[str]] = None,
               mutation: Optional[str] = None, ldav_options: Optional[LdavOptions] = None,
               max_workers: Optional[int] = None) -> AuditReport:
    """Run the applicable (or the requested) checks concurrently; results keep check order."""
    tolerances = tolerances or AuditTolerances()
    names = list(checks) if checks is not None else applicable_checks(model)
    unknown = [name for name in names if name not in CHECKS]
    if unknown:
        raise ValueError(f"unknown audit check(s) {unknown}; expected from {list(CHECKS)}")

    runners: Dict[str, Callable[[], CheckResult]] = {
        FIRST_LAW: lambda: first_law_audit(model, traj, tolerances),
        SECOND_LAW: lambda: second_law_audit(model, traj, tolerances),
        ENTROPY_BOOKKEEPING: lambda: entropy_bookkeeping_audit(model, traj, tolerances),
        MOLE_BALANCE: lambda: mole_balance_audit(model, traj, tolerances),
        GAUGE_INVARIANCE: lambda: gauge_invariance_audit(model, options, tolerances, mutation),
        EQUILIBRIUM: lambda: equilibrium_audit(model, traj, tolerances),
        CROSS_VALIDATION: lambda: cross_validation_audit(model, options, tolerances, mutation,
                                                         ldav_options=ldav_options),
        ONSAGER_ADMISSIBILITY: lambda: onsager_admissibility_audit(model, tolerances),
    }

    logger.info(f"Running {len(names)} audit(s) on {model.name}: {', '.join(names)}")
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [(name, pool.submit(runners[name])) for name in names]
        results = []
        for name, future in futures:
            try:
                results.append(future.result())
            except AuditPreconditionError as exc:
                results.append(CheckResult(name, math.inf, None, 0.0, FAIL, str(exc)))

    report = AuditReport(model.name, results)
    logger.info(f"Audit of {model.name}: {report.verdict} ({len(report.failed())} failed)")
    return report
