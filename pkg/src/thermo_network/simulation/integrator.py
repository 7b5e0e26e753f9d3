"""
Explicit time stepping: classic RK4 at a fixed step and the Runge-Kutta-Fehlberg 4(5)
pair with error control. Steps are shortened to land on every sample time; a state that
leaves the physical domain inside a step halves the step until ``h_min``.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from thermo_network.network.model import NetworkModel, SystemState
from thermo_network.simulation.dynamics import Diagnostics, Dynamics
from thermo_network.utils.errors import DomainError, IntegrityError

logger = logging.getLogger(__name__)

RK4 = 'rk4'
RK45 = 'rk45'
METHODS = (RK4, RK45)

COMPLETED = 'completed'
GUARD_STOP = 'guard_stop'
STEP_UNDERFLOW = 'step_underflow'
STEP_LIMIT = 'step_limit'

SAFETY = 0.9
FACTOR_MIN = 0.2
FACTOR_MAX = 5.0

# Fehlberg 4(5): stage nodes, stage rows, 4th-order weights and the error weights b5 - b4
RKF45_C = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
RKF45_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
RKF45_B = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)
RKF45_E = (1 / 360, 0.0, -128 / 4275, -2197 / 75240, 1 / 50, 2 / 55)

Rhs = Callable[[float, np.ndarray], np.ndarray]


class GuardViolation(Exception):
    """Internal signal: the trial state left the domain."""


@dataclass
class IntegrationOptions:
    method: str = RK45
    t_final: float = 10.0
    h0: float = 1e-3
    h_min: float = 1e-9
    h_max: float = 0.1
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    sample_dt: float = 0.05
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError('method', self.method, f"must be one of {', '.join(METHODS)}")
        for name in ('t_final', 'h0', 'h_min', 'h_max', 'abs_tol', 'rel_tol', 'sample_dt'):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(name, value)
        if not self.h_min <= self.h0 <= self.h_max:
            raise DomainError('h0', self.h0, f"must lie in [h_min, h_max] = [{self.h_min}, {self.h_max}]")
        if not (isinstance(self.max_steps, int) and self.max_steps >= 1):
            raise DomainError('max_steps', self.max_steps, "must be a positive integer")

    @classmethod
    def from_config(cls, config: Dict[str, Any], **overrides) -> 'IntegrationOptions':
        """Options from the ``integration`` config section; non-None overrides win."""
        settings = {key: value for key, value in config.get('integration', {}).items()
                    if key in cls.__dataclass_fields__}
        settings.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**settings)


@dataclass(frozen=True)
class Sample:
    t: float
    state: SystemState
    diagnostics: Optional[Diagnostics]


@dataclass(frozen=True)
class Termination:
    status: str
    t: float
    reason: str = ''

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED


@dataclass
class Trajectory:
    samples: List[Sample]
    termination: Termination
    steps: int = 0
    rejected: int = 0
    name: str = ''

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def states(self) -> np.ndarray:
        return np.array([s.state.y for s in self.samples])

    def column(self, label: str) -> np.ndarray:
        index = self.samples[0].state.layout.index(label)
        return self.states[:, index]

    def diagnostic(self, name: str) -> np.ndarray:
        return np.array([getattr(s.diagnostics, name) for s in self.samples])

    @property
    def final(self) -> Sample:
        return self.samples[-1]


def _finite_guard(y: np.ndarray) -> Optional[str]:
    return None if np.all(np.isfinite(y)) else "non-finite state"


def _evaluate(rhs: Rhs, t: float, y: np.ndarray, guard: Callable[[np.ndarray], Optional[str]]) -> np.ndarray:
    reason = guard(y)
    if reason is not None:
        raise GuardViolation(reason)
    try:
        dy = rhs(t, y)
    except DomainError as exc:
        raise GuardViolation(str(exc))
    if not np.all(np.isfinite(dy)):
        raise IntegrityError("non-finite right-hand side", t=t,
                             snapshot={str(i): float(v) for i, v in enumerate(y)})
    return dy


def rk4_step(rhs: Rhs, t: float, y: np.ndarray, h: float, guard=_finite_guard) -> np.ndarray:
    k1 = _evaluate(rhs, t, y, guard)
    k2 = _evaluate(rhs, t + h / 2, y + h / 2 * k1, guard)
    k3 = _evaluate(rhs, t + h / 2, y + h / 2 * k2, guard)
    k4 = _evaluate(rhs, t + h, y + h * k3, guard)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def rkf45_step(rhs: Rhs, t: float, y: np.ndarray, h: float, guard=_finite_guard) -> Tuple[np.ndarray, np.ndarray]:
    """4th-order update and the local error estimate."""
    stages = []
    for c, row in zip(RKF45_C, RKF45_A):
        y_stage = y + h * sum((a * k for a, k in zip(row, stages)), np.zeros_like(y))
        stages.append(_evaluate(rhs, t + c * h, y_stage, guard))
    y_new = y + h * sum((b * k for b, k in zip(RKF45_B, stages)), np.zeros_like(y))
    error = h * sum((e * k for e, k in zip(RKF45_E, stages)), np.zeros_like(y))
    return y_new, error


def _sample_times(t0: float, t_final: float, sample_dt: float) -> List[float]:
    count = int(math.floor((t_final - t0) / sample_dt + 1e-9))
    times = [t0 + i * sample_dt for i in range(1, count + 1)]
    if times and abs(times[-1] - t_final) <= 1e-9 * sample_dt:
        times[-1] = t_final
    else:
        times.append(t_final)
    return times


def integrate(rhs: Rhs, state0: SystemState, t_final: float, options: Optional[IntegrationOptions] = None,
              guard: Optional[Callable[[np.ndarray], Optional[str]]] = None,
              diagnostics: Optional[Callable[[float, np.ndarray], Diagnostics]] = None) -> Trajectory:
    """Integrate ``rhs`` from ``state0`` to ``t_final``, sampling every ``sample_dt``.

    A ``Dynamics`` rhs supplies its own positivity guard and per-sample diagnostics.
    """
    options = options or IntegrationOptions(t_final=t_final)
    if isinstance(rhs, Dynamics):
        guard = guard or rhs.guard
        diagnostics = diagnostics or rhs.diagnostics
    guard = guard or _finite_guard
    layout = state0.layout

    def sample(t: float, y: np.ndarray) -> Sample:
        return Sample(t, SystemState(t, y.copy(), layout), diagnostics(t, y) if diagnostics else None)

    t = float(state0.t)
    y = np.array(state0.y, dtype=float)
    reason = guard(y)
    if reason is not None:
        raise IntegrityError(f"initial state outside the domain: {reason}", t=t)

    samples = [sample(t, y)]
    targets = _sample_times(t, t_final, options.sample_dt)
    h = options.h0
    steps = rejected = 0
    termination = Termination(COMPLETED, t_final)
    logger.info(f"Integrating to t={t_final:g} with {options.method} (h0={options.h0:g}, "
                f"sample_dt={options.sample_dt:g}, {len(y)} states)")

    target_index = 0
    while target_index < len(targets):
        target = targets[target_index]
        if steps >= options.max_steps:
            termination = Termination(STEP_LIMIT, t, f"step limit {options.max_steps} reached")
            logger.warning(f"Step limit reached at t={t:.6g}")
            break
        step = min(h, target - t)
        landing = step >= target - t - 1e-12 * max(1.0, abs(target))
        try:
            if options.method == RK4:
                y_new = rk4_step(rhs, t, y, step, guard)
                error_ratio = 0.0
            else:
                y_new, error = rkf45_step(rhs, t, y, step, guard)
                scale = options.abs_tol + options.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
                error_ratio = float(np.max(np.abs(error) / scale))
            reason = guard(y_new)
            if reason is not None:
                raise GuardViolation(reason)
        except GuardViolation as exc:
            h = step / 2
            rejected += 1
            logger.debug(f"Guard violation at t={t:.6g} ({exc}), halving step to {h:.3e}")
            if h < options.h_min:
                termination = Termination(GUARD_STOP, t, str(exc))
                logger.warning(f"Guard stop at t={t:.6g}: {exc}")
                break
            continue

        if error_ratio > 1.0:
            factor = max(FACTOR_MIN, SAFETY * error_ratio ** -0.2)
            h = step * factor
            rejected += 1
            logger.debug(f"Rejected step at t={t:.6g} (error ratio {error_ratio:.3g}), h -> {h:.3e}")
            if h < options.h_min:
                termination = Termination(STEP_UNDERFLOW, t, f"step size {h:.3e} below h_min")
                logger.warning(f"Step underflow at t={t:.6g}")
                break
            continue

        steps += 1
        t = target if landing else t + step
        y = y_new
        if options.method == RK45:
            factor = FACTOR_MAX if error_ratio == 0.0 else min(FACTOR_MAX, max(FACTOR_MIN, SAFETY * error_ratio ** -0.2))
            # a step cut short by a sample time says nothing about the admissible size
            h = min(options.h_max, max(h, step * factor) if landing else step * factor)
        else:
            h = options.h0
        if landing:
            samples.append(sample(t, y))
            target_index += 1

    logger.info(f"Integration {termination.status} at t={t:g} after {steps} steps ({rejected} rejected)")
    return Trajectory(samples, termination, steps, rejected)


def integrate_model(model: NetworkModel, state0: SystemState, options: IntegrationOptions,
                    mutation: Optional[str] = None) -> Trajectory:
    trajectory = integrate(Dynamics(model, mutation=mutation), state0, options.t_final, options)
    trajectory.name = model.name
    return trajectory


def sample_diagnostics(model: NetworkModel, state: SystemState, t: float) -> Diagnostics:
    return Dynamics(model).diagnostics(t, state.y)
