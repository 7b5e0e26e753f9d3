"""
Lagrange-d'Alembert systems with nonlinear, time-dependent velocity constraints

    d/dt dL/dv - dL/dq = A^T lambda + F_ext,        A(t, q, v) v + B(t, q, v) = 0,

solved for accelerations and multipliers with numerically differentiated Lagrangians,
and the embedding of single-compartment open systems into that form.

Directions with a zero mass row (L at most linear in that velocity) are degenerate: their
velocity is solved for instead of their acceleration, and the constraint is then imposed
at velocity level. Without degenerate directions the constraint is differentiated once
and re-imposed after every step by projection.
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from thermo_network.network.model import (
    SIMPLE_MECHANICAL, SIMPLE_SINGLE, NetworkModel, StateLayout, SystemState, state_layout,
)
from thermo_network.properties.gas_props import intensive_from_extensive, internal_energy_total
from thermo_network.simulation.dynamics import Dynamics
from thermo_network.utils.errors import (
    ConstraintRankError, DivergenceError, DomainError, IntegrityError, ScopeError, StepUnderflowError,
)

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps
FIRST_STEP = EPS ** (1 / 3)
MIXED_STEP = EPS ** (1 / 4)
VELOCITY_STEP = 1e-2
SINGULAR_RTOL = 1e-12
DEGENERATE_RTOL = 1e-10

Evaluator = Callable[[float, np.ndarray, np.ndarray], Any]


@dataclass
class LagrangianSystem:
    """User-supplied Lagrangian, constraint pair (A, B) and external force.

    ``degenerate`` lists the directions with a zero mass row; when None they are detected
    from the diagonal of d2L/dv2 at the first solve point. Set ``time_dependent`` to False
    when L has no explicit time dependence to skip the d2L/dv dt terms.
    """
    n: int
    m: int
    L: Evaluator
    A: Optional[Evaluator] = None
    B: Optional[Evaluator] = None
    F_ext: Optional[Evaluator] = None
    degenerate: Optional[Sequence[int]] = None
    time_dependent: bool = True
    names: Optional[Sequence[str]] = None

    def __post_init__(self):
        if self.n < 1:
            raise DomainError('n', self.n)
        if not 0 <= self.m < self.n:
            raise DomainError('m', self.m, f"must satisfy 0 <= m < n = {self.n}")
        if self.m and (self.A is None or self.B is None):
            raise DomainError('A', None, "and B are required when m > 0")

    def constraint_matrix(self, t: float, q: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return np.zeros((0, self.n))
        return np.asarray(self.A(t, q, v), dtype=float).reshape(self.m, self.n)

    def constraint_affine(self, t: float, q: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return np.zeros(0)
        return np.asarray(self.B(t, q, v), dtype=float).reshape(self.m)

    def force(self, t: float, q: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.F_ext is None:
            return np.zeros(self.n)
        return np.asarray(self.F_ext(t, q, v), dtype=float).reshape(self.n)


@dataclass(frozen=True)
class AbstractState:
    t: float
    q: np.ndarray
    v: np.ndarray


@dataclass
class AccelerationSolution:
    """Accelerations, multipliers and the consistent velocity.

    ``a`` is NaN in degenerate directions; the velocities there are part of ``v``.
    Unpacks as ``a, lam``.
    """
    a: np.ndarray
    lam: np.ndarray
    v: np.ndarray
    iterations: int
    residual: float

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter((self.a, self.lam))


@dataclass
class LdavOptions:
    h: float = 1e-3
    h_min: float = 1e-9
    sample_dt: Optional[float] = None
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    proj_tol: float = 1e-8

    def __post_init__(self):
        for name in ('h', 'h_min', 'newton_tol', 'proj_tol'):
            if not getattr(self, name) > 0:
                raise DomainError(name, getattr(self, name))
        if self.newton_max_iter < 1:
            raise DomainError('newton_max_iter', self.newton_max_iter)

    @classmethod
    def from_config(cls, config: Dict[str, Any], **overrides) -> 'LdavOptions':
        settings = {key: value for key, value in config.get('ldav', {}).items()
                    if key in cls.__dataclass_fields__}
        settings.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**settings)


@dataclass(frozen=True)
class AbstractSample:
    state: AbstractState
    lam: np.ndarray

    @property
    def t(self) -> float:
        return self.state.t


@dataclass
class AbstractTrajectory:
    samples: List[AbstractSample]
    steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def q(self) -> np.ndarray:
        return np.array([s.state.q for s in self.samples])

    @property
    def v(self) -> np.ndarray:
        return np.array([s.state.v for s in self.samples])


# -- numerical derivatives ---------------------------------------------------------------

def _shifted(z: np.ndarray, i: int, h: float) -> np.ndarray:
    shifted = z.copy()
    shifted[i] += h
    return shifted


def _velocity_step(v: np.ndarray, i: int) -> float:
    return VELOCITY_STEP * max(1.0, abs(v[i]))


def gradient_q(sys: LagrangianSystem, t: float, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    grad = np.empty(sys.n)
    for j in range(sys.n):
        h = FIRST_STEP * max(1.0, abs(q[j]))
        grad[j] = (sys.L(t, _shifted(q, j, h), v) - sys.L(t, _shifted(q, j, -h), v)) / (2 * h)
    return grad


def gradient_v(sys: LagrangianSystem, t: float, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    # exact for Lagrangians at most quadratic in v, so the step can stay large
    grad = np.empty(sys.n)
    for i in range(sys.n):
        h = _velocity_step(v, i)
        grad[i] = (sys.L(t, q, _shifted(v, i, h)) - sys.L(t, q, _shifted(v, i, -h))) / (2 * h)
    return grad


def hessian_vq(sys: LagrangianSystem, t: float, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """H[i, j] = d2L / dv_i dq_j."""
    H = np.empty((sys.n, sys.n))
    for j in range(sys.n):
        hq = MIXED_STEP * max(1.0, abs(q[j]))
        q_plus, q_minus = _shifted(q, j, hq), _shifted(q, j, -hq)
        for i in range(sys.n):
            hv = _velocity_step(v, i)
            v_plus, v_minus = _shifted(v, i, hv), _shifted(v, i, -hv)
            H[i, j] = (sys.L(t, q_plus, v_plus) - sys.L(t, q_plus, v_minus)
                       - sys.L(t, q_minus, v_plus) + sys.L(t, q_minus, v_minus)) / (4 * hq * hv)
    return H


def hessian_vt(sys: LagrangianSystem, t: float, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    if not sys.time_dependent:
        return np.zeros(sys.n)
    ht = MIXED_STEP * max(1.0, abs(t))
    H = np.empty(sys.n)
    for i in range(sys.n):
        hv = _velocity_step(v, i)
        v_plus, v_minus = _shifted(v, i, hv), _shifted(v, i, -hv)
        H[i] = (sys.L(t + ht, q, v_plus) - sys.L(t + ht, q, v_minus)
                - sys.L(t - ht, q, v_plus) + sys.L(t - ht, q, v_minus)) / (4 * ht * hv)
    return H


def _second_difference(sys: LagrangianSystem, t: float, q: np.ndarray, v: np.ndarray,
                       i: int, j: int, hi: float, hj: float) -> float:
    if i == j:
        return (sys.L(t, q, _shifted(v, i, hi)) - 2 * sys.L(t, q, v) + sys.L(t, q, _shifted(v, i, -hi))) / hi ** 2
    pp = sys.L(t, q, _shifted(_shifted(v, i, hi), j, hj))
    pm = sys.L(t, q, _shifted(_shifted(v, i, hi), j, -hj))
    mp = sys.L(t, q, _shifted(_shifted(v, i, -hi), j, hj))
    mm = sys.L(t, q, _shifted(_shifted(v, i, -hi), j, -hj))
    return (pp - pm - mp + mm) / (4 * hi * hj)


def hessian_vv(sys: LagrangianSystem, t: float, q: np.ndarray, v: np.ndarray,
               directions: Sequence[int]) -> np.ndarray:
    """d2L/dv2 on ``directions`` x ``directions``, Richardson-extrapolated over (h, h/2)."""
    k = len(directions)
    H = np.empty((k, k))
    for a, i in enumerate(directions):
        for b, j in enumerate(directions[a:], start=a):
            hi, hj = _velocity_step(v, i), _velocity_step(v, j)
            coarse = _second_difference(sys, t, q, v, i, j, hi, hj)
            fine = _second_difference(sys, t, q, v, i, j, hi / 2, hj / 2)
            H[a, b] = H[b, a] = (4 * fine - coarse) / 3
    return H


def degenerate_directions(sys: LagrangianSystem, t: float, q: np.ndarray, v: np.ndarray) -> List[int]:
    if sys.degenerate is not None:
        return sorted(int(i) for i in sys.degenerate)
    diagonal = np.array([hessian_vv(sys, t, q, v, [i])[0, 0] for i in range(sys.n)])
    scale = max(1.0, float(np.max(np.abs(diagonal))))
    return [i for i in range(sys.n) if abs(diagonal[i]) <= DEGENERATE_RTOL * scale]


def _constraint_value(sys: LagrangianSystem, t: float, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return sys.constraint_matrix(t, q, v) @ v + sys.constraint_affine(t, q, v)


def _jacobian_columns(fn: Callable[[np.ndarray], np.ndarray], z: np.ndarray, columns: Sequence[int],
                      rows: int) -> np.ndarray:
    J = np.empty((rows, len(columns)))
    for c, j in enumerate(columns):
        h = FIRST_STEP * max(1.0, abs(z[j]))
        J[:, c] = (fn(_shifted(z, j, h)) - fn(_shifted(z, j, -h))) / (2 * h)
    return J


# -- public operations -------------------------------------------------------------------

def energy(sys: LagrangianSystem, t: float, q: np.ndarray, v: np.ndarray) -> float:
    """E = <dL/dv, v> - L."""
    q, v = np.asarray(q, dtype=float), np.asarray(v, dtype=float)
    return float(gradient_v(sys, t, q, v) @ v - sys.L(t, q, v))


def constraint_residual(sys: LagrangianSystem, t: float, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return _constraint_value(sys, t, np.asarray(q, dtype=float), np.asarray(v, dtype=float))


def _check_constraint_rank(A: np.ndarray, columns: Sequence[int], what: str) -> None:
    if A.shape[0] == 0:
        return
    block = A[:, list(columns)]
    if block.shape[1] < block.shape[0]:
        raise ConstraintRankError(f"{what}: {block.shape[0]} constraint rows on {block.shape[1]} columns")
    s = np.linalg.svd(block, compute_uv=False)
    if s[-1] <= SINGULAR_RTOL * max(s[0], 1e-300):
        raise ConstraintRankError(f"{what} are rank deficient", condition=s[0] / s[-1] if s[-1] > 0 else math.inf)


def _solve_linear(J: np.ndarray, r: np.ndarray, names: Sequence[str]) -> np.ndarray:
    U, s, Vt = np.linalg.svd(J)
    if s[-1] <= SINGULAR_RTOL * s[0]:
        null = [[float(x) for x in Vt[k]] for k in range(len(s)) if s[k] <= SINGULAR_RTOL * s[0]]
        labelled = ', '.join(names[int(np.argmax(np.abs(row)))] for row in null)
        raise ConstraintRankError(f"singular saddle-point matrix (null directions dominated by {labelled})",
                                  condition=s[0] / s[-1] if s[-1] > 0 else math.inf, null_directions=null)
    return Vt.T @ ((U.T @ r) / s)


def solve_accel(sys: LagrangianSystem, t: float, q: np.ndarray, v: np.ndarray,
                tol: float = 1e-10, max_iter: int = 50,
                degenerate: Optional[Sequence[int]] = None) -> AccelerationSolution:
    """Accelerations and multipliers of the constrained Euler-Lagrange equations at (t, q, v).

    Velocities in degenerate directions are only an initial guess and are returned solved.
    """
    q = np.asarray(q, dtype=float)
    v = np.array(v, dtype=float)
    n, m = sys.n, sys.m
    D = list(degenerate) if degenerate is not None else degenerate_directions(sys, t, q, v)
    R = [i for i in range(n) if i not in D]
    velocity_level = bool(D)

    A0 = sys.constraint_matrix(t, q, v)
    _check_constraint_rank(A0, range(n), "constraint rows")
    if velocity_level and m:
        _check_constraint_rank(A0, D, "constraint rows restricted to the degenerate directions")
    elif not velocity_level and D:
        raise ConstraintRankError("degenerate directions without constraint rows to fix their velocities")

    names = list(sys.names) if sys.names else [f"z{i}" for i in range(n)]
    unknown_names = [f"a[{names[i]}]" for i in R] + [f"v[{names[i]}]" for i in D] + [f"lambda{r}" for r in range(m)]
    u = np.concatenate([np.zeros(len(R)), v[D], np.zeros(m)])
    nR, nD = len(R), len(D)

    def unpack(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        v_full = v.copy()
        v_full[D] = u[nR:nR + nD]
        a = np.full(n, np.nan)
        a[R] = u[:nR]
        return a, v_full, u[nR + nD:]

    residual_norm = math.inf
    for iteration in range(1, max_iter + 1):
        a, v_full, lam = unpack(u)
        a_R = a[R]
        Hvq = hessian_vq(sys, t, q, v_full)
        Hvv = hessian_vv(sys, t, q, v_full, R) if R else np.zeros((0, 0))
        g = gradient_q(sys, t, q, v_full)
        A = sys.constraint_matrix(t, q, v_full)
        F = sys.force(t, q, v_full)

        el = Hvq @ v_full + hessian_vt(sys, t, q, v_full) - g - A.T @ lam - F
        el[R] += Hvv @ a_R

        J = np.zeros((n + m, nR + nD + m))
        J[np.ix_(R, range(nR))] = Hvv
        J[:n, nR + nD:] = -A.T
        if D:
            def generalized_force(vd: np.ndarray) -> np.ndarray:
                vv = v_full.copy()
                vv[D] = vd
                return sys.constraint_matrix(t, q, vv).T @ lam + sys.force(t, q, vv)

            J[:n, nR:nR + nD] = (Hvq[:, D] - Hvq[D, :].T
                                 - _jacobian_columns(generalized_force, v_full[D].copy(), range(nD), n))

        if velocity_level:
            constraint = _constraint_value(sys, t, q, v_full)
            if m:
                def c_of_vd(vd: np.ndarray) -> np.ndarray:
                    vv = v_full.copy()
                    vv[D] = vd
                    return _constraint_value(sys, t, q, vv)
                J[n:, nR:nR + nD] = _jacobian_columns(c_of_vd, v_full[D].copy(), range(nD), m)
        else:
            Cv = _jacobian_columns(lambda vv: _constraint_value(sys, t, q, vv), v_full, range(n), m)
            Cq = _jacobian_columns(lambda qq: _constraint_value(sys, t, qq, v_full), q, range(n), m)
            ht = FIRST_STEP * max(1.0, abs(t))
            Ct = (_constraint_value(sys, t + ht, q, v_full) - _constraint_value(sys, t - ht, q, v_full)) / (2 * ht)
            constraint = Ct + Cq @ v_full + Cv[:, R] @ a_R
            J[n:, :nR] = Cv[:, R]

        r = np.concatenate([el, constraint])
        residual_norm = float(np.max(np.abs(r))) if r.size else 0.0
        delta = _solve_linear(J, -r, unknown_names)
        u = u + delta
        logger.debug(f"Newton iteration {iteration}: residual {residual_norm:.3e}, step {np.max(np.abs(delta)):.3e}")
        # without degenerate directions the equations are affine in (a, lambda)
        if not velocity_level or np.max(np.abs(delta)) <= tol * max(1.0, float(np.max(np.abs(u)))):
            a, v_full, lam = unpack(u)
            return AccelerationSolution(a, lam, v_full, iteration, residual_norm)

    raise DivergenceError(max_iter, residual_norm)


def project_velocity(sys: LagrangianSystem, t: float, q: np.ndarray, v: np.ndarray,
                     tol: float = 1e-8, max_iter: int = 5) -> np.ndarray:
    """v <- v + A^T (A A^T)^{-1} (-B - A v), repeated while A or B move with v."""
    v = np.array(v, dtype=float)
    for _ in range(max_iter):
        A = sys.constraint_matrix(t, q, v)
        residual = A @ v + sys.constraint_affine(t, q, v)
        if residual.size == 0 or np.max(np.abs(residual)) <= tol * max(1.0, float(np.max(np.abs(A @ v)))):
            break
        v = v + A.T @ np.linalg.solve(A @ A.T, -residual)
    return v


def integrate_abstract(sys: LagrangianSystem, state0: AbstractState, t_final: float,
                       options: Optional[LdavOptions] = None) -> AbstractTrajectory:
    """Fixed-step RK4 on (q, regular velocities); degenerate velocities are re-solved at every stage."""
    options = options or LdavOptions()
    t0 = float(state0.t)
    q = np.array(state0.q, dtype=float)
    v = np.array(state0.v, dtype=float)
    D = degenerate_directions(sys, t0, q, v)
    R = [i for i in range(sys.n) if i not in D]

    def solve(t: float, q: np.ndarray, v: np.ndarray) -> AccelerationSolution:
        return solve_accel(sys, t, q, v, options.newton_tol, options.newton_max_iter, D)

    def settle(t: float, q: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if D:
            solution = solve(t, q, v)
            return solution.v, solution.lam
        v = project_velocity(sys, t, q, v, options.proj_tol)
        return v, solve(t, q, v).lam

    def derivative(t: float, q: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        solution = solve(t, q, v)
        return solution.v, solution.a[R]

    def rk4(t: float, q: np.ndarray, v: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
        # consistent velocities of the previous stage seed the degenerate unknowns
        def stage(guess: np.ndarray, dv: np.ndarray) -> np.ndarray:
            stage_v = guess.copy()
            stage_v[R] = v[R] + dv
            return stage_v

        k1q, k1v = derivative(t, q, v)
        k2q, k2v = derivative(t + h / 2, q + h / 2 * k1q, stage(k1q, h / 2 * k1v))
        k3q, k3v = derivative(t + h / 2, q + h / 2 * k2q, stage(k2q, h / 2 * k2v))
        k4q, k4v = derivative(t + h, q + h * k3q, stage(k3q, h * k3v))
        q_new = q + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
        v_new = k4q.copy()
        v_new[R] = v[R] + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        return q_new, v_new

    def advance(t: float, q: np.ndarray, v: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        try:
            q_new, v_new = rk4(t, q, v, h)
            v_new, lam = settle(t + h, q_new, v_new)
            return q_new, v_new, lam
        except (DivergenceError, DomainError) as exc:
            if h / 2 < options.h_min:
                raise StepUnderflowError(t, h / 2) from exc
            logger.debug(f"Step failed at t={t:.6g} ({exc}), splitting h={h:.3e}")
            q_mid, v_mid, _ = advance(t, q, v, h / 2)
            return advance(t + h / 2, q_mid, v_mid, h / 2)

    v, lam = settle(t0, q, v)
    n_steps = max(1, int(math.ceil((t_final - t0) / options.h - 1e-9)))
    h = (t_final - t0) / n_steps
    every = 1 if options.sample_dt is None else max(1, int(round(options.sample_dt / h)))
    samples = [AbstractSample(AbstractState(t0, q.copy(), v.copy()), lam)]
    logger.info(f"Integrating abstract system ({sys.n} coordinates, {sys.m} constraints, "
                f"{len(D)} degenerate) for {n_steps} steps of {h:g}")

    for step in range(1, n_steps + 1):
        t = t0 + (step - 1) * h
        q, v, lam = advance(t, q, v, h)
        residual = constraint_residual(sys, t + h, q, v)
        scale = max(1.0, float(np.max(np.abs(sys.constraint_matrix(t + h, q, v) @ v))) if sys.m else 1.0)
        if residual.size and np.max(np.abs(residual)) > options.proj_tol * scale:
            raise IntegrityError(f"constraint drift {np.max(np.abs(residual)):.3e} above {options.proj_tol:g}",
                                 t=t + h)
        if step % every == 0 or step == n_steps:
            samples.append(AbstractSample(AbstractState(t0 + step * h, q.copy(), v.copy()), lam))

    logger.info(f"Abstract integration finished at t={t_final:g}")
    return AbstractTrajectory(samples, n_steps)


# -- embedding of open thermodynamic systems ---------------------------------------------

class OpenSystemEmbedding(LagrangianSystem):
    """Single-compartment open system written as a constrained Lagrangian system.

    Coordinates are (S, N, Gamma, W, Sigma), preceded by (q, x) for the piston. The
    Lagrangian is L - U + Wdot N + (S - Sigma) Gammadot and the single constraint row is
    the entropy-production equation.
    """

    def __init__(self, model: NetworkModel, affine_sign: float = 1.0):
        if model.system_class not in (SIMPLE_SINGLE, SIMPLE_MECHANICAL):
            raise ScopeError(f"no Lagrangian embedding for {model.system_class}; "
                             f"supported: {SIMPLE_SINGLE}, {SIMPLE_MECHANICAL}")
        self.model = model
        self.gas = model.gas
        self.dynamics = Dynamics(model)
        self.layout: StateLayout = state_layout(model)
        self.mechanical = model.system_class == SIMPLE_MECHANICAL
        self.affine_sign = affine_sign
        offset = 2 if self.mechanical else 0
        self.iS, self.iN, self.iGamma, self.iW, self.iSigma = (offset + i for i in range(5))
        names = (['q', 'x'] if self.mechanical else []) + ['S', 'N', 'Gamma', 'W', 'Sigma']
        super().__init__(n=len(names), m=1, L=self._lagrangian, A=self._A, B=self._B, F_ext=self._force,
                         degenerate=list(range(offset, offset + 5)), time_dependent=False, names=names)

    def _volume(self, z: np.ndarray) -> float:
        if self.mechanical:
            return self.model.mechanics.A_section * float(z[0])
        return self.model.compartments[0].V

    def _lagrangian(self, t: float, z: np.ndarray, zdot: np.ndarray) -> float:
        S, N, Sigma = float(z[self.iS]), float(z[self.iN]), float(z[self.iSigma])
        value = (-internal_energy_total(self.gas, S, N, self._volume(z))
                 + zdot[self.iW] * N + (S - Sigma) * zdot[self.iGamma])
        if self.mechanical:
            value += 0.5 * self.model.mechanics.M * zdot[0] ** 2 + 0.5 * self.gas.M0 * N * zdot[1] ** 2
        return value

    def _port_states(self, t: float, z: np.ndarray, zdot: np.ndarray):
        own = intensive_from_extensive(self.gas, float(z[self.iS]), float(z[self.iN]), self._volume(z))
        xdot = float(zdot[1]) if self.mechanical else 0.0
        return own, [self.dynamics.resolve(t, k, port, own, xdot) for k, port in self.dynamics.attached_ports]

    def _A(self, t: float, z: np.ndarray, zdot: np.ndarray) -> np.ndarray:
        own, ports = self._port_states(t, z, zdot)
        row = np.zeros((1, self.n))
        row[0, self.iGamma] = sum(r.J_S for r in ports)
        row[0, self.iW] = sum(r.J for r in ports)
        row[0, self.iSigma] = own.T
        if self.mechanical:
            F_fr_q = -self.model.mechanics.lambda_fr * (zdot[0] - zdot[1])
            row[0, 0] = F_fr_q
            row[0, 1] = -F_fr_q + sum(self.gas.M0 * r.J * r.v_a for r in ports)
        return row

    def _B(self, t: float, z: np.ndarray, zdot: np.ndarray) -> np.ndarray:
        _, ports = self._port_states(t, z, zdot)
        M0 = self.gas.M0
        total = 0.0
        for r in ports:
            mu_a = r.mu_a - 0.5 * M0 * r.v_a ** 2 if self.mechanical else r.mu_a
            J_x = M0 * r.J * r.v_a if self.mechanical else 0.0
            total += J_x * r.v_a + r.J * mu_a + r.J_S * r.T_a
        return np.array([-self.affine_sign * total])

    def _force(self, t: float, z: np.ndarray, zdot: np.ndarray) -> np.ndarray:
        force = np.zeros(self.n)
        if self.mechanical:
            force[0] = self.model.mechanics.F_ext_q(t)
            force[1] = self.model.mechanics.F_ext_x(t)
        return force

    def from_system_state(self, state: SystemState) -> AbstractState:
        """Coordinates from a network state; velocities from the specialised right-hand side."""
        lay, y = self.layout, state.y
        dy = self.dynamics.rhs(state.t, y)
        z = np.zeros(self.n)
        zdot = np.zeros(self.n)
        pairs = [(self.iS, lay.S[0]), (self.iN, lay.N[0]), (self.iGamma, lay.Gamma[0]),
                 (self.iW, lay.W[0]), (self.iSigma, lay.Sigma[0])]
        if self.mechanical:
            iq, iqdot, ix, ixdot = lay.mechanics
            z[0], z[1] = y[iq], y[ix]
            zdot[0], zdot[1] = y[iqdot], y[ixdot]
        for i, slot in pairs:
            z[i] = y[slot]
            zdot[i] = dy[slot]
        return AbstractState(state.t, z, zdot)

    def to_system_state(self, state: AbstractState) -> SystemState:
        lay = self.layout
        y = np.zeros(len(lay))
        for i, slot in ((self.iS, lay.S[0]), (self.iN, lay.N[0]), (self.iGamma, lay.Gamma[0]),
                        (self.iW, lay.W[0]), (self.iSigma, lay.Sigma[0])):
            y[slot] = state.q[i]
        if self.mechanical:
            iq, iqdot, ix, ixdot = lay.mechanics
            y[[iq, iqdot, ix, ixdot]] = [state.q[0], state.v[0], state.q[1], state.v[1]]
        return SystemState(state.t, y, lay)


def embed_open_system(model: NetworkModel, affine_sign: float = 1.0) -> OpenSystemEmbedding:
    """Lagrangian form of a simple_single or simple_mechanical model.

    ``affine_sign`` = -1 flips the constraint's affine term; used to show that a wrong
    embedding is caught by cross-validation.
    """
    return OpenSystemEmbedding(model, affine_sign)
