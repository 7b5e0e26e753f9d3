"""
Ideal-gas state equations.

Molar properties from (T, p), inversion of the entropy relation from extensive state, and
the fundamental relation U(S, V, N) that the dynamics differentiate. Every function is pure;
``GasSpec`` and ``MolarState`` are immutable values.

All quantities are SI: K, Pa, m³, mol, J.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from scipy.optimize import brentq

from thermo_network.utils.errors import DomainError

logger = logging.getLogger(__name__)

REFERENCE_TOLERANCE = 1e-12
BRACKET_T_MIN = 1e-3
BRACKET_T_MAX = 1e6


def _close(a: float, b: float, scale: float, rtol: float) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b), abs(scale))


@dataclass(frozen=True)
class GasSpec:
    """Ideal-gas constants and the reference state all property formulas hang off.

    ``h_ref`` and ``mu_ref`` default to the values implied by ``u_ref`` and ``s_ref``
    (h_ref = u_ref + R T_ref, mu_ref = h_ref - T_ref s_ref). Explicit values must agree.
    """
    R: float = 8.314462618
    c_V: float = 2.5 * 8.314462618
    c_p: float = 3.5 * 8.314462618
    T_ref: float = 298.15
    p_ref: float = 101325.0
    u_ref: float = 0.0
    s_ref: float = 0.0
    M0: float = 0.02897
    h_ref: Optional[float] = None
    mu_ref: Optional[float] = None

    def __post_init__(self):
        for name in ('R', 'c_V', 'T_ref', 'p_ref', 'M0'):
            value = getattr(self, name)
            if not value > 0:
                raise DomainError(name, value)
        if not _close(self.c_p, self.c_V + self.R, self.c_p, REFERENCE_TOLERANCE):
            raise DomainError('c_p', self.c_p, f"must equal c_V + R = {self.c_V + self.R}")

        h_ref = self.u_ref + self.R * self.T_ref if self.h_ref is None else self.h_ref
        if not _close(h_ref, self.u_ref + self.R * self.T_ref, self.R * self.T_ref, REFERENCE_TOLERANCE):
            raise DomainError('h_ref', h_ref, f"must equal u_ref + R*T_ref = {self.u_ref + self.R * self.T_ref}")
        object.__setattr__(self, 'h_ref', h_ref)

        mu_ref = h_ref - self.T_ref * self.s_ref if self.mu_ref is None else self.mu_ref
        expected = h_ref - self.T_ref * self.s_ref
        if not _close(mu_ref, expected, self.R * self.T_ref, REFERENCE_TOLERANCE):
            raise DomainError('mu_ref', mu_ref, f"must equal h_ref - T_ref*s_ref = {expected}")
        object.__setattr__(self, 'mu_ref', mu_ref)

    @classmethod
    def default_air(cls) -> 'GasSpec':
        """Diatomic ideal gas with the molar mass of dry air."""
        return cls()

    @property
    def v_ref(self) -> float:
        """Molar volume at the reference point."""
        return self.R * self.T_ref / self.p_ref

    def with_reference_shift(self, du: float = 0.0, ds: float = 0.0) -> 'GasSpec':
        """Same gas with shifted energy/entropy references, other references recomputed."""
        return replace(self, u_ref=self.u_ref + du, s_ref=self.s_ref + ds, h_ref=None, mu_ref=None)


@dataclass(frozen=True)
class MolarState:
    T: float
    p: float
    v: float
    u: float
    s: float
    h: float
    mu: float


def molar_entropy(gas: GasSpec, T: float, p: float) -> float:
    return -gas.R * math.log(p / gas.p_ref) + gas.c_p * math.log(T / gas.T_ref) + gas.s_ref


def molar_state_from_Tp(gas: GasSpec, T: float, p: float) -> MolarState:
    """All molar quantities of the ideal gas at temperature T and pressure p."""
    if not T > 0 or math.isinf(T):
        raise DomainError('T', T)
    if not p > 0 or math.isinf(p):
        raise DomainError('p', p)

    dT = T - gas.T_ref
    log_p = math.log(p / gas.p_ref)
    log_T = math.log(T / gas.T_ref)
    v = gas.R * T / p
    u = gas.c_V * dT + gas.u_ref
    s = -gas.R * log_p + gas.c_p * log_T + gas.s_ref
    h = gas.c_p * dT + gas.h_ref
    mu = gas.c_p * dT + gas.R * T * log_p - T * gas.c_p * log_T - dT * gas.s_ref + gas.mu_ref
    return MolarState(T=T, p=p, v=v, u=u, s=s, h=h, mu=mu)


def _check_extensive(N: float, V: float) -> None:
    if not N > 0 or math.isinf(N):
        raise DomainError('N', N)
    if not V > 0 or math.isinf(V):
        raise DomainError('V', V)


def temperature_from_extensive(gas: GasSpec, S: float, N: float, V: float) -> float:
    """Temperature of N moles in volume V carrying entropy S (closed form)."""
    _check_extensive(N, V)
    exponent = (S / N - gas.s_ref - gas.R * math.log((V / N) / gas.v_ref)) / gas.c_V
    try:
        T = gas.T_ref * math.exp(exponent)
    except OverflowError:
        raise DomainError('S', S, "gives a temperature outside the floating-point range")
    if not T > 0 or math.isinf(T):
        raise DomainError('S', S, "gives a temperature outside the floating-point range")
    return T


def temperature_bracketed(gas: GasSpec, S: float, N: float, V: float,
                          lo: float = BRACKET_T_MIN, hi: float = BRACKET_T_MAX) -> float:
    """Bracketing root-find of N*s(T, NRT/V) = S; the oracle for the closed form."""
    _check_extensive(N, V)

    def residual(T: float) -> float:
        return N * molar_entropy(gas, T, N * gas.R * T / V) - S

    f_lo, f_hi = residual(lo), residual(hi)
    if f_lo * f_hi > 0:
        raise DomainError('S', S, f"has no temperature root in [{lo}, {hi}] K")
    return brentq(residual, lo, hi, xtol=1e-14, rtol=4 * 2.220446049250313e-16, maxiter=500)


def intensive_from_extensive(gas: GasSpec, S: float, N: float, V: float) -> MolarState:
    T = temperature_from_extensive(gas, S, N, V)
    return molar_state_from_Tp(gas, T, N * gas.R * T / V)


def internal_energy_total(gas: GasSpec, S: float, N: float, V: float) -> float:
    """U(S, V, N) = N u(T(S, N, V))."""
    T = temperature_from_extensive(gas, S, N, V)
    return N * (gas.c_V * (T - gas.T_ref) + gas.u_ref)


# Shared-entropy compartments: K sub-volumes of the same gas at one temperature whose
# entropies add up to a single S. Each sub-volume's mu^k is the ideal-gas mu at (T, p_k).

def shared_temperature(gas: GasSpec, S: float, moles: Sequence[float], volumes: Sequence[float]) -> float:
    if len(moles) != len(volumes) or not moles:
        raise DomainError('moles', list(moles), "must match volumes and be non-empty")
    total = 0.0
    configurational = 0.0
    for N, V in zip(moles, volumes):
        _check_extensive(N, V)
        total += N
        configurational += N * (gas.R * math.log((V / N) / gas.v_ref) + gas.s_ref)
    exponent = (S - configurational) / (total * gas.c_V)
    try:
        T = gas.T_ref * math.exp(exponent)
    except OverflowError:
        raise DomainError('S', S, "gives a temperature outside the floating-point range")
    if not T > 0 or math.isinf(T):
        raise DomainError('S', S, "gives a temperature outside the floating-point range")
    return T


def shared_temperature_bracketed(gas: GasSpec, S: float, moles: Sequence[float], volumes: Sequence[float],
                                 lo: float = BRACKET_T_MIN, hi: float = BRACKET_T_MAX) -> float:
    for N, V in zip(moles, volumes):
        _check_extensive(N, V)

    def residual(T: float) -> float:
        return sum(N * molar_entropy(gas, T, N * gas.R * T / V) for N, V in zip(moles, volumes)) - S

    if residual(lo) * residual(hi) > 0:
        raise DomainError('S', S, f"has no temperature root in [{lo}, {hi}] K")
    return brentq(residual, lo, hi, xtol=1e-14, rtol=4 * 2.220446049250313e-16, maxiter=500)


def internal_energy_shared(gas: GasSpec, S: float, moles: Sequence[float], volumes: Sequence[float]) -> float:
    T = shared_temperature(gas, S, moles, volumes)
    return sum(moles) * (gas.c_V * (T - gas.T_ref) + gas.u_ref)
