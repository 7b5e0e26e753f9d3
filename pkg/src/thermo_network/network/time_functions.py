"""Prescribed functions of time used for port flows, inlet states, heat sources and forces."""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from thermo_network.utils.errors import DomainError

logger = logging.getLogger(__name__)

CONSTANT = 'constant'
RAMP = 'ramp'
TABLE = 'table'
KINDS = (CONSTANT, RAMP, TABLE)


@dataclass(frozen=True)
class TimeFunction:
    """A scalar function of time: constant, linear ramp, or sampled table.

    A ramp holds ``start`` before ``t0`` and ``end`` after ``t1``. A table interpolates
    linearly between its samples and clamps to the end values outside them.
    """
    kind: str = CONSTANT
    value: float = 0.0
    start: float = 0.0
    end: float = 0.0
    t0: float = 0.0
    t1: float = 0.0
    times: Tuple[float, ...] = ()
    values: Tuple[float, ...] = ()
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError('kind', self.kind, f"must be one of {', '.join(KINDS)}")
        if self.kind == RAMP and not self.t1 > self.t0:
            raise DomainError('t1', self.t1, f"must exceed t0 = {self.t0}")
        if self.kind == TABLE:
            object.__setattr__(self, 'times', tuple(float(t) for t in self.times))
            object.__setattr__(self, 'values', tuple(float(v) for v in self.values))
            if not self.times or len(self.times) != len(self.values):
                raise DomainError('table', len(self.times), "needs matching, non-empty time and value columns")
            if any(b <= a for a, b in zip(self.times, self.times[1:])):
                raise DomainError('table', list(self.times), "times must be strictly increasing")
        for name in ('value', 'start', 'end', 't0', 't1'):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(name, getattr(self, name), "must be finite")

    @classmethod
    def constant(cls, value: float) -> 'TimeFunction':
        return cls(kind=CONSTANT, value=float(value))

    @classmethod
    def ramp(cls, start: float, end: float, t0: float, t1: float) -> 'TimeFunction':
        return cls(kind=RAMP, start=float(start), end=float(end), t0=float(t0), t1=float(t1))

    @classmethod
    def table(cls, times, values, source: Optional[str] = None) -> 'TimeFunction':
        return cls(kind=TABLE, times=tuple(times), values=tuple(values), source=source)

    def __call__(self, t: float) -> float:
        if self.kind == CONSTANT:
            return self.value
        if self.kind == RAMP:
            if t <= self.t0:
                return self.start
            if t >= self.t1:
                return self.end
            return self.start + (self.end - self.start) * (t - self.t0) / (self.t1 - self.t0)
        return float(np.interp(t, self.times, self.values))

    def bounds(self) -> Tuple[float, float]:
        """Smallest and largest value the function ever takes."""
        if self.kind == CONSTANT:
            return self.value, self.value
        if self.kind == RAMP:
            return min(self.start, self.end), max(self.start, self.end)
        return min(self.values), max(self.values)

    @property
    def is_zero(self) -> bool:
        low, high = self.bounds()
        return low == 0.0 and high == 0.0


ZERO = TimeFunction.constant(0.0)
