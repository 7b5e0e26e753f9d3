from typing import Any, Dict, List, Optional, Sequence


class ThermoNetworkError(Exception):
    """Base class for every error raised by the package."""


class DomainError(ThermoNetworkError, ValueError):
    """A thermodynamic quantity is outside the valid domain."""

    def __init__(self, field: str, value: Any, rule: str = "must be positive"):
        self.field = field
        self.value = value
        self.rule = rule
        super().__init__(f"{field} {rule}, got {value}")


class ValidationError(ThermoNetworkError):
    """A network declaration breaks one or more model rules."""

    def __init__(self, violations: Sequence[Any]):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"model validation failed with {len(self.violations)} violation(s):\n{lines}")


class StructuralError(ThermoNetworkError):
    """A state vector does not match its layout."""


class IntegrityError(ThermoNetworkError):
    """The state left the physical domain (NaN, N <= 0, T <= 0)."""

    def __init__(self, message: str, t: Optional[float] = None, snapshot: Optional[Dict[str, float]] = None):
        self.t = t
        self.snapshot = dict(snapshot or {})
        where = f" at t={t:g}" if t is not None else ""
        super().__init__(f"{message}{where}")


class GeometryError(IntegrityError):
    """The piston position no longer gives a positive volume."""


class ScopeError(ThermoNetworkError):
    """The operation does not support the requested system class."""


class ConstraintRankError(ThermoNetworkError):
    """The constraint rows or the saddle matrix are rank deficient."""

    def __init__(self, message: str, condition: float = float("inf"),
                 null_directions: Optional[List[List[float]]] = None):
        self.condition = condition
        self.null_directions = null_directions or []
        super().__init__(f"{message} (condition estimate {condition:.3e})")


class DivergenceError(ThermoNetworkError):
    """Newton iteration did not converge."""

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"Newton iteration did not converge after {iterations} iterations "
                         f"(residual norm {residual:.3e})")


class StepUnderflowError(ThermoNetworkError):
    """The step size dropped below the configured minimum."""

    def __init__(self, t: float, h: float):
        self.t = t
        self.h = h
        super().__init__(f"step size {h:.3e} below minimum at t={t:g}")


class ScenarioError(ThermoNetworkError):
    """Base for scenario document problems."""


class ScenarioSyntaxError(ScenarioError):
    """A located syntax error in a scenario document."""

    def __init__(self, message: str, line: int, column: int, expected: Sequence[str] = ()):
        self.line = line
        self.column = column
        self.expected = list(expected)
        hint = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"line {line}, column {column}: {message}{hint}")


class ScenarioSemanticError(ScenarioError):
    """A scenario parsed but describes an invalid model."""

    def __init__(self, diagnostics: Sequence[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class AuditPreconditionError(ThermoNetworkError):
    """An audit was asked to check a model it does not apply to."""
