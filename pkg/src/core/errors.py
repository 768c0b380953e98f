"""Exception hierarchy shared by every sivctl module"""

from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple


class SivError(Exception):
    """Base class for all toolkit errors"""

    def details(self) -> Dict[str, Any]:
        """Machine-readable payload for the CLI error JSON"""
        return {}


class ValidationError(SivError):
    """One or more values violate a documented precondition"""

    def __init__(self, violations: Iterable[Tuple[str, str]]):
        """
        Initialize validation error

        Args:
            violations: (key, message) pairs; all of them are reported
        """
        self.violations: List[Tuple[str, str]] = list(violations)
        super().__init__(self._render())

    @classmethod
    def single(cls, key: str, message: str) -> 'ValidationError':
        return cls([(key, message)])

    def _render(self) -> str:
        if not self.violations:
            return "validation failed"
        return "; ".join(f"{key}: {message}" for key, message in self.violations)

    def details(self) -> Dict[str, Any]:
        return {'violations': [{'key': k, 'message': m} for k, m in self.violations]}


class ReducibleGeneratorError(ValidationError):
    """Generator graph is not strongly connected"""

    def __init__(self, components: Sequence[Sequence[int]]):
        self.components = [list(c) for c in components]
        super().__init__([(
            'generator',
            f"generator is reducible: strongly connected components {self.components}"
        )])

    def details(self) -> Dict[str, Any]:
        return {'components': self.components}


class ConfigError(ValidationError):
    """Configuration file could not be parsed or failed validation"""

    def __init__(self, violations: Iterable[Tuple[str, str]],
                 line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        super().__init__(violations)

    def details(self) -> Dict[str, Any]:
        data = super().details()
        if self.line is not None:
            data['line'] = self.line
            data['column'] = self.column
        return data


class EigenSolverError(SivError):
    """Dense eigen-solver did not converge"""

    def __init__(self, message: str, iterations: int):
        self.iterations = iterations
        super().__init__(f"{message} (after {iterations} iterations)")

    def details(self) -> Dict[str, Any]:
        return {'iterations': self.iterations}


class IntegrationBlowupError(SivError):
    """A stepping update produced NaN or Inf"""

    def __init__(self, component: str, term: str, cell: int, step: Optional[int] = None):
        self.component = component
        self.term = term
        self.cell = cell
        self.step = step
        where = f"cell {cell}" if step is None else f"step {step}, cell {cell}"
        super().__init__(f"non-finite {component} update in term '{term}' at {where}")

    def at_step(self, step: int) -> 'IntegrationBlowupError':
        """Copy of this error tagged with the step index"""
        return IntegrationBlowupError(self.component, self.term, self.cell, step)

    def details(self) -> Dict[str, Any]:
        return {'component': self.component, 'term': self.term,
                'cell': self.cell, 'step': self.step}


class ExcitationError(SivError):
    """Integral Lyapunov least-squares system is rank deficient"""

    def __init__(self, directions: Sequence[str], rank: int, size: int):
        self.directions = list(directions)
        self.rank = rank
        self.size = size
        super().__init__(
            f"insufficient excitation: rank {rank} < {size}; deficient directions "
            f"{self.directions}. Use a richer behavior policy (e.g. uniform random "
            f"controls redrawn every window) or more paths."
        )

    def details(self) -> Dict[str, Any]:
        return {'directions': self.directions, 'rank': self.rank, 'size': self.size}
