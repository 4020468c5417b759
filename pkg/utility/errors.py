from typing import Any, List, Optional

import numpy as np


class SparseBpiError(Exception):
    """Base error; carries the process exit code the CLI should use."""

    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class InputError(SparseBpiError, ValueError):
    """Invalid arguments: index out of range, invariant violations in supplied data."""


class InternalError(SparseBpiError):
    """A numerical routine failed in a way valid inputs should never cause."""


class LpStallError(InternalError):
    """Simplex iteration cap reached; carries the best feasible point found."""

    def __init__(self, detail: str, primal: Optional[np.ndarray] = None, objective_value: Optional[float] = None):
        super().__init__(detail)
        self.primal = primal
        self.objective_value = objective_value


class PomdpParseError(InputError):
    def __init__(self, diagnostics: List[Any]):
        errors = [d for d in diagnostics if getattr(d, "severity", "error") == "error"]
        summary = "; ".join(f"line {d.line}: {d.message}" for d in errors[:5])
        if len(errors) > 5:
            summary += f"; ... ({len(errors) - 5} more)"
        super().__init__(f"POMDP file could not be parsed: {summary}")
        self.diagnostics = diagnostics


class PolicySchemaError(InputError):
    """Saved policy does not match the document schema or the POMDP dimensions."""
