"""Exception hierarchy.

Errors are split into two broad families so callers (in particular the
command line front end) can distinguish bad input from numerical failure:

* :class:`InputError` — malformed data, schema mismatches, unparseable
  model strings, invalid argument combinations.
* :class:`NumericError` — a well-posed request whose computation failed
  (non-convergence, degenerate fits, singular designs).
"""
from __future__ import annotations

__all__ = [
    "PsrKitError",
    "InputError",
    "SchemaError",
    "ModelSpecError",
    "NumericError",
    "ConvergenceError",
    "DegenerateFitError",
]


class PsrKitError(Exception):
    """Base class for all errors raised by this package."""


class InputError(PsrKitError, ValueError):
    """The caller supplied something malformed or inconsistent."""


class SchemaError(InputError):
    """A column schema declaration does not match the data."""


class ModelSpecError(InputError):
    """A model specification string could not be parsed."""


class NumericError(PsrKitError, RuntimeError):
    """A numerical procedure failed on well-formed input."""


class ConvergenceError(NumericError):
    """An iterative fit did not reach the convergence tolerance."""


class DegenerateFitError(NumericError):
    """A fit is degenerate (zero variance, empty support, exact fit)."""
