"""
l1synth - Exception Hierarchy

Structured exceptions carrying a message and a details dict, so callers (CLI, component
entry point, harness) can map failures to exit codes and log context.
"""

from typing import Optional, Dict, Any


class L1SynthError(Exception):
    """Base exception for all l1synth errors"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def __str__(self):
        return f"{self.__class__.__name__}: {self.message}"


class ValidationError(L1SynthError):
    """
    Invalid argument or violated precondition.

    Raised for non-finite matrices, shape mismatches, sparsity levels out of range and
    dictionaries with more rows than columns.
    """
    pass


class ConfigError(L1SynthError):
    """
    Invalid experiment configuration.

    Raised for unknown keys, empty grids, unknown law or dictionary kinds. The CLI exits
    with code 2.
    """
    pass


class NumericalAbortError(L1SynthError):
    """
    An iterative method produced non-finite values.

    details carries the iteration index and the last finite diagnostics. The CLI exits
    with code 3.
    """
    pass


class InfeasibleAtSizeError(L1SynthError):
    """
    A combinatorial enumeration exceeds its guard.

    This is not a negative answer: the property was simply not checked.
    """
    pass


class LPError(L1SynthError):
    """Simplex breakdown (no feasible start or pivot on a vanishing element)."""
    pass
