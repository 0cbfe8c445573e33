"""Structured exceptions shared across the package.

Every error that a caller might want to branch on carries its diagnostic
payload as attributes, not just in the message string.
"""

from __future__ import annotations


class ModLindleyError(Exception):
    """Base class for all package errors."""


class ConfigError(ModLindleyError):
    """Invalid instance configuration; ``path`` is a dotted key path."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ReducibleChainError(ModLindleyError):
    """Transition matrix is not irreducible."""

    def __init__(self, unreachable: tuple[int, ...]):
        self.unreachable = unreachable
        super().__init__(
            "transition matrix is reducible; states not mutually reachable: "
            f"{sorted(unreachable)}"
        )


class PoleEvaluationError(ModLindleyError):
    """A transform was evaluated at (or too close to) one of its poles."""

    def __init__(self, point: complex, pole: complex):
        self.point = point
        self.pole = pole
        super().__init__(f"evaluation point {point} collides with pole at {pole}")


class SingularSystemError(ModLindleyError):
    """A dense linear system was singular or too ill-conditioned to trust."""

    def __init__(self, message: str, cond: float):
        self.cond = cond
        super().__init__(f"{message} (condition estimate {cond:.3e})")


class ContourError(ModLindleyError):
    """|f| on a counting contour fell under the guard threshold."""

    def __init__(self, message: str, min_abs: float):
        self.min_abs = min_abs
        super().__init__(message)


class RootCountError(ModLindleyError):
    """Located zeros disagree with the analytically expected count."""

    def __init__(self, found: int, expected: int, detail: str = ""):
        self.found = found
        self.expected = expected
        msg = f"found {found} zeros, expected {expected}"
        super().__init__(f"{msg}; {detail}" if detail else msg)


class RepeatedZeroError(ModLindleyError):
    """A zero of multiplicity > 1 was detected; the solvers require simple zeros."""

    def __init__(self, near: complex, winding: int):
        self.near = near
        self.winding = winding
        super().__init__(
            f"repeated zero (winding {winding}) near {near}; "
            "the linear systems assume simple, distinct zeros"
        )


class RankDeficiencyError(ModLindleyError):
    """Null-space extraction expected rank deficiency exactly one."""

    def __init__(self, singular_values: tuple[float, ...]):
        self.singular_values = singular_values
        super().__init__(
            f"matrix is not rank-deficient by exactly one; singular values {singular_values}"
        )


class InstabilityError(ModLindleyError):
    """The instance fails its stability condition."""


class SeriesDivergenceError(ModLindleyError):
    """The backward series failed to meet its truncation rule within the cap."""

    def __init__(self, terms: int, last_norm: float):
        self.terms = terms
        self.last_norm = last_norm
        super().__init__(
            f"series not converged after {terms} terms (last term norm {last_norm:.3e})"
        )


class UnsupportedSamplerError(ModLindleyError):
    """The simulator has no exact sampler for the given distribution."""


class TailMassError(ModLindleyError):
    """Not enough mass in the requested tail window to fit a slope."""
