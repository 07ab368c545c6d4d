"""Exception hierarchy.

Every failure the library can signal derives from :class:`CritlabError` so
callers (the scenario runner in particular) can separate numerical failures
from programming errors.
"""

from __future__ import annotations


class CritlabError(Exception):
    """Base class for all library errors."""


class InvalidParams(CritlabError, ValueError):
    """Family parameters or configuration values out of range."""


class NonSimpleBoundary(CritlabError):
    """The boundary curve self-intersects."""


class DegenerateParametrization(CritlabError):
    """The curve speed vanishes somewhere."""


class PointOutsideDomain(CritlabError):
    """A reference point does not lie strictly inside the domain."""


class BallsOverlap(CritlabError):
    """Excision balls around boundary sites are not pairwise disjoint."""


class BallSwallowsBoundary(CritlabError):
    """An excision circle does not meet the boundary in exactly two points."""


class MeshFailure(CritlabError):
    """Quality refinement could not meet the requested bounds."""


class InsufficientNeighbors(CritlabError):
    """Too few mesh vertices for a derivative fit."""


class IllConditionedFit(CritlabError):
    """The local least-squares system is numerically singular."""


class NewtonDiverged(CritlabError):
    """Damped Newton failed to reduce the residual."""

    def __init__(self, message: str, residual: float = float("nan"), iters: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iters = iters


class FoldBeforeTarget(CritlabError):
    """Continuation hit a turning point before reaching the target parameter."""

    def __init__(self, message: str, lam_star: float, bracket: tuple[float, float], branch=None):
        super().__init__(message)
        self.lam_star = lam_star
        self.bracket = bracket
        self.branch = branch


class EigenStagnation(CritlabError):
    """Inverse iteration did not converge."""


class BoundaryViolation(CritlabError):
    """A test function does not vanish on the boundary."""


class VanishingGradient(CritlabError):
    """A quantity needing a nonzero gradient was requested where it vanishes."""


class ZeroOnLoop(CritlabError):
    """The vector field comes too close to zero on the loop."""

    def __init__(self, message: str, min_norm: float, where=None):
        super().__init__(message)
        self.min_norm = min_norm
        self.where = where


class DegenerateJacobian(CritlabError):
    """The Jacobian at a zero is too close to singular to assign an index."""


class HypothesesViolated(CritlabError):
    """The local hypotheses for the branch-slope analysis do not hold."""

    def __init__(self, message: str, failures: list[str]):
        super().__init__(message)
        self.failures = failures


class MultipleXi(CritlabError):
    """More than one interior nodal branch enters a flat boundary segment."""


class NoXi(CritlabError):
    """No interior nodal branch enters a flat boundary segment."""
