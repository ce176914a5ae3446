"""Exception hierarchy shared by all modules."""


class MaxsurfError(Exception):
    """Base class for every error raised by this package."""


class PreconditionError(MaxsurfError, ValueError):
    """An input violates a documented precondition."""


class UnitModulusInput(PreconditionError):
    """Stereographic projection requested on the unit circle."""


class PunctureEvaluation(PreconditionError):
    """Weierstrass data evaluated at (or too close to) a declared puncture."""


class PunctureOnPath(PreconditionError):
    """An integration loop passes through a puncture."""


class QuadratureDivergence(MaxsurfError):
    """A segment integral blew up or failed to converge."""


class SingularPoint(MaxsurfError):
    """The conformal factor vanishes where a regular point is required."""


class NotAGraph(MaxsurfError):
    """The vertical projection of a surface patch folds."""


class NotAConeCircle(PreconditionError):
    """|g| is not 1 on the unit circle, so there is no cone point to reflect about."""


class InsufficientRings(PreconditionError):
    """Too few sample rings around a puncture for an end fit."""


class BranchCollision(MaxsurfError):
    """The square-root right-hand side vanished along an ODE path."""


class StepUnderflow(MaxsurfError):
    """Adaptive step size fell below the floor."""


class GridTooCoarse(PreconditionError):
    """Not enough interior nodes for a finite-difference diagnostic."""


class OutOfSlab(PreconditionError):
    """Requested level lies outside the normalized slab (-1, 1)."""


class TooFewPoints(PreconditionError):
    """A curve has too few samples to classify."""


class GeometryError(PreconditionError):
    """Invalid planar domain (overlapping holes, truncation too small, ...)."""


class SpacelikeViolation(MaxsurfError):
    """|Dv| reached 1 on a stencil: the graph is no longer spacelike."""


class OrderingViolation(MaxsurfError):
    """The constructed subsolution exceeds the supersolution somewhere."""


class LocalSolveDiverged(MaxsurfError):
    """Damped Newton on a lifting ball hit its damping floor."""


class NotConverged(MaxsurfError):
    """An iterative solver hit its iteration limit.

    The best iterate and its residual are attached so callers can dump them.
    """

    def __init__(self, message, best=None, residual=None, history=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.history = history or []


class FitDegenerate(MaxsurfError):
    """Far-field fit has a singular design matrix."""
