"""Exceptions shared across modules."""


class StepFailure(RuntimeError):
    """The ODE integrator broke down (step size underflow or similar)."""


class AmbiguousZero(ArithmeticError):
    """All components of a symmetry field vanish at a detected zero."""


class ZeroLemmaViolation(AssertionError):
    """Detected zeros contradict the elliptic/parabolic/hyperbolic zero lemma."""


class SturmViolation(AssertionError):
    """Zeros of two independent solutions failed to interlace."""


class InvalidMonodromy(ValueError):
    """The monodromy fixes an interior point or does not preserve the interval."""


class DegenerateMoebius(ValueError):
    """ad - bc = 0."""


class DegenerateVelocity(ValueError):
    """A curve's velocity vanished where an immersion was required."""


class PoleHandling(RuntimeError):
    """No chart of the atlas could take over at a chart exit."""
