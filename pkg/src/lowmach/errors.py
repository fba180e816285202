"""Exception types raised by the solver stack."""


class LowMachError(Exception):
    pass


class NonZeroMean(LowMachError, ValueError):
    """A field expected to be mean-zero escaped the projection."""


class NegativeDensity(LowMachError, ValueError):
    """``1 + eps * rho`` dropped below the positivity floor."""


class NotSolenoidal(LowMachError, ValueError):
    pass


class DegenerateMode(LowMachError, ArithmeticError):
    """The k = 0 mode reached a per-mode inversion."""


class SmallnessGateError(LowMachError, ValueError):
    """An input violates a configured smallness gate (bypass with ``force``)."""


class InsufficientData(LowMachError, ValueError):
    pass


class NoConvergence(LowMachError, RuntimeError):
    """An iteration stopped without meeting its tolerance.

    Attributes:
        stage: which solver gave up (e.g. ``"stokes"``, ``"compressible"``).
        iterations: iterations performed.
        last_update: last update norm (or residual) seen.
        history: per-iteration update norms.
        partial: optional partial result the caller may still report.
    """

    def __init__(self, stage, iterations, last_update, history=(), partial=None, reason=""):
        self.stage = stage
        self.iterations = iterations
        self.last_update = last_update
        self.history = list(history)
        self.partial = partial
        self.reason = reason
        msg = f"{stage}: no convergence after {iterations} iterations (last update {last_update:.3e})"
        if reason:
            msg += f"; {reason}"
        super().__init__(msg)


class InnerDivergence(NoConvergence):
    """The inner update norm grew instead of shrinking."""
