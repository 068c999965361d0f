"""Exception types shared across the package.

Every failure mode that callers are expected to branch on gets its own
class so the CLI can map it to an exit code without string matching.
"""

from __future__ import annotations


class InfolimError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(InfolimError):
    """Malformed configuration: bad shapes, unknown names, missing keys."""


class NoDichotomyError(InfolimError):
    """An eigenvalue sits on (or numerically at) the imaginary axis.

    Stable/antistable splitting is refused rather than silently assigning
    the marginal mode to one side.
    """

    def __init__(self, eigenvalue, tol):
        self.eigenvalue = eigenvalue
        self.tol = tol
        super().__init__(
            f"eigenvalue {eigenvalue} has |Re| < {tol}; "
            "no exponential dichotomy, refusing stable/antistable split"
        )


class DivergedError(InfolimError):
    """A simulated path left the explosion bound."""

    def __init__(self, step, value, bound):
        self.step = step
        self.value = value
        self.bound = bound
        super().__init__(
            f"state norm {value:.3e} exceeded explosion bound {bound:.3e} "
            f"at step {step}"
        )


class NumericalBreakdownError(InfolimError):
    """Non-finite values or a lost matrix property (e.g. PSD) mid-integration."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class NotConvergedError(InfolimError):
    """A steady-state or rate estimate failed its convergence diagnostic."""

    def __init__(self, message, diagnostic=None):
        self.diagnostic = diagnostic
        super().__init__(message)


class DegeneracyError(InfolimError):
    """Particle ensemble collapsed (effective sample size too small)."""

    def __init__(self, ess, step):
        self.ess = ess
        self.step = step
        super().__init__(
            f"effective sample size {ess:.2f} below floor at step {step}; "
            "increase the particle count or reduce dt"
        )


class PowerConstraintViolatedError(InfolimError):
    """Empirical channel input power exceeded the declared budget."""

    def __init__(self, times, max_excess):
        self.times = times
        self.max_excess = max_excess
        super().__init__(
            f"power budget violated at {len(times)} grid times "
            f"(worst excess {max_excess:.3e}); first offenders: "
            f"{[round(float(t), 6) for t in times[:5]]}"
        )


class AssumptionViolatedError(InfolimError):
    """A structural precondition (orthogonality, modal form, ...) failed."""
