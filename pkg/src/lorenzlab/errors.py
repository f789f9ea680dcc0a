"""Exception types shared across the laboratory.

Every failure mode that a caller can reasonably branch on gets its own
class; the CLI maps ConfigError to exit code 2 and everything else
deriving from LabError to exit code 1.
"""


class LabError(Exception):
    """Base class for all errors raised by lorenzlab."""


class DomainError(LabError):
    """Input outside the operation's domain (non-finite state, bad range)."""


class StableManifoldError(DomainError):
    """Trajectory starts on (or has collapsed onto) the stable manifold
    of the singularity, so the section return is undefined."""


class GluingParameterError(DomainError):
    """The gluing offset pushed a return outside the cross-section."""


class EscapeError(DomainError):
    """A trajectory left the configured trapping region."""


class BlowUpError(LabError):
    """State norm exceeded the blow-up guard during integration."""


class BudgetError(LabError):
    """An iteration or step budget was exhausted before the goal."""


class ConvergenceError(LabError):
    """An iterative estimate failed its convergence criterion."""


class ConfigError(LabError):
    """Malformed or unknown configuration input."""
