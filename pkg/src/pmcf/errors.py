"""Exception hierarchy shared by all modules."""


class PMCFError(Exception):
    """Base class for every error raised by the package."""


class DomainError(PMCFError, ValueError):
    """Input lies outside the domain where a quantity is defined."""


class StencilError(DomainError):
    """Finite-difference stencil would cross the horizon."""


class GraphConditionError(PMCFError):
    """The surface stopped being a radial graph (normal nearly tangent to the radial direction).

    ``node`` is the flat grid index of the worst node, ``theta``/``phi`` its
    angles and ``chi`` the offending graph factor.
    """

    def __init__(self, message, node=None, theta=None, phi=None, chi=None):
        super().__init__(message)
        self.node = node
        self.theta = theta
        self.phi = phi
        self.chi = chi


class FlowUndefinedError(PMCFError):
    """The nonlocal speed cannot be formed (APMCF with non-positive total mean curvature)."""


class BlowupError(PMCFError, FloatingPointError):
    """Non-finite values appeared during time stepping."""


class PreconditionError(PMCFError, ValueError):
    """An operation was called on input violating its stated precondition."""


class ConfigError(PMCFError, ValueError):
    """Malformed or out-of-range run configuration."""
