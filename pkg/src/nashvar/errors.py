"""Exception types shared by the solvers and the command line."""


class NashVarError(Exception):
    """Base class for solver outcomes that are not a usable equilibrium."""


class NoEquilibriumError(NashVarError):
    """The game provably has no equilibrium of the solved form."""


class InfeasibleError(NashVarError, ValueError):
    """A budget or probability constraint cannot be met."""


class ConvergenceError(NashVarError):
    """An iterative scheme did not reach its fixed point."""
