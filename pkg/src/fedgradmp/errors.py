class InvalidDimensionError(ValueError):
    pass


class InvalidAtomError(ValueError):
    pass


class UndefinedStableRankError(ValueError):
    pass


class CapabilityError(RuntimeError):
    """The requested computation is not supported at this size or for this kind."""


class ConfigError(ValueError):
    pass


class ConditioningError(ValueError):
    """A convergence-theory precondition (e.g. 2*rho_minus > rho_plus_bar) fails."""


class SolverError(RuntimeError):
    """A restricted subproblem solver failed to reach its accuracy target."""

    def __init__(self, message, residual_norm=None):
        super().__init__(message)
        self.residual_norm = residual_norm


class ContractError(ValueError):
    """An argument violates an operation's documented precondition."""


class ClientRunError(RuntimeError):
    """A client's local update failed; carries the round and client id."""

    def __init__(self, round_index, client, cause):
        super().__init__(f"round {round_index}, client {client}: {cause}")
        self.round = round_index
        self.client = client
        self.cause = cause
