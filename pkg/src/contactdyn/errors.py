"""Exception types raised by contactdyn."""


class ContactDynError(Exception):
    """Base class for all library errors."""


class InputDomainError(ContactDynError, ValueError):
    """Input outside the domain of an operation (non-finite values, bad shapes)."""


class ContractError(ContactDynError, ValueError):
    """Caller violated an operation precondition."""


class SolverFailure(ContactDynError, RuntimeError):
    """An inner numerical solve (Newton, root finding) did not converge."""


class NonConvergenceError(SolverFailure):
    """Fixed-point iteration exhausted its budget.

    Attributes:
        last_update: the last max-norm update seen before giving up.
    """

    def __init__(self, message, last_update=float("nan")):
        super().__init__(message)
        self.last_update = last_update


class SamplingFailure(ContactDynError, RuntimeError):
    """Rejection sampling acceptance rate fell below the floor."""


class InternalContradiction(ContactDynError, RuntimeError):
    """A computed result contradicts a proven invariant; indicates a bug."""


class ConfigError(ContactDynError, ValueError):
    """Malformed experiment configuration.

    Attributes:
        field: dotted key the problem relates to, if known.
        line: 1-based line number in the config text, if known.
    """

    def __init__(self, message, field=None, line=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        prefix = f"{', '.join(loc)}: " if loc else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line
