"""Exception hierarchy shared by every module.

The CLI maps any :class:`RCPDError` to exit status 1.
"""


class RCPDError(Exception):
    """Base class for all toolkit errors."""


class ParseError(RCPDError):
    """A corpus or config record could not be decoded."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(RCPDError):
    """A decoded record violates a data-model invariant."""

    def __init__(self, message, trace_id=None, field=None):
        self.trace_id = trace_id
        self.field = field
        prefix = []
        if trace_id is not None:
            prefix.append(f"trace {trace_id!r}")
        if field is not None:
            prefix.append(f"field {field!r}")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class OutcomeMissingError(RCPDError):
    """Replay asked for a truncation outcome that was never recorded."""

    def __init__(self, trace_id, truncate_at):
        self.trace_id = trace_id
        self.truncate_at = truncate_at
        super().__init__(
            f"outcome not recorded: trace {trace_id!r}, truncate_at {truncate_at!r}"
        )


class StrategyError(RCPDError):
    """A strategy cannot be applied to the given corpus."""


class ContractError(RCPDError):
    """Caller broke a streaming precondition (ordering, phase)."""


class MinerError(RCPDError):
    """Invalid training input or hyperparameters."""
