"""Exception hierarchy shared by every module of the package."""


class QAENASError(Exception):
    """Base class for all errors raised by qaenas."""


class ConfigurationError(QAENASError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class SimulationError(QAENASError, ValueError):
    """Invalid gate or state handed to the statevector simulator."""


class ContractError(QAENASError, ValueError):
    """Arguments violate an operation's preconditions (shapes, ranges)."""


class GenomeParseError(QAENASError, ValueError):
    """Serialized genome text is malformed or violates genome invariants."""


class IDXFormatError(QAENASError, ValueError):
    """An IDX image file has the wrong magic number or a truncated payload."""


class TrainingDivergenceError(QAENASError, FloatingPointError):
    """A non-finite value appeared during training.

    ``context`` carries whatever the caller knows about where it happened
    (generation, individual id, epoch) so the message can identify it.
    """

    def __init__(self, message: str, **context):
        self.message = message
        self.context = dict(context)
        if context:
            where = ", ".join(f"{k}={v}" for k, v in context.items())
            message = f"{message} ({where})"
        super().__init__(message)

    def with_context(self, **context) -> "TrainingDivergenceError":
        return TrainingDivergenceError(self.message, **{**self.context, **context})
