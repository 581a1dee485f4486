"""Exception types raised across the package."""


class DPBanditError(Exception):
    pass


class InvalidInputError(DPBanditError, ValueError):
    """Argument outside an operation's domain (bad dimension, empty scores, ...)."""


class StaleHandleError(DPBanditError, KeyError):
    """A subspace handle refers to a node that is no longer active."""

    def __str__(self):
        return Exception.__str__(self)


class CapacityError(DPBanditError, OverflowError):
    """A continual counter received more items than its declared horizon."""


class RunComplete(DPBanditError):
    """The simulation horizon has been reached."""


class ConfigError(DPBanditError, ValueError):
    """Experiment configuration failed validation."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
