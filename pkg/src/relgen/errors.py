"""Exception hierarchy shared by every stage of the generator."""


class RelgenError(Exception):
    """Base class for all errors raised by relgen."""


class ConfigError(RelgenError, ValueError):
    """Invalid or unsatisfiable configuration.

    ``field`` names the offending config key when one can be identified.
    """

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class DimensionError(RelgenError, ValueError):
    pass


class ContractError(RelgenError, ValueError):
    pass


class IntegrityError(RelgenError):
    pass


class GenerationError(RelgenError):
    """A generation stage failed; ``stage`` tags which one."""

    def __init__(self, message, stage=None):
        super().__init__(message if stage is None else f"[{stage}] {message}")
        self.stage = stage


class DegenerateTaskError(RelgenError):
    """Task cannot be formed (constant label, too few rows, one-class context)."""


class CorruptFileError(RelgenError, IOError):
    pass


class IncompatibleFormatError(RelgenError, IOError):
    pass
