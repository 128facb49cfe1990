"""Exception types shared across the laboratory."""


class ParameterError(ValueError):
    """A parameter violates an operation's stated domain."""


class SamplerError(RuntimeError):
    """Rejection sampling exhausted its attempt cap (malformed density)."""


class SizeCapError(ValueError):
    """An input exceeds a documented resource cap."""


class ValidationError(ValueError):
    """An experiment configuration failed validation.

    The message names the offending field and the violated constraint.
    """

    def __init__(self, field: str, constraint: str):
        self.field = field
        self.constraint = constraint
        super().__init__(f"{field}: {constraint}")
