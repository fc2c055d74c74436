"""Exception hierarchy shared by all warpbench modules.

The CLI maps these onto exit codes: validation/contract/structural/resource
problems exit with 2, detected violations of a mathematical property exit
with 3. Anything else is a plain crash.
"""


class WarpbenchError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(WarpbenchError):
    """Bad input: unknown symbol, malformed config, violated precondition."""


class StructuralError(ValidationError):
    """Structurally inconsistent data, e.g. an incompatible tower element."""


class ContractError(ValidationError):
    """Operation called on an object that does not satisfy its contract
    (e.g. the closed-form warped engine on a non-isometric model)."""


class ResourceLimitError(WarpbenchError):
    """A configured size cap would be exceeded.  Carries the cap name."""

    def __init__(self, message, cap_name=None, cap_value=None):
        super().__init__(message)
        self.cap_name = cap_name
        self.cap_value = cap_value


class PropertyViolationError(WarpbenchError):
    """A mathematical property that must hold was found violated.
    Carries a witness describing where."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
