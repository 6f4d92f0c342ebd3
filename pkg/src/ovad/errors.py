"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ValidationError -> 2,
CompatibilityError -> 3, anything else -> 1.
"""


class OvadError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(OvadError):
    """A dataset, config, or score file violates its contract."""


class CompatibilityError(OvadError):
    """A fitted artifact does not match the dataset it is applied to."""


class SingleClassError(ValidationError):
    """AUROC requested on labels containing only one class."""
