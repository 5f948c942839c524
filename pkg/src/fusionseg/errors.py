"""Error categories shared across the package.

Each maps to a one-line machine-parseable category on the CLI.
"""


class FusionSegError(Exception):
    category = "error"


class DimensionError(FusionSegError):
    """Operand shapes are incompatible with the requested operation."""

    category = "dimension"


class DomainError(FusionSegError):
    """Operand values fall outside the operation's valid domain."""

    category = "domain"


class ContractError(FusionSegError):
    """An API precondition was violated (e.g. missing gradient)."""

    category = "contract"


class ConfigurationError(FusionSegError):
    """Inconsistent or incomplete run configuration."""

    category = "config"


class IOError_(FusionSegError):
    """Filesystem-level failure (missing file, unwritable directory)."""

    category = "io"
