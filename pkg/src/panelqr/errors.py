"""Exception hierarchy; the CLI maps each class to an exit code."""


class PanelQRError(Exception):
    """Base class for all package errors."""

    kind = "error"


class DomainError(PanelQRError, ValueError):
    """A distribution or model parameter lies outside its domain."""

    kind = "domain"


class ConfigError(PanelQRError, ValueError):
    kind = "config"


class IngestionError(PanelQRError, ValueError):
    """Raw panel data cannot be turned into a design."""

    kind = "data"


class ChainFormatError(PanelQRError, OSError):
    kind = "chain"


class SingularMatrixError(PanelQRError, ArithmeticError):
    """A Cholesky factorization failed.

    ``index`` is the individual whose block failed (if known) and ``sweep``
    the Gibbs sweep during which it happened.
    """

    kind = "numerical"

    def __init__(self, message, index=None, sweep=None):
        super().__init__(message)
        self.index = index
        self.sweep = sweep


class ManifestMismatchError(PanelQRError, ValueError):
    """A chain was produced under a different run manifest."""

    kind = "data"
