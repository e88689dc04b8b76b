"""Exception types shared across the package.

Every error raised on purpose derives from :class:`TwistbandsError`, so the
command-line layer can map failure classes onto exit codes without string
matching.
"""


class TwistbandsError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(TwistbandsError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(TwistbandsError, ValueError):
    """A vector or point lies outside the lattice/domain it must belong to."""


class FormatError(TwistbandsError, ValueError):
    """A model or config file is malformed.  Carries line diagnostics."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc += str(path)
        if line is not None:
            loc += f":{line}"
        if loc:
            message = f"{loc}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line


class CapabilityError(TwistbandsError):
    """A request exceeds what the model/engine declares it can do."""


class ResourceError(TwistbandsError):
    """A computation would exceed a configured resource cap."""


class ContractError(TwistbandsError):
    """A numerical post-condition failed (e.g. non-Hermitian input)."""
