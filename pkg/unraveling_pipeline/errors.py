# ---------------------------------------------------------------------------#
#                       ERROR HIERARCHY                                       #
# ---------------------------------------------------------------------------#
"""
Exceptions raised by the engines. The CLI maps them to exit codes and the API
maps them to HTTP statuses; see `EXIT_CODES` / `HTTP_STATUS`.
"""


class UnravelingError(Exception):
    """Root of every error raised on purpose by this package."""


class ConfigurationError(UnravelingError, ValueError):
    """Malformed distribution, realization file or experiment configuration."""


class DomainError(UnravelingError, ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(UnravelingError, ValueError):
    """A caller-asserted precondition does not hold."""


class UnsupportedConfigurationError(UnravelingError, ValueError):
    """The operation is only defined for one late entrant per side (k = 1)."""


class ResourceGuardError(UnravelingError, RuntimeError):
    """The requested instance is larger than the enumeration guard allows."""


EXIT_CODES = {
    ResourceGuardError: 3,
    UnravelingError: 2,
}

HTTP_STATUS = {
    ResourceGuardError: 413,
    ConfigurationError: 422,
    DomainError: 422,
    PreconditionError: 422,
    UnsupportedConfigurationError: 422,
    UnravelingError: 400,
}


def _lookup(table: dict, exc: BaseException, default: int) -> int:
    for cls in type(exc).__mro__:
        if cls in table:
            return table[cls]
    return default


def exit_code_for(exc: BaseException) -> int:
    return _lookup(EXIT_CODES, exc, 1)


def http_status_for(exc: BaseException) -> int:
    return _lookup(HTTP_STATUS, exc, 500)
