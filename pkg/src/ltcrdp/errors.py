"""Exception hierarchy shared by all modules."""


class LTCError(Exception):
    """Base class for errors raised by ltcrdp."""


class ConfigError(LTCError, ValueError):
    """Invalid configuration: unknown family, bad dimension, budget too large."""


class InputError(LTCError, ValueError):
    """Invalid numeric input such as a non-finite vector or wrong shape."""


class DomainError(LTCError, ValueError):
    """Parameters outside the domain of a closed-form expression."""


class ContractError(LTCError, ValueError):
    """An operation was called in a mode or with arguments it does not support."""


class OracleError(LTCError, RuntimeError):
    """Brute-force enumeration found no candidate; retry with a larger radius."""


class ProtocolError(LTCError, RuntimeError):
    """Encoder and decoder disagree about the shared randomness they hold."""
