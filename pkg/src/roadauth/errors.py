"""Exception hierarchy.

Every rejection a party can issue is a subclass of :class:`ProtocolError`, so
callers (and the simulator) can classify outcomes by ``err.kind``.
"""


class ProtocolError(Exception):
    """Base class for all typed rejections."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class InvalidParams(ProtocolError):
    pass


class FieldTooLong(ProtocolError):
    pass


class ValueTooLong(ProtocolError):
    pass


class DecodeError(ProtocolError):
    pass


class AuthFailure(ProtocolError):
    """A verification equality did not hold, or an AEAD tag was rejected.

    ``which`` names the party whose proof failed (``"user"`` or ``"rsu"``)
    when that is known.
    """

    def __init__(self, message: str = "", which: str | None = None):
        super().__init__(message)
        self.which = which


class StaleTimestamp(ProtocolError):
    pass


class EmptyIdentity(ProtocolError):
    pass


class EmptyPassword(ProtocolError):
    pass


class DuplicateRegistration(ProtocolError):
    pass


class PasswordMismatch(ProtocolError):
    pass


class NoEntry(ProtocolError):
    pass


class UnknownCid(ProtocolError):
    pass


class RevokedCid(ProtocolError):
    pass


class SessionStateError(ProtocolError):
    """A message arrived for a session that is not expecting it."""


class WidthOverflow(ProtocolError):
    pass


class PoolExhausted(ProtocolError):
    pass


class AddressMismatch(ProtocolError):
    pass


class ConflictRejected(ProtocolError):
    pass


class ConfigError(ProtocolError):
    pass
