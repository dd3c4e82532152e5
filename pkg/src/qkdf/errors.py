"""Exception hierarchy for the QKD stack."""


class QKDError(Exception):
    pass


class ConfigError(QKDError, ValueError):
    """Invalid parameters or scenario file."""


class ProtocolError(QKDError):
    """A peer sent something inconsistent with the protocol state."""


class MalformedFrame(ProtocolError):
    pass


class ReconciliationFailure(ProtocolError):
    pass


class AuthFailure(ProtocolError):
    """Tag did not verify."""


class AuthDesync(ProtocolError):
    """Key offset in a tag disagrees with the verifier's watermark."""


class AuthStarvation(QKDError):
    """Authentication key pool cannot cover another tag."""


class KeyStarvation(QKDError):
    """Not enough distilled key available for the request."""


class IntegrityError(QKDError):
    """Ciphertext failed its integrity check."""
