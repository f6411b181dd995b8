"""Chaotic-map authentication and address assignment for vehicular mix zones."""

from .crypto import ChebyParams, cheby_eval
from .errors import ProtocolError

__version__ = "0.1.0"

__all__ = ["ChebyParams", "ProtocolError", "cheby_eval", "__version__"]
