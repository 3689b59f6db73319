"""Reference server for the decoding engine's bridge wire protocol."""

from .mirror import MirrorModel, QueryError, SpecError
from .server import main, serve

__all__ = ["MirrorModel", "QueryError", "SpecError", "main", "serve"]
