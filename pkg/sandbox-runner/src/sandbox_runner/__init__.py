"""Script execution runner: one JSON request on stdin, one JSON response
on stdout.

Each execution runs in a fresh empty working directory, under a
wall-clock timeout that kills the whole process tree, with an import
policy that rejects modules outside the allow-list at import time. The
isolation is policy-level (accidental misbehavior of generated code, not
adversarial code) and never a security boundary.
"""

from .protocol import (
    ENVELOPE_VERSION,
    ProtocolError,
    Request,
    Response,
    parse_request,
    parse_response,
    serialize_request,
    serialize_response,
)
from .runner import DEFAULT_ALLOW_IMPORTS, execute

__all__ = [
    "ENVELOPE_VERSION",
    "ProtocolError",
    "Request",
    "Response",
    "parse_request",
    "parse_response",
    "serialize_request",
    "serialize_response",
    "DEFAULT_ALLOW_IMPORTS",
    "execute",
]
