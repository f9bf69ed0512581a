"""Entry point: read one request from stdin, write one response to stdout."""

import sys

from .protocol import ProtocolError, error_response, parse_request, serialize_response
from .runner import execute


def main() -> int:
    raw = sys.stdin.read()
    try:
        request = parse_request(raw)
    except ProtocolError as e:
        sys.stdout.write(error_response(str(e)))
        return 2
    response = execute(request)
    sys.stdout.write(serialize_response(response))
    return 0


if __name__ == "__main__":
    sys.exit(main())
