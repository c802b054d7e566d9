from .client import FLClient, RoundOutcome, run_client
from .codec import (
    FramingError,
    PayloadError,
    ProtocolError,
    UnknownMessageType,
    decode_frame,
    decode_stream,
    encode_frame,
)
from .loopback import LoopbackResult, run_loopback
from .server import FLServer, ServerOptions, SessionState, run_server, serve

__all__ = [
    "FLClient",
    "FLServer",
    "FramingError",
    "LoopbackResult",
    "PayloadError",
    "ProtocolError",
    "RoundOutcome",
    "ServerOptions",
    "SessionState",
    "UnknownMessageType",
    "decode_frame",
    "decode_stream",
    "encode_frame",
    "run_client",
    "run_loopback",
    "run_server",
    "serve",
]
