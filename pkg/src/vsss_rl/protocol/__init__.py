from .client import EnvClient, client_reset, client_step
from .framing import (MAX_PAYLOAD, DecodeError, FrameTooLarge, MalformedMessage, Message,
                      ProtocolError, SequenceMismatch, ServerError, TransportError, TruncatedFrame,
                      decode_frame, encode_frame)
from .server import ServerHandle, ServerLimits, Session, serve

__all__ = ["EnvClient", "client_reset", "client_step", "MAX_PAYLOAD", "DecodeError",
           "FrameTooLarge", "MalformedMessage", "Message", "ProtocolError", "SequenceMismatch",
           "ServerError", "TransportError", "TruncatedFrame", "decode_frame", "encode_frame",
           "ServerHandle", "ServerLimits", "Session", "serve"]
