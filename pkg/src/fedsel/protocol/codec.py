"""Length-prefixed binary framing for the three round RPCs.

Frame::

    ┌────────────┬──────────┬──────────────────────────────────────┐
    │ len u32 BE │ type u8  │ payload                              │
    └────────────┴──────────┴──────────────────────────────────────┘

``len`` counts the type byte plus the payload. The payload is::

    [version u8]             CommunicatedText messages only
    json_len u32 BE, JSON    UTF-8 structured fields
    [count u32 BE, values]   weight-bearing messages: count float32 LE

Weight blocks never carry shapes; the manifest rides in the JSON of
GetGlobalWeightsResp only.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, fields
from typing import Any, ClassVar, Dict, List, Optional, Tuple, Type

import numpy as np

PROTOCOL_VERSION = 1
LENGTH_PREFIX = 4
MAX_FRAME = 64 * 1024 * 1024


class ProtocolError(Exception):
    """Base class for every decode failure."""


class FramingError(ProtocolError):
    """Length prefix inconsistent with the bytes available."""


class UnknownMessageType(ProtocolError):
    pass


class PayloadError(ProtocolError):
    """Malformed JSON, missing fields, or a weight count mismatch."""


# directives carried in CommunicatedTextResp
WAIT = "WAIT"
SELECTED = "SELECTED"
ROUND_SKIPPED = "ROUND_SKIPPED"
SHUTDOWN = "SHUTDOWN"
DIRECTIVES = (WAIT, SELECTED, ROUND_SKIPPED, SHUTDOWN)

# GetFLWeightsResp status
PENDING = "PENDING"
AGGREGATED = "AGGREGATED"
VOIDED = "VOIDED"
FL_STATUSES = (PENDING, AGGREGATED, VOIDED)


def _arrays_equal(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()


@dataclass(eq=False)
class Message:
    TYPE: ClassVar[int] = 0
    HAS_VERSION: ClassVar[bool] = False
    HAS_WEIGHTS: ClassVar[bool] = False
    # field name -> accepted JSON types; None in the tuple allows null
    SCHEMA: ClassVar[Dict[str, tuple]] = {}

    client_id: str
    round: int

    def json_fields(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "weights"}

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if not _arrays_equal(a, b):
                    return False
            elif a != b:
                return False
        return True


@dataclass(eq=False)
class CommunicatedTextReq(Message):
    TYPE: ClassVar[int] = 0x01
    HAS_VERSION: ClassVar[bool] = True
    SCHEMA: ClassVar = {
        "client_id": (str,), "round": (int,), "context": (dict, None), "n_samples": (int,),
        "status": (str,), "oracle_batch_time": (float, int, None),
    }

    context: Optional[Dict[str, float]] = None
    n_samples: int = 0
    status: str = "READY"
    oracle_batch_time: Optional[float] = None


@dataclass(eq=False)
class CommunicatedTextResp(Message):
    TYPE: ClassVar[int] = 0x02
    HAS_VERSION: ClassVar[bool] = True
    SCHEMA: ClassVar = {
        "client_id": (str,), "round": (int,), "directive": (str,), "epochs": (int, None),
        "batch_size": (int, None), "lr": (float, int, None),
    }

    directive: str = WAIT
    epochs: Optional[int] = None
    batch_size: Optional[int] = None
    lr: Optional[float] = None


@dataclass(eq=False)
class GetGlobalWeightsReq(Message):
    TYPE: ClassVar[int] = 0x03
    SCHEMA: ClassVar = {"client_id": (str,), "round": (int,)}


@dataclass(eq=False)
class GetGlobalWeightsResp(Message):
    TYPE: ClassVar[int] = 0x04
    HAS_WEIGHTS: ClassVar[bool] = True
    SCHEMA: ClassVar = {"client_id": (str,), "round": (int,), "manifest": (list,)}

    manifest: List[Tuple[str, List[int]]] = field(default_factory=list)
    weights: Optional[np.ndarray] = None


@dataclass(eq=False)
class GetFLWeightsReq(Message):
    """Upload (weights present) or poll (weights absent) for the aggregate."""

    TYPE: ClassVar[int] = 0x05
    HAS_WEIGHTS: ClassVar[bool] = True
    SCHEMA: ClassVar = {
        "client_id": (str,), "round": (int,), "wer": (float, int, None), "n_samples": (int,),
        "batch_time": (float, int, None), "battery_drop": (float, int, None), "duration": (float, int, None),
        "epochs_completed": (int,), "battery_after": (float, int, None),
    }

    wer: Optional[float] = None
    n_samples: int = 0
    batch_time: Optional[float] = None
    battery_drop: Optional[float] = None
    duration: Optional[float] = None
    epochs_completed: int = 0
    battery_after: Optional[float] = None
    weights: Optional[np.ndarray] = None


@dataclass(eq=False)
class GetFLWeightsResp(Message):
    TYPE: ClassVar[int] = 0x06
    HAS_WEIGHTS: ClassVar[bool] = True
    SCHEMA: ClassVar = {"client_id": (str,), "round": (int,), "status": (str,), "waiting": (float, int, None)}

    status: str = PENDING
    waiting: Optional[float] = None
    weights: Optional[np.ndarray] = None


@dataclass(eq=False)
class ErrorMsg(Message):
    TYPE: ClassVar[int] = 0x7F
    SCHEMA: ClassVar = {"client_id": (str,), "round": (int,), "code": (str,), "message": (str,)}

    code: str = "ERROR"
    message: str = ""


REGISTRY: Dict[int, Type[Message]] = {
    cls.TYPE: cls
    for cls in (
        CommunicatedTextReq, CommunicatedTextResp, GetGlobalWeightsReq, GetGlobalWeightsResp,
        GetFLWeightsReq, GetFLWeightsResp, ErrorMsg,
    )
}


def _encode_weights(w: Optional[np.ndarray]) -> bytes:
    if w is None:
        return b""
    values = np.asarray(w, dtype="<f4").reshape(-1)
    return struct.pack(">I", values.size) + values.tobytes()


def encode_payload(m: Message) -> bytes:
    body = json.dumps(m.json_fields(), separators=(",", ":"), allow_nan=False).encode("utf-8")
    parts = []
    if m.HAS_VERSION:
        parts.append(struct.pack(">B", PROTOCOL_VERSION))
    parts.append(struct.pack(">I", len(body)))
    parts.append(body)
    if m.HAS_WEIGHTS:
        parts.append(_encode_weights(getattr(m, "weights")))
    return b"".join(parts)


def encode_frame(m: Message) -> bytes:
    if type(m) not in REGISTRY.values():
        raise ProtocolError(f"unregistered message class {type(m).__name__}")
    payload = encode_payload(m)
    return struct.pack(">IB", 1 + len(payload), m.TYPE) + payload


def _check_json_type(name: str, value, accepted: tuple) -> None:
    if value is None:
        if None in accepted:
            return
        raise PayloadError(f"field {name!r} must not be null")
    for t in accepted:
        if t is None:
            continue
        if t is int and isinstance(value, bool):
            continue
        if t is float and isinstance(value, float) and not math.isfinite(value):
            continue
        if isinstance(value, t):
            return
    raise PayloadError(f"field {name!r} has wrong type {type(value).__name__}")


def _validate_fields(cls: Type[Message], obj: Dict[str, Any]) -> Dict[str, Any]:
    if set(obj) != set(cls.SCHEMA):
        raise PayloadError(f"{cls.__name__}: fields {sorted(obj)} != {sorted(cls.SCHEMA)}")
    for name, accepted in cls.SCHEMA.items():
        _check_json_type(name, obj[name], accepted)
    if cls is CommunicatedTextReq and obj["context"] is not None:
        for k, v in obj["context"].items():
            _check_json_type(f"context.{k}", v, (float, int))
    if cls is GetGlobalWeightsResp:
        manifest = []
        for entry in obj["manifest"]:
            if (
                not isinstance(entry, list) or len(entry) != 2 or not isinstance(entry[0], str)
                or not isinstance(entry[1], list) or not entry[1]
                or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in entry[1])
            ):
                raise PayloadError("malformed manifest entry")
            manifest.append((entry[0], list(entry[1])))
        obj = dict(obj, manifest=manifest)
    if cls is CommunicatedTextResp and obj["directive"] not in DIRECTIVES:
        raise PayloadError(f"unknown directive {obj['directive']!r}")
    if cls is GetFLWeightsResp and obj["status"] not in FL_STATUSES:
        raise PayloadError(f"unknown status {obj['status']!r}")
    return obj


def decode_payload(msg_type: int, payload: bytes) -> Message:
    cls = REGISTRY.get(msg_type)
    if cls is None:
        raise UnknownMessageType(f"unknown message type 0x{msg_type:02x}")
    pos = 0
    if cls.HAS_VERSION:
        if len(payload) < 1:
            raise PayloadError("missing protocol version")
        if payload[0] != PROTOCOL_VERSION:
            raise PayloadError(f"unsupported protocol version {payload[0]}")
        pos = 1
    if len(payload) < pos + 4:
        raise PayloadError("missing JSON length")
    (jlen,) = struct.unpack_from(">I", payload, pos)
    pos += 4
    if len(payload) < pos + jlen:
        raise PayloadError("JSON section truncated")
    try:
        obj = json.loads(payload[pos : pos + jlen].decode("utf-8"))
    except (UnicodeDecodeError, ValueError, RecursionError) as exc:
        raise PayloadError(f"bad JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise PayloadError("JSON section is not an object")
    pos += jlen
    obj = _validate_fields(cls, obj)

    rest = payload[pos:]
    if cls.HAS_WEIGHTS:
        if not rest:
            obj["weights"] = None
        else:
            if len(rest) < 4:
                raise PayloadError("weight count truncated")
            (count,) = struct.unpack_from(">I", rest, 0)
            if len(rest) - 4 != 4 * count:
                raise PayloadError(f"weight count {count} does not match {len(rest) - 4} payload bytes")
            obj["weights"] = np.frombuffer(rest, dtype="<f4", offset=4).astype(np.float32)
    elif rest:
        raise PayloadError(f"{len(rest)} trailing bytes")
    return cls(**obj)


def decode_frame(data: bytes) -> Message:
    """Decode exactly one complete frame."""
    msg, used = decode_stream(data)
    if msg is None:
        raise FramingError("incomplete frame")
    if used != len(data):
        raise FramingError(f"{len(data) - used} bytes after frame")
    return msg


def decode_stream(buf: bytes) -> Tuple[Optional[Message], int]:
    """Decode the first frame in ``buf``; returns (None, 0) if more bytes are needed."""
    if len(buf) < LENGTH_PREFIX:
        return None, 0
    (length,) = struct.unpack_from(">I", buf, 0)
    if length < 1:
        raise FramingError("frame length must cover the type byte")
    if length > MAX_FRAME:
        raise FramingError(f"frame length {length} exceeds limit")
    end = LENGTH_PREFIX + length
    if len(buf) < end:
        return None, 0
    return decode_payload(buf[LENGTH_PREFIX], bytes(buf[LENGTH_PREFIX + 1 : end])), end


def read_frame(sock_file) -> Message:
    """Blocking read of one frame from a binary file-like object."""
    head = sock_file.read(LENGTH_PREFIX)
    if len(head) < LENGTH_PREFIX:
        raise FramingError("connection closed while reading frame length")
    (length,) = struct.unpack(">I", head)
    if length < 1 or length > MAX_FRAME:
        raise FramingError(f"bad frame length {length}")
    body = sock_file.read(length)
    if len(body) < length:
        raise FramingError("connection closed mid-frame")
    return decode_payload(body[0], body[1:])
