"""Bit-exact framed wire format for FL training sessions.

Frame layout, all integers big-endian:

    length:     u32   byte count of everything after this field
    tag:        u8    message type
    header_len: u32
    header:     UTF-8 JSON document (canonical: sorted keys, no spaces)
    body:       raw bytes (canonical tensor encoding, or empty)

so length = 1 + 4 + header_len + len(body). Frames are self-delimiting and
capped at 64 MiB. Headers are text for debuggability; tensors ride as raw
body bytes for exactness.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

from .errors import FrameTooLarge, HeaderParse, Truncated, UnknownTag

MAX_FRAME = 64 * 2**20

TAG_JOIN = 1
TAG_GLOBAL_PARAMS = 2
TAG_LOCAL_UPDATE = 3
TAG_EVAL_REQUEST = 4
TAG_EVAL_REPLY = 5
TAG_FINISH = 6
TAG_ABORT = 7


@dataclass(frozen=True)
class Join:
    client_id: str
    model_name: str
    model_version: int
    platform: str
    schema_digest: str


@dataclass(frozen=True)
class GlobalParams:
    round: int
    epochs: int
    batch_size: int
    learning_rate: float
    body: bytes = b""


@dataclass(frozen=True)
class LocalUpdate:
    round: int
    num_examples: int
    train_loss: float
    wall_time_s: float
    body: bytes = b""


@dataclass(frozen=True)
class EvalRequest:
    round: int
    body: bytes = b""


@dataclass(frozen=True)
class EvalReply:
    round: int
    num_examples: int
    loss: float
    metric: float


@dataclass(frozen=True)
class Finish:
    pass


@dataclass(frozen=True)
class Abort:
    reason: str = ""


Message = Join | GlobalParams | LocalUpdate | EvalRequest | EvalReply | Finish | Abort

_HEADER_FIELDS = {
    TAG_JOIN: ("client_id", "model_name", "model_version", "platform", "schema_digest"),
    TAG_GLOBAL_PARAMS: ("round", "epochs", "batch_size", "learning_rate"),
    TAG_LOCAL_UPDATE: ("round", "num_examples", "train_loss", "wall_time_s"),
    TAG_EVAL_REQUEST: ("round",),
    TAG_EVAL_REPLY: ("round", "num_examples", "loss", "metric"),
    TAG_FINISH: (),
    TAG_ABORT: (),
}


def _tag_of(message: Message) -> int:
    if isinstance(message, Join):
        return TAG_JOIN
    if isinstance(message, GlobalParams):
        return TAG_GLOBAL_PARAMS
    if isinstance(message, LocalUpdate):
        return TAG_LOCAL_UPDATE
    if isinstance(message, EvalRequest):
        return TAG_EVAL_REQUEST
    if isinstance(message, EvalReply):
        return TAG_EVAL_REPLY
    if isinstance(message, Finish):
        return TAG_FINISH
    if isinstance(message, Abort):
        return TAG_ABORT
    raise TypeError(f"not a protocol message: {message!r}")


def encode_frame(message: Message) -> bytes:
    tag = _tag_of(message)
    header: dict = {}
    for name in _HEADER_FIELDS[tag]:
        header[name] = getattr(message, name)
    if isinstance(message, Abort) and message.reason:
        header["reason"] = message.reason
    body = getattr(message, "body", b"")
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    length = 1 + 4 + len(header_bytes) + len(body)
    if length > MAX_FRAME:
        raise FrameTooLarge(f"frame of {length} bytes exceeds {MAX_FRAME}")
    return struct.pack(">IBI", length, tag, len(header_bytes)) + header_bytes + body


def _build(tag: int, header: dict, body: bytes) -> Message:
    def need(name, kind):
        if name not in header:
            raise HeaderParse(f"tag {tag}: header lacks {name!r}")
        value = header[name]
        if kind is float:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise HeaderParse(f"tag {tag}: field {name!r} is not a number")
            return float(value)
        if kind is int:
            if not isinstance(value, int) or isinstance(value, bool):
                raise HeaderParse(f"tag {tag}: field {name!r} is not an integer")
            return value
        if not isinstance(value, str):
            raise HeaderParse(f"tag {tag}: field {name!r} is not a string")
        return value

    if tag == TAG_JOIN:
        return Join(
            client_id=need("client_id", str),
            model_name=need("model_name", str),
            model_version=need("model_version", int),
            platform=need("platform", str),
            schema_digest=need("schema_digest", str),
        )
    if tag == TAG_GLOBAL_PARAMS:
        return GlobalParams(
            round=need("round", int),
            epochs=need("epochs", int),
            batch_size=need("batch_size", int),
            learning_rate=need("learning_rate", float),
            body=body,
        )
    if tag == TAG_LOCAL_UPDATE:
        return LocalUpdate(
            round=need("round", int),
            num_examples=need("num_examples", int),
            train_loss=need("train_loss", float),
            wall_time_s=need("wall_time_s", float),
            body=body,
        )
    if tag == TAG_EVAL_REQUEST:
        return EvalRequest(round=need("round", int), body=body)
    if tag == TAG_EVAL_REPLY:
        return EvalReply(
            round=need("round", int),
            num_examples=need("num_examples", int),
            loss=need("loss", float),
            metric=need("metric", float),
        )
    if tag == TAG_FINISH:
        return Finish()
    if tag == TAG_ABORT:
        reason = header.get("reason", "")
        if not isinstance(reason, str):
            raise HeaderParse("abort reason is not a string")
        return Abort(reason=reason)
    raise UnknownTag(f"tag {tag} is not a known message type")


def _parse_remainder(remainder: bytes) -> Message:
    tag = remainder[0]
    if tag not in _HEADER_FIELDS:
        raise UnknownTag(f"tag {tag} is not a known message type")
    (header_len,) = struct.unpack(">I", remainder[1:5])
    if 5 + header_len > len(remainder):
        raise HeaderParse(
            f"header_len {header_len} overruns frame of {len(remainder)} remainder bytes"
        )
    try:
        header = json.loads(remainder[5 : 5 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderParse(f"header is not UTF-8 JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise HeaderParse("header JSON is not an object")
    body = remainder[5 + header_len :]
    return _build(tag, header, body)


def decode_frame(buf: bytes, offset: int = 0) -> tuple[Message, int]:
    """Decode one frame starting at offset; returns (message, next offset).

    Raises Truncated whenever buf ends before the declared frame does, so
    any prefix of a valid frame fails with Truncated and nothing else.
    """
    if len(buf) - offset < 4:
        raise Truncated(f"{len(buf) - offset} bytes available, length prefix needs 4")
    (length,) = struct.unpack_from(">I", buf, offset)
    if length > MAX_FRAME:
        raise FrameTooLarge(f"declared frame length {length} exceeds {MAX_FRAME}")
    if len(buf) - offset - 4 < length:
        raise Truncated(
            f"frame declares {length} bytes, only {len(buf) - offset - 4} available"
        )
    if length < 5:
        raise HeaderParse(f"declared length {length} cannot hold tag and header_len")
    remainder = bytes(buf[offset + 4 : offset + 4 + length])
    return _parse_remainder(remainder), offset + 4 + length


def decode_all(buf: bytes) -> list[Message]:
    """Decode a concatenation of frames; frames are self-delimiting."""
    out = []
    offset = 0
    while offset < len(buf):
        message, offset = decode_frame(buf, offset)
        out.append(message)
    return out


def read_frame(fp) -> Message | None:
    """Read one frame from a binary stream.

    Returns None on clean EOF at a frame boundary; raises Truncated if the
    stream ends mid-frame.
    """
    prefix = fp.read(4)
    if prefix == b"":
        return None
    if len(prefix) < 4:
        raise Truncated("stream ended inside the length prefix")
    (length,) = struct.unpack(">I", prefix)
    if length > MAX_FRAME:
        raise FrameTooLarge(f"declared frame length {length} exceeds {MAX_FRAME}")
    if length < 5:
        raise HeaderParse(f"declared length {length} cannot hold tag and header_len")
    remainder = b""
    while len(remainder) < length:
        chunk = fp.read(length - len(remainder))
        if not chunk:
            raise Truncated(f"stream ended {length - len(remainder)} bytes short")
        remainder += chunk
    return _parse_remainder(remainder)


def write_frame(fp, message: Message) -> None:
    fp.write(encode_frame(message))
    fp.flush()
