"""Frame codec: golden vectors, round-trips, truncation, malformed input."""

import io
import json
import struct
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossfl import fl_protocol as proto
from crossfl.errors import FrameTooLarge, HeaderParse, Truncated, UnknownTag

GOLDEN_PATH = Path(__file__).parent / "data" / "golden_frames.json"

_MESSAGE_OF = {
    "finish": proto.Finish(),
    "join": proto.Join(client_id="c-1", model_name="mnist", model_version=2,
                       platform="index_map", schema_digest="abc123"),
    "global_params": proto.GlobalParams(round=1, epochs=2, batch_size=16,
                                        learning_rate=0.05,
                                        body=struct.pack("<f", 1.0)),
    "local_update": proto.LocalUpdate(round=1, num_examples=50, train_loss=0.25,
                                      wall_time_s=0.5,
                                      body=struct.pack("<ff", 0.5, -1.25)),
    "eval_request": proto.EvalRequest(round=3, body=struct.pack("<f", 1.0)),
    "eval_reply": proto.EvalReply(round=3, num_examples=50, loss=0.125, metric=0.875),
    "abort": proto.Abort(reason="schema mismatch"),
}


def goldens():
    return json.loads(GOLDEN_PATH.read_text())


# ---------------------------------------------------------------------------
# golden vectors (frozen bytes built independently with struct+json)
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("golden", goldens(), ids=lambda g: g["name"])
def test_golden_encode(golden):
    message = _MESSAGE_OF[golden["name"]]
    assert proto.encode_frame(message).hex() == golden["frame_hex"]


@pytest.mark.parametrize("golden", goldens(), ids=lambda g: g["name"])
def test_golden_decode(golden):
    data = bytes.fromhex(golden["frame_hex"])
    message, consumed = proto.decode_frame(data)
    assert consumed == len(data)
    assert message == _MESSAGE_OF[golden["name"]]


def test_finish_frame_layout_by_hand():
    # len=7 (1 tag + 4 header_len + 2 header), tag=6, header "{}"
    frame = proto.encode_frame(proto.Finish())
    assert frame == struct.pack(">IBI", 7, 6, 2) + b"{}"
    length, tag, header_len = struct.unpack(">IBI", frame[:9])
    assert (length, tag, header_len) == (7, 6, 2)
    assert frame[9:] == b"{}"


# ---------------------------------------------------------------------------
# round-trips
# ---------------------------------------------------------------------------

_bodies = st.binary(max_size=256)
_floats = st.floats(allow_nan=False, allow_infinity=False, width=64)
_texts = st.text(max_size=40)

_messages = st.one_of(
    st.builds(proto.Join, client_id=_texts, model_name=_texts,
              model_version=st.integers(0, 2**31), platform=_texts,
              schema_digest=_texts),
    st.builds(proto.GlobalParams, round=st.integers(0, 2**31),
              epochs=st.integers(0, 100), batch_size=st.integers(0, 10**6),
              learning_rate=_floats, body=_bodies),
    st.builds(proto.LocalUpdate, round=st.integers(0, 2**31),
              num_examples=st.integers(0, 10**9), train_loss=_floats,
              wall_time_s=_floats, body=_bodies),
    st.builds(proto.EvalRequest, round=st.integers(0, 2**31), body=_bodies),
    st.builds(proto.EvalReply, round=st.integers(0, 2**31),
              num_examples=st.integers(0, 10**9), loss=_floats, metric=_floats),
    st.just(proto.Finish()),
    st.builds(proto.Abort, reason=_texts),
)


@given(_messages)
@settings(max_examples=300, deadline=None)
def test_encode_decode_round_trip(message):
    frame = proto.encode_frame(message)
    decoded, consumed = proto.decode_frame(frame)
    assert consumed == len(frame)
    assert decoded == message


@given(st.lists(_messages, min_size=1, max_size=6))
@settings(max_examples=50, deadline=None)
def test_concatenated_frames_are_self_delimiting(messages):
    blob = b"".join(proto.encode_frame(m) for m in messages)
    assert proto.decode_all(blob) == messages


@given(_messages)
@settings(max_examples=50, deadline=None)
def test_stream_reader_round_trip(message):
    stream = io.BytesIO(proto.encode_frame(message) + proto.encode_frame(proto.Finish()))
    assert proto.read_frame(stream) == message
    assert proto.read_frame(stream) == proto.Finish()
    assert proto.read_frame(stream) is None


# ---------------------------------------------------------------------------
# malformed input
# ---------------------------------------------------------------------------

def test_truncation_at_every_offset_yields_truncated():
    frame = proto.encode_frame(_MESSAGE_OF["local_update"])
    for cut in range(len(frame)):
        with pytest.raises(Truncated):
            proto.decode_frame(frame[:cut])


def test_stream_truncation_mid_frame():
    frame = proto.encode_frame(_MESSAGE_OF["join"])
    for cut in range(1, len(frame)):
        with pytest.raises(Truncated):
            proto.read_frame(io.BytesIO(frame[:cut]))


def test_unknown_tag():
    bad = struct.pack(">IBI", 7, 99, 2) + b"{}"
    with pytest.raises(UnknownTag):
        proto.decode_frame(bad)


def test_oversized_frame_rejected():
    bad = struct.pack(">I", proto.MAX_FRAME + 1)
    with pytest.raises(FrameTooLarge):
        proto.decode_frame(bad)
    with pytest.raises(FrameTooLarge):
        proto.read_frame(io.BytesIO(bad))


def test_header_length_overrun():
    # header_len claims more bytes than the frame holds
    bad = struct.pack(">IBI", 7, 6, 99) + b"{}"
    with pytest.raises(HeaderParse):
        proto.decode_frame(bad)


def test_header_not_json():
    payload = b"xx"
    bad = struct.pack(">IBI", 1 + 4 + len(payload), 6, len(payload)) + payload
    with pytest.raises(HeaderParse):
        proto.decode_frame(bad)


def test_header_missing_field():
    header = b'{"round":1}'
    bad = struct.pack(">IBI", 1 + 4 + len(header), 5, len(header)) + header
    with pytest.raises(HeaderParse):
        proto.decode_frame(bad)


def test_header_wrong_type():
    header = b'{"round":"one"}'
    bad = struct.pack(">IBI", 1 + 4 + len(header), 4, len(header)) + header
    with pytest.raises(HeaderParse):
        proto.decode_frame(bad)


@given(st.binary(max_size=64))
@settings(max_examples=200, deadline=None)
def test_arbitrary_bytes_never_crash(data):
    try:
        proto.decode_frame(data)
    except (Truncated, FrameTooLarge, UnknownTag, HeaderParse):
        pass
