import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from citymesh.core import (
    FRAME_PAYLOAD_BYTES,
    CENTER,
    DecodingError,
    EncodingError,
    GuidanceState,
    Mode,
    NodeId,
    NodeKind,
    SensorFrame,
    SensorKind,
    decode_frame,
    encode_frame,
    light_id,
    quantize32,
)

L0 = light_id(0)


def frame(readings, time=0):
    return SensorFrame(light=L0, time=time, readings=tuple(readings))


def test_sensor_kind_order_is_fixed():
    assert [k.name for k in SensorKind] == [
        "MOTION",
        "INFRARED_LIGHT",
        "BROADBAND_LIGHT",
        "TEMPERATURE",
        "HUMIDITY",
        "CO2",
    ]
    assert len(SensorKind) == 6


def test_zero_frame_encodes_to_24_zero_bytes():
    payload = encode_frame(frame([0.0] * 6))
    assert payload == b"\x00" * 24
    assert len(payload) == FRAME_PAYLOAD_BYTES


def test_payload_is_192_bits_regardless_of_values():
    for readings in ([1.5] * 6, [-3.25e7, 1e-9, 42.0, 0.0, 2.5, 1e30]):
        assert len(encode_frame(frame(readings))) * 8 == 192


def test_round_trip_identity():
    f = frame([1.5, -2.25, 1024.0, 20.5, 55.0, 400.0], time=12_000)
    assert decode_frame(encode_frame(f), f.light, f.time) == f


def test_decode_zero_bytes():
    f = decode_frame(b"\x00" * 24, L0, 5)
    assert f.readings == (0.0,) * 6


def test_decode_wrong_length_rejected():
    with pytest.raises(DecodingError):
        decode_frame(b"\x00" * 23, L0, 0)
    with pytest.raises(DecodingError):
        decode_frame(b"\x00" * 25, L0, 0)


def test_non_finite_reading_rejected():
    for bad in (math.nan, math.inf, -math.inf):
        with pytest.raises(EncodingError):
            encode_frame(frame([0, 0, 0, bad, 0, 0]))


def test_frame_quantizes_to_single_precision():
    f = frame([0.1] * 6)
    assert f.readings[0] == quantize32(0.1)
    assert f.readings[0] != 0.1  # 0.1 is not float32-representable


@given(
    st.lists(
        st.floats(min_value=-3.0e38, max_value=3.0e38, allow_nan=False),
        min_size=6,
        max_size=6,
    )
)
def test_round_trip_property(values):
    f = frame(values)
    assert decode_frame(encode_frame(f), f.light, f.time) == f
    assert len(encode_frame(f)) == 24


def test_node_id_labels_and_parse():
    assert str(light_id(3)) == "light:3"
    assert NodeId.parse("light:3") == light_id(3)
    assert NodeId.parse("center") == CENTER
    assert CENTER.label == "center"
    with pytest.raises(ValueError):
        NodeId.parse("lamp:1")
    with pytest.raises(ValueError):
        NodeId(NodeKind.STREET_LIGHT, -1)


def test_guidance_mode_consistency():
    assert GuidanceState.OFF.allowed_in(Mode.EVERYDAY)
    assert GuidanceState.OFF.allowed_in(Mode.EMERGENCY)
    for g in (GuidanceState.AVAILABLE, GuidanceState.OUT_OF_ORDER, GuidanceState.CHARGING):
        assert g.allowed_in(Mode.EVERYDAY)
        assert not g.allowed_in(Mode.EMERGENCY)
    for g in (GuidanceState.SAFE_DIRECTION, GuidanceState.BLOCKED):
        assert g.allowed_in(Mode.EMERGENCY)
        assert not g.allowed_in(Mode.EVERYDAY)
