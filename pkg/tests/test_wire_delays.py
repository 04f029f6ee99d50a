from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from optbft.avid import AvidKind, AvidMessage
from optbft.balanced import BalancedMessage, BrbcKind
from optbft.coding import encode_fragments
from optbft.rbc import InstanceId, RbcKind, RbcMessage
from optbft.sailfish import TimeoutMessage
from optbft.sim.delays import GstWrapper, JitterRange, PerLinkMatrix, Uniform, load_gcp_ping
from optbft.sim.wire import WireError, decode_message, encode_message, kind_name

ROOT, FRAGS = encode_fragments(b"some payload", 7, 3)


def samples():
    iid = InstanceId(2, 9)
    yield RbcMessage(RbcKind.ECHO, iid, b"abc")
    yield RbcMessage(RbcKind.PROPOSE, iid, b"")
    yield BalancedMessage(BrbcKind.PROPOSE, iid, ROOT, fragment=FRAGS[3])
    yield BalancedMessage(BrbcKind.PROPOSE_FULL, iid, ROOT, payload=b"some payload")
    yield BalancedMessage(BrbcKind.READY, iid, ROOT)
    yield AvidMessage(AvidKind.ECHO, InstanceId(-1, 1), ROOT, FRAGS[6])
    yield AvidMessage(AvidKind.READY, InstanceId(-1, 1), ROOT)
    yield TimeoutMessage(17)


@pytest.mark.parametrize("msg", list(samples()), ids=kind_name)
def test_wire_round_trip(msg):
    data = encode_message(msg)
    assert int.from_bytes(data[:4], "little") == len(data) - 4
    assert decode_message(data) == msg


def test_wire_layout_of_rbc_echo():
    data = encode_message(RbcMessage(RbcKind.ECHO, InstanceId(1, 2), b"xy"))
    assert data == bytes.fromhex("0f000000" "02" "01000000" "02000000" "02000000") + b"xy"


def test_wire_rejects_garbage():
    good = encode_message(RbcMessage(RbcKind.ECHO, InstanceId(1, 2), b"xy"))
    for bad in (good[:-1], good + b"\x00", b"\x01\x00\x00\x00\x7f", b""):
        with pytest.raises(WireError):
            decode_message(bad)


@given(st.integers(-1, 2**31 - 1), st.integers(0, 2**32 - 1), st.binary(max_size=64), st.sampled_from(list(RbcKind)))
def test_rbc_wire_property(b, seq, payload, kind):
    msg = RbcMessage(kind, InstanceId(b, seq), payload)
    assert decode_message(encode_message(msg)) == msg


def test_uniform_and_loopback():
    d = Uniform(10, self_us=0)
    assert d.delay(0, 1, 5) == 10 and d.delay(2, 2, 5) == 0
    assert d.max_delay([0, 1, 2]) == 10


def test_gcp_matrix_is_half_the_ping():
    ping = load_gcp_ping()
    regions = len(ping["regions"])
    m = PerLinkMatrix.from_regions(10)
    # parties are spread round-robin over the regions
    assert m.delay(0, 1, 0) == round(ping["ping_ms"][0][1] * 1000 / 2)
    assert m.delay(1, regions + 2, 0) == round(ping["ping_ms"][1][2] * 1000 / 2)
    assert m.delay(3, 3, 0) == 0


def test_jitter_is_seeded_and_bounded():
    a = JitterRange(5, 15, seed=3)
    b = JitterRange(5, 15, seed=3)
    xs = [a.delay(0, 1, t) for t in range(50)]
    assert xs == [b.delay(0, 1, t) for t in range(50)]
    assert all(5 <= x <= 15 for x in xs)
    assert len(set(xs)) > 1


@given(st.integers(0, 10_000), st.integers(0, 100))
def test_gst_bounds_delays_after_stabilisation(send, seed):
    d = GstWrapper(Uniform(10), gst_us=1000, extra_us=5000, bound_us=20, seed=seed)
    x = d.delay(0, 1, send)
    assert x >= 10
    if send >= 1000:
        assert x <= 20
    else:
        assert send + x <= 1000 + 20


def test_step_fraction_formatting():
    from optbft.sim import format_steps

    assert format_steps(Fraction(2)) == "2.0 δ"
    assert format_steps(Fraction(5, 2)) == "5/2 δ (2.500)"
    assert format_steps(None) == "-"
