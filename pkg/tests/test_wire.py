import random
import socket
import threading

import pytest

from abkauth import wire
from abkauth.messages import Response
from abkauth.pairing import Group, production_suite
from abkauth.policy import MspProgram, compile_msp, parse_policy

from fuzzing import check_malformed, check_roundtrip, codecs, mutate, rand_challenge

CODECS = {c.name: c for c in codecs()}


def test_msp_layout(mock):
    msp = MspProgram(((1,),), ("A",))
    data = wire.encode_msp(msp, mock)
    assert data == b"\x00\x00\x00\x01" b"\x00\x00\x00\x01" b"\x00\x01" b"\x00\x01A"
    assert wire.decode_msp_bytes(data, mock) == msp


def test_msp_negative_entry_encoded_as_p_minus_one(mock):
    msp = compile_msp(parse_policy("A AND B"))
    data = wire.encode_msp(msp, mock)
    scalars = data[8:8 + 4 * 2]
    assert scalars == b"\x00\x01\x00\x01\x00\x00" + (1008).to_bytes(2, "big")
    assert wire.decode_msp_bytes(data, mock) == msp.reduce(1009)


def test_msp_errors(mock):
    good = wire.encode_msp(MspProgram(((1,),), ("A",)), mock)
    with pytest.raises(wire.WireError, match="truncated"):
        wire.decode_msp_bytes(good[:-1], mock)
    with pytest.raises(wire.WireError, match="trailing"):
        wire.decode_msp_bytes(good + b"\x00", mock)
    bad_scalar = good[:8] + (1009).to_bytes(2, "big") + good[10:]
    with pytest.raises(wire.WireError, match="reduced"):
        wire.decode_msp_bytes(bad_scalar, mock)
    overflow = good[:10] + b"\xff\xff" + b"A"
    with pytest.raises(wire.WireError, match="truncated"):
        wire.decode_msp_bytes(overflow, mock)
    huge = b"\xff\xff\xff\xff" * 2
    with pytest.raises(wire.WireError):
        wire.decode_msp_bytes(huge, mock)


def test_response_confirmation_flag(mock):
    B = mock.gt ** 15
    plain = wire.encode_response(Response(bytes(16), B))
    assert plain[-1:] == b"\x00" and len(plain) == 1 + 16 + 8 + 1
    tagged = wire.encode_response(Response(bytes(16), B, b"\x07" * 32))
    assert tagged[1 + 16 + 8] == 0x01 and tagged[-32:] == b"\x07" * 32


def test_cross_suite_decode_is_rejected(mock, prod):
    data = wire.encode_response(Response(bytes(16), mock.gt ** 3))
    with pytest.raises(wire.WireError, match="suite id"):
        wire.decode_response(data, prod)
    mpk_bytes = CODECS["mpk"].encode(CODECS["mpk"].generate(random.Random(0), mock), mock)
    with pytest.raises(wire.WireError, match="suite id"):
        wire.decode_mpk(mpk_bytes, prod)


@pytest.mark.parametrize("name", sorted(CODECS))
def test_roundtrip_mock(mock, name):
    codec = CODECS[name]
    rng = random.Random(name)
    for _ in range(300):
        assert check_roundtrip(codec, codec.generate(rng, mock), mock)


@pytest.mark.parametrize("name", sorted(CODECS))
def test_roundtrip_production(prod, name):
    codec = CODECS[name]
    rng = random.Random(name)
    for _ in range(10):
        assert check_roundtrip(codec, codec.generate(rng, prod), prod)


@pytest.mark.parametrize("name", sorted(CODECS))
def test_malformed_inputs_only_error(mock, name):
    codec = CODECS[name]
    rng = random.Random("bad" + name)
    for _ in range(300):
        data = codec.encode(codec.generate(rng, mock), mock)
        check_malformed(codec, mutate(rng, data), mock)


def test_malformed_production_challenge(prod, capfd):
    codec = CODECS["challenge"]
    rng = random.Random(5)
    data = codec.encode(rand_challenge(rng, prod), prod)
    for _ in range(100):
        check_malformed(codec, mutate(rng, data), prod)


def test_params_file_reloads_suite(mock):
    data = wire.encode_params(CODECS["params"].generate(None, mock))
    params = wire.decode_params(data)
    assert params.suite is mock
    prod_params = wire.decode_params(wire.encode_params(CODECS["params"].generate(None, production_suite())))
    assert prod_params.suite is production_suite()


def test_params_rejects_composite_modulus(mock):
    data = bytearray(wire.encode_params(CODECS["params"].generate(None, mock)))
    data[-2:] = (1000).to_bytes(2, "big")
    with pytest.raises(wire.WireError):
        wire.decode_params(bytes(data))


def test_key_file_kind_checked(mock):
    rng = random.Random(1)
    msk = wire.encode_msk(CODECS["msk"].generate(rng, mock))
    with pytest.raises(wire.WireError, match="kind"):
        wire.decode_mpk(msk, mock)
    with pytest.raises(wire.WireError, match="magic"):
        wire.decode_msk(b"XXXX" + msk[4:], mock)


def test_secret_key_attributes_must_be_sorted(mock):
    rng = random.Random(2)
    sk = CODECS["secret_key"].generate(rng, mock)
    data = wire.encode_secret_key(sk)
    if len(sk.attributes) > 1:
        swapped = type(sk)(tuple(reversed(sk.attributes)), sk.x1, sk.x2, sk.components)
        with pytest.raises(wire.WireError):
            wire.decode_secret_key(wire.encode_secret_key(swapped), mock)
    assert wire.decode_secret_key(data, mock) == sk


# -- frames -------------------------------------------------------------------


def test_frame_layout():
    frame = wire.encode_frame(wire.FrameType.HELLO, b"")
    assert frame == b"ABK1\x04\x00\x00\x00\x00"
    assert wire.decode_frame(frame) == (wire.FrameType.HELLO, b"")


def test_frame_errors():
    with pytest.raises(wire.WireError, match="unknown frame type"):
        wire.decode_frame(b"ABK1\x09\x00\x00\x00\x00")
    with pytest.raises(wire.WireError, match="magic"):
        wire.decode_frame(b"ABK2\x01\x00\x00\x00\x00")
    with pytest.raises(wire.WireError, match="cap"):
        wire.decode_frame_header(b"ABK1\x01" + (wire.MAX_FRAME + 1).to_bytes(4, "big"))
    with pytest.raises(wire.WireError, match="cap"):
        wire.encode_frame(wire.FrameType.CHALLENGE, bytes(wire.MAX_FRAME + 1))
    with pytest.raises(wire.WireError, match="length mismatch"):
        wire.decode_frame(b"ABK1\x01\x00\x00\x00\x02a")


def test_loopback_delivers_identical_bytes():
    a, b = wire.LoopbackTransport.pair(timeout=1)
    a.send(wire.FrameType.CHALLENGE, b"payload")
    assert b.recv() == (wire.FrameType.CHALLENGE, b"payload")
    b.send(wire.FrameType.RESPONSE, b"r")
    assert a.recv() == (wire.FrameType.RESPONSE, b"r")
    assert a.trace == [("a", wire.FrameType.CHALLENGE), ("b", wire.FrameType.RESPONSE)]
    a.close()
    with pytest.raises(wire.TransportClosed):
        b.recv()
    with pytest.raises(wire.TransportClosed):
        b.send(wire.FrameType.HELLO, b"")


def test_socket_transport_roundtrip():
    left, right = socket.socketpair()
    a, b = wire.SocketTransport(left), wire.SocketTransport(right)
    with a, b:
        payload = random.Random(3).randbytes(100_000)
        t = threading.Thread(target=a.send, args=(wire.FrameType.CHALLENGE, payload))
        t.start()
        assert b.recv() == (wire.FrameType.CHALLENGE, payload)
        t.join()


def test_socket_oversize_frame_rejected_before_payload_read():
    left, right = socket.socketpair()
    with wire.SocketTransport(right) as b:
        # header only: a conforming reader must refuse without waiting for 1 MiB+
        left.sendall(b"ABK1\x01" + (wire.MAX_FRAME + 1).to_bytes(4, "big"))
        with pytest.raises(wire.WireError, match="cap"):
            b.recv()
    left.close()


def test_socket_peer_closed():
    left, right = socket.socketpair()
    with wire.SocketTransport(right) as b:
        left.sendall(b"ABK1\x01\x00\x00\x00\x05ab")
        left.close()
        with pytest.raises(wire.TransportClosed):
            b.recv()
