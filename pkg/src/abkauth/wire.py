"""Bit-exact binary encodings, key files and framed transports.

All integers are big-endian.  Strings are ``u16 length || UTF-8``.  Group
elements use the fixed-length canonical encoding published by the suite and
scalars are ``ceil(bits(p)/8)`` bytes, reduced mod ``p``.

Frame::

    "ABK1" | type:u8 | length:u32 | payload

Key file::

    "ABK1" | kind:u8 | suite_id:u8 | body

See ``docs/wire-format.md`` for every body layout.
"""

from __future__ import annotations

import enum
import queue
import socket
import struct
import threading

from .abkem import (
    AttributeSecretKey,
    Encapsulation,
    MasterPublicKey,
    MasterSecretKey,
    SystemParams,
)
from .authority import AttributeRevocationList
from .messages import SESSION_ID_LENGTH, TAG_LENGTH, Challenge, Response, ResultMessage
from .pairing import EncodingError, Group, GroupElement, PairingSuite, suite_from_id
from .policy import MspProgram

MAGIC = b"ABK1"
MAX_FRAME = 1 << 20
_HEADER = struct.Struct(">4sBI")


class WireError(EncodingError):
    """Malformed, truncated or non-canonical bytes."""


class FrameType(enum.IntEnum):
    CHALLENGE = 0x01
    RESPONSE = 0x02
    RESULT = 0x03
    HELLO = 0x04


class KeyKind(enum.IntEnum):
    PARAMS = 0x10
    MPK = 0x11
    MSK = 0x12
    SECRET_KEY = 0x13
    ARL = 0x14


# -- primitive readers/writers ------------------------------------------------


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(bytes(data))
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise WireError("truncated input")
        out = self.data[self.pos:self.pos + n].tobytes()
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return int.from_bytes(self.take(2), "big")

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def string(self) -> str:
        raw = self.take(self.u16())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WireError("invalid UTF-8 string") from exc

    def element(self, suite: PairingSuite, group: Group) -> GroupElement:
        return suite.decode(group, self.take(suite.element_length(group)))

    def scalar(self, suite: PairingSuite) -> int:
        return suite.decode_scalar(self.take(suite.scalar_length))

    def suite_id(self, suite: PairingSuite) -> None:
        sid = self.u8()
        if sid != suite.suite_id:
            raise WireError(f"suite id mismatch: got 0x{sid:02x}, expected 0x{suite.suite_id:02x}")

    def end(self) -> None:
        if self.pos != len(self.data):
            raise WireError(f"{len(self.data) - self.pos} trailing bytes")


def _string(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise WireError("string longer than 65535 bytes")
    return len(raw).to_bytes(2, "big") + raw


def _u32(n: int) -> bytes:
    return n.to_bytes(4, "big")


def _decode(fn, data: bytes, *args):
    r = _Reader(data)
    try:
        out = fn(r, *args)
    except WireError:
        raise
    except (EncodingError, ValueError) as exc:
        raise WireError(str(exc)) from exc
    r.end()
    return out


# -- MSP ----------------------------------------------------------------------


def encode_msp(msp: MspProgram, suite: PairingSuite) -> bytes:
    parts = [_u32(msp.n_rows), _u32(msp.n_cols)]
    parts += [suite.encode_scalar(x) for row in msp.matrix for x in row]
    parts += [_string(label) for label in msp.labels]
    return b"".join(parts)


def _read_msp(r: _Reader, suite: PairingSuite) -> MspProgram:
    n, m = r.u32(), r.u32()
    if n == 0 or m == 0:
        raise WireError("MSP dimensions must be positive")
    if n * m * suite.scalar_length > len(r.data) - r.pos:
        raise WireError("truncated input")
    flat = [r.scalar(suite) for _ in range(n * m)]
    labels = tuple(r.string() for _ in range(n))
    return MspProgram(tuple(tuple(flat[i * m:(i + 1) * m]) for i in range(n)), labels)


def decode_msp_bytes(data: bytes, suite: PairingSuite) -> MspProgram:
    return _decode(_read_msp, data, suite)


# -- encapsulation and messages -------------------------------------------------


def encode_encapsulation(enc: Encapsulation) -> bytes:
    parts = [bytes(enc.z), _u32(len(enc.rows))]
    for c1, c2 in enc.rows:
        parts += [bytes(c1), bytes(c2)]
    return b"".join(parts)


def _read_encapsulation(r: _Reader, suite: PairingSuite) -> Encapsulation:
    z = r.element(suite, Group.G2)
    n = r.u32()
    if n * (suite.element_length(Group.G1) + suite.element_length(Group.G2)) > len(r.data) - r.pos:
        raise WireError("truncated input")
    rows = tuple((r.element(suite, Group.G1), r.element(suite, Group.G2)) for _ in range(n))
    return Encapsulation(z, rows)


def decode_encapsulation(data: bytes, suite: PairingSuite) -> Encapsulation:
    return _decode(_read_encapsulation, data, suite)


def encode_challenge(ch: Challenge) -> bytes:
    suite = ch.encapsulation.z.suite
    msp = encode_msp(ch.msp, suite)
    return b"".join([
        bytes([suite.suite_id]),
        ch.session_id,
        _string(ch.id_sp),
        ch.arl_version.to_bytes(8, "big"),
        _u32(len(msp)),
        msp,
        encode_encapsulation(ch.encapsulation),
    ])


def _read_challenge(r: _Reader, suite: PairingSuite) -> Challenge:
    r.suite_id(suite)
    session_id = r.take(SESSION_ID_LENGTH)
    id_sp = r.string()
    arl_version = r.u64()
    msp = decode_msp_bytes(r.take(r.u32()), suite)
    enc = _read_encapsulation(r, suite)
    return Challenge(session_id, msp, enc, id_sp, arl_version)


def decode_challenge(data: bytes, suite: PairingSuite) -> Challenge:
    return _decode(_read_challenge, data, suite)


def encode_response(resp: Response) -> bytes:
    head = bytes([resp.B.suite.suite_id]) + resp.session_id + bytes(resp.B)
    if resp.tag is None:
        return head + b"\x00"
    return head + b"\x01" + resp.tag


def _read_response(r: _Reader, suite: PairingSuite) -> Response:
    r.suite_id(suite)
    session_id = r.take(SESSION_ID_LENGTH)
    B = r.element(suite, Group.GT)
    flag = r.u8()
    if flag == 0:
        tag = None
    elif flag == 1:
        tag = r.take(TAG_LENGTH)
    else:
        raise WireError(f"invalid confirmation flag 0x{flag:02x}")
    return Response(session_id, B, tag)


def decode_response(data: bytes, suite: PairingSuite) -> Response:
    return _decode(_read_response, data, suite)


def encode_result(res: ResultMessage) -> bytes:
    return res.session_id + bytes([1 if res.accepted else 0]) + _string(res.reason)


def _read_result(r: _Reader) -> ResultMessage:
    session_id = r.take(SESSION_ID_LENGTH)
    flag = r.u8()
    if flag not in (0, 1):
        raise WireError("invalid outcome byte")
    return ResultMessage(session_id, bool(flag), r.string())


def decode_result(data: bytes) -> ResultMessage:
    return _decode(_read_result, data)


# -- key files ----------------------------------------------------------------


def _key_file(kind: KeyKind, suite: PairingSuite, body: bytes) -> bytes:
    return MAGIC + bytes([kind, suite.suite_id]) + body


def _open_key_file(r: _Reader, kind: KeyKind) -> int:
    if r.take(4) != MAGIC:
        raise WireError("bad magic")
    got = r.u8()
    if got != kind:
        raise WireError(f"expected key file kind 0x{kind:02x}, got 0x{got:02x}")
    return r.u8()


def encode_params(params: SystemParams) -> bytes:
    p = params.p.to_bytes(params.suite.scalar_length, "big")
    body = params.security.to_bytes(2, "big") + len(p).to_bytes(2, "big") + p
    return _key_file(KeyKind.PARAMS, params.suite, body)


def _read_params(r: _Reader) -> SystemParams:
    sid = _open_key_file(r, KeyKind.PARAMS)
    security = r.u16()
    raw = r.take(r.u16())
    p = int.from_bytes(raw, "big")
    if not raw or raw[0] == 0:
        raise WireError("non-canonical group order")
    return SystemParams(suite_from_id(sid, p), security)


def decode_params(data: bytes) -> SystemParams:
    return _decode(_read_params, data)


def encode_mpk(mpk: MasterPublicKey) -> bytes:
    return _key_file(KeyKind.MPK, mpk.mpk1.suite, bytes(mpk.mpk1) + bytes(mpk.mpk2))


def _read_mpk(r: _Reader, suite: PairingSuite) -> MasterPublicKey:
    if _open_key_file(r, KeyKind.MPK) != suite.suite_id:
        raise WireError("suite id mismatch")
    return MasterPublicKey(r.element(suite, Group.G1), r.element(suite, Group.GT))


def decode_mpk(data: bytes, suite: PairingSuite) -> MasterPublicKey:
    return _decode(_read_mpk, data, suite)


def encode_msk(msk: MasterSecretKey) -> bytes:
    return _key_file(KeyKind.MSK, msk.msk.suite, bytes(msk.msk))


def _read_msk(r: _Reader, suite: PairingSuite) -> MasterSecretKey:
    if _open_key_file(r, KeyKind.MSK) != suite.suite_id:
        raise WireError("suite id mismatch")
    return MasterSecretKey(r.element(suite, Group.G1))


def decode_msk(data: bytes, suite: PairingSuite) -> MasterSecretKey:
    return _decode(_read_msk, data, suite)


def encode_secret_key(sk: AttributeSecretKey) -> bytes:
    parts = [len(sk.attributes).to_bytes(2, "big")]
    parts += [_string(a) for a in sk.attributes]
    parts += [bytes(sk.x1), bytes(sk.x2)]
    parts += [bytes(c) for c in sk.components]
    return _key_file(KeyKind.SECRET_KEY, sk.x1.suite, b"".join(parts))


def _read_secret_key(r: _Reader, suite: PairingSuite) -> AttributeSecretKey:
    if _open_key_file(r, KeyKind.SECRET_KEY) != suite.suite_id:
        raise WireError("suite id mismatch")
    t = r.u16()
    attrs = tuple(r.string() for _ in range(t))
    if not attrs or list(attrs) != sorted(set(attrs)) or not all(attrs):
        raise WireError("secret key attributes must be non-empty, sorted and unique")
    x1 = r.element(suite, Group.G1)
    x2 = r.element(suite, Group.G2)
    comps = tuple(r.element(suite, Group.G1) for _ in range(t))
    return AttributeSecretKey(attrs, x1, x2, comps)


def decode_secret_key(data: bytes, suite: PairingSuite) -> AttributeSecretKey:
    return _decode(_read_secret_key, data, suite)


def encode_arl(arl: AttributeRevocationList, suite: PairingSuite) -> bytes:
    names = sorted(arl.revoked)
    body = arl.version.to_bytes(8, "big") + _u32(len(names)) + b"".join(_string(a) for a in names)
    return _key_file(KeyKind.ARL, suite, body)


def _read_arl(r: _Reader, suite: PairingSuite) -> AttributeRevocationList:
    if _open_key_file(r, KeyKind.ARL) != suite.suite_id:
        raise WireError("suite id mismatch")
    version = r.u64()
    count = r.u32()
    if count > len(r.data) - r.pos:
        raise WireError("truncated input")
    names = [r.string() for _ in range(count)]
    if names != sorted(set(names)) or not all(names):
        raise WireError("ARL entries must be non-empty, sorted and unique")
    return AttributeRevocationList(version, frozenset(names))


def decode_arl(data: bytes, suite: PairingSuite) -> AttributeRevocationList:
    return _decode(_read_arl, data, suite)


# -- frames and transports ----------------------------------------------------


class TransportClosed(ConnectionError):
    pass


def encode_frame(ftype: FrameType, payload: bytes) -> bytes:
    if len(payload) > MAX_FRAME:
        raise WireError(f"frame payload of {len(payload)} bytes exceeds the 1 MiB cap")
    return _HEADER.pack(MAGIC, FrameType(ftype), len(payload)) + payload


def decode_frame_header(header: bytes) -> tuple[FrameType, int]:
    if len(header) != _HEADER.size:
        raise WireError("truncated frame header")
    magic, ftype, length = _HEADER.unpack(header)
    if magic != MAGIC:
        raise WireError("bad frame magic")
    try:
        ftype = FrameType(ftype)
    except ValueError:
        raise WireError(f"unknown frame type 0x{ftype:02x}") from None
    if length > MAX_FRAME:
        raise WireError(f"frame length {length} exceeds the 1 MiB cap")
    return ftype, length


def decode_frame(data: bytes) -> tuple[FrameType, bytes]:
    ftype, length = decode_frame_header(data[:_HEADER.size])
    payload = data[_HEADER.size:]
    if len(payload) != length:
        raise WireError("frame length mismatch")
    return ftype, bytes(payload)


class LoopbackTransport:
    """In-memory endpoint.  Both ends of a pair share one ``trace`` list."""

    def __init__(self, name: str, inbox: queue.Queue, trace: list, timeout: float):
        self.name = name
        self.inbox = inbox
        self.peer: LoopbackTransport | None = None
        self.trace = trace
        self.timeout = timeout
        self.closed = False

    @classmethod
    def pair(cls, timeout: float = 5.0) -> tuple["LoopbackTransport", "LoopbackTransport"]:
        trace: list[tuple[str, FrameType]] = []
        a = cls("a", queue.Queue(), trace, timeout)
        b = cls("b", queue.Queue(), trace, timeout)
        a.peer, b.peer = b, a
        return a, b

    def send(self, ftype: FrameType, payload: bytes) -> None:
        if self.closed or self.peer.closed:
            raise TransportClosed("peer closed")
        frame = encode_frame(ftype, payload)
        self.trace.append((self.name, FrameType(ftype)))
        self.peer.inbox.put(frame)

    def recv(self) -> tuple[FrameType, bytes]:
        try:
            frame = self.inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportClosed("no frame received") from None
        if frame is None:
            raise TransportClosed("peer closed")
        return decode_frame(frame)

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self.peer.inbox.put(None)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SocketTransport:
    """Framed transport over a connected stream socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._send_lock = threading.Lock()

    @classmethod
    def connect(cls, host: str, port: int, timeout: float | None = 30.0) -> "SocketTransport":
        return cls(socket.create_connection((host, port), timeout=timeout))

    def _read_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                raise TransportClosed("peer closed")
            buf += chunk
        return bytes(buf)

    def send(self, ftype: FrameType, payload: bytes) -> None:
        frame = encode_frame(ftype, payload)
        with self._send_lock:
            self.sock.sendall(frame)

    def recv(self) -> tuple[FrameType, bytes]:
        ftype, length = decode_frame_header(self._read_exact(_HEADER.size))
        return ftype, self._read_exact(length)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
