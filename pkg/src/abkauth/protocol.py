"""Single-round anonymous authentication on top of the attribute-based KEM.

Flow (one message pair)::

    server                                   client
    server_begin  -- Challenge(msp, C_P) -->
                                             client_respond: K = decap(C_P)
                                             B = mpk2^b, K_DH = K^b
                  <-- Response(B, tag) -----
    server_finish: K_DH = B^s

The DH exchange runs in GT with base ``mpk2``: the encapsulated key
``K = mpk2^s`` is the server's partial key, so both ``K^b`` and ``B^s`` equal
``mpk2^(s*b)``.

Only the client authenticates.  Server authentication is left to the
transport (e.g. server-auth TLS).
"""

from __future__ import annotations

import hashlib
import hmac
import logging
import secrets
import threading
import time
from dataclasses import dataclass, field

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from . import wire
from .abkem import (
    SEED_LENGTH,
    AttributeSecretKey,
    MasterPublicKey,
    SystemParams,
    key_decap,
    key_encap_star,
)
from .authority import AttributeRevocationList, RevokedAttributeError
from .messages import SESSION_ID_LENGTH, Challenge, Response, ResultMessage
from .pairing import EncodingError, Group, GroupElement
from .policy import (
    MspProgram,
    PolicyFormula,
    Roster,
    attributes_of,
    compile_msp,
    decode_msp,
    parse_policy,
)

__all__ = [
    "Challenge",
    "Response",
    "ResultMessage",
    "ServerConfig",
    "ClientCredentials",
    "ServerSession",
    "SessionKeys",
    "AuthResult",
    "AuthServer",
    "ProtocolError",
    "PolicyNotSatisfied",
    "AnonymityRefused",
    "EphemeralDestroyed",
    "kdf",
    "mac",
    "verify_mac",
    "server_begin",
    "client_respond",
    "server_finish",
    "serve_connection",
    "login",
]

log = logging.getLogger(__name__)

KDF_SALT = b"ABKEM-AUTH-v1"
DEFAULT_SESSION_TIMEOUT = 120.0


class ProtocolError(Exception):
    """Malformed or inconsistent protocol input."""


class PolicyNotSatisfied(ProtocolError):
    def __init__(self):
        super().__init__("attributes do not satisfy policy")


class AnonymityRefused(ProtocolError):
    def __init__(self, count: int, r: int):
        super().__init__(f"policy is satisfiable by {count} known users, fewer than r={r}")
        self.count = count
        self.r = r


class EphemeralDestroyed(AttributeError):
    """The requested ephemeral secret has been destroyed."""


# -- key derivation and MAC ---------------------------------------------------


class SessionKeys:
    """Session key ``k_d`` and confirmation key ``k_mac``.

    Both live in mutable buffers that :meth:`destroy` overwrites with zeros;
    any later access raises :class:`EphemeralDestroyed`.
    """

    __slots__ = ("_k_d", "_k_mac", "_destroyed")

    def __init__(self, k_d: bytes, k_mac: bytes):
        self._k_d = bytearray(k_d)
        self._k_mac = bytearray(k_mac)
        self._destroyed = False

    def _check(self):
        if self._destroyed:
            raise EphemeralDestroyed("session keys have been destroyed")

    @property
    def k_d(self) -> bytes:
        self._check()
        return bytes(self._k_d)

    @property
    def k_mac(self) -> bytes:
        self._check()
        return bytes(self._k_mac)

    @property
    def destroyed(self) -> bool:
        return self._destroyed

    def fingerprint(self) -> str:
        """First 8 hex characters of SHA-256(k_d); safe to display."""
        return hashlib.sha256(self.k_d).hexdigest()[:8]

    def destroy(self) -> None:
        for buf in (self._k_d, self._k_mac):
            buf[:] = bytes(len(buf))
        self._destroyed = True

    def __eq__(self, other):
        if not isinstance(other, SessionKeys):
            return NotImplemented
        return hmac.compare_digest(self.k_d + self.k_mac, other.k_d + other.k_mac)

    __hash__ = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.destroy()

    def __repr__(self):
        return "SessionKeys(<destroyed>)" if self._destroyed else f"SessionKeys(fp={self.fingerprint()})"


def kdf(shared: GroupElement, context: bytes) -> SessionKeys:
    """HKDF-SHA256 with salt ``ABKEM-AUTH-v1`` over the canonical GT encoding.

    ``k_d`` and ``k_mac`` are expanded from one PRK with info ``context || 0x01``
    and ``context || 0x02``.
    """
    if shared.group is not Group.GT:
        raise TypeError("KDF input must be a GT element")
    ikm = bytes(shared)

    def expand(label: bytes) -> bytes:
        return HKDF(hashes.SHA256(), 32, KDF_SALT, context + label).derive(ikm)

    return SessionKeys(expand(b"\x01"), expand(b"\x02"))


def mac(key: bytes, data: bytes) -> bytes:
    return hmac.new(key, data, hashlib.sha256).digest()


def verify_mac(tag: bytes, key: bytes, data: bytes) -> bool:
    return hmac.compare_digest(tag, mac(key, data))


def _context(transcript: bytes, B: GroupElement, id_sp: str) -> bytes:
    return transcript + bytes(B) + id_sp.encode("utf-8")


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class ServerConfig:
    params: SystemParams
    mpk: MasterPublicKey
    policy: PolicyFormula
    id_sp: str
    require_confirmation: bool = True
    arl: AttributeRevocationList = field(default_factory=AttributeRevocationList)
    msp: MspProgram = field(init=False)

    def __post_init__(self):
        if isinstance(self.policy, str):
            object.__setattr__(self, "policy", parse_policy(self.policy))
        if not self.id_sp:
            raise ValueError("service provider identity must be non-empty")
        object.__setattr__(self, "msp", compile_msp(self.policy))


@dataclass(frozen=True)
class ClientCredentials:
    params: SystemParams
    mpk: MasterPublicKey
    sk: AttributeSecretKey
    min_anonymity_r: int | None = None
    arl: AttributeRevocationList | None = None

    def __post_init__(self):
        if self.min_anonymity_r is not None and self.min_anonymity_r < 1:
            raise ValueError("min_anonymity_r must be a positive integer")

    @property
    def attributes(self) -> tuple[str, ...]:
        return self.sk.attributes


# -- server side --------------------------------------------------------------


class ServerSession:
    """Ephemeral server state for one handshake; consumed by :func:`server_finish`."""

    __slots__ = ("session_id", "suite", "transcript", "id_sp", "created_at", "_s", "_state")

    def __init__(self, session_id: bytes, suite, s: int, transcript: bytes, id_sp: str,
                 created_at: float):
        self.session_id = session_id
        self.suite = suite
        self.transcript = transcript
        self.id_sp = id_sp
        self.created_at = created_at
        self._s = s
        self._state = "awaiting_response"

    @property
    def state(self) -> str:
        return self._state

    @property
    def s(self) -> int:
        if self._s is None:
            raise EphemeralDestroyed("ephemeral exponent has been destroyed")
        return self._s

    def destroy(self) -> None:
        # Python ints cannot be overwritten in place; dropping the only
        # reference is the strongest erasure available here.
        self._s = None
        self._state = "finished"

    def expired(self, now: float, timeout: float) -> bool:
        return now - self.created_at > timeout

    def __repr__(self):
        return f"ServerSession({self.session_id.hex()}, {self._state})"


@dataclass
class AuthResult:
    accepted: bool
    reason: str = ""
    keys: SessionKeys | None = None

    @classmethod
    def rejected(cls, reason: str) -> "AuthResult":
        return cls(False, reason)

    @property
    def outcome(self) -> str:
        return "accepted" if self.accepted else f"rejected ({self.reason})"


def server_begin(cfg: ServerConfig, rng=None) -> tuple[Challenge, ServerSession]:
    """Encapsulate a fresh DH partial key under the configured policy."""
    revoked = cfg.arl.first_revoked(attributes_of(cfg.policy))
    if revoked is not None:
        raise RevokedAttributeError(revoked)
    rng = rng or secrets.SystemRandom()
    seed = rng.randbytes(SEED_LENGTH)
    session_id = rng.randbytes(SESSION_ID_LENGTH)
    result = key_encap_star(cfg.params, cfg.mpk, cfg.msp, seed)
    challenge = Challenge(session_id, cfg.msp, result.encapsulation, cfg.id_sp, cfg.arl.version)
    session = ServerSession(
        session_id, cfg.params.suite, result.s, wire.encode_challenge(challenge), cfg.id_sp, time.monotonic()
    )
    return challenge, session


def server_shared_secret(session: ServerSession, B: GroupElement) -> GroupElement:
    return B ** session.s


def server_finish(session: ServerSession, resp: Response, *, require_confirmation: bool = True,
                  timeout: float | None = None, now: float | None = None) -> AuthResult:
    """Complete the handshake.  The session is consumed whatever the outcome."""
    if session.state == "finished":
        return AuthResult.rejected("replay")
    try:
        if not hmac.compare_digest(resp.session_id, session.session_id):
            return AuthResult.rejected("unknown session")
        now = time.monotonic() if now is None else now
        if timeout is not None and session.expired(now, timeout):
            return AuthResult.rejected("expired")
        B = resp.B
        if B.group is not Group.GT or B.suite is not session.suite:
            return AuthResult.rejected("malformed response")
        if B.is_identity:
            return AuthResult.rejected("degenerate key")
        keys = kdf(server_shared_secret(session, B), _context(session.transcript, B, session.id_sp))
        if resp.tag is None:
            if require_confirmation:
                keys.destroy()
                return AuthResult.rejected("missing confirmation")
        elif not verify_mac(resp.tag, keys.k_mac, _context(session.transcript, B, session.id_sp)):
            keys.destroy()
            return AuthResult.rejected("bad confirmation")
        return AuthResult(True, keys=keys)
    finally:
        session.destroy()


class AuthServer:
    """Session store: issues challenges and matches responses by session id.

    Finished session ids are remembered for one timeout window so that a
    re-delivered response is reported as a replay.
    """

    def __init__(self, cfg: ServerConfig, rng=None, timeout: float = DEFAULT_SESSION_TIMEOUT,
                 clock=time.monotonic):
        self.cfg = cfg
        self.rng = rng or secrets.SystemRandom()
        self.timeout = timeout
        self.clock = clock
        self._sessions: dict[bytes, ServerSession] = {}
        self._finished: dict[bytes, float] = {}
        self._lock = threading.Lock()

    def begin(self) -> Challenge:
        challenge, session = server_begin(self.cfg, self.rng)
        session.created_at = self.clock()
        with self._lock:
            self._sessions[session.session_id] = session
        return challenge

    def finish(self, resp: Response) -> AuthResult:
        with self._lock:
            self._expire_locked()
            session = self._sessions.pop(resp.session_id, None)
            if session is None:
                if resp.session_id in self._finished:
                    return AuthResult.rejected("replay")
                return AuthResult.rejected("unknown session")
            self._finished[resp.session_id] = self.clock()
        result = server_finish(
            session, resp, require_confirmation=self.cfg.require_confirmation,
            timeout=self.timeout, now=self.clock(),
        )
        log.info("session %s %s", resp.session_id.hex()[:8], result.outcome)
        return result

    def finish_bytes(self, data: bytes) -> AuthResult:
        try:
            resp = wire.decode_response(data, self.cfg.params.suite)
        except (EncodingError, ValueError):
            return AuthResult.rejected("malformed response")
        return self.finish(resp)

    def expire(self) -> int:
        with self._lock:
            return self._expire_locked()

    def _expire_locked(self) -> int:
        now = self.clock()
        stale = [sid for sid, s in self._sessions.items() if s.expired(now, self.timeout)]
        for sid in stale:
            self._sessions.pop(sid).destroy()
            self._finished[sid] = now
        for sid in [sid for sid, t in self._finished.items() if now - t > self.timeout]:
            del self._finished[sid]
        return len(stale)

    @property
    def pending(self) -> int:
        return len(self._sessions)


# -- client side --------------------------------------------------------------


def _count_satisfying_msp(msp: MspProgram, roster: Roster, p: int) -> int:
    return sum(1 for _, attrs in roster if decode_msp(msp, attrs, p) is not None)


def client_shares(mpk: MasterPublicKey, K: GroupElement, b_eph: int) -> tuple[GroupElement, GroupElement]:
    """Client partial key ``B = mpk2^b`` and shared secret ``K^b``."""
    return mpk.mpk2 ** b_eph, K ** b_eph


def client_respond(creds: ClientCredentials, ch: Challenge, roster: Roster | None = None,
                   rng=None, *, confirm: bool = True) -> tuple[Response, SessionKeys]:
    """Decapsulate the challenge and answer with ``B`` (and a confirmation tag).

    Raises :class:`PolicyNotSatisfied`, :class:`AnonymityRefused` or
    :class:`ProtocolError`; in every such case nothing should be sent.
    """
    params = creds.params
    suite = params.suite
    if ch.encapsulation.z.suite is not suite:
        raise ProtocolError("challenge uses a different pairing suite")
    if len(ch.encapsulation) != ch.msp.n_rows:
        raise ProtocolError("encapsulation does not match MSP")

    usable = set(creds.attributes)
    if creds.arl is not None:
        if ch.arl_version != creds.arl.version:
            raise ProtocolError(
                f"ARL version mismatch: challenge has v{ch.arl_version}, "
                f"local list is v{creds.arl.version}"
            )
        usable -= creds.arl.revoked

    if creds.min_anonymity_r is not None and roster is not None:
        count = _count_satisfying_msp(ch.msp, roster, suite.p)
        if count < creds.min_anonymity_r:
            raise AnonymityRefused(count, creds.min_anonymity_r)

    K = key_decap(params, ch.msp, ch.encapsulation, usable, creds.sk)
    if K is None:
        raise PolicyNotSatisfied()

    rng = rng or secrets.SystemRandom()
    b_eph = suite.random_scalar(rng)
    B, shared = client_shares(creds.mpk, K, b_eph)
    del b_eph, K

    context = _context(wire.encode_challenge(ch), B, ch.id_sp)
    keys = kdf(shared, context)
    tag = mac(keys.k_mac, context) if confirm else None
    return Response(ch.session_id, B, tag), keys


# -- connection drivers -------------------------------------------------------


def serve_connection(server: AuthServer, transport, *, expect_hello: bool = True) -> AuthResult:
    """Run one handshake over ``transport`` and report the result to the peer."""
    if expect_hello:
        ftype, _ = transport.recv()
        if ftype is not wire.FrameType.HELLO:
            raise ProtocolError(f"expected Hello, got {ftype.name}")
    challenge = server.begin()
    transport.send(wire.FrameType.CHALLENGE, wire.encode_challenge(challenge))
    ftype, payload = transport.recv()
    if ftype is not wire.FrameType.RESPONSE:
        result = AuthResult.rejected("unexpected frame")
    else:
        result = server.finish_bytes(payload)
    transport.send(
        wire.FrameType.RESULT,
        wire.encode_result(ResultMessage(challenge.session_id, result.accepted, result.reason)),
    )
    return result


def login(creds: ClientCredentials, transport, *, roster: Roster | None = None,
          confirm: bool = True, send_hello: bool = True, rng=None,
          tamper=None) -> tuple[ResultMessage, SessionKeys]:
    """Client side of one handshake.

    ``tamper`` optionally rewrites the encoded Response before it is sent
    (used by the demo to show confirmation failures).
    """
    if send_hello:
        transport.send(wire.FrameType.HELLO, b"")
    ftype, payload = transport.recv()
    if ftype is not wire.FrameType.CHALLENGE:
        raise ProtocolError(f"expected Challenge, got {ftype.name}")
    try:
        challenge = wire.decode_challenge(payload, creds.params.suite)
    except (EncodingError, ValueError) as exc:
        raise ProtocolError(f"malformed challenge: {exc}") from exc
    response, keys = client_respond(creds, challenge, roster, rng, confirm=confirm)
    data = wire.encode_response(response)
    if tamper is not None:
        data = tamper(data)
    transport.send(wire.FrameType.RESPONSE, data)
    ftype, payload = transport.recv()
    if ftype is not wire.FrameType.RESULT:
        keys.destroy()
        raise ProtocolError(f"expected Result, got {ftype.name}")
    result = wire.decode_result(payload)
    if not result.accepted:
        keys.destroy()
    return result, keys
