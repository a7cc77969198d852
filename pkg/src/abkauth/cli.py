"""Command-line interface.

Exit codes: 0 success, 1 usage or I/O error, 2 authentication rejected,
3 refused by the r-anonymity guard.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import socketserver
import sys
import threading
from pathlib import Path

from . import wire
from .abkem import SystemParams
from .authority import (
    AuthorityState,
    RevokedAttributeError,
    authority_init,
    issue_keys,
    revoke_attribute,
    rotate,
)
from .pairing import SUITE_MOCK, mock_suite_new, production_suite
from .policy import (
    PolicySyntaxError,
    attributes_of,
    compile_msp,
    count_satisfying,
    decode_msp,
    format_policy,
    load_roster,
    parse_policy,
    satisfies,
)
from .protocol import (
    AnonymityRefused,
    AuthServer,
    ClientCredentials,
    PolicyNotSatisfied,
    ProtocolError,
    ServerConfig,
    login,
    serve_connection,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REJECTED = 2
EXIT_ANONYMITY = 3

DEFAULT_MOCK_PRIME = 1009

log = logging.getLogger("abkauth")


class UsageError(Exception):
    pass


def _fingerprint(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:8]


def _split_attrs(text: str) -> set[str]:
    attrs = {a.strip() for a in text.split(",") if a.strip()}
    if not attrs:
        raise UsageError("at least one attribute is required")
    return attrs


def _address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise UsageError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def _read(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _load_params(path, suite_flag: str) -> SystemParams:
    params = wire.decode_params(_read(path))
    if params.suite.suite_id == SUITE_MOCK and suite_flag != "mock":
        raise UsageError("refusing the insecure mock suite without an explicit --suite mock")
    if params.suite.suite_id != SUITE_MOCK and suite_flag == "mock":
        raise UsageError("--suite mock given but key files use the production suite")
    return params


def _load_authority(directory: Path, suite_flag: str) -> AuthorityState:
    params = _load_params(directory / "params.key", suite_flag)
    suite = params.suite
    mpk = wire.decode_mpk(_read(directory / "mpk.key"), suite)
    msk = wire.decode_msk(_read(directory / "msk.key"), suite)
    arl = wire.decode_arl(_read(directory / "arl.key"), suite)
    st = AuthorityState(params, mpk, msk, arl)
    if not st.consistent():
        raise UsageError("master secret key does not match master public key")
    return st


def _save_authority(st: AuthorityState, directory: Path, *, keys: bool = True) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    suite = st.params.suite
    if keys:
        (directory / "params.key").write_bytes(wire.encode_params(st.params))
        (directory / "mpk.key").write_bytes(wire.encode_mpk(st.mpk))
        msk_path = directory / "msk.key"
        msk_path.write_bytes(wire.encode_msk(st.msk))
        msk_path.chmod(0o600)
    (directory / "arl.key").write_bytes(wire.encode_arl(st.arl, suite))


def _make_suite(args):
    if args.suite == "mock":
        return mock_suite_new(args.mock_prime)
    return production_suite()


# -- authority ----------------------------------------------------------------


def cmd_authority_init(args) -> int:
    out = Path(args.out)
    if (out / "msk.key").exists() and not args.force:
        raise UsageError(f"{out}/msk.key exists; pass --force to overwrite")
    st = authority_init(_make_suite(args))
    _save_authority(st, out)
    print(f"suite {st.params.suite.name}, wrote params.key mpk.key msk.key arl.key to {out}")
    print(f"mpk fingerprint {_fingerprint(wire.encode_mpk(st.mpk))}")
    print(f"ARL version {st.arl.version}")
    return EXIT_OK


def cmd_authority_issue(args) -> int:
    st = _load_authority(Path(args.dir), args.suite)
    sk = issue_keys(st, _split_attrs(args.attrs))
    data = wire.encode_secret_key(sk)
    out = Path(args.out)
    out.write_bytes(data)
    out.chmod(0o600)
    print(f"issued key for {{{', '.join(sk.attributes)}}} -> {out}")
    print(f"key fingerprint {_fingerprint(data)}")
    return EXIT_OK


def cmd_authority_revoke(args) -> int:
    directory = Path(args.dir)
    st = _load_authority(directory, args.suite)
    arl = revoke_attribute(st, args.attr)
    _save_authority(st, directory, keys=False)
    print(f"revoked {args.attr!r}")
    print(f"ARL version {arl.version}: {', '.join(sorted(arl.revoked))}")
    return EXIT_OK


def cmd_authority_rotate(args) -> int:
    directory = Path(args.dir)
    st = rotate(_load_authority(directory, args.suite))
    _save_authority(st, directory)
    print("master keys regenerated; all previously issued keys are now invalid")
    print(f"mpk fingerprint {_fingerprint(wire.encode_mpk(st.mpk))}")
    print(f"ARL version {st.arl.version}")
    return EXIT_OK


# -- policy -------------------------------------------------------------------


def _policy_text(args) -> str:
    if args.policy_file:
        return Path(args.policy_file).read_text(encoding="utf-8")
    if args.policy is None:
        raise UsageError("a policy (argument or --policy-file) is required")
    return args.policy


def cmd_policy_compile(args) -> int:
    f = parse_policy(_policy_text(args))
    msp = compile_msp(f)
    print(f"policy: {format_policy(f)}")
    print(f"MSP {msp.n_rows}x{msp.n_cols}")
    print(msp.format())
    if args.binary:
        suite = _make_suite(args)
        Path(args.binary).write_bytes(wire.encode_msp(msp, suite))
        print(f"wrote binary MSP ({suite.name} scalars) to {args.binary}")
    return EXIT_OK


def cmd_policy_check(args) -> int:
    f = parse_policy(_policy_text(args))
    attrs = _split_attrs(args.attrs)
    ok = satisfies(f, attrs)
    assignment = decode_msp(compile_msp(f), attrs, production_suite().p)
    assert ok == (assignment is not None)
    if ok:
        print(f"satisfied (rows {', '.join(map(str, assignment.indices))})")
        return EXIT_OK
    print("not satisfied")
    return EXIT_REJECTED


def cmd_policy_anonymity(args) -> int:
    f = parse_policy(_policy_text(args))
    if args.r < 1:
        raise UsageError("--r must be a positive integer")
    roster = load_roster(args.roster)
    count = count_satisfying(f, roster)
    verdict = "pass" if count >= args.r else "fail"
    print(f"{verdict}: {count} of {len(roster)} users satisfy the policy (r={args.r})")
    return EXIT_OK if verdict == "pass" else EXIT_ANONYMITY


# -- serve / login ------------------------------------------------------------


def _serve(args) -> int:
    directory = Path(args.dir) if args.dir else None
    if directory is None and not (args.params and args.mpk):
        raise UsageError("serve needs --dir or both --params and --mpk")
    params = _load_params(args.params or directory / "params.key", args.suite)
    suite = params.suite
    mpk = wire.decode_mpk(_read(args.mpk or directory / "mpk.key"), suite)
    arl_path = args.arl or (directory / "arl.key" if directory else None)
    arl = wire.decode_arl(_read(arl_path), suite) if arl_path else None
    cfg_kwargs = {"arl": arl} if arl is not None else {}
    cfg = ServerConfig(params, mpk, parse_policy(_policy_text(args)), args.id_sp,
                       require_confirmation=not args.no_confirm, **cfg_kwargs)
    revoked = cfg.arl.first_revoked(attributes_of(cfg.policy))
    if revoked is not None:
        raise RevokedAttributeError(revoked)
    server = AuthServer(cfg, timeout=args.timeout)
    host, port = _address(args.listen)
    remaining = [args.max_connections]
    done = threading.Event()
    lock = threading.Lock()

    class Handler(socketserver.BaseRequestHandler):
        def handle(self):
            transport = wire.SocketTransport(self.request)
            try:
                result = serve_connection(server, transport, expect_hello=not args.server_initiated)
            except (ProtocolError, ConnectionError, wire.WireError, OSError) as exc:
                print(f"connection error: {exc}", flush=True)
            else:
                line = result.outcome
                if result.accepted:
                    line += f" fp={result.keys.fingerprint()}"
                    result.keys.destroy()
                print(line, flush=True)
            finally:
                with lock:
                    if remaining[0] is not None:
                        remaining[0] -= 1
                        if remaining[0] <= 0:
                            done.set()

    socketserver.ThreadingTCPServer.allow_reuse_address = True
    with socketserver.ThreadingTCPServer((host, port), Handler) as srv:
        bound = srv.server_address
        print(f"listening on {bound[0]}:{bound[1]} policy: {format_policy(cfg.policy)}", flush=True)
        thread = threading.Thread(target=srv.serve_forever, daemon=True)
        thread.start()
        try:
            done.wait()
        except KeyboardInterrupt:
            pass
        srv.shutdown()
    return EXIT_OK


def _login(args) -> int:
    params = _load_params(args.params, args.suite)
    suite = params.suite
    mpk = wire.decode_mpk(_read(args.mpk), suite)
    sk = wire.decode_secret_key(_read(args.sk), suite)
    arl = wire.decode_arl(_read(args.arl), suite) if args.arl else None
    roster = load_roster(args.roster) if args.roster else None
    if args.min_anonymity is not None and roster is None:
        raise UsageError("--min-anonymity needs --roster")
    creds = ClientCredentials(params, mpk, sk, min_anonymity_r=args.min_anonymity, arl=arl)
    host, port = _address(args.connect)
    try:
        transport = wire.SocketTransport.connect(host, port)
    except OSError as exc:
        raise UsageError(f"cannot connect to {host}:{port}: {exc}") from exc
    with transport:
        try:
            result, keys = login(creds, transport, roster=roster, confirm=not args.no_confirm,
                                 send_hello=not args.no_hello)
        except AnonymityRefused as exc:
            print(f"refused: {exc}")
            return EXIT_ANONYMITY
        except PolicyNotSatisfied as exc:
            print(f"refused: {exc}")
            return EXIT_REJECTED
    if not result.accepted:
        print(f"rejected ({result.reason})")
        return EXIT_REJECTED
    print(f"accepted fp={keys.fingerprint()}")
    keys.destroy()
    return EXIT_OK


# -- demo ---------------------------------------------------------------------


def _flip_tag_byte(data: bytes) -> bytes:
    buf = bytearray(data)
    buf[-1] ^= 0x01
    return bytes(buf)


def _flip_id_sp_byte(data: bytes) -> bytes:
    buf = bytearray(data)
    buf[1 + 16 + 2] ^= 0x01  # first byte of id_sp after suite id, session id, length
    return bytes(buf)


def cmd_demo(args) -> int:
    from .abkem import key_decap
    from .messages import Challenge
    from .protocol import client_respond

    suite = _make_suite(args)
    print(f"[authority] setup on {suite.name}"
          + (" (INSECURE mock suite)" if suite.suite_id == SUITE_MOCK else ""))
    print("            mpk = (g1^b, e(g1,g2)^a), msk = g1^a")
    st = authority_init(suite)
    f = parse_policy(args.policy)
    attrs = _split_attrs(args.attrs) if args.attrs else attributes_of(f)
    sk = issue_keys(st, attrs)
    print(f"[authority] issued key for {{{', '.join(sk.attributes)}}}")
    print("            x1 = g1^(a+b*r), x2 = g2^r, sk_i = H(s_i)^r")

    cfg = ServerConfig(st.params, st.mpk, f, args.id_sp)
    creds = ClientCredentials(st.params, st.mpk, sk, arl=st.arl)
    server = AuthServer(cfg)
    server_end, client_end = wire.LoopbackTransport.pair()

    print(f"[server] policy: {format_policy(f)}")
    print(f"[server] MSP (M, label), {cfg.msp.n_rows}x{cfg.msp.n_cols}:")
    for line in cfg.msp.format().splitlines():
        print(f"           {line}")

    client_end.send(wire.FrameType.HELLO, b"")
    server_end.recv()
    challenge = server.begin()
    ch_bytes = wire.encode_challenge(challenge)
    print(f"[server] -> Challenge ({len(ch_bytes)} bytes) session={challenge.session_id.hex()}")
    print(f"           z = g2^s              {bytes(challenge.encapsulation.z).hex()[:32]}")
    print(f"           c_i = (mpk1^mu_i * H(label_i)^-r_i, g2^r_i), mu = M.(s, v_2..v_m), "
          f"{len(challenge.encapsulation)} rows")
    print(f"           id_sp={challenge.id_sp!r} arl_version={challenge.arl_version}")
    if args.tamper == "challenge":
        ch_bytes = _flip_id_sp_byte(ch_bytes)
        print("[attacker] flipped one bit of id_sp in the Challenge")
    server_end.send(wire.FrameType.CHALLENGE, ch_bytes)

    _, payload = client_end.recv()
    received: Challenge = wire.decode_challenge(payload, suite)
    try:
        response, client_keys = client_respond(creds, received)
    except PolicyNotSatisfied as exc:
        print(f"[client] {exc}; nothing sent")
        return EXIT_REJECTED
    print("[client] K = e(x1, z) / (e(w, x2) * prod e(sk_pos(i), c_i2^d_i)),  w = prod c_i1^d_i")
    assignment = decode_msp(received.msp, sk.attributes, suite.p)
    print(f"           rows I = {list(assignment.indices)}, recombine to (1,0,...,0) mod p")
    resp_bytes = wire.encode_response(response)
    print(f"[client] -> Response ({len(resp_bytes)} bytes)")
    print(f"           B = mpk2^b            {bytes(response.B).hex()[:32]}")
    print("           K_DH = K^b, (K_d, k_mac) = KDF(K_DH, transcript)")
    print(f"           m = HMAC(k_mac, transcript || B || id_sp) = {response.tag.hex()[:16]}…")
    if args.tamper == "response":
        resp_bytes = _flip_tag_byte(resp_bytes)
        print("[attacker] flipped one bit of m in the Response")
    client_end.send(wire.FrameType.RESPONSE, resp_bytes)

    _, payload = server_end.recv()
    result = server.finish_bytes(payload)
    print("[server] K_DH = B^s, recompute m and compare in constant time")
    print(f"[server] {result.outcome}")
    if not result.accepted:
        client_keys.destroy()
        return EXIT_OK
    print(f"[client] K_d fingerprint {client_keys.fingerprint()}")
    print(f"[server] K_d fingerprint {result.keys.fingerprint()}")
    match = result.keys == client_keys
    client_keys.destroy()
    result.keys.destroy()
    print("session keys match" if match else "session keys DIFFER")
    return EXIT_OK if match else EXIT_REJECTED


# -- argument parsing ---------------------------------------------------------


def _add_suite(p, default="production"):
    p.add_argument("--suite", choices=["production", "mock"], default=default,
                   help="pairing suite; 'mock' is insecure and for testing only")
    p.add_argument("--mock-prime", type=int, default=DEFAULT_MOCK_PRIME,
                   help="group order of the mock suite (default %(default)s)")


def _add_policy(p):
    p.add_argument("policy", nargs="?", help="policy text, e.g. 'doctor AND cardiology'")
    p.add_argument("--policy-file", help="read the policy from a file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abkauth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    auth = sub.add_parser("authority", help="key generation authority").add_subparsers(
        dest="action", required=True)
    p = auth.add_parser("init", help="generate master keys and an empty ARL")
    _add_suite(p)
    p.add_argument("--out", required=True, help="authority directory")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_authority_init)
    p = auth.add_parser("issue", help="issue an attribute secret key")
    _add_suite(p)
    p.add_argument("--dir", required=True)
    p.add_argument("--attrs", required=True, help="comma-separated attributes")
    p.add_argument("--out", required=True, help="secret key file to write")
    p.set_defaults(func=cmd_authority_issue)
    p = auth.add_parser("revoke", help="add an attribute to the revocation list")
    _add_suite(p)
    p.add_argument("--dir", required=True)
    p.add_argument("--attr", required=True)
    p.set_defaults(func=cmd_authority_revoke)
    p = auth.add_parser("rotate", help="regenerate all master keys")
    _add_suite(p)
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_authority_rotate)

    pol = sub.add_parser("policy", help="policy tooling").add_subparsers(dest="action", required=True)
    p = pol.add_parser("compile", help="print the MSP of a policy")
    _add_policy(p)
    _add_suite(p)
    p.add_argument("--binary", help="also write the binary MSP encoding here")
    p.set_defaults(func=cmd_policy_compile)
    p = pol.add_parser("check", help="evaluate a policy on an attribute set")
    _add_policy(p)
    p.add_argument("--attrs", required=True)
    p.set_defaults(func=cmd_policy_check)
    p = pol.add_parser("anonymity", help="count roster users satisfying a policy")
    _add_policy(p)
    p.add_argument("--roster", required=True, help="file of 'user_id: attr1,attr2' lines")
    p.add_argument("--r", type=int, required=True)
    p.set_defaults(func=cmd_policy_anonymity)

    p = sub.add_parser("serve", help="run the authentication server")
    _add_suite(p)
    _add_policy(p)
    p.add_argument("--dir", help="authority directory holding params.key, mpk.key, arl.key")
    p.add_argument("--params")
    p.add_argument("--mpk")
    p.add_argument("--arl")
    p.add_argument("--id-sp", default="service-provider")
    p.add_argument("--listen", default="127.0.0.1:7443")
    p.add_argument("--no-confirm", action="store_true", help="do not require key confirmation")
    p.add_argument("--server-initiated", action="store_true",
                   help="send the Challenge immediately instead of waiting for Hello")
    p.add_argument("--timeout", type=float, default=120.0, help="session expiry in seconds")
    p.add_argument("--max-connections", type=int, default=None,
                   help="exit after this many connections")
    p.set_defaults(func=_serve)

    p = sub.add_parser("login", help="authenticate to a server")
    _add_suite(p)
    p.add_argument("--params", required=True)
    p.add_argument("--mpk", required=True)
    p.add_argument("--sk", required=True)
    p.add_argument("--arl")
    p.add_argument("--connect", default="127.0.0.1:7443")
    p.add_argument("--min-anonymity", type=int, default=None, metavar="R")
    p.add_argument("--roster")
    p.add_argument("--no-confirm", action="store_true")
    p.add_argument("--no-hello", action="store_true", help="for server-initiated flows")
    p.set_defaults(func=_login)

    p = sub.add_parser("demo", help="end-to-end run in one process")
    _add_suite(p, default="mock")
    p.add_argument("--policy", default="doctor AND cardiology")
    p.add_argument("--attrs", help="client attributes (default: every policy attribute)")
    p.add_argument("--id-sp", default="demo-sp")
    p.add_argument("--tamper", choices=["none", "response", "challenge"], default="none")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, PolicySyntaxError, RevokedAttributeError, wire.WireError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProtocolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
