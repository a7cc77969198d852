"""Key generation authority: setup, key issuance, revocation list, full rekey."""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field
from typing import Iterable

from .abkem import (
    AttributeSecretKey,
    MasterPublicKey,
    MasterSecretKey,
    SystemParams,
    check_secret_key,
    keygen,
    setup,
)
from .pairing import PairingSuite

__all__ = [
    "AttributeRevocationList",
    "AuthorityState",
    "RevokedAttributeError",
    "authority_init",
    "issue_keys",
    "revoke_attribute",
    "rotate",
]


class RevokedAttributeError(ValueError):
    def __init__(self, attr: str):
        super().__init__(f"attribute {attr!r} is revoked")
        self.attr = attr


@dataclass(frozen=True)
class AttributeRevocationList:
    version: int = 0
    revoked: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.version < 0:
            raise ValueError("ARL version must be non-negative")
        object.__setattr__(self, "revoked", frozenset(self.revoked))

    def __contains__(self, attr: str) -> bool:
        return attr in self.revoked

    def with_revoked(self, attr: str) -> "AttributeRevocationList":
        if not attr:
            raise ValueError("attribute name must be non-empty")
        return AttributeRevocationList(self.version + 1, self.revoked | {attr})

    def first_revoked(self, attrs: Iterable[str]) -> str | None:
        return next((a for a in sorted(attrs) if a in self.revoked), None)


@dataclass
class AuthorityState:
    """Mutable authority state; callers serialize issue/revoke/rotate."""

    params: SystemParams
    mpk: MasterPublicKey
    msk: MasterSecretKey = field(repr=False)
    arl: AttributeRevocationList = field(default_factory=AttributeRevocationList)
    issued: int = 0

    def consistent(self) -> bool:
        suite = self.params.suite
        return suite.pair(self.msk.msk, suite.g2) == self.mpk.mpk2


def authority_init(suite: PairingSuite, rng=None) -> AuthorityState:
    params, mpk, msk = setup(suite, rng)
    return AuthorityState(params, mpk, msk)


def issue_keys(st: AuthorityState, attrs: Iterable[str], rng=None) -> AttributeSecretKey:
    attrs = set(attrs)
    revoked = st.arl.first_revoked(attrs)
    if revoked is not None:
        raise RevokedAttributeError(revoked)
    sk = keygen(st.params, st.mpk, st.msk, attrs, rng)
    assert check_secret_key(st.params, st.mpk, sk)
    st.issued += 1
    return sk


def revoke_attribute(st: AuthorityState, attr: str) -> AttributeRevocationList:
    """Add ``attr`` to the ARL.  Always bumps the version, even when already revoked."""
    st.arl = st.arl.with_revoked(attr)
    return st.arl


def rotate(st: AuthorityState, rng=None) -> AuthorityState:
    """Regenerate the master key pair.  Every previously issued key becomes useless.

    The ARL carries over: attribute semantics outlive master keys.
    """
    rng = rng or secrets.SystemRandom()
    params, mpk, msk = setup(st.params.suite, rng, st.params.security)
    return AuthorityState(params, mpk, msk, arl=st.arl, issued=0)
