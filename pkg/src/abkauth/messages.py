"""Protocol messages exchanged between client and authentication server."""

from __future__ import annotations

from dataclasses import dataclass

from .abkem import Encapsulation
from .pairing import GroupElement
from .policy import MspProgram

SESSION_ID_LENGTH = 16
TAG_LENGTH = 32


@dataclass(frozen=True)
class Challenge:
    session_id: bytes
    msp: MspProgram
    encapsulation: Encapsulation
    id_sp: str
    arl_version: int

    def __post_init__(self):
        if len(self.session_id) != SESSION_ID_LENGTH:
            raise ValueError("session id must be 16 bytes")
        if len(self.encapsulation) != self.msp.n_rows:
            raise ValueError("encapsulation does not match MSP row count")
        if not self.id_sp:
            raise ValueError("service provider identity must be non-empty")


@dataclass(frozen=True)
class Response:
    session_id: bytes
    B: GroupElement
    tag: bytes | None = None  # present iff the key-confirmation variant is used

    def __post_init__(self):
        if len(self.session_id) != SESSION_ID_LENGTH:
            raise ValueError("session id must be 16 bytes")
        if self.tag is not None and len(self.tag) != TAG_LENGTH:
            raise ValueError("confirmation tag must be 32 bytes")


@dataclass(frozen=True)
class ResultMessage:
    """Server-to-client outcome notification; carries no key material."""

    session_id: bytes
    accepted: bool
    reason: str = ""
