"""Attribute-based key encapsulation and single-round anonymous authentication."""

from .abkem import (
    AttributeSecretKey,
    EncapResult,
    Encapsulation,
    MasterPublicKey,
    MasterSecretKey,
    SystemParams,
    key_decap,
    key_encap_star,
    keygen,
    setup,
)
from .authority import (
    AttributeRevocationList,
    AuthorityState,
    RevokedAttributeError,
    authority_init,
    issue_keys,
    revoke_attribute,
    rotate,
)
from .pairing import Group, mock_suite_new, production_suite
from .policy import (
    MspProgram,
    compile_msp,
    count_satisfying,
    decode_msp,
    parse_policy,
    satisfies,
    verify_r_anonymity,
)
from .protocol import (
    AuthResult,
    AuthServer,
    ClientCredentials,
    ServerConfig,
    SessionKeys,
    client_respond,
    server_begin,
    server_finish,
)

__version__ = "0.1.0"
