import os

import pytest

from abkauth.abkem import check_secret_key, key_decap, key_encap_star
from abkauth.authority import (
    AttributeRevocationList,
    RevokedAttributeError,
    authority_init,
    issue_keys,
    revoke_attribute,
    rotate,
)
from abkauth.policy import compile_msp, parse_policy


def test_init_and_issue(mock):
    st = authority_init(mock)
    assert st.consistent() and st.arl == AttributeRevocationList()
    sk = issue_keys(st, ["doctor", "cardiology"])
    assert check_secret_key(st.params, st.mpk, sk)
    assert st.issued == 1


def test_revoke_bumps_version_every_time(mock):
    st = authority_init(mock)
    versions = [revoke_attribute(st, a).version for a in ("doctor", "nurse", "doctor")]
    assert versions == [1, 2, 3]
    assert st.arl.revoked == {"doctor", "nurse"}
    assert "doctor" in st.arl and "admin" not in st.arl
    with pytest.raises(ValueError):
        revoke_attribute(st, "")


def test_issue_refuses_revoked(mock):
    st = authority_init(mock)
    revoke_attribute(st, "doctor")
    with pytest.raises(RevokedAttributeError) as exc:
        issue_keys(st, {"doctor", "cardiology"})
    assert exc.value.attr == "doctor"
    issue_keys(st, {"cardiology"})


def test_keys_issued_before_revocation_still_decapsulate(mock):
    # revocation is enforced by policy checks, not by the key material
    st = authority_init(mock)
    sk = issue_keys(st, {"doctor"})
    revoke_attribute(st, "doctor")
    msp = compile_msp(parse_policy("doctor"))
    res = key_encap_star(st.params, st.mpk, msp, os.urandom(32))
    assert key_decap(st.params, msp, res.encapsulation, {"doctor"}, sk) == res.key


def test_rotate_invalidates_old_keys(mock):
    st = authority_init(mock)
    revoke_attribute(st, "x")
    sk = issue_keys(st, {"A"})
    new = rotate(st)
    assert new.arl == st.arl and new.issued == 0
    assert new.mpk != st.mpk and new.consistent()
    assert not check_secret_key(new.params, new.mpk, sk)
    msp = compile_msp(parse_policy("A"))
    res = key_encap_star(new.params, new.mpk, msp, os.urandom(32))
    assert key_decap(new.params, msp, res.encapsulation, {"A"}, sk) != res.key


def test_arl_validation():
    with pytest.raises(ValueError):
        AttributeRevocationList(-1)
    arl = AttributeRevocationList(2, {"b", "a"})
    assert arl.first_revoked({"c", "b", "a"}) == "a"
    assert arl.first_revoked({"c"}) is None
