import os
import random

import pytest

from abkauth.abkem import (
    EncapRandomness,
    check_secret_key,
    derive_randomness,
    encapsulate_with,
    key_decap,
    key_encap_star,
    keygen,
    setup,
)
from abkauth.pairing import Group
from abkauth.policy import compile_msp, parse_policy, satisfies

from conftest import ScriptedRng, mock_hash_exponent, random_formula, subsets

P = 1009


@pytest.fixture
def forced(mock):
    """Mock authority with a=5, b=7 and a key for {A} with r=3."""
    params, mpk, msk = setup(mock, ScriptedRng([5, 7]))
    sk = keygen(params, mpk, msk, {"A"}, ScriptedRng([3]))
    return params, mpk, msk, sk


def test_setup_forced_exponents(forced):
    params, mpk, msk, _ = forced
    assert mpk.mpk1.exponent == 7
    assert mpk.mpk2.exponent == 5
    assert msk.msk.exponent == 5
    assert msk.trapdoor == (5, 7)


def test_setup_consistency_and_freshness(mock, prod):
    for suite in (mock, prod):
        params, mpk, msk = setup(suite)
        assert suite.pair(msk.msk, suite.g2) == mpk.mpk2
    _, _, msk1 = setup(prod)
    _, _, msk2 = setup(prod)
    assert msk1.msk != msk2.msk
    _, _, msk = setup(prod)
    assert msk.trapdoor is None


def test_keygen_forced_exponents(forced):
    _, _, _, sk = forced
    assert sk.x1.exponent == 26  # a + b*r = 5 + 21
    assert sk.x2.exponent == 3
    assert sk.component("A").exponent == 3 * mock_hash_exponent("A", P) % P


def test_keygen_pairing_check_and_freshness(prod):
    params, mpk, msk = setup(prod)
    sk1 = keygen(params, mpk, msk, {"doctor", "cardiology"})
    sk2 = keygen(params, mpk, msk, {"doctor", "cardiology"})
    assert check_secret_key(params, mpk, sk1)
    assert check_secret_key(params, mpk, sk2)
    assert sk1.x2 != sk2.x2
    assert sk1.attributes == ("cardiology", "doctor")


def test_keygen_rejects_empty_set(mock):
    params, mpk, msk = setup(mock)
    with pytest.raises(ValueError):
        keygen(params, mpk, msk, set())


def test_encap_forced_single_row(forced):
    params, mpk, _, sk = forced
    msp = compile_msp(parse_policy("A"))
    r1 = 4
    res = encapsulate_with(params, mpk, msp, EncapRandomness(s=11, v=(), r=(r1,)))
    assert res.key.exponent == 55
    assert res.encapsulation.z.exponent == 11
    assert res.s == 11
    c1, c2 = res.encapsulation.rows[0]
    # mu_1 = s for M = [[1]]; c_11 = mpk1^s * H(A)^-r1
    assert c1.exponent == (7 * 11 - mock_hash_exponent("A", P) * r1) % P
    assert c2.exponent == r1
    assert key_decap(params, msp, res.encapsulation, {"A"}, sk).exponent == 55


def test_shares_are_matrix_vector_product():
    msp = compile_msp(parse_policy("A AND (B OR C)"))
    rnd = EncapRandomness(s=11, v=(20,), r=(1, 2, 3))
    # rows (1,1), (0,-1), (0,-1)
    assert rnd.shares(msp, P) == [31, P - 20, P - 20]
    assert EncapRandomness(s=11, v=(), r=(5,)).shares(compile_msp(parse_policy("A")), P) == [11]


def test_encap_is_deterministic_in_seed(mock, prod):
    for suite in (mock, prod):
        params, mpk, _ = setup(suite)
        msp = compile_msp(parse_policy("A AND (B OR C)"))
        seed = bytes(range(32))
        a = key_encap_star(params, mpk, msp, seed)
        b = key_encap_star(params, mpk, msp, seed)
        assert a == b
        assert bytes(a.key) == bytes(b.key)
        c = key_encap_star(params, mpk, msp, bytes(32))
        assert c.key != a.key


def test_encap_invariants(mock):
    params, mpk, msk = setup(mock)
    a, _ = msk.trapdoor
    msp = compile_msp(parse_policy("A OR B"))
    res = key_encap_star(params, mpk, msp, os.urandom(32))
    assert res.key == mpk.mpk2 ** res.s
    assert res.encapsulation.z == mock.g2 ** res.s
    # exponent(z) = s = log(K) / a
    assert res.encapsulation.z.exponent == res.key.exponent * pow(a, -1, P) % P


def test_derived_randomness_in_range(prod):
    msp = compile_msp(parse_policy("A AND B AND C"))
    rnd = derive_randomness(os.urandom(32), msp, prod.p)
    assert len(rnd.v) == msp.n_cols - 1 and len(rnd.r) == msp.n_rows
    assert 0 < rnd.s < prod.p
    assert all(0 <= x < prod.p for x in rnd.v + rnd.r)


def test_decap_mock_numeric_vector(forced):
    params, mpk, _, sk = forced
    msp = compile_msp(parse_policy("A"))
    res = encapsulate_with(params, mpk, msp, EncapRandomness(s=11, v=(), r=(random.randrange(P),)))
    assert key_decap(params, msp, res.encapsulation, {"A"}, sk).exponent == 55


def test_decap_unsatisfied_returns_none(mock):
    params, mpk, msk = setup(mock)
    msp = compile_msp(parse_policy("A AND B"))
    sk = keygen(params, mpk, msk, {"A"})
    res = key_encap_star(params, mpk, msp, os.urandom(32))
    assert key_decap(params, msp, res.encapsulation, {"A"}, sk) is None


def test_decap_shape_mismatch_is_an_error(mock):
    params, mpk, msk = setup(mock)
    sk = keygen(params, mpk, msk, {"A", "B"})
    res = key_encap_star(params, mpk, compile_msp(parse_policy("A")), os.urandom(32))
    with pytest.raises(ValueError):
        key_decap(params, compile_msp(parse_policy("A AND B")), res.encapsulation, {"A", "B"}, sk)


def test_decap_missing_key_component(mock):
    params, mpk, msk = setup(mock)
    sk = keygen(params, mpk, msk, {"A"})
    msp = compile_msp(parse_policy("B"))
    res = key_encap_star(params, mpk, msp, os.urandom(32))
    with pytest.raises(ValueError):
        key_decap(params, msp, res.encapsulation, {"B"}, sk)


def test_correctness_random_formulas_mock(mock):
    rng = random.Random(11)
    params, mpk, msk = setup(mock, rng)
    keys = {}
    for _ in range(150):
        f = random_formula(rng, 6, "ABCDEF")
        msp = compile_msp(f)
        res = key_encap_star(params, mpk, msp, rng.randbytes(32))
        for s in subsets("ABCDEF"):
            if not s:
                continue
            sk = keys.get(s) or keys.setdefault(s, keygen(params, mpk, msk, s, rng))
            got = key_decap(params, msp, res.encapsulation, s, sk)
            if satisfies(f, s):
                assert got == res.key
            else:
                assert got is None


def test_wrong_master_key_gives_wrong_key(prod):
    params, mpk, msk = setup(prod)
    _, mpk2, msk2 = setup(prod)
    sk_other = keygen(params, mpk2, msk2, {"A"})
    msp = compile_msp(parse_policy("A"))
    res = key_encap_star(params, mpk, msp, os.urandom(32))
    got = key_decap(params, msp, res.encapsulation, {"A"}, sk_other)
    assert got is not None and got != res.key
    assert got.group is Group.GT
