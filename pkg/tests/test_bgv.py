import base64

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from pirledger import bgv, ring
from pirledger.bgv import TOY_PARAMS, BgvParams, ParamsError, SerializationError

from oracles import dft

T = TOY_PARAMS.t
N = TOY_PARAMS.n_ring


@pytest.fixture(scope="module")
def toy_keys():
    return bgv.keygen(TOY_PARAMS, np.random.default_rng(1))


def random_pt(rng, params=TOY_PARAMS):
    return bgv.encode_slots(rng.integers(0, params.t, params.n_ring), params)


def test_presets():
    for log_n in (13, 14, 15):
        p = BgvParams.preset(log_n)
        assert p.meta() == {"log_n": log_n, "n": 1 << log_n, "log_q": [54], "log_p": [54], "t": 65537}
        assert p.q.bit_length() == 54 and p.p.bit_length() == 54
        assert (p.q - 1) % (2 * p.n_ring) == 0 and (p.t - 1) % (2 * p.n_ring) == 0
    with pytest.raises(ParamsError):
        BgvParams.preset(12)


def test_invalid_parameters_rejected():
    with pytest.raises(ParamsError):
        BgvParams(log_n=13, t=257)  # 257 is not 1 mod 2^14
    with pytest.raises(ParamsError):
        BgvParams(log_n=13, t=65536)
    with pytest.raises(ParamsError):
        BgvParams(log_n=13, log_q=(54, 54))


def test_meta_round_trip_and_fingerprint():
    p = BgvParams.preset(14)
    assert BgvParams.from_meta(p.meta()) == p
    assert p.fingerprint == BgvParams.from_meta(p.meta()).fingerprint
    assert p.fingerprint != BgvParams.preset(13).fingerprint
    with pytest.raises(ParamsError):
        BgvParams.from_meta({**p.meta(), "n": 8192})


def test_slots_are_evaluations_of_the_plaintext_polynomial(rng):
    psi = pow(sympy.primitive_root(T), (T - 1) // (2 * N), T)
    pt = random_pt(rng)
    assert dft(pt.poly.to_list(), T, psi) == pt.slots.tolist()


def test_encode_decode_round_trip(rng):
    for _ in range(20):
        v = rng.integers(0, T, N)
        assert np.array_equal(bgv.decode_slots(bgv.encode_slots(v, TOY_PARAMS)), v)
    assert not bgv.decode_slots(bgv.encode_slots(np.zeros(N, dtype=np.int64), TOY_PARAMS)).any()
    short = bgv.decode_slots(bgv.encode_slots([5, 6], TOY_PARAMS))
    assert short[:2].tolist() == [5, 6] and not short[2:].any()


def test_encode_rejects_bad_input():
    with pytest.raises(ParamsError):
        bgv.encode_slots([T], TOY_PARAMS)
    with pytest.raises(ParamsError):
        bgv.encode_slots([-1], TOY_PARAMS)
    with pytest.raises(ParamsError):
        bgv.encode_slots(np.ones(N + 1, dtype=np.int64), TOY_PARAMS)


def test_public_key_encrypts_zero(toy_keys):
    pk, sk = toy_keys
    noisy = pk.b + ring.negacyclic_mul(pk.a, sk.s)
    assert not (np.remainder(noisy.centered(), T)).any()


def test_secret_is_ternary(toy_keys):
    _, sk = toy_keys
    assert set(sk.s.to_list()) <= {0, 1, TOY_PARAMS.q - 1}


def test_zero_round_trip(toy_keys, rng):
    pk, sk = toy_keys
    zero = bgv.encode_slots(np.zeros(N, dtype=np.int64), TOY_PARAMS)
    assert bgv.decrypt(sk, bgv.encrypt(pk, zero, rng)) == zero


def test_encrypt_decrypt_round_trip(toy_keys, rng):
    pk, sk = toy_keys
    for _ in range(100):
        pt = random_pt(rng)
        ct = bgv.encrypt(pk, pt, rng)
        assert ct.is_fresh
        assert bgv.decrypt(sk, ct) == pt


def test_keygen_is_deterministic_under_seed():
    a = bgv.keygen(TOY_PARAMS, np.random.default_rng(9))
    b = bgv.keygen(TOY_PARAMS, np.random.default_rng(9))
    assert bgv.serialize(a[0]) == bgv.serialize(b[0])
    assert bgv.serialize(a[1]) == bgv.serialize(b[1])


def test_encryption_is_probabilistic(toy_keys, rng):
    pk, sk = toy_keys
    pt = random_pt(rng)
    c1, c2 = bgv.encrypt(pk, pt, rng), bgv.encrypt(pk, pt, rng)
    assert bgv.serialize(c1) != bgv.serialize(c2)
    assert bgv.decrypt(sk, c1) == bgv.decrypt(sk, c2) == pt


def test_wrong_key_does_not_decrypt(toy_keys, rng):
    pk, _ = toy_keys
    _, other = bgv.keygen(TOY_PARAMS, np.random.default_rng(77))
    pt = random_pt(rng)
    assert bgv.decrypt(other, bgv.encrypt(pk, pt, rng)) != pt


def test_eval_identity_and_zero(toy_keys, rng):
    pk, sk = toy_keys
    pt = random_pt(rng)
    ones = bgv.encode_slots(np.ones(N, dtype=np.int64), TOY_PARAMS)
    zeros = bgv.encode_slots(np.zeros(N, dtype=np.int64), TOY_PARAMS)
    out = bgv.eval_ct_pt(bgv.encrypt(pk, pt, rng), ones)
    assert not out.is_fresh
    assert bgv.decrypt(sk, out) == pt
    assert bgv.decrypt(sk, bgv.eval_ct_pt(bgv.encrypt(pk, zeros, rng), pt)) == zeros


slot_vectors = st.lists(st.integers(0, T - 1), min_size=N, max_size=N)


@settings(max_examples=500, deadline=None)
@given(slot_vectors, slot_vectors, st.integers(0, 2**32))
def test_homomorphism_matches_slot_product_oracle(p, d, seed):
    pk, sk = bgv.keygen(TOY_PARAMS, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    ct = bgv.encrypt(pk, bgv.encode_slots(p, TOY_PARAMS), rng)
    out = bgv.decrypt(sk, bgv.eval_ct_pt(ct, bgv.encode_slots(d, TOY_PARAMS)))
    assert bgv.decode_slots(out).tolist() == [(x * y) % T for x, y in zip(p, d)]


def test_prepared_plaintext_gives_same_result(toy_keys, rng):
    pk, sk = toy_keys
    ct, db = bgv.encrypt(pk, random_pt(rng), rng), random_pt(rng)
    a = bgv.eval_ct_pt(ct, db)
    b = bgv.eval_ct_pt(ct, bgv.prepare_plaintext(db))
    assert bgv.serialize(a) == bgv.serialize(b)


def test_eval_op_count_is_content_independent(toy_keys, rng):
    pk, _ = toy_keys
    counts = set()
    for _ in range(10):
        ct, db = bgv.encrypt(pk, random_pt(rng), rng), bgv.prepare_plaintext(random_pt(rng))
        with ring.count_ops() as ops:
            bgv.eval_ct_pt(ct, db)
        counts.add(tuple(ops.as_dict().items()))
    assert len(counts) == 1


def test_parameter_mismatch_rejected(toy_keys, rng):
    pk, sk = toy_keys
    other = BgvParams(log_n=4, t=97)
    with pytest.raises(ParamsError):
        bgv.encrypt(pk, bgv.encode_slots([1], other), rng)
    ct = bgv.encrypt(pk, random_pt(rng), rng)
    with pytest.raises(ParamsError):
        bgv.eval_ct_pt(ct, bgv.encode_slots([1], other))


# wire format


def test_header_layout(toy_keys, rng):
    pk, _ = toy_keys
    raw = bgv.serialize(bgv.encrypt(pk, random_pt(rng), rng))
    assert raw[:4] == b"BGV1" and raw[4] == bgv.KIND_CT and raw[5] == 4 and raw[6:8] == b"\0\0"
    assert int.from_bytes(raw[8:16], "little") == T
    assert int.from_bytes(raw[16:24], "little") == TOY_PARAMS.q
    assert int.from_bytes(raw[24:32], "little") == 2 * N * 8 == len(raw) - 32


@pytest.mark.parametrize("log_n", [13, 14, 15])
def test_artifact_sizes(log_n):
    p = BgvParams.preset(log_n)
    n = p.n_ring
    assert bgv.serialized_size(bgv.KIND_CT, p) == 32 + 2 * n * 8
    assert bgv.serialized_size(bgv.KIND_PK, p) == 32 + 2 * n * 16
    assert bgv.serialized_size(bgv.KIND_SK, p) == 32 + n * 16
    assert bgv.serialized_size(bgv.KIND_PT, p) == 32 + n * 8


def test_round_trips_are_byte_identical(toy_keys, rng):
    pk, sk = toy_keys
    pt = random_pt(rng)
    ct = bgv.encrypt(pk, pt, rng)
    for art, kind in ((pk, bgv.KIND_PK), (sk, bgv.KIND_SK), (ct, bgv.KIND_CT), (pt, bgv.KIND_PT)):
        raw = bgv.serialize(art)
        again = bgv.deserialize(raw, TOY_PARAMS, expect=kind)
        assert bgv.serialize(again) == raw
        assert bgv.serialize(bgv.from_base64(bgv.to_base64(art), TOY_PARAMS)) == raw
    assert bgv.decrypt(bgv.deserialize(bgv.serialize(sk), TOY_PARAMS), ct) == pt


def test_key_limbs_are_residues_mod_qp(toy_keys):
    _, sk = toy_keys
    raw = bgv.serialize(sk)[32:]
    qp, q = TOY_PARAMS.qp, TOY_PARAMS.q
    for i, c in enumerate(sk.s.to_list()):
        value = int.from_bytes(raw[16 * i : 16 * i + 16], "little")
        centered = c - q if c > q // 2 else c
        assert value == centered % qp


def test_ciphertext_length_is_content_independent(toy_keys, rng):
    pk, _ = toy_keys
    lengths = {len(bgv.serialize(bgv.encrypt(pk, random_pt(rng), rng))) for _ in range(100)}
    assert lengths == {32 + 2 * N * 8}


def test_deserialize_errors(toy_keys, rng):
    pk, _ = toy_keys
    raw = bgv.serialize(bgv.encrypt(pk, random_pt(rng), rng))
    with pytest.raises(SerializationError):
        bgv.deserialize(raw[:-1], TOY_PARAMS)
    with pytest.raises(SerializationError):
        bgv.deserialize(raw[:10], TOY_PARAMS)
    with pytest.raises(SerializationError):
        bgv.deserialize(b"XGV1" + raw[4:], TOY_PARAMS)
    with pytest.raises(SerializationError):
        bgv.deserialize(raw, TOY_PARAMS, expect=bgv.KIND_PK)
    with pytest.raises(SerializationError):
        bgv.deserialize(raw, BgvParams(log_n=4, t=97))
    too_big = raw[:32] + (TOY_PARAMS.q).to_bytes(8, "little") + raw[40:]
    with pytest.raises(SerializationError):
        bgv.deserialize(too_big, TOY_PARAMS)
    with pytest.raises(SerializationError):
        bgv.from_base64("not*base64", TOY_PARAMS)
    with pytest.raises(SerializationError):
        bgv.from_base64(base64.b64encode(raw[:-8]).decode(), TOY_PARAMS)


def test_full_size_query_round_trip():
    params = BgvParams.preset(13)
    rng = np.random.default_rng(3)
    pk, sk = bgv.keygen(params, rng)
    v = rng.integers(0, 2, params.n_ring)
    db = rng.integers(0, 256, params.n_ring)
    out = bgv.decrypt(sk, bgv.eval_ct_pt(bgv.encrypt(pk, bgv.encode_slots(v, params), rng), bgv.encode_slots(db, params)))
    assert np.array_equal(bgv.decode_slots(out), v * db)
