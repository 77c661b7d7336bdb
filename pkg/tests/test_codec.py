import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pirledger import bgv, codec
from pirledger.bgv import TOY_PARAMS
from pirledger.codec import TEMPLATES, PirError, RecordSet, SlotLayout

from oracles import pack as oracle_pack
from oracles import unpack as oracle_unpack

N = TOY_PARAMS.n_ring


@pytest.fixture(scope="module")
def toy_keys():
    return bgv.keygen(TOY_PARAMS, np.random.default_rng(2))


@pytest.mark.parametrize("b, s", [(126, 128), (64, 64), (1, 8), (128, 128), (129, 136), (224, 224)])
def test_compute_record_s(b, s):
    assert codec.compute_record_s(b, 65537) == s


def test_compute_record_s_rejects_zero():
    with pytest.raises(PirError):
        codec.compute_record_s(0)


@pytest.mark.parametrize("name, minimum", [("mini", 128), ("mid", 224), ("rich", 256)])
def test_template_minimum(name, minimum):
    assert codec.template_min(TEMPLATES[name]) == TEMPLATES[name].minimum == minimum


def test_feasibility_examples():
    mini, mid = TEMPLATES["mini"], TEMPLATES["mid"]
    ok = codec.check_feasibility(13, 128, 64, mini)
    assert ok.feasible and ok.detail == "" and codec.capacity(13, 128) == 64

    low = codec.check_feasibility(13, 64, 64, mini)
    assert not low.feasible and not low.m_ok and low.c_ok and low.detail.startswith("M")

    over = codec.check_feasibility(13, 128, 65, mini)
    assert not over.feasible and not over.c_ok and "8320 > N=8192" in over.detail

    assert codec.check_feasibility(14, 224, 73, mid).feasible
    assert not codec.check_feasibility(14, 128, 73, mid).m_ok

    odd = codec.check_feasibility(15, 264, 10, TEMPLATES["rich"])
    assert odd.c_ok and odd.m_ok and not odd.d_ok and odd.detail.startswith("D")


def test_feasible_iff_all_predicates():
    for log_n in (13, 14, 15):
        for s in (8, 64, 128, 200, 224, 256, 384, 512, 520):
            for n in (1, 16, 64, 73, 128, 200):
                for spec in TEMPLATES.values():
                    r = codec.check_feasibility(log_n, s, n, spec)
                    assert r.feasible == (r.c_ok and r.m_ok and r.d_ok)
                    assert r.c_ok == (n * s <= 1 << log_n)
                    assert r.d_ok == (s in codec.ALLOWED_SLOT_SIZES)
                    assert bool(r.detail) == (not r.feasible)


def test_select_min_logn():
    assert codec.select_min_logn(64, 128) == 13
    assert codec.select_min_logn(65, 128) == 14
    assert codec.select_min_logn(128, 256) == 15
    assert codec.select_min_logn(512, 512) is None


def test_capacity_frontier():
    for log_n in (13, 14, 15):
        for s in codec.ALLOWED_SLOT_SIZES:
            n_max = codec.capacity(log_n, s)
            assert n_max == (1 << log_n) // s
            assert codec.check_feasibility(log_n, s, n_max, TEMPLATES["mini"]).c_ok
            assert not codec.check_feasibility(log_n, s, n_max + 1, TEMPLATES["mini"]).c_ok


def test_record_set_invariants():
    with pytest.raises(PirError):
        RecordSet(())
    with pytest.raises(PirError):
        RecordSet((b"ok", b"has\0zero"))
    assert RecordSet([b"a", b"bcd"]).max_len == 3


def test_layout_windows():
    lay = SlotLayout(4, 4, N)
    assert lay.windows == [range(0, 4), range(4, 8), range(8, 12), range(12, 16)]
    with pytest.raises(PirError):
        SlotLayout(5, 4, N)


def test_pack_by_hand():
    c = codec.pack_records(RecordSet([b"AB", b"C"]), SlotLayout(2, 4, N))
    assert c.tolist() == [65, 66, 0, 0, 67, 0, 0, 0] + [0] * 8


def test_pack_rejects_oversize_and_count_mismatch():
    with pytest.raises(PirError):
        codec.pack_records(RecordSet([b"ABCDE"]), SlotLayout(1, 4, N))
    with pytest.raises(PirError):
        codec.pack_records(RecordSet([b"A"]), SlotLayout(2, 4, N))


record_bytes = st.binary(min_size=1, max_size=8).filter(lambda b: 0 not in b)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8).flatmap(lambda s: st.tuples(st.just(s), st.lists(
    st.binary(min_size=1, max_size=s).filter(lambda b: 0 not in b), min_size=1, max_size=N // s))))
def test_pack_matches_oracle_and_unpacks(case):
    record_s, records = case
    c = codec.pack_records(RecordSet(records), SlotLayout(len(records), record_s, N))
    assert c.tolist() == oracle_pack(records, record_s, N)
    for i, rec in enumerate(records):
        assert oracle_unpack(c.tolist(), i, record_s) == rec
        assert codec.read_window(c, i, record_s) == rec


def test_encode_db():
    c = np.arange(N) % TOY_PARAMS.t
    assert np.array_equal(bgv.decode_slots(codec.encode_db(c, TOY_PARAMS)), c)
    assert not codec.encode_db(np.zeros(N, dtype=np.uint64), TOY_PARAMS).slots.any()
    with pytest.raises(PirError):
        codec.encode_db(np.zeros(N - 1), TOY_PARAMS)
    with pytest.raises(bgv.ParamsError):
        codec.encode_db(np.full(N, TOY_PARAMS.t), TOY_PARAMS)


def test_selection_vector():
    lay = SlotLayout(4, 4, N)
    assert codec.selection_vector(1, lay).tolist() == [0, 0, 0, 0, 1, 1, 1, 1] + [0] * 8
    with pytest.raises(PirError):
        codec.selection_vector(4, lay)
    with pytest.raises(PirError):
        codec.selection_vector(-1, lay)


def test_selector_length_is_index_invariant(toy_keys, rng):
    pk, sk = toy_keys
    lay = SlotLayout(4, 4, N)
    sels = [codec.build_selector(i, lay, pk, rng) for i in range(4)]
    assert len({len(s) for s in sels}) == 1
    for i, s in enumerate(sels):
        assert bgv.decode_slots(bgv.decrypt(sk, bgv.from_base64(s, TOY_PARAMS))).tolist() == \
            codec.selection_vector(i, lay).tolist()
    with pytest.raises(PirError):
        codec.build_selector(4, lay, pk, rng)


def _encrypt_slots(values, pk, rng):
    return bgv.to_base64(bgv.encrypt(pk, bgv.encode_slots(values, TOY_PARAMS), rng))


def test_decrypt_result_stops_at_padding(toy_keys, rng):
    pk, sk = toy_keys
    ct = _encrypt_slots([72, 73, 0, 0, 65, 0, 66, 0], pk, rng)
    assert codec.decrypt_result(ct, sk, 0, SlotLayout(4, 4, N)) == "HI"
    assert codec.decrypt_result(ct, sk, 1, SlotLayout(4, 4, N)) == "A"


def test_decrypt_result_raw_value(toy_keys, rng):
    pk, sk = toy_keys
    ct = _encrypt_slots([0, 0, 42], pk, rng)
    assert codec.decrypt_result(ct, sk, 2, SlotLayout(16, 1, N)) == 42


def test_decrypt_result_errors(toy_keys, rng):
    pk, sk = toy_keys
    lay = SlotLayout(4, 4, N)
    with pytest.raises(PirError):
        codec.decrypt_result("@@@", sk, 0, lay)
    with pytest.raises(PirError):
        codec.decrypt_result(_encrypt_slots([1], pk, rng), sk, 4, lay)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8).flatmap(lambda s: st.tuples(st.just(s), st.lists(
    st.text(alphabet=st.characters(min_codepoint=1, max_codepoint=126), min_size=1, max_size=s),
    min_size=1, max_size=N // s))), st.integers(0, 2**32))
def test_toy_full_stack_recovers_every_record(case, seed):
    record_s, texts = case
    records = [t.encode() for t in texts]
    rng = np.random.default_rng(seed)
    pk, sk = bgv.keygen(TOY_PARAMS, rng)
    lay = SlotLayout(len(records), record_s, N)
    db = bgv.prepare_plaintext(codec.encode_db(codec.pack_records(RecordSet(records), lay), TOY_PARAMS))
    for i, want in enumerate(texts):
        ct_r = bgv.to_base64(bgv.eval_ct_pt(bgv.from_base64(codec.build_selector(i, lay, pk, rng), TOY_PARAMS), db))
        got = codec.decrypt_result(ct_r, sk, i, lay)
        assert got == (ord(want) if record_s == 1 else want)
