import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pscdss.domain import (HEADER_INTRA_BYTES, HEADER_TIER2_BYTES, Block, BandRecord, ParticipantId,
                           ParticipantKind, Status, TaskKind, Transaction, TxIdSource, WorldState,
                           canonical_bytes, dump_jsonl, fnv1a64, hash_block, transition_allowed,
                           tx_from_dict, tx_to_dict, validate_transaction)

BS = ParticipantId(0, ParticipantKind.BASE_STATION, 1)


def status_tx(i, user="u1", band="b1", to=Status.BUYER, price=10, ts=0.0, **extra):
    payload = {"user": user, "band": band, "to_status": to, "price": price, **extra}
    return Transaction(i, TaskKind.STATUS_TRANS, BS, ts, payload)


def test_fnv1a_reference_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_participant_ids():
    assert str(ParticipantId.regulator(2)) == "r2.reg0"
    assert str(ParticipantId(-1, ParticipantKind.DISSEMINATOR, 44000)) == "dis44000"
    with pytest.raises(ValueError):
        ParticipantId(0, ParticipantKind.REGULATOR, 1)
    assert ParticipantId.regulator(0).is_ground and not ParticipantId(0, "Satellite", 0).is_ground
    with pytest.raises(ValueError):
        ParticipantId.parse("x1")


@given(region=st.integers(-1, 50), kind=st.sampled_from(list(ParticipantKind)), ordinal=st.integers(0, 10**6))
def test_participant_id_text_round_trip(region, kind, ordinal):
    if kind is ParticipantKind.REGULATOR:
        ordinal = 0
    if kind is ParticipantKind.DISSEMINATOR:
        region = -1
    pid = ParticipantId(region, kind, ordinal)
    assert ParticipantId.parse(str(pid)) == pid


def test_transaction_sizes_and_id_range():
    sizes = {k: Transaction(1, k, BS, 0.0).size_bytes for k in TaskKind}
    assert sizes == {TaskKind.GLOBAL: 700, TaskKind.STATUS_TRANS: 390, TaskKind.SPEC_ALLO: 200,
                     TaskKind.RES_RECORD: 650, TaskKind.STATUS_RESET: 390}
    with pytest.raises(ValueError):
        Transaction(-1, TaskKind.GLOBAL, BS, 0.0)
    ids = TxIdSource(5)
    assert [ids(), ids()] == [5, 6]


def test_block_sizes():
    txs = (status_tx(1), status_tx(2))
    assert Block(1, 0, 0, txs).size_bytes == HEADER_INTRA_BYTES + 780
    assert Block(1, 0, 0, txs, tier2=True).size_bytes == HEADER_TIER2_BYTES + 780


def test_block_digest_properties():
    a = Block(3, 77, 1, (status_tx(1), status_tx(2)))
    assert a.digest == Block(3, 77, 1, (status_tx(1), status_tx(2))).digest == hash_block(a)
    assert a.digest != Block(3, 77, 1, (status_tx(1), status_tx(3))).digest
    assert a.digest != Block(3, 78, 1, a.txs).digest
    assert a.digest != Block(3, 77, 1, (status_tx(1, price=11), status_tx(2))).digest


def test_digest_survives_json_round_trip():
    txs = (status_tx(1, location=(1.0, 2.0, 3.0)),
           Transaction(2, TaskKind.STATUS_RESET, BS, 4.5, {"allo_id": "a", "users": [("u1", "b1")]}))
    buf = io.StringIO()
    dump_jsonl(txs, buf)
    back = tuple(tx_from_dict(json.loads(line)) for line in buf.getvalue().splitlines())
    assert Block(1, 0, 0, back).digest == Block(1, 0, 0, txs).digest


@given(st.recursive(st.none() | st.booleans() | st.integers() | st.floats(allow_nan=False) | st.text(),
                    lambda kids: st.lists(kids) | st.dictionaries(st.text(), kids), max_leaves=20))
def test_canonical_bytes_stable_under_json_round_trip(value):
    assert canonical_bytes(value) == canonical_bytes(json.loads(json.dumps(value))) or _has_float_int(value)


def _has_float_int(v):
    # JSON does not keep 1.0 vs 1 apart, which canonical bytes do
    if isinstance(v, float):
        return True
    if isinstance(v, list):
        return any(_has_float_int(x) for x in v)
    if isinstance(v, dict):
        return any(_has_float_int(x) for x in v.values())
    return False


def test_mapping_encoding_ignores_insertion_order():
    assert canonical_bytes({"a": 1, "b": 2}) == canonical_bytes({"b": 2, "a": 1})
    with pytest.raises(TypeError):
        canonical_bytes(object())


def test_transitions():
    assert transition_allowed(Status.COMMON, Status.BUYER)
    assert transition_allowed(Status.SELLER, Status.COMMON)
    assert not transition_allowed(Status.BUYER, Status.SELLER)


def _state():
    return WorldState(bands={"b1": BandRecord(owner="s1"), "b2": BandRecord(owner="s1", lessee="x",
                                                                              lease_expiry=50.0)},
                      balances={"u1": 0, "u2": 100})


def test_validation_examples():
    st_ = _state()
    assert validate_transaction(status_tx(1, user="s1", band="b1", to=Status.SELLER, price=5), st_) == []
    assert validate_transaction(status_tx(1, user="u1", price=10), st_) == ["insufficient-balance"]
    bad = Transaction(1, TaskKind.SPEC_ALLO, BS, 0.0, {"allo_id": 1}, size_bytes=650)
    assert validate_transaction(bad, st_) == ["size-mismatch"]
    assert validate_transaction(status_tx(1, user="u2", band="b1", to=Status.SELLER), st_) == ["band-not-owned"]
    assert validate_transaction(status_tx(1, user="s1", band="b2", to=Status.SELLER), st_) == ["band-not-idle"]
    assert "negative-price" in validate_transaction(status_tx(1, user="u2", price=-1), st_)
    st_.statuses[("u2", "b1")] = Status.BUYER
    assert validate_transaction(status_tx(1, user="u2", to=Status.SELLER), st_) == [
        "illegal-transition", "band-not-owned"]
    missing = Transaction(1, TaskKind.STATUS_TRANS, BS, 0.0, {"user": "u1"})
    assert validate_transaction(missing, st_) == ["missing-field"]


def test_validation_does_not_mutate():
    st_ = _state()
    before = st_.snapshot_digest()
    validate_transaction(status_tx(1, user="s1", band="b1", to=Status.SELLER), st_)
    assert st_.snapshot_digest() == before


def test_state_copy_is_deep_enough():
    st_ = _state()
    cp = st_.copy()
    cp.bands["b1"].lessee = "someone"
    cp.balances["u2"] = 0
    assert st_.bands["b1"].lessee is None and st_.balances["u2"] == 100
    assert st_.total_currency() == 100


def test_jsonl_output_is_canonical():
    buf = io.StringIO()
    assert dump_jsonl([status_tx(7)], buf) == 1
    obj = json.loads(buf.getvalue())
    assert obj["issuer"] == "r0.bs1" and obj["kind"] == "StatusTrans"
    assert obj["payload"]["to_status"] == "Buyer"
    assert tx_to_dict(status_tx(7)) == obj
