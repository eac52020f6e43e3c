import io
import itertools
import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import appendix_success
from pscdss.consensus import (MESSAGE_BYTES, ConsensusDivergence, FaultMask, MessageKind, Region,
                              Tier2State, TwoTierSystem, appendix_event, commit_quorum,
                              quorum_thresholds, run_inter_round, run_intra_round, run_round,
                              sample_faults, vote_quorum)
from pscdss.domain import (BandRecord, Block, ParticipantId, ParticipantKind, TaskKind, Transaction,
                           WorldState)
from pscdss.spectrum import TxLists

BS = ParticipantId(0, ParticipantKind.BASE_STATION, 1)


def world():
    return WorldState(bands={"b1": BandRecord(owner="s1")}, balances={"s1": 0, "u1": 100})


def seller_lists():
    tx = Transaction(1, TaskKind.STATUS_TRANS, BS, 1.0,
                     {"user": "s1", "band": "b1", "to_status": "Seller", "price": 5})
    return TxLists(list2=[tx])


def test_message_sizes():
    assert MESSAGE_BYTES == {MessageKind.PRE_PREPARE: 800, MessageKind.PREPARE: 200,
                             MessageKind.COMMIT: 215, MessageKind.VOTE: 800}


def test_quorum_threshold_examples():
    assert tuple(quorum_thresholds(40, 20, 60)) == (20, 30, 41)
    assert tuple(quorum_thresholds(3, 4, 5)) == (2, 2, 5)


@given(n=st.integers(1, 500))
def test_commit_quorum_tolerates_exactly_a_third(n):
    # with floor(n/3) silent replicas the rest still reach quorum; one more and they cannot
    healthy = n - n // 3
    assert healthy >= commit_quorum(n) > healthy - 1


@given(m=st.integers(1, 500))
def test_vote_quorum_tolerates_exactly_half(m):
    healthy = m - m // 2
    assert healthy >= vote_quorum(m) > healthy - 1


def test_fault_free_round_commits_everywhere():
    region = Region.create(0, 4, 2, world())
    out = run_intra_round(region, seller_lists(), FaultMask())
    assert out.committed and out.primary == region.regulator
    assert sorted(out.committers) == sorted(region.members)
    assert {region.chain[m][-1] for m in region.members} == {out.digest}
    n = len(region.members)
    assert out.messages[MessageKind.PRE_PREPARE.value] == n - 1
    assert out.messages[MessageKind.PREPARE.value] == (n - 1) * (n - 1)
    assert out.messages[MessageKind.COMMIT.value] == n * (n - 1)


def test_faulty_regulator_hands_over_primary_role():
    region = Region.create(0, 4, 2, world())
    out = run_intra_round(region, seller_lists(), FaultMask(frozenset({region.regulator})))
    assert out.committed and out.primary == region.members[1]


def test_too_many_faults_block_commit():
    region = Region.create(0, 4, 2, world())
    faults = FaultMask.of(region.members, [0, 1, 1, 1, 0, 0])
    out = run_intra_round(region, seller_lists(), faults)
    assert not out.committed and out.block is None
    assert all(not region.chain[m] for m in region.members)


def test_all_silent_region_has_no_primary():
    region = Region.create(0, 2, 1, world())
    out = run_intra_round(region, seller_lists(), FaultMask(frozenset(region.members)))
    assert out.primary is None and not out.committed


def test_divergent_execution_is_detected():
    region = Region.create(0, 3, 1, world())

    def flaky(block, rs):
        return replace(block, height=block.height + (rs is region.replicas[region.regulator]))

    with pytest.raises(ConsensusDivergence):
        run_intra_round(region, seller_lists(), FaultMask(), executor=flaky)


def test_successive_rounds_chain_blocks():
    region = Region.create(0, 3, 1, world())
    a = run_intra_round(region, seller_lists(), FaultMask(), round_no=0)
    b = run_intra_round(region, TxLists(list2=[]), FaultMask(), round_no=1)
    assert b.block.parent == a.digest and b.block.height == a.block.height + 1


def test_inter_round_majority():
    tier2 = Tier2State.create(5, world())
    blk = Block(1, 0, 0, ())
    tier2.bl_pool.append(blk)
    faults = FaultMask(frozenset(tier2.regulators[:2]))
    out = run_inter_round(tier2, faults)
    assert out.committed and out.votes == 3 and tier2.global_chain == [blk.digest]
    tier2.bl_pool.append(blk)
    out = run_inter_round(tier2, FaultMask(frozenset(tier2.regulators[:3])))
    assert not out.committed and out.votes == 2
    with pytest.raises(ValueError):
        run_inter_round(tier2, FaultMask())


def test_inter_round_rejects_wrong_claim():
    tier2 = Tier2State.create(3, world())
    tier2.bl_pool.append(Block(1, 0, 0, ()))
    out = run_inter_round(tier2, FaultMask(), claimed=12345)
    assert not out.committed and len(out.rejected_by) == 3


def test_tier2_global_block_is_executed_by_voters():
    tier2 = Tier2State.create(3, world())
    g = Transaction(5, TaskKind.GLOBAL, BS, 0.0, {"rules": {"cap": 1}})
    tier2.bl_pool.append(Block(0, 0, 0, (g,), tier2=True))
    out = run_inter_round(tier2, FaultMask(frozenset({tier2.regulators[2]})))
    assert out.committed
    assert tier2.states[tier2.regulators[0]].regulations == {"cap": 1}
    assert tier2.states[tier2.regulators[2]].regulations == {}


def test_round_trace_serialises():
    system = TwoTierSystem.create(3, 3, 2, world())
    tr = run_round(system, 0, seller_lists(), FaultMask(), FaultMask())
    assert tr.success and tr.relayed
    buf = io.StringIO()
    system.dump_traces(buf)
    assert json.loads(buf.getvalue())["inter_committed"] is True


def test_no_healthy_satellite_means_no_relay():
    system = TwoTierSystem.create(3, 4, 1, world())
    region = system.regions[0]
    tr = run_round(system, 0, seller_lists(), FaultMask(frozenset(region.satellites)), FaultMask())
    assert tr.intra_committed and not tr.relayed and not tr.success


def test_small_exhaustive_agreement_with_oracle():
    ng, ns, m = 3, 2, 3
    for bits in itertools.product((0, 1), repeat=ng + ns + m - 1):
        system = TwoTierSystem([Region.create(0, ng, ns, world())], Tier2State.create(m, world()))
        region = system.regions[0]
        rf = FaultMask.of(region.members, bits[:ng + ns])
        of = FaultMask.of(system.tier2.regulators[1:], bits[ng + ns:])
        tr = run_round(system, 0, seller_lists(), rf, of)
        arr = np.array([bits], dtype=bool)
        expected = appendix_success(ng, ns, m, arr[:, 0], arr[:, 1:ng], arr[:, ng:ng + ns], arr[:, ng + ns:])[0]
        assert tr.success == bool(expected)
        assert tr.success == appendix_event(ng, ns, m, bool(bits[0]), sum(bits[1:ng]),
                                            sum(bits[ng:ng + ns]), sum(bits[ng + ns:]))


def test_sample_faults_rates_and_validation():
    region = Region.create(0, 10, 10, world())
    rng = np.random.default_rng(0)
    masks = [sample_faults(0.1, 0.6, rng, region.members) for _ in range(2000)]
    ground = np.mean([m.count(region.members[:10]) for m in masks]) / 10
    sats = np.mean([m.count(region.satellites) for m in masks]) / 10
    assert abs(ground - 0.1) < 0.01 and abs(sats - 0.6) < 0.015
    with pytest.raises(ValueError):
        sample_faults(1.5, 0.0, rng, region.members)
