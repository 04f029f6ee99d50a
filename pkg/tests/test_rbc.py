import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import broadcast_pool, drive
from optbft.quorum import SystemParams
from optbft.rbc import (
    Delivery,
    InstanceId,
    LatencyClass,
    ProtocolError,
    RbcHost,
    RbcInstance,
    RbcKind,
    RbcMessage,
)

IID = InstanceId(0, 1)
P4 = SystemParams(4, 1)


def msg(kind, payload=b"m", iid=IID):
    return RbcMessage(kind, iid, payload)


def test_broadcast_sends_propose_to_everyone():
    inst = RbcInstance(P4, 0, IID)
    out = inst.broadcast(b"x")
    assert [d for d, _ in out] == [0, 1, 2, 3]
    assert all(m == msg(RbcKind.PROPOSE, b"x") for _, m in out)


def test_second_broadcast_rejected():
    inst = RbcInstance(P4, 0, IID)
    inst.broadcast(b"x")
    with pytest.raises(ProtocolError):
        inst.broadcast(b"x")


def test_only_broadcaster_may_broadcast():
    with pytest.raises(ProtocolError):
        RbcInstance(P4, 1, IID).broadcast(b"x")


def test_empty_payload_is_fine():
    out = RbcInstance(P4, 0, IID).broadcast(b"")
    assert len(out) == 4 and all(m.payload == b"" for _, m in out)


def test_propose_triggers_echo():
    inst = RbcInstance(P4, 1, IID)
    out, d = inst.handle(0, msg(RbcKind.PROPOSE))
    assert d is None
    assert out == [(j, msg(RbcKind.ECHO)) for j in range(4)]
    # a second propose is not echoed again
    assert inst.handle(0, msg(RbcKind.PROPOSE, b"other")) == ([], None)


def test_two_echoes_commit_optimistically_at_n4():
    inst = RbcInstance(P4, 1, IID)
    inst.handle(2, msg(RbcKind.ECHO))
    out, d = inst.handle(3, msg(RbcKind.ECHO))
    assert d == Delivery(b"m", LatencyClass.OPT2)
    kinds = [m.kind for _, m in out]
    assert kinds.count(RbcKind.VOTE) == 4 and kinds.count(RbcKind.READY) == 4
    assert inst.deliveries() == d


def test_messages_after_delivery_are_ignored():
    inst = RbcInstance(P4, 1, IID)
    inst.handle(2, msg(RbcKind.ECHO))
    inst.handle(3, msg(RbcKind.ECHO))
    assert inst.handle(2, msg(RbcKind.READY)) == ([], None)


def test_fresh_instance_has_no_delivery():
    assert RbcInstance(P4, 1, IID).deliveries() is None


def test_broadcaster_echo_not_counted():
    inst = RbcInstance(P4, 1, IID)
    inst.handle(0, msg(RbcKind.ECHO))
    out, d = inst.handle(2, msg(RbcKind.ECHO))
    assert d is None
    # one non-broadcaster echo is below vote=2
    assert out == []


def test_standard_commit_on_ready_quorum():
    inst = RbcInstance(SystemParams(7, 2), 1, IID)
    inst.handle(0, msg(RbcKind.READY))
    inst.handle(2, msg(RbcKind.READY))
    out, d = inst.handle(3, msg(RbcKind.READY))
    assert d is None and [m.kind for _, m in out] == [RbcKind.READY] * 7
    inst.handle(4, msg(RbcKind.READY))
    _, d = inst.handle(5, msg(RbcKind.READY))
    assert d == Delivery(b"m", LatencyClass.STD)


def test_duplicate_senders_are_idempotent():
    inst = RbcInstance(SystemParams(7, 2), 1, IID)
    for _ in range(10):
        inst.handle(2, msg(RbcKind.ECHO))
        inst.handle(2, msg(RbcKind.READY))
    assert inst.deliveries() is None
    assert inst.echo_senders and all(len(s) == 1 for s in inst.echo_senders.values())


def test_propose_from_non_broadcaster_is_a_violation():
    inst = RbcInstance(P4, 1, IID)
    assert inst.handle(2, msg(RbcKind.PROPOSE)) == ([], None)
    assert inst.violations and not inst.echoed


def test_wrong_instance_raises():
    with pytest.raises(ProtocolError):
        RbcInstance(P4, 1, IID).handle(0, msg(RbcKind.PROPOSE, iid=InstanceId(1, 1)))


def test_vote_path_readies():
    inst = RbcInstance(SystemParams(7, 2), 1, IID)
    for s in (2, 3, 4):
        inst.handle(s, msg(RbcKind.VOTE))
    out, _ = inst.handle(5, msg(RbcKind.VOTE))
    assert [m.kind for _, m in out] == [RbcKind.READY] * 7


def test_bracha_mode_ignores_votes_and_opt_path():
    inst = RbcInstance(P4, 1, IID, optimistic=False)
    assert inst.handle(2, msg(RbcKind.VOTE)) == ([], None)
    inst.handle(2, msg(RbcKind.ECHO))
    out, d = inst.handle(3, msg(RbcKind.ECHO))
    assert d is None
    assert [m.kind for _, m in out] == [RbcKind.READY] * 4


def test_candidate_cap_limits_payload_spam():
    inst = RbcInstance(SystemParams(7, 2), 1, IID)
    for i in range(20):
        inst.handle(2, msg(RbcKind.ECHO, bytes([i])))
    assert len(inst.payloads) == 8
    assert inst.violations


def test_clone_is_independent():
    a = RbcInstance(P4, 1, IID)
    a.handle(2, msg(RbcKind.ECHO))
    b = a.clone()
    b.handle(3, msg(RbcKind.ECHO))
    assert a.deliveries() is None and b.deliveries() is not None
    assert a.state_key() != b.state_key()


def test_host_buffers_unknown_instances_with_cap():
    host = RbcHost(cap=3)
    for i in range(5):
        assert host.handle(2, msg(RbcKind.ECHO, bytes([i]), InstanceId(2, 7))) is None
    assert host.buffered(2) == 3
    replayed = host.register(InstanceId(2, 7), RbcInstance(P4, 1, InstanceId(2, 7)))
    # oldest two were dropped
    assert [m.payload for _, m, _ in replayed] == [b"\x02", b"\x03", b"\x04"]
    assert host.buffered(2) == 0


def test_host_factory_creates_on_demand():
    host = RbcHost(factory=lambda iid: RbcInstance(P4, 1, iid) if iid.seq < 5 else None)
    assert host.handle(0, msg(RbcKind.PROPOSE, iid=InstanceId(0, 2))) is not None
    assert host.handle(0, msg(RbcKind.PROPOSE, iid=InstanceId(0, 9))) is None
    assert host.buffered(0) == 1


# randomised schedules


def honest_instances(p, corrupt, iid=IID, optimistic=True):
    return {j: RbcInstance(p, j, iid, optimistic) for j in range(p.n) if j not in corrupt}


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([(4, 1), (7, 2), (10, 3)]), st.randoms(use_true_random=False), st.data())
def test_validity_and_determinism(nf, rng, data):
    p = SystemParams(*nf)
    silent = set(data.draw(st.lists(st.integers(1, p.n - 1), max_size=p.f, unique=True)))
    insts = honest_instances(p, silent)
    pool = broadcast_pool(0, insts[0].broadcast(b"value"))
    drive(insts, pool, rng)
    for inst in insts.values():
        assert inst.deliveries() is not None and inst.deliveries().payload == b"value"


def test_identical_calls_identical_outputs():
    def trace():
        inst = RbcInstance(SystemParams(7, 2), 3, IID)
        out = []
        for s, k in [(0, RbcKind.PROPOSE), (1, RbcKind.ECHO), (2, RbcKind.ECHO), (4, RbcKind.ECHO), (5, RbcKind.ECHO)]:
            out.append(inst.handle(s, msg(k)))
        return repr(out)

    assert trace() == trace()


corrupt_msg = st.tuples(
    st.sampled_from([RbcKind.PROPOSE, RbcKind.ECHO, RbcKind.VOTE, RbcKind.READY]),
    st.sampled_from([b"a", b"b"]),
)


@settings(max_examples=120, deadline=None)
@given(st.sampled_from([(4, 1), (7, 2)]), st.randoms(use_true_random=False), st.data())
def test_agreement_with_equivocating_broadcaster(nf, rng, data):
    p = SystemParams(*nf)
    corrupt = {0} | set(data.draw(st.lists(st.integers(1, p.n - 1), max_size=p.f - 1, unique=True)))
    insts = honest_instances(p, corrupt)
    pool = []
    for c in sorted(corrupt):
        for kind, payload in data.draw(st.lists(corrupt_msg, max_size=6)):
            if kind == RbcKind.PROPOSE and c != 0:
                continue
            targets = data.draw(st.lists(st.sampled_from(sorted(insts)), min_size=1, unique=True))
            pool.extend((c, t, msg(kind, payload)) for t in targets)
    sent = []
    drive(insts, pool, rng, sent)
    delivered = {j: i.deliveries() for j, i in insts.items() if i.deliveries() is not None}
    assert len({d.payload for d in delivered.values()}) <= 1
    # totality: once one honest party delivers and every message arrives, all do
    if delivered:
        assert len(delivered) == len(insts)
    opt = {d.payload for d in delivered.values() if d.latency_class is LatencyClass.OPT2}
    if opt:
        (m,) = opt
        conflicting = [x for src, x in sent if x.kind in (RbcKind.VOTE, RbcKind.READY) and x.payload != m]
        assert not conflicting
