import pytest

from optbft.quorum import SystemParams
from optbft.sailfish import Dag, SailfishNode, TimeoutMessage, Vertex, decode_vertex
from optbft.rbc import RbcKind


def layer(dag, r, sources, parents=None, weak=(), nv=()):
    """Insert one vertex per source at round r with strong edges to ``parents`` (default: all of r-1)."""
    if parents is None:
        parents = dag.round_vertices(r - 1)
    out = {}
    for s in sources:
        v = Vertex(r, s, b"", tuple(p.ref for p in parents), tuple(weak), tuple(nv))
        assert dag.insert(v)
        out[s] = v
    return out


def full_dag(n, rounds, skip=()):
    dag = Dag(n)
    for r in range(1, rounds + 1):
        layer(dag, r, [s for s in range(n) if (r, s) not in skip])
    return dag


# paths


def test_strong_path_reflexive_and_transitive():
    dag = Dag(4)
    w = layer(dag, 1, range(4))[0]
    u = layer(dag, 2, range(4))[1]
    v = layer(dag, 3, range(4))[2]
    assert dag.strong_path(v, v)
    assert dag.strong_path(v, u) and dag.strong_path(v, w)


def test_weak_edge_only_gives_plain_path():
    dag = Dag(4)
    r1 = layer(dag, 1, range(4))
    r2 = layer(dag, 2, range(3), parents=[r1[0], r1[1], r1[2]])
    r3 = layer(dag, 3, [0], parents=list(r2.values()), weak=[r1[3].ref])
    v = r3[0]
    assert dag.path(v, r1[3])
    assert not dag.strong_path(v, r1[3])


# insertion


def test_insert_waits_for_edge_targets():
    dag = Dag(4)
    r1 = [Vertex(1, s) for s in range(4)]
    v = Vertex(2, 0, b"", tuple(x.ref for x in r1[:3]))
    assert not dag.insert(v)
    for x in r1:
        dag.insert(x)
    assert dag.insert(v)
    assert dag.insert(v)
    assert dag.size(2) == 1


def test_missing_weak_target_rejected():
    dag = full_dag(4, 2)
    stray = Vertex(1, 9)
    v = Vertex(3, 0, b"", tuple(x.ref for x in dag.round_vertices(2)), (stray.ref,))
    assert not dag.insert(v)


def test_one_vertex_per_round_and_source():
    dag = full_dag(4, 1)
    assert not dag.insert(Vertex(1, 0, b"other"))


# commit and order


def test_try_commit_threshold_and_monotonicity():
    dag = full_dag(4, 3)
    support = dag.round_vertices(3)[:1]
    assert dag.try_commit(2, support, 2) is None
    assert dag.try_commit(2, dag.round_vertices(3)[:2], 2) is not None
    assert dag.committed_round == 2
    assert dag.try_commit(2, dag.round_vertices(3), 2) is None
    assert dag.try_commit(1, dag.round_vertices(2), 2) is None


def test_commit_walks_back_to_older_leaders():
    # leader of round 4 is party 0; leave it out so the walk skips round 4
    dag = full_dag(4, 6, skip={(4, 0)})
    dag.committed_round = 2
    ordered = dag.try_commit(5, dag.round_vertices(6), 3)
    assert [r.round for r in dag.committed_leaders] == [3, 5]
    leader3 = dag.get_leader_vertex(3)
    idx3 = ordered.index(leader3)
    assert all(v.round <= 3 for v in ordered[:idx3 + 1])
    assert ordered[-1] == dag.get_leader_vertex(5)
    assert len(ordered) == len(set(v.ref for v in ordered))


def test_order_is_round_then_source_and_once_only():
    dag = full_dag(4, 4)
    first = dag.try_commit(2, dag.round_vertices(3), 2)
    # the walk-back orders leader 1's history (just itself) before leader 2's
    assert (first[0].round, first[0].source) == (1, 1)
    rest = first[1:]
    assert rest == sorted(rest, key=lambda v: (v.round, v.source))
    assert rest[-1] == dag.get_leader_vertex(2)
    second = dag.try_commit(3, dag.round_vertices(4), 2)
    assert not set(v.ref for v in first) & set(v.ref for v in second)


def test_identical_dags_identical_order():
    a, b = full_dag(7, 5), full_dag(7, 5)
    assert a.try_commit(4, a.round_vertices(5), 3) == b.try_commit(4, b.round_vertices(5), 3)


def test_empty_stack_orders_nothing():
    assert Dag(4).order_vertices() == []


# encoding


def test_vertex_round_trip_and_canonical_form():
    dag = full_dag(4, 2)
    v = Vertex(3, 1, b"blk", tuple(x.ref for x in dag.round_vertices(2)), (dag.round_vertices(1)[0].ref,))
    assert decode_vertex(v.encode()) == v
    with pytest.raises(ValueError):
        decode_vertex(v.encode() + b"\x00")
    with pytest.raises(ValueError):
        decode_vertex(v.encode()[:-3])


# node


def messages_by_kind(fx, kind):
    return [m for _, m in fx.messages if getattr(m, "kind", None) == kind]


def test_round_one_vertex_has_no_edges():
    node = SailfishNode(SystemParams(4, 1), 1)
    fx = node.start()
    (v,) = {decode_vertex(m.payload) for m in messages_by_kind(fx, RbcKind.PROPOSE)}
    assert v.round == 1 and v.source == 1 and not v.edges()
    assert [e.round for e in fx.events if e.kind == "round_entered"] == [1]


def test_non_leader_references_leader_without_nv_edges():
    node = SailfishNode(SystemParams(4, 1), 1)
    node.start()
    dag = full_dag(4, 1)
    for v in dag.round_vertices(1):
        node.try_add_to_dag(v)
    v = node.create_new_vertex(2)
    assert node.leader(1) in {e.source for e in v.strong_edges}
    assert v.nv_edges == ()


def test_leader_without_previous_leader_uses_nv_edges():
    p = SystemParams(4, 1)
    me = 3  # leads round 3
    node = SailfishNode(p, me)
    node.start()
    dag = full_dag(4, 1)
    r2 = layer(dag, 2, [0, 1, 3])  # leader of round 2 (party 2) is missing
    r3 = layer(dag, 3, [0, 1])
    for r in (1, 2, 3):
        for v in dag.round_vertices(r):
            node.try_add_to_dag(v)
    v = node.create_new_vertex(3)
    assert sorted(e.source for e in v.nv_edges) == [0, 1]
    assert {e.source for e in v.strong_edges} == set(r2)
    assert all(node.leader(2) not in {e.source for e in x.strong_edges} for x in r3.values())


def test_timeouts_amplify_and_jump_rounds():
    p = SystemParams(4, 1)
    node = SailfishNode(p, 1, delta_bound_us=10)
    node.start()
    dag = full_dag(4, 2)
    layer(dag, 3, [0, 1, 2])  # no vertex from the round-3 leader
    for r in (1, 2, 3):
        for v in dag.round_vertices(r):
            node.try_add_to_dag(v)
    fx = node.handle(0, TimeoutMessage(3))
    fx.extend(node.handle(2, TimeoutMessage(3)))
    sent = [e for e in fx.events if e.kind == "timeout_sent"]
    assert [(e.round, e.detail) for e in sent] == [(3, "amplify")]
    fx = node.handle(1, TimeoutMessage(3))
    fx.extend(node.on_idle())
    assert node.round == 4
    assert [e.round for e in fx.events if e.kind == "round_entered"] == [4]
    assert [e.round for e in fx.events if e.kind == "vertex_broadcast"] == [4]
    # entered without the leader vertex, so the long timer applies
    assert fx.timers == [(80, 4)]


def test_timer_fires_only_without_leader_vertex():
    node = SailfishNode(SystemParams(4, 1), 2, delta_bound_us=10)
    fx = node.start()
    assert fx.timers == [(50, 1)]
    fx = node.on_timer(1)
    assert [(e.kind, e.detail) for e in fx.events] == [("timeout_sent", "timer")]
    assert node.on_timer(1).events == []


def test_garbage_message_is_a_violation():
    node = SailfishNode(SystemParams(4, 1), 0)
    fx = node.handle(1, "junk")
    assert [e.kind for e in fx.events] == ["violation"]
