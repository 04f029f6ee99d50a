import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optbft.avid import CLIENT, AvidClient, AvidKind, AvidMessage, AvidMode, AvidServer
from optbft.coding import CodewordVector, commit_vector, encode
from optbft.quorum import SystemParams
from optbft.rbc import InstanceId, LatencyClass, ProtocolError

IID = InstanceId(CLIENT, 1)


def run_dispersal(p, pool, rng, skip=(), mode=AvidMode.FULL):
    """Deliver in random order, or in send order (every step in lockstep) when rng is None."""
    servers = {j: AvidServer(p, j, IID, mode) for j in range(p.n) if j not in skip}
    pending = list(pool)
    while pending:
        src, dst, m = pending.pop(0 if rng is None else rng.randrange(len(pending)))
        if dst not in servers:
            continue
        out, _ = servers[dst].handle(src, m)
        pending.extend((dst, to, x) for to, x in out)
    return servers


def retrieve(p, servers, root, mode=AvidMode.FULL, only=None):
    client = AvidClient(p, IID, mode, me=-2)
    result = None
    for j, msg in client.retrieve(root):
        if j not in servers or (only is not None and j not in only):
            continue
        out, _ = servers[j].handle(-2, msg)
        for _, sym in out:
            got = client.handle(j, sym)
            result = result or got
    return result


def tampered_pool(p, value=b"hello", share=3):
    k = -(-(p.n - p.f + 1) // 2)
    shares = list(encode(value, p.n, k).shares)
    shares[share] = bytes([shares[share][0] ^ 1]) + shares[share][1:]
    root, frags = commit_vector(CodewordVector(tuple(shares), p.n, k))
    return root, [(CLIENT, j, AvidMessage(AvidKind.DISPERSE, IID, root, frags[j])) for j in range(p.n)]


def test_disperse_sends_fragment_j_to_server_j():
    client = AvidClient(SystemParams(4, 1), IID)
    out = client.disperse(b"x" * 10)
    assert [j for j, _ in out] == [0, 1, 2, 3]
    assert [m.fragment.index for _, m in out] == [0, 1, 2, 3]


def test_repeat_dispersal_rejected():
    client = AvidClient(SystemParams(4, 1), IID)
    client.disperse(b"x")
    with pytest.raises(ProtocolError):
        client.disperse(b"x")


@pytest.mark.parametrize("value", [b"hello", b""])
def test_disperse_then_retrieve(value):
    p = SystemParams(4, 1)
    client = AvidClient(p, IID)
    pool = [(CLIENT, j, m) for j, m in client.disperse(value)]
    servers = run_dispersal(p, pool, random.Random(3))
    assert all(s.stored is not None for s in servers.values())
    assert retrieve(p, servers, client.dispersed_root).value == value


def test_symbols_from_f_servers_do_not_complete():
    p = SystemParams(7, 2)
    client = AvidClient(p, IID)
    servers = run_dispersal(p, [(CLIENT, j, m) for j, m in client.disperse(b"abc")], random.Random(0))
    assert retrieve(p, servers, client.dispersed_root, only={0, 1}) is None


def test_retrieve_before_completion_waits():
    p = SystemParams(4, 1)
    server = AvidServer(p, 0, IID)
    out, _ = server.handle(-2, AvidMessage(AvidKind.RETRIEVE, IID, b"\x00" * 32))
    assert out == [] and server.waiting_retrievals


def test_disperse_from_non_client_is_violation():
    p = SystemParams(4, 1)
    client = AvidClient(p, IID)
    _, m = client.disperse(b"abc")[1]
    server = AvidServer(p, 1, IID)
    assert server.handle(2, m) == ([], None)
    assert server.violations


@pytest.mark.parametrize("silent,cls", [(set(), LatencyClass.OPT2), ({6}, LatencyClass.OPT2), ({5, 6}, LatencyClass.STD)])
def test_latency_class_by_fault_count(silent, cls):
    p = SystemParams(7, 2)
    client = AvidClient(p, IID)
    pool = [(CLIENT, j, m) for j, m in client.disperse(b"q" * 64)]
    servers = run_dispersal(p, pool, None, skip=silent)
    assert {s.stored.latency_class for s in servers.values()} == {cls}


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([(4, 1), (7, 2)]), st.randoms(use_true_random=False))
def test_tampered_full_mode_never_completes(nf, rng):
    p = SystemParams(*nf)
    _, pool = tampered_pool(p)
    servers = run_dispersal(p, pool, rng)
    assert all(s.stored is None for s in servers.values())


def test_root_only_tampered_completes_and_retrieves_bottom():
    p = SystemParams(7, 2)
    root, pool = tampered_pool(p)
    servers = run_dispersal(p, pool, random.Random(2), mode=AvidMode.ROOT_ONLY)
    assert all(s.stored is not None and s.stored.root == root for s in servers.values())
    result = retrieve(p, servers, root, AvidMode.ROOT_ONLY)
    assert result is not None and result.value is None


@settings(max_examples=30, deadline=None)
@given(
    st.sampled_from([(4, 1), (7, 2)]),
    st.sampled_from(list(AvidMode)),
    st.binary(max_size=100),
    st.randoms(use_true_random=False),
    st.data(),
)
def test_termination_and_correctness(nf, mode, value, rng, data):
    p = SystemParams(*nf)
    silent = set(data.draw(st.lists(st.integers(0, p.n - 1), max_size=p.f, unique=True)))
    client = AvidClient(p, IID, mode)
    pool = [(CLIENT, j, m) for j, m in client.disperse(value)]
    servers = run_dispersal(p, pool, rng, skip=silent, mode=mode)
    assert all(s.stored is not None and s.stored.root == client.dispersed_root for s in servers.values())
    stored = sum(len(s.stored.fragment.share) for s in servers.values() if s.stored.fragment)
    k = -(-(p.n - p.f + 1) // 2)
    assert stored <= p.n * -(-(len(value) + 8) // k)
    for _ in range(2):
        assert retrieve(p, servers, client.dispersed_root, mode).value == value


def test_client_rejects_wrong_symbol():
    p = SystemParams(4, 1)
    client = AvidClient(p, IID)
    out = client.disperse(b"abc")
    client.retrieve(client.dispersed_root)
    frag = out[2][1].fragment
    assert client.handle(1, AvidMessage(AvidKind.SYMBOL, IID, client.dispersed_root, frag)) is None
    assert client.violations
