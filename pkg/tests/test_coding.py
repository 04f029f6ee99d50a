import itertools
import json
import pathlib
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optbft.coding import (
    CodedFragment,
    CodewordVector,
    CodingError,
    commit_vector,
    decode,
    encode,
    encode_fragments,
    merkle_prove,
    merkle_root,
    merkle_verify,
    verify_interpolation,
)
from optbft.coding.gf256 import div, inv, mul
from optbft.coding.merkle import MerkleProof, leaf_hash, node_hash

FIXTURES = pathlib.Path(__file__).parent / "fixtures"
GOLDEN = json.loads((FIXTURES / "golden_vectors.json").read_text())
sys.path.insert(0, str(FIXTURES))
import oracle  # noqa: E402


def shares_of(m, n, k):
    return list(encode(m, n, k).shares)


# field arithmetic


@pytest.mark.parametrize("case", GOLDEN["gf_mul"], ids=lambda c: f"{c['a']}x{c['b']}")
def test_gf_mul_golden(case):
    assert mul(case["a"], case["b"]) == case["product"]


@given(st.integers(0, 255), st.integers(0, 255))
def test_gf_mul_matches_bitwise_oracle(a, b):
    assert mul(a, b) == oracle.gf_mul(a, b)


@given(st.integers(1, 255))
def test_gf_inverse(a):
    assert mul(a, inv(a)) == 1
    assert div(a, a) == 1


def test_gf_inverse_of_zero_rejected():
    with pytest.raises(ZeroDivisionError):
        inv(0)


# encode / decode


@pytest.mark.parametrize("case", GOLDEN["encodings"], ids=lambda c: f"n{c['n']}k{c['k']}len{len(c['message_hex']) // 2}")
def test_encode_golden(case):
    shares = shares_of(bytes.fromhex(case["message_hex"]), case["n"], case["k"])
    assert [s.hex() for s in shares] == case["shares_hex"]


def test_encode_is_systematic():
    shares = shares_of(b"hello", 4, 2)
    framed = b"".join(shares[:2])
    assert framed[8:13] == b"hello"
    assert int.from_bytes(framed[:8], "little") == 5


def test_share_length():
    for m, k in [(b"", 2), (b"hello", 2), (b"x" * 100, 7)]:
        assert {len(s) for s in shares_of(m, 10, k)} == {-(-(len(m) + 8) // k)}


@pytest.mark.parametrize("subset", list(itertools.combinations(range(4), 2)))
def test_hello_every_pair_decodes(subset):
    shares = shares_of(b"hello", 4, 2)
    assert decode([(i, shares[i]) for i in subset], 4, 2) == b"hello"
    assert oracle.rs_decode([(i, shares[i]) for i in subset], 2) == b"hello"


def test_decode_systematic_and_parity_shares():
    shares = shares_of(b"ab", 4, 2)
    assert decode([(0, shares[0]), (1, shares[1])], 4, 2) == b"ab"
    assert decode([(2, shares[2]), (3, shares[3])], 4, 2) == b"ab"


def test_empty_message_round_trip():
    shares = shares_of(b"", 4, 2)
    assert decode([(3, shares[3]), (1, shares[1])], 4, 2) == b""


def test_decode_needs_k_shares():
    shares = shares_of(b"ab", 4, 2)
    with pytest.raises(CodingError):
        decode([(0, shares[0])], 4, 2)


def test_decode_rejects_duplicates_and_bad_lengths():
    shares = shares_of(b"abc", 4, 2)
    with pytest.raises(CodingError):
        decode([(0, shares[0]), (0, shares[0])], 4, 2)
    with pytest.raises(CodingError):
        decode([(0, shares[0]), (1, shares[1] + b"\x00")], 4, 2)
    with pytest.raises(CodingError):
        decode([(0, shares[0]), (9, shares[1])], 4, 2)


@pytest.mark.parametrize("n,k", [(256, 2), (4, 5), (4, 0)])
def test_encode_rejects_bad_parameters(n, k):
    with pytest.raises(CodingError):
        encode(b"x", n, k)


def test_encode_accepts_field_limit():
    v = encode(b"edge", 255, 3)
    assert len(v.shares) == 255
    assert decode([(250, v.shares[250]), (7, v.shares[7]), (128, v.shares[128])], 255, 3) == b"edge"


@settings(max_examples=60, deadline=None)
@given(
    st.binary(max_size=200),
    st.sampled_from([(4, 1), (5, 1), (7, 2), (8, 2), (10, 3)]),
    st.data(),
)
def test_round_trip_random_subsets(m, nf, data):
    n, f = nf
    k = -(-(n - f + 1) // 2)
    shares = shares_of(m, n, k)
    subset = data.draw(st.lists(st.sampled_from(range(n)), min_size=k, max_size=n, unique=True))
    assert decode([(i, shares[i]) for i in subset], n, k) == m


# merkle


def test_merkle_single_and_pair():
    assert merkle_root([b"L"]) == oracle.sha(b"\x00L")
    a, b = b"A", b"B"
    assert merkle_root([a, b]) == oracle.sha(b"\x01" + oracle.sha(b"\x00A") + oracle.sha(b"\x00B"))
    assert leaf_hash(a) == oracle.sha(b"\x00A")
    assert node_hash(a, b) == oracle.sha(b"\x01AB")


@pytest.mark.parametrize("case", GOLDEN["merkle"], ids=lambda c: f"{len(c['leaves_hex'])}leaves")
def test_merkle_root_golden(case):
    leaves = [bytes.fromhex(x) for x in case["leaves_hex"]]
    assert merkle_root(leaves).hex() == case["root_hex"]


def test_hello_root_golden():
    case = GOLDEN["encodings"][0]
    assert bytes.fromhex(case["message_hex"]) == b"hello"
    assert merkle_root(shares_of(b"hello", 4, 2)).hex() == case["root_hex"]


def test_merkle_empty_rejected():
    with pytest.raises(ValueError):
        merkle_root([])


def test_merkle_round_trip_seven_leaves():
    leaves = [bytes([i]) * 3 for i in range(7)]
    root = merkle_root(leaves)
    for i, leaf in enumerate(leaves):
        assert merkle_verify(root, i, leaf, merkle_prove(leaves, i))


def test_merkle_position_binding_and_truncation():
    leaves = [b"a", b"b", b"c", b"d", b"e"]
    root = merkle_root(leaves)
    proof = merkle_prove(leaves, 0)
    assert not merkle_verify(root, 1, leaves[0], proof)
    truncated = MerkleProof(proof.leaf_count, proof.siblings[:-1])
    assert not merkle_verify(root, 0, leaves[0], truncated)
    assert not merkle_verify(root, 7, leaves[0], proof)


def test_merkle_prove_out_of_range():
    with pytest.raises(IndexError):
        merkle_prove([b"a"], 1)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.binary(min_size=1, max_size=16), min_size=1, max_size=12, unique=True), st.data())
def test_merkle_bit_flips_break_verification(leaves, data):
    i = data.draw(st.integers(0, len(leaves) - 1))
    root = merkle_root(leaves)
    assert root == oracle.merkle_root_walk(leaves)
    proof = merkle_prove(leaves, i)
    assert merkle_verify(root, i, leaves[i], proof)
    bit = data.draw(st.integers(0, len(leaves[i]) * 8 - 1))
    flipped = bytearray(leaves[i])
    flipped[bit // 8] ^= 1 << (bit % 8)
    assert not merkle_verify(root, i, bytes(flipped), proof)
    if proof.siblings:
        j = data.draw(st.integers(0, len(proof.siblings) - 1))
        sib = bytearray(proof.siblings[j])
        sib[0] ^= 0x80
        bad = MerkleProof(proof.leaf_count, proof.siblings[:j] + (bytes(sib),) + proof.siblings[j + 1:])
        assert not merkle_verify(root, i, leaves[i], bad)
    if len(leaves) > 1:
        assert not merkle_verify(root, i ^ 1 if i ^ 1 < len(leaves) else i - 1, leaves[i], proof)


# verify_interpolation


def test_verify_interpolation_honest():
    root, frags = encode_fragments(b"hello world", 7, 3)
    full = verify_interpolation(frags, root, 7, 3)
    assert full is not None and full == encode(b"hello world", 7, 3)
    assert verify_interpolation(frags[4:], root, 7, 3) == full


def test_verify_interpolation_tampered_golden():
    case = GOLDEN["tampered"][0]
    shares = [bytes.fromhex(s) for s in case["shares_hex"]]
    root, frags = commit_vector(CodewordVector(tuple(shares), 4, 2))
    assert root.hex() == case["root_hex"]
    assert case["root_hex"] != case["reinterpolated_root_hex"]
    assert all(fr.verify(root, 4) for fr in frags)
    assert verify_interpolation(frags, root, 4, 2) is None
    assert verify_interpolation(frags[2:], root, 4, 2) is None


def test_verify_interpolation_needs_k():
    root, frags = encode_fragments(b"abc", 4, 2)
    with pytest.raises(CodingError):
        verify_interpolation(frags[:1], root, 4, 2)


@settings(max_examples=25, deadline=None)
@given(st.binary(max_size=64), st.sampled_from([(4, 2), (6, 3), (7, 3), (8, 4)]))
def test_root_binding_and_subset_independence(m, nk):
    n, k = nk
    root, frags = encode_fragments(m, n, k)
    results = set()
    for subset in itertools.combinations(frags, k):
        full = verify_interpolation(list(subset), root, n, k)
        assert full is not None
        for fr in frags:
            assert full.shares[fr.index] == fr.share
        results.add(full)
    assert len(results) == 1


def test_fragment_verify_checks_root_and_size():
    root, frags = encode_fragments(b"abc", 4, 2)
    fr = frags[1]
    assert fr.verify(root, 4)
    assert not fr.verify(b"\x00" * 32, 4)
    assert not fr.verify(root, 5)
    moved = CodedFragment(2, fr.share, fr.proof, fr.root)
    assert not moved.verify(root, 4)
