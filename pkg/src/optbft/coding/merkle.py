"""SHA-256 Merkle tree with domain-separated leaves and promoted odd nodes."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

DIGEST_SIZE = 32


def leaf_hash(leaf: bytes) -> bytes:
    return hashlib.sha256(b"\x00" + leaf).digest()


def node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(b"\x01" + left + right).digest()


@dataclass(frozen=True)
class MerkleProof:
    """Authentication path for one leaf.

    The sibling directions are implied by the leaf index and ``leaf_count``;
    levels where the node is promoted contribute no sibling.
    """

    leaf_count: int
    siblings: tuple[bytes, ...]


def _levels(leaves: list[bytes]) -> list[list[bytes]]:
    if not leaves:
        raise ValueError("merkle tree needs at least one leaf")
    level = [leaf_hash(x) for x in leaves]
    levels = [level]
    while len(level) > 1:
        nxt = [node_hash(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
        levels.append(level)
    return levels


def merkle_root(leaves: list[bytes]) -> bytes:
    return _levels(list(leaves))[-1][0]


def merkle_prove(leaves: list[bytes], i: int) -> MerkleProof:
    leaves = list(leaves)
    if not 0 <= i < len(leaves):
        raise IndexError(f"leaf index {i} out of range for {len(leaves)} leaves")
    siblings = []
    idx = i
    for level in _levels(leaves)[:-1]:
        if idx ^ 1 < len(level):
            siblings.append(level[idx ^ 1])
        idx //= 2
    return MerkleProof(leaf_count=len(leaves), siblings=tuple(siblings))


def merkle_verify(root: bytes, i: int, leaf: bytes, proof: MerkleProof) -> bool:
    size = proof.leaf_count
    if not isinstance(i, int) or not 0 <= i < size:
        return False
    node = leaf_hash(leaf)
    idx = i
    pos = 0
    while size > 1:
        if idx ^ 1 < size:
            if pos >= len(proof.siblings):
                return False
            sib = proof.siblings[pos]
            pos += 1
            if len(sib) != DIGEST_SIZE:
                return False
            node = node_hash(sib, node) if idx & 1 else node_hash(node, sib)
        idx //= 2
        size = (size + 1) // 2
    return pos == len(proof.siblings) and node == root
