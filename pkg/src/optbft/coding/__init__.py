"""Erasure coding and Merkle commitments for coded broadcast and dispersal."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .merkle import MerkleProof, merkle_prove, merkle_root, merkle_verify
from .rs import CodewordVector, CodingError, decode, encode, reconstruct, share_length


@dataclass(frozen=True)
class CodedFragment:
    index: int
    share: bytes
    proof: MerkleProof
    root: bytes

    def verify(self, root: bytes, n: int) -> bool:
        return (
            self.root == root
            and self.proof.leaf_count == n
            and merkle_verify(root, self.index, self.share, self.proof)
        )


def commit_vector(vector: CodewordVector) -> tuple[bytes, list[CodedFragment]]:
    """Root a share vector and attach a proof to every share."""
    shares = list(vector.shares)
    root = merkle_root(shares)
    frags = [
        CodedFragment(index=j, share=s, proof=merkle_prove(shares, j), root=root)
        for j, s in enumerate(shares)
    ]
    return root, frags


def encode_fragments(m: bytes, n: int, k: int) -> tuple[bytes, list[CodedFragment]]:
    return commit_vector(encode(m, n, k))


@lru_cache(maxsize=512)
def _interpolate_and_root(chosen: tuple[tuple[int, bytes], ...], n: int, k: int):
    vector = reconstruct(chosen, n, k)
    return vector, merkle_root(list(vector.shares))


def verify_interpolation(fragments, h: bytes, n: int, k: int) -> CodewordVector | None:
    """Check that the vector committed under ``h`` is a codeword.

    Interpolates from the k lowest-indexed fragments and re-roots the result.
    Returns the full vector on success and None otherwise. Fragments must
    already be Merkle-verified against ``h``.
    """
    by_index: dict[int, bytes] = {}
    for frag in fragments:
        by_index.setdefault(frag.index, frag.share)
    if len(by_index) < k:
        raise CodingError(f"need {k} fragments, got {len(by_index)}")
    chosen = tuple(sorted(by_index.items())[:k])
    try:
        vector, root = _interpolate_and_root(chosen, n, k)
    except CodingError:
        return None
    return vector if root == h else None


__all__ = [
    "CodedFragment",
    "CodewordVector",
    "CodingError",
    "MerkleProof",
    "commit_vector",
    "decode",
    "encode",
    "encode_fragments",
    "merkle_prove",
    "merkle_root",
    "merkle_verify",
    "reconstruct",
    "share_length",
    "verify_interpolation",
]
