"""Systematic Reed-Solomon erasure code over GF(2^8).

Share j is the evaluation at point j of the unique polynomial of degree < k
that takes the data stripes as values at points 0..k-1. Shares 0..k-1 are
therefore the data itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gf256 import interpolate

MAX_SHARES = 255
LENGTH_PREFIX = 8


class CodingError(ValueError):
    pass


@dataclass(frozen=True)
class CodewordVector:
    shares: tuple[bytes, ...]
    n: int
    k: int

    @property
    def share_len(self) -> int:
        return len(self.shares[0])


def _check_params(n: int, k: int) -> None:
    if n > MAX_SHARES:
        raise CodingError(f"n={n} exceeds the GF(256) limit of {MAX_SHARES} shares")
    if k < 1 or n < 1:
        raise CodingError(f"need 1 <= k <= n, got n={n}, k={k}")
    if k > n:
        raise CodingError(f"k={k} > n={n}")


def share_length(msg_len: int, k: int) -> int:
    return -(-(msg_len + LENGTH_PREFIX) // k)


def encode(m: bytes, n: int, k: int) -> CodewordVector:
    _check_params(n, k)
    framed = len(m).to_bytes(LENGTH_PREFIX, "little") + bytes(m)
    size = share_length(len(m), k)
    framed = framed.ljust(size * k, b"\x00")
    data = np.frombuffer(framed, dtype=np.uint8).reshape(k, size)
    stripes = [data[i] for i in range(k)]
    parity = interpolate(list(range(k)), stripes, list(range(k, n)))
    shares = tuple(bytes(s) for s in stripes) + tuple(p.tobytes() for p in parity)
    return CodewordVector(shares=shares, n=n, k=k)


def _select(fragments, n: int, k: int) -> list[tuple[int, bytes]]:
    _check_params(n, k)
    seen: dict[int, bytes] = {}
    for index, share in fragments:
        if not 0 <= index < n:
            raise CodingError(f"share index {index} out of range for n={n}")
        if index in seen:
            raise CodingError(f"duplicate share index {index}")
        seen[index] = bytes(share)
    if len(seen) < k:
        raise CodingError(f"need {k} shares, got {len(seen)}")
    lengths = {len(s) for s in seen.values()}
    if len(lengths) != 1:
        raise CodingError(f"inconsistent share lengths {sorted(lengths)}")
    return sorted(seen.items())[:k]


def reconstruct(fragments, n: int, k: int) -> CodewordVector:
    """Rebuild the full share vector from the k lowest-indexed fragments."""
    chosen = _select(fragments, n, k)
    xs = [i for i, _ in chosen]
    ys = [np.frombuffer(s, dtype=np.uint8) for _, s in chosen]
    full = interpolate(xs, ys, list(range(n)))
    return CodewordVector(shares=tuple(s.tobytes() for s in full), n=n, k=k)


def decode(fragments, n: int, k: int) -> bytes:
    """Recover the message from any k shares (erasure decoding only)."""
    chosen = _select(fragments, n, k)
    xs = [i for i, _ in chosen]
    ys = [np.frombuffer(s, dtype=np.uint8) for _, s in chosen]
    data = b"".join(s.tobytes() for s in interpolate(xs, ys, list(range(k))))
    if len(data) < LENGTH_PREFIX:
        raise CodingError("shares too short to hold the length prefix")
    size = int.from_bytes(data[:LENGTH_PREFIX], "little")
    if size > len(data) - LENGTH_PREFIX:
        raise CodingError(f"length prefix {size} exceeds decoded data")
    return data[LENGTH_PREFIX:LENGTH_PREFIX + size]
