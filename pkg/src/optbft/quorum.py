"""Quorum thresholds for the broadcast, dispersal and consensus protocols.

Every threshold used anywhere in the package is computed here, once, with
exact integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class SystemParams:
    n: int
    f: int

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or not isinstance(self.f, int):
            raise TypeError("n and f must be integers")
        if self.f < 1:
            raise ValueError(f"f must be at least 1, got f={self.f}")
        if self.n < 4:
            raise ValueError(f"n must be at least 4, got n={self.n}")
        if self.n < 3 * self.f + 1:
            raise ValueError(f"n={self.n} < 3f+1={3 * self.f + 1}")


@dataclass(frozen=True)
class ThresholdSet:
    opt_commit: int
    vote: int
    ready_from_echo: int
    ready_from_vote: int
    ready_amplify: int
    commit: int
    decode_k: int


def decode_threshold(p: SystemParams) -> int:
    return ceil_div(p.n - p.f + 1, 2)


def rbc_thresholds(p: SystemParams) -> ThresholdSet:
    """Thresholds for the optimistic RBC variants.

    Echo and vote counts are over non-broadcaster parties; ready counts are
    over all n parties.
    """
    n, f = p.n, p.f
    ready = ceil_div(n + f - 1, 2)
    return ThresholdSet(
        opt_commit=ceil_div(n + 2 * f - 2, 2),
        vote=ceil_div(n, 2),
        ready_from_echo=ready,
        ready_from_vote=ready,
        ready_amplify=f + 1,
        commit=2 * f + 1,
        decode_k=decode_threshold(p),
    )


def avid_thresholds(p: SystemParams) -> ThresholdSet:
    """Thresholds for dispersal; all counts range over the n servers."""
    n, f = p.n, p.f
    ready = ceil_div(n + f + 1, 2)
    return ThresholdSet(
        opt_commit=ceil_div(n + 2 * f + 1, 2),
        vote=ceil_div(n + 1, 2),
        ready_from_echo=ready,
        ready_from_vote=ready,
        ready_amplify=f + 1,
        commit=2 * f + 1,
        decode_k=decode_threshold(p),
    )


def max_opt_faults(p: SystemParams) -> int:
    """Largest number of faulty non-broadcasters that still allows a 2-step commit."""
    return (p.n - 2 * p.f) // 2
