"""Adversary behaviours and the lower-bound world partitions.

Most Byzantine strategies are expressed as *split-brain* puppets: the
corrupt party runs one honest state machine per audience, each with its own
input, and only forwards a puppet's messages to that puppet's audience.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Silent:
    pass


@dataclass(frozen=True)
class WithholdEchoReady:
    """Forward proposals but drop echo, vote and ready messages."""


@dataclass(frozen=True)
class SelectiveDelay:
    targets: frozenset[int]
    delay_us: int


@dataclass(frozen=True)
class CrashAtRound:
    round: int


@dataclass(frozen=True)
class TamperCodeword:
    """Commit to a share vector with one share altered, then go quiet."""

    share: int
    value: bytes | None = None


@dataclass(frozen=True)
class Route:
    recipients: frozenset[int] | None
    value: bytes | None


@dataclass(frozen=True)
class SplitBrain:
    """One honest puppet per route.

    A puppet with ``value`` set behaves as if its input was ``value``: as the
    broadcaster it broadcasts that value, otherwise it pretends to have
    received that value in the proposal. ``recipients=None`` means everyone.
    Recipients that appear in no route hear nothing.
    """

    routes: tuple[Route, ...]


Behavior = Silent | WithholdEchoReady | SelectiveDelay | CrashAtRound | TamperCodeword | SplitBrain


def equivocate(routes: dict[frozenset[int], bytes]) -> SplitBrain:
    return SplitBrain(tuple(Route(frozenset(k), v) for k, v in sorted(routes.items(), key=lambda kv: sorted(kv[0]))))


def pretend_input(value: bytes) -> SplitBrain:
    return SplitBrain((Route(None, value),))


@dataclass(frozen=True)
class WorldSets:
    broadcaster: int
    A: frozenset[int]
    B: frozenset[int]
    C: frozenset[int]
    D: frozenset[int]
    E: frozenset[int]


WORLDS = ("W1", "W2", "W3", "W4")
ZERO, ONE = b"0", b"1"


def world_sets(n: int, f: int, broadcaster: int = 0) -> WorldSets:
    """Partition the non-broadcasters for the lower-bound worlds.

    Requires n <= 4f - 1; raises ValueError otherwise.
    """
    if n > 4 * f - 1:
        raise ValueError(f"world partitions need n <= 4f-1, got n={n}, f={f}")
    a = (n - 2 * f + 2) // 2
    if n % 2:
        b, e = f - 1, 0
    else:
        b, e = f - 2, 1
    if b < 0:
        raise ValueError(f"world partitions undefined for n={n}, f={f}")
    others = [p for p in range(n) if p != broadcaster]
    sizes = [a, b, b, a, e]
    assert sum(sizes) == len(others)
    groups = []
    pos = 0
    for size in sizes:
        groups.append(frozenset(others[pos:pos + size]))
        pos += size
    return WorldSets(broadcaster, *groups)


@dataclass
class CompiledWorld:
    behaviors: dict[int, Behavior] = field(default_factory=dict)
    broadcaster_input: bytes | None = None
    honest: frozenset[int] = frozenset()


def compile_world(world: str, sets: WorldSets) -> CompiledWorld:
    s = sets.broadcaster
    A, B, C, D, E = sets.A, sets.B, sets.C, sets.D, sets.E
    everyone = frozenset({s}) | A | B | C | D | E
    out = CompiledWorld()
    if world == "W1":
        out.broadcaster_input = ZERO
        for p in D:
            out.behaviors[p] = pretend_input(ONE)
    elif world == "W2":
        out.broadcaster_input = ONE
        for p in A:
            out.behaviors[p] = pretend_input(ZERO)
    elif world == "W3":
        out.behaviors[s] = SplitBrain((Route(A | B | C | E | {s}, ZERO), Route(D, ONE)))
        for p in C | E:
            out.behaviors[p] = SplitBrain((Route(B, ZERO), Route(everyone - B, ONE)))
    elif world == "W4":
        out.behaviors[s] = SplitBrain((Route(A | B | E | {s}, ZERO), Route(C | D, ONE)))
        for p in B:
            out.behaviors[p] = SplitBrain((Route(C, ONE), Route(everyone - C, ZERO)))
        for p in E:
            out.behaviors[p] = SplitBrain((Route(C, ONE), Route(everyone - C, ONE)))
    else:
        raise ValueError(f"unknown world {world!r}")
    out.honest = everyone - frozenset(out.behaviors)
    return out
