"""Vertices, the local DAG, and the leader-driven total order."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple


class VertexRef(NamedTuple):
    round: int
    source: int
    digest: bytes


@dataclass(frozen=True)
class Vertex:
    round: int
    source: int
    block: bytes = b""
    strong_edges: tuple[VertexRef, ...] = ()
    weak_edges: tuple[VertexRef, ...] = ()
    nv_edges: tuple[VertexRef, ...] = ()
    _encoded: bytes = field(default=b"", init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("strong_edges", "weak_edges", "nv_edges"):
            object.__setattr__(self, name, tuple(sorted(getattr(self, name))))
        object.__setattr__(self, "_encoded", _encode(self))

    def encode(self) -> bytes:
        return self._encoded

    @property
    def ref(self) -> VertexRef:
        return VertexRef(self.round, self.source, hashlib.sha256(self._encoded).digest())

    def edges(self) -> tuple[VertexRef, ...]:
        return self.strong_edges + self.weak_edges + self.nv_edges


_HEAD = struct.Struct("<IHI")
_REF = struct.Struct("<IH32s")


def _encode(v: Vertex) -> bytes:
    parts = [_HEAD.pack(v.round, v.source, len(v.block)), v.block]
    for edges in (v.strong_edges, v.weak_edges, v.nv_edges):
        parts.append(struct.pack("<H", len(edges)))
        parts.extend(_REF.pack(*e) for e in edges)
    return b"".join(parts)


def decode_vertex(data: bytes) -> Vertex:
    """Parse a vertex; raises ValueError on malformed input."""
    try:
        rnd, source, blen = _HEAD.unpack_from(data, 0)
        pos = _HEAD.size
        block = data[pos:pos + blen]
        if len(block) != blen:
            raise ValueError("truncated block")
        pos += blen
        lists = []
        for _ in range(3):
            (count,) = struct.unpack_from("<H", data, pos)
            pos += 2
            refs = []
            for _ in range(count):
                r, s, d = _REF.unpack_from(data, pos)
                pos += _REF.size
                refs.append(VertexRef(r, s, d))
            lists.append(tuple(refs))
    except struct.error as exc:
        raise ValueError(f"malformed vertex: {exc}") from None
    if pos != len(data):
        raise ValueError("trailing bytes after vertex")
    v = Vertex(rnd, source, block, *lists)
    if v.encode() != data:
        raise ValueError("non-canonical vertex encoding")
    return v


class Dag:
    def __init__(self, n: int):
        self.n = n
        self.rounds: dict[int, dict[int, Vertex]] = {}
        self.by_ref: dict[VertexRef, Vertex] = {}
        self.delivered: set[VertexRef] = set()
        self.leader_stack: list[Vertex] = []
        self.committed_round = 0
        self.committed_leaders: list[VertexRef] = []

    def leader(self, r: int) -> int:
        return r % self.n

    def __contains__(self, ref: VertexRef) -> bool:
        return ref in self.by_ref

    def round_vertices(self, r: int) -> list[Vertex]:
        return [v for _, v in sorted(self.rounds.get(r, {}).items())]

    def size(self, r: int) -> int:
        return len(self.rounds.get(r, {}))

    def get_leader_vertex(self, r: int) -> Vertex | None:
        return self.rounds.get(r, {}).get(self.leader(r))

    def can_insert(self, v: Vertex) -> bool:
        return all(e in self.by_ref for e in v.strong_edges + v.weak_edges)

    def insert(self, v: Vertex) -> bool:
        """Add ``v`` when its strong and weak edge targets are present."""
        ref = v.ref
        if ref in self.by_ref:
            return True
        if v.source in self.rounds.get(v.round, {}):
            return False
        if not self.can_insert(v):
            return False
        self.rounds.setdefault(v.round, {})[v.source] = v
        self.by_ref[ref] = v
        return True

    def _reach(self, starts: Iterable[VertexRef], floor: int, strong_only: bool) -> set[VertexRef]:
        seen: set[VertexRef] = set()
        stack = [r for r in starts if r.round >= floor]
        while stack:
            ref = stack.pop()
            if ref in seen:
                continue
            v = self.by_ref.get(ref)
            if v is None:
                continue
            seen.add(ref)
            nxt = v.strong_edges if strong_only else v.edges()
            stack.extend(e for e in nxt if e.round >= floor and e not in seen)
        return seen

    def path(self, v: Vertex, u: Vertex) -> bool:
        if v.ref == u.ref:
            return True
        return u.ref in self._reach(v.edges(), u.round, strong_only=False)

    def strong_path(self, v: Vertex, u: Vertex) -> bool:
        if v.ref == u.ref:
            return True
        return u.ref in self._reach(v.strong_edges, u.round, strong_only=True)

    def history(self, v: Vertex) -> set[VertexRef]:
        """Every DAG vertex reachable from ``v``, including ``v`` itself if present."""
        reach = self._reach(v.edges(), 1, strong_only=False)
        if v.ref in self.by_ref:
            reach.add(v.ref)
        return reach

    def try_commit(self, r: int, support: Iterable[Vertex], threshold: int) -> list[Vertex] | None:
        """Commit the round-r leader vertex if ``threshold`` supporters reach it.

        Returns the newly ordered vertices, or None when nothing was committed.
        """
        if r < 1 or self.committed_round >= r:
            return None
        v = self.get_leader_vertex(r)
        if v is None:
            return None
        votes = sum(1 for s in support if self.strong_path(s, v))
        if votes < threshold:
            return None
        return self.commit_leader(v)

    def commit_leader(self, v: Vertex) -> list[Vertex]:
        self.leader_stack.append(v)
        last = v
        for r in range(v.round - 1, self.committed_round, -1):
            vs = self.get_leader_vertex(r)
            if vs is not None and self.strong_path(last, vs):
                self.leader_stack.append(vs)
                last = vs
        self.committed_round = v.round
        self.committed_leaders.extend(x.ref for x in reversed(self.leader_stack))
        return self.order_vertices()

    def order_vertices(self) -> list[Vertex]:
        ordered = []
        while self.leader_stack:
            leader = self.leader_stack.pop()
            fresh = [self.by_ref[r] for r in self.history(leader) if r not in self.delivered]
            fresh.sort(key=lambda x: (x.round, x.source))
            for u in fresh:
                self.delivered.add(u.ref)
                ordered.append(u)
        return ordered
