"""Online safety monitors for the consensus runs."""

from __future__ import annotations

from ..sailfish.dag import VertexRef


class PrefixLog:
    """Checks that every party's output sequence is a prefix of one common sequence."""

    def __init__(self, what: str):
        self.what = what
        self.common: list = []
        self.per_party: dict[int, int] = {}

    def append(self, party: int, item) -> str | None:
        i = self.per_party.get(party, 0)
        self.per_party[party] = i + 1
        if i < len(self.common):
            if self.common[i] != item:
                return f"{self.what} diverges at position {i} for party {party}"
            return None
        self.common.append(item)
        return None


class SailfishMonitor:
    """Asserts the commit-safety claims while the simulation runs.

    * a directly committed leader vertex is reachable by strong edges from
      every later leader vertex in any honest DAG;
    * no two honest parties directly commit different leader vertices of a round;
    * committed leaders and delivered vertices form prefix-consistent logs.
    """

    def __init__(self, nodes: dict):
        self.nodes = nodes
        self.committed: dict[int, tuple[VertexRef, object]] = {}
        self.leaders = PrefixLog("leader order")
        self.vertices = PrefixLog("vertex order")
        self.violations: list[str] = []
        self.checks = 0

    def _leader_round(self, node, ref: VertexRef) -> bool:
        return ref.source == node.leader(ref.round)

    def _check(self, party: int, node, u, r: int) -> None:
        ref, v = self.committed[r]
        self.checks += 1
        if not node.dag.strong_path(u, v):
            self.violations.append(
                f"party {party}: leader vertex of round {u.round} lacks a strong path to committed leader of round {r}"
            )

    def direct_commit(self, party: int, r: int, ref: VertexRef) -> None:
        node = self.nodes[party]
        if r in self.committed:
            if self.committed[r][0] != ref:
                self.violations.append(f"conflicting direct commits in round {r}")
            return
        self.committed[r] = (ref, node.dag.by_ref[ref])
        for q, other in sorted(self.nodes.items()):
            for rr in sorted(other.dag.rounds):
                if rr > r:
                    u = other.dag.get_leader_vertex(rr)
                    if u is not None:
                        self._check(q, other, u, r)

    def vertex_added(self, party: int, ref: VertexRef) -> None:
        node = self.nodes[party]
        if not self._leader_round(node, ref):
            return
        u = node.dag.by_ref[ref]
        for r in sorted(self.committed):
            if r < ref.round:
                self._check(party, node, u, r)

    def leader_ordered(self, party: int, ref: VertexRef) -> None:
        err = self.leaders.append(party, ref)
        if err:
            self.violations.append(err)

    def a_deliver(self, party: int, ref: VertexRef) -> None:
        err = self.vertices.append(party, ref)
        if err:
            self.violations.append(err)
