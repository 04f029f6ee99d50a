"""DAG consensus party: vertex construction on top of a reliable-broadcast transport.

Each round every party reliably broadcasts one vertex. A round-r leader
vertex is committed either when 2f+1 first messages of round r+1 broadcasts
reference it (one RBC plus one step) or when f+1 round r+1 vertices that
reference it have been delivered.

Round advancement is level-triggered: the simulator calls ``on_idle`` once
all messages that arrive at the same instant have been handled.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

from ..quorum import SystemParams
from ..rbc import InstanceId, RbcHost, RbcInstance, RbcKind, RbcMessage
from .dag import Dag, Vertex, VertexRef, decode_vertex

ROUND_WINDOW = 64


class Transport(str, enum.Enum):
    OPTIMISTIC = "optimistic"
    BRACHA = "bracha"


@dataclass(frozen=True)
class TimeoutMessage:
    round: int


@dataclass(frozen=True)
class Event:
    kind: str
    round: int = 0
    ref: VertexRef | None = None
    detail: str = ""
    block: bytes = b""


@dataclass
class Effects:
    messages: list = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    timers: list[tuple[int, int]] = field(default_factory=list)

    def extend(self, other: "Effects") -> None:
        self.messages.extend(other.messages)
        self.events.extend(other.events)
        self.timers.extend(other.timers)


class SailfishNode:
    def __init__(
        self,
        params: SystemParams,
        me: int,
        transport: Transport | str = Transport.OPTIMISTIC,
        delta_bound_us: int = 10_000,
        max_rounds: int | None = None,
    ):
        self.params = params
        self.n, self.f = params.n, params.f
        self.me = me
        self.transport = Transport(transport)
        self.delta_bound_us = delta_bound_us
        self.max_rounds = max_rounds
        self.round = 0
        self.dag = Dag(self.n)
        self.buffer: list[Vertex] = []
        self.held: list[Vertex] = []
        self.rdelivered: dict[VertexRef, Vertex] = {}
        self.first_messages: dict[int, dict[int, Vertex]] = {}
        self.timeouts: dict[int, set[int]] = {}
        self.timeout_sent: set[int] = set()
        self.blocks_to_propose: deque[bytes] = deque()
        self.host = RbcHost(factory=self._make_instance)
        self._fx = Effects()

    # transport plumbing

    def _make_instance(self, iid: InstanceId) -> RbcInstance | None:
        if not 0 <= iid.broadcaster < self.n or iid.seq < 1:
            return None
        if iid.seq > max(self.round, 1) + ROUND_WINDOW:
            return None
        optimistic = self.transport is Transport.OPTIMISTIC
        return RbcInstance(self.params, self.me, iid, optimistic=optimistic)

    def leader(self, r: int) -> int:
        return r % self.n

    def _emit(self, kind: str, **kw) -> None:
        self._fx.events.append(Event(kind, **kw))

    def _take(self) -> Effects:
        fx, self._fx = self._fx, Effects()
        return fx

    def a_bcast(self, block: bytes, r: int | None = None) -> None:
        self.blocks_to_propose.append(bytes(block))

    def start(self) -> Effects:
        self._advance_round(1)
        return self._take()

    def handle(self, sender: int, msg) -> Effects:
        if isinstance(msg, TimeoutMessage):
            self._on_timeout(sender, msg.round)
        elif isinstance(msg, RbcMessage):
            self._on_rbc(sender, msg)
        else:
            self._emit("violation", detail=f"unknown message from {sender}")
        return self._take()

    def on_timer(self, r: int) -> Effects:
        if r == self.round and self.dag.get_leader_vertex(r) is None and r not in self.timeout_sent:
            self._send_timeout(r, "timer")
        return self._take()

    def on_idle(self) -> Effects:
        while self._try_advance():
            pass
        return self._take()

    def _on_rbc(self, sender: int, msg: RbcMessage) -> None:
        inst = self.host.get(msg.instance)
        if inst is None:
            self.host.handle(sender, msg)
            return
        fresh_propose = msg.kind == RbcKind.PROPOSE and not inst.echoed
        before = len(inst.violations)
        out, delivery = inst.handle(sender, msg)
        for text in inst.violations[before:]:
            self._emit("violation", detail=f"rbc {msg.instance}: {text}")
        self._fx.messages.extend(out)
        if fresh_propose and inst.echoed:
            self._first_message(msg.payload, msg.instance.seq, msg.instance.broadcaster)
        if delivery is not None:
            self._r_deliver(delivery.payload, msg.instance.seq, msg.instance.broadcaster)

    def _rbc_after_flush(self) -> None:
        for sender, msg, (out, delivery) in self.host.flush():
            self._fx.messages.extend(out)
            if delivery is not None:
                self._r_deliver(delivery.payload, msg.instance.seq, msg.instance.broadcaster)

    # validity

    def _parse(self, data: bytes, r: int, p: int) -> Vertex | None:
        try:
            v = decode_vertex(data)
        except ValueError as exc:
            self._emit("violation", round=r, detail=f"undecodable vertex from {p}: {exc}")
            return None
        if v.source != p or v.round != r:
            self._emit("violation", round=r, detail=f"vertex identity mismatch from {p}")
            return None
        if r > 1 and len(v.strong_edges) < 2 * self.f + 1:
            self._emit("violation", round=r, detail=f"too few strong edges from {p}")
            return None
        if r == 1 and v.edges():
            self._emit("violation", round=r, detail=f"round-1 vertex with edges from {p}")
            return None
        if any(e.round != r - 1 for e in v.strong_edges) or any(e.round >= r - 1 for e in v.weak_edges):
            self._emit("violation", round=r, detail=f"misplaced edges from {p}")
            return None
        if any(e.round != r for e in v.nv_edges):
            self._emit("violation", round=r, detail=f"misplaced no-vote edges from {p}")
            return None
        return v

    def _references_leader(self, v: Vertex, r: int) -> bool:
        lead = self.leader(r)
        return any(e.round == r and e.source == lead for e in v.strong_edges)

    def _needs_nv_gate(self, v: Vertex) -> bool:
        return v.round > 1 and v.source == self.leader(v.round) and not self._references_leader(v, v.round - 1)

    def _nv_gate_open(self, v: Vertex) -> bool:
        if len(v.nv_edges) < 2 * self.f:
            return False
        for ref in v.nv_edges:
            target = self.rdelivered.get(ref)
            if target is None or self._references_leader(target, v.round - 1):
                return False
        return True

    # delivery paths

    def _first_message(self, data: bytes, r: int, p: int) -> None:
        v = self._parse(data, r, p)
        if v is None:
            return
        firsts = self.first_messages.setdefault(r, {})
        if p in firsts:
            return
        firsts[p] = v
        self._rule_one(r - 1)

    def _rule_one(self, r: int) -> None:
        firsts = self.first_messages.get(r + 1, {})
        if r >= 1 and len(firsts) >= 2 * self.f + 1:
            self._try_commit(r, list(firsts.values()), 2 * self.f + 1, "rule1")

    def _r_deliver(self, data: bytes, r: int, p: int) -> None:
        v = self._parse(data, r, p)
        if v is None:
            return
        self.rdelivered[v.ref] = v
        self._emit("r_deliver", round=r, ref=v.ref)
        if self._needs_nv_gate(v) and not self._nv_gate_open(v):
            self.held.append(v)
        else:
            self._accept(v)
        self._release_held()

    def _release_held(self) -> None:
        progress = True
        while progress:
            progress = False
            for v in list(self.held):
                if self._nv_gate_open(v):
                    self.held.remove(v)
                    self._accept(v)
                    progress = True

    def _accept(self, v: Vertex) -> None:
        if not self.try_add_to_dag(v):
            if v not in self.buffer:
                self.buffer.append(v)
            return
        progress = True
        while progress:
            progress = False
            for b in sorted(self.buffer, key=lambda x: (x.round, x.source)):
                if self.try_add_to_dag(b):
                    self.buffer.remove(b)
                    progress = True

    def try_add_to_dag(self, v: Vertex) -> bool:
        if v.ref in self.dag:
            return True
        if not self.dag.insert(v):
            return False
        self._emit("vertex_added", round=v.round, ref=v.ref)
        if self.dag.size(v.round) >= self.f + 1:
            self._try_commit(v.round - 1, self.dag.round_vertices(v.round), self.f + 1, "rule2")
        if v.source == self.leader(v.round):
            self._rule_one(v.round)
        return True

    def _try_commit(self, r: int, support: list[Vertex], threshold: int, rule: str) -> None:
        before = len(self.dag.committed_leaders)
        leader = self.dag.get_leader_vertex(r)
        ordered = self.dag.try_commit(r, support, threshold)
        if ordered is None:
            return
        self._emit("direct_commit", round=r, ref=leader.ref, detail=rule)
        for ref in self.dag.committed_leaders[before:]:
            self._emit("leader_ordered", round=ref.round, ref=ref)
        for u in ordered:
            self._emit("a_deliver", round=u.round, ref=u.ref, block=u.block)

    # rounds and timeouts

    def _on_timeout(self, sender: int, r: int) -> None:
        if r < 1:
            return
        senders = self.timeouts.setdefault(r, set())
        senders.add(sender)
        if len(senders) >= self.f + 1 and r not in self.timeout_sent:
            self._send_timeout(r, "amplify")

    def _send_timeout(self, r: int, why: str) -> None:
        self.timeout_sent.add(r)
        self._emit("timeout_sent", round=r, detail=why)
        msg = TimeoutMessage(r)
        self._fx.messages.extend((j, msg) for j in range(self.n))

    def _advance_ready(self, r: int) -> bool:
        if self.dag.size(r) < 2 * self.f + 1:
            return False
        return self.dag.get_leader_vertex(r) is not None or len(self.timeouts.get(r, ())) >= 2 * self.f + 1

    def _leader_may_enter(self, nxt: int) -> bool:
        if self.me != self.leader(nxt):
            return True
        prev = nxt - 1
        if self.dag.get_leader_vertex(prev) is not None:
            return True
        lacking = [v for v in self.dag.round_vertices(nxt) if not self._references_leader(v, prev)]
        return len(lacking) >= 2 * self.f

    def _try_advance(self) -> bool:
        if self.round == 0:
            return False
        known = set(self.dag.rounds) | set(self.timeouts)
        candidates = sorted((r for r in known if r >= self.round and self._advance_ready(r)), reverse=True)
        if not candidates:
            return False
        r = candidates[0]
        if self.max_rounds is not None and r + 1 > self.max_rounds:
            return False
        if not self._leader_may_enter(r + 1):
            return False
        self._advance_round(r + 1)
        return True

    def _advance_round(self, r: int) -> None:
        via_leader = r > 1 and self.dag.get_leader_vertex(r - 1) is not None
        self.round = r
        tau = (5 if via_leader or r == 1 else 8) * self.delta_bound_us
        self._emit("round_entered", round=r, detail="leader" if via_leader else ("start" if r == 1 else "timeout"))
        self._fx.timers.append((tau, r))
        self._rbc_after_flush()
        self.broadcast_vertex(r)

    def create_new_vertex(self, r: int) -> Vertex:
        strong = [v.ref for v in self.dag.round_vertices(r - 1)] if r > 1 else []
        nv: list[VertexRef] = []
        if r > 1 and self.me == self.leader(r):
            lead_prev = self.dag.get_leader_vertex(r - 1)
            if lead_prev is None or lead_prev.ref not in strong:
                nv = [v.ref for v in self.dag.round_vertices(r) if not self._references_leader(v, r - 1)]
        block = self.blocks_to_propose.popleft() if self.blocks_to_propose else b""
        draft = Vertex(r, self.me, block, tuple(strong), (), tuple(nv))
        weak = self._orphans(draft)
        return Vertex(r, self.me, block, tuple(strong), tuple(weak), tuple(nv))

    def _orphans(self, v: Vertex) -> list[VertexRef]:
        reach = self.dag._reach(v.edges(), 1, strong_only=False)
        weak = []
        for r in range(v.round - 2, 0, -1):
            for u in self.dag.round_vertices(r):
                if u.ref not in reach:
                    weak.append(u.ref)
                    reach |= self.dag.history(u)
        return weak

    def broadcast_vertex(self, r: int) -> None:
        v = self.create_new_vertex(r)
        self.try_add_to_dag(v)
        inst = self.host.get(InstanceId(self.me, r))
        self._emit("vertex_broadcast", round=r, ref=v.ref)
        self._fx.messages.extend(inst.broadcast(v.encode()))
