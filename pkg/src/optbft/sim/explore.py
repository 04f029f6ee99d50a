"""Exhaustive enumeration of message delivery orders for small RBC scenarios.

Two timing models are offered:

``async``
    Every pending message may be delivered next. Global states (party states
    plus the multiset of pending messages) are memoised, so each reachable
    terminal state is visited once however many orders lead to it.

``lockstep``
    Time advances in unit steps and every honest message arrives either in the
    step it was sent or in the next one, in any order within a step. Messages
    from corrupt parties may arrive at any step. Over all delivery orders this
    realises every worst case of a run whose honest delays are at most one
    unit, because the extreme delivery times of such runs are integral.

A party's messages to itself are handled immediately as local computation
rather than as network deliveries.

Party states and messages are interned to small integers and every local
transition is computed once, so a global step is a handful of tuple
operations.
"""

from __future__ import annotations

from fractions import Fraction

from .engine import build_world
from .metrics import Metrics
from .parties import CorruptParty, instance_label
from .scenario import Scenario
from .wire import encode_message

FRESH, DUE, FREE = 0, 1, 2


class StateSpaceExceeded(RuntimeError):
    pass


def _inert(party) -> bool:
    if isinstance(party, CorruptParty):
        return all(p.terminated for p in party.puppets)
    return party.terminated


class Explorer:
    def __init__(
        self,
        sc: Scenario,
        bound: int,
        timing: str = "async",
        max_states: int = 5_000_000,
        horizon: int = 8,
        local_loopback: bool = True,
    ):
        if not sc.is_rbc:
            raise ValueError("schedule exploration supports the reliable-broadcast protocols only")
        if timing not in ("async", "lockstep"):
            raise ValueError(f"unknown timing model {timing!r}")
        self.sc = sc
        self.bound = bound
        self.timed = timing == "lockstep"
        self.max_states = max_states
        self.horizon = horizon
        self.local_loopback = local_loopback
        self.world = build_world(sc)
        self.order = sorted(self.world.parties)
        self.slot = {p: i for i, p in enumerate(self.order)}
        self.corrupt_slots = frozenset(self.slot[p] for p in self.world.corrupt)
        self.honest_slots = sorted(self.slot[p] for p in self.world.honest)
        self.honest_set = frozenset(self.honest_slots)
        # interning tables
        self.local_ids: list[dict] = [{} for _ in self.order]
        self.local_objs: list[list] = [[] for _ in self.order]
        self.local_inert: list[list[bool]] = [[] for _ in self.order]
        self.msg_ids: dict = {}
        self.msgs: list[tuple[int, int, object]] = []
        self.dst_of: list[int] = []
        self.transitions: dict[tuple[int, int, int], tuple[int, tuple[int, ...]]] = {}
        self.states = 0
        self.max_depth = 0
        self.terminals = 0

    # interning

    def _intern_local(self, slot: int, party) -> int:
        key = party.state_key()
        table = self.local_ids[slot]
        sid = table.get(key)
        if sid is None:
            sid = len(self.local_objs[slot])
            table[key] = sid
            self.local_objs[slot].append(party)
            self.local_inert[slot].append(_inert(party))
        return sid

    def _local_closure(self, party, step):
        """Process a party's messages to itself at once; they never cross the network."""
        if not self.local_loopback:
            return step
        me = party.me
        queue = [m for d, m, _ in step.messages if d == me]
        step.messages = [e for e in step.messages if e[0] != me]
        while queue:
            more = party.receive(me, queue.pop(0))
            queue.extend(m for d, m, _ in more.messages if d == me)
            step.messages.extend(e for e in more.messages if e[0] != me)
        return step

    def _intern_msgs(self, src: int, step) -> tuple[int, ...]:
        out = []
        for dst, msg, _extra in step.messages:
            if dst not in self.slot:
                continue
            key = (src, dst, encode_message(msg))
            mid = self.msg_ids.get(key)
            if mid is None:
                mid = len(self.msgs)
                self.msg_ids[key] = mid
                self.msgs.append((self.slot[src], self.slot[dst], msg))
                self.dst_of.append(self.slot[dst])
            out.append(mid)
        return tuple(out)

    def _local_step(self, slot: int, sid: int, mid: int) -> tuple[int, tuple[int, ...]]:
        key = (slot, sid, mid)
        hit = self.transitions.get(key)
        if hit is None:
            src_slot, _, msg = self.msgs[mid]
            party = self.local_objs[slot][sid].clone()
            step = self._local_closure(party, party.receive(self.order[src_slot], msg))
            hit = (self._intern_local(slot, party), self._intern_msgs(self.order[slot], step))
            self.transitions[key] = hit
        return hit

    # global transitions; a pending entry is the int mid * 3 + label

    def _entry(self, mid: int) -> int:
        if self.timed and self.msgs[mid][0] in self.corrupt_slots:
            return mid * 3 + FREE
        return mid * 3 + FRESH

    def _delivered(self, slot: int, sid: int) -> frozenset:
        party = self.local_objs[slot][sid]
        return frozenset(iid for iid, inst in party.host.instances.items() if inst.delivered is not None)

    def _deliveries(self, sids: tuple):
        for slot in self.honest_slots:
            party = self.local_objs[slot][sids[slot]]
            for iid, inst in sorted(party.host.instances.items()):
                if inst.delivered is not None:
                    yield self.order[slot], iid, inst.delivered

    def _key(self, state) -> tuple:
        sids, pending, times, now, _depth, base, latest = state
        if base is None:
            return sids, pending
        # only the elapsed time and the latest delivery so far, both relative
        # to the first delivery, can influence the worst spread of a schedule
        return sids, pending, now - base, latest - base

    def initial(self):
        sids = []
        pending = []
        for p in self.order:
            party = self.world.parties[p].clone()
            step = self._local_closure(party, party.start())
            sids.append(self._intern_local(self.slot[p], party))
            pending.extend(self._entry(mid) for mid in self._intern_msgs(p, step))
        sids = tuple(sids)
        inert, dst = self.local_inert, self.dst_of
        pending = tuple(sorted(e for e in pending if not inert[dst[e // 3]][sids[dst[e // 3]]]))
        return sids, pending, (), 0, 0, None, None

    def successors(self, state):
        sids, pending, times, now, depth, base, latest = state
        inert, dst = self.local_inert, self.dst_of
        timed = self.timed
        has_due = False
        has_fresh = False
        prev = -1
        for i, entry in enumerate(pending):
            label = entry % 3
            if label == DUE:
                has_due = True
            elif label == FRESH:
                has_fresh = True
            if entry == prev:
                continue
            prev = entry
            mid = entry // 3
            slot = dst[mid]
            sid = sids[slot]
            nsid, emitted = self._local_step(slot, sid, mid)
            nsids = sids[:slot] + (nsid,) + sids[slot + 1:]
            rest = pending[:i] + pending[i + 1:]
            if nsid != sid and inert[slot][nsid]:
                rest = tuple(e for e in rest if dst[e // 3] != slot)
            if emitted:
                extra = [self._entry(m) for m in emitted if not inert[dst[m]][nsids[dst[m]]]]
                if extra:
                    rest = tuple(sorted(rest + tuple(extra)))
            ntimes, nbase, nlatest = times, base, latest
            if timed and nsid != sid and slot in self.honest_set:
                fresh = self._delivered(slot, nsid) - self._delivered(slot, sid)
                if fresh:
                    p = self.order[slot]
                    ntimes = times + tuple((p, iid, now) for iid in sorted(fresh))
                    nbase = now if base is None else base
                    nlatest = now
            yield nsids, rest, ntimes, now, depth + 1, nbase, nlatest
        if timed and not has_due and has_fresh:
            aged = tuple(sorted(e + 1 if e % 3 == FRESH else e for e in pending))
            yield sids, aged, times, now + 1, depth, base, latest

    # enumeration

    def run(self):
        start = self.initial()
        stack = [start]
        visited = {self._key(start)}
        while stack:
            state = stack.pop()
            sids, pending, times, now, depth, base, _ = state
            if depth > self.max_depth:
                self.max_depth = depth
                if depth > self.bound:
                    raise StateSpaceExceeded(f"a schedule delivers more than {self.bound} messages")
            if base is not None and now - base > self.horizon:
                yield self._metrics(sids, times, now, truncated=True)
                continue
            if not pending:
                self.terminals += 1
                yield self._metrics(sids, times, now)
                continue
            for nxt in self.successors(state):
                key = self._key(nxt)
                if key in visited:
                    continue
                visited.add(key)
                self.states += 1
                if self.states > self.max_states:
                    raise StateSpaceExceeded(f"more than {self.max_states} states")
                stack.append(nxt)

    def _metrics(self, sids, times, now, truncated: bool = False) -> Metrics:
        m = Metrics(self.sc.id)
        at = {(p, iid): t for p, iid, t in times}
        got: dict = {}
        for p, iid, d in self._deliveries(sids):
            got.setdefault(iid, {})[p] = d.payload
            t = at.get((p, iid), 0)
            m.add(p, instance_label(iid), "deliver", t, t if self.timed else None, d.latency_class.value)
        honest = len(self.honest_slots)
        for iid, value in sorted(self.world.inputs.items()):
            label = instance_label(iid)
            vals = got.get(iid, {})
            if len(set(vals.values())) > 1:
                m.safety_violations.append(f"{label}: agreement violated")
            if self.world.broadcaster_honest:
                if any(v != value for v in vals.values()):
                    m.safety_violations.append(f"{label}: validity violated")
                if len(vals) < honest and not truncated:
                    m.safety_violations.append(f"{label}: honest broadcaster but not every honest party delivered")
            elif vals and len(vals) < honest and not truncated:
                m.safety_violations.append(f"{label}: totality violated")
        if truncated:
            m.safety_violations.append(f"schedule exceeded {self.horizon} steps after the first delivery")
        for slot in self.honest_slots:
            for inst in self.local_objs[slot][sids[slot]].host.instances.values():
                m.protocol_violations.extend(f"party {self.order[slot]}: {v}" for v in inst.violations)
        m.finalize(Fraction(1) if self.timed else None)
        m.extras["end_step"] = now
        return m


def exhaustive_schedules(sc: Scenario, bound: int = 32, timing: str = "async", max_states: int = 5_000_000):
    """Yield one Metrics per distinct terminal state over all delivery orders.

    Raises StateSpaceExceeded when a schedule would deliver more than
    ``bound`` messages or the number of states passes ``max_states``.
    """
    return Explorer(sc, bound, timing, max_states).run()
