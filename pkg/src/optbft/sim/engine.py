"""Deterministic discrete-event simulation of a scenario."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction

from ..avid import CLIENT
from ..rbc import InstanceId
from .adversary import TamperCodeword
from .delays import DelayModel, GstWrapper, JitterRange, PerLinkMatrix, Uniform
from .metrics import Metrics
from .monitors import SailfishMonitor
from .parties import (
    AvidClientParty,
    AvidServerParty,
    CorruptParty,
    RbcParty,
    SailfishParty,
    Step,
    forge_tampered_avid,
    forge_tampered_rbc,
    instance_label,
)
from .scenario import Scenario, compile_adversary
from .wire import encode_message, kind_name

RETRIEVER = -2


@dataclass
class World:
    parties: dict[int, object]
    honest: frozenset[int]
    corrupt: frozenset[int]
    inputs: dict[InstanceId, bytes] = field(default_factory=dict)
    broadcaster_honest: bool = True


def build_world(sc: Scenario) -> World:
    params = sc.params
    adv = compile_adversary(sc)
    mode = sc.effective_mode()
    parties: dict[int, object] = {}
    if sc.is_rbc:
        iids = [InstanceId(sc.broadcaster, seq) for seq in range(sc.rounds_or_instances)]
        inputs = {iid: adv.broadcaster_input or sc.input_for(iid.seq) for iid in iids}
        for p in range(sc.n):
            if p in adv.behaviors:
                def factory(value, p=p):
                    return RbcParty(params, p, sc.protocol, inputs, mode, override=value)

                forge = forge_tampered_rbc(params, iids[0], mode, inputs[iids[0]])
                parties[p] = CorruptParty(p, adv.behaviors[p], factory, forge)
            else:
                parties[p] = RbcParty(params, p, sc.protocol, inputs, mode)
        return World(parties, frozenset(range(sc.n)) - adv.corrupt, adv.corrupt, inputs, sc.broadcaster not in adv.corrupt)
    if sc.protocol == "avid":
        iid = InstanceId(CLIENT, 0)
        value = sc.input_for(0)
        for p in range(sc.n):
            if p in adv.behaviors:
                parties[p] = CorruptParty(p, adv.behaviors[p], lambda _v, p=p: AvidServerParty(params, p, iid, mode))
            else:
                parties[p] = AvidServerParty(params, p, iid, mode)
        if isinstance(adv.client, TamperCodeword):
            parties[CLIENT] = CorruptParty(CLIENT, adv.client, None, forge_tampered_avid(params, iid, value))
        else:
            parties[CLIENT] = AvidClientParty(params, CLIENT, iid, mode, value)
        parties[RETRIEVER] = AvidClientParty(params, RETRIEVER, iid, mode, b"")
        honest = frozenset(range(sc.n)) - adv.corrupt
        return World(parties, honest, adv.corrupt, {iid: value}, adv.client is None)
    transport = "optimistic" if sc.protocol == "sailfish_opt" else "bracha"
    for p in range(sc.n):
        blocks = [f"p{p}-r{r}".encode() for r in range(1, sc.rounds_or_instances + 1)]

        def factory(_value, p=p, blocks=blocks):
            return SailfishParty(params, p, transport, sc.bound_us(), sc.rounds_or_instances, blocks)

        parties[p] = CorruptParty(p, adv.behaviors[p], factory) if p in adv.behaviors else factory(None)
    return World(parties, frozenset(range(sc.n)) - adv.corrupt, adv.corrupt)


def make_delay_model(sc: Scenario) -> DelayModel:
    d = sc.delay
    self_us = int(d.get("self_us", 0))
    if d["model"] == "uniform":
        model: DelayModel = Uniform(int(d["delta_us"]), self_us)
    elif d["model"] == "jitter":
        model = JitterRange(int(d["low_us"]), int(d["high_us"]), sc.seed, self_us)
    elif "matrix_us" in d:
        model = PerLinkMatrix([[int(x) for x in row] for row in d["matrix_us"]], self_us)
    else:
        model = PerLinkMatrix.from_regions(sc.n, d.get("ping_ms"), self_us)
    if sc.gst_us > 0 and sc.pre_gst_extra_us > 0:
        model = GstWrapper(model, sc.gst_us, sc.pre_gst_extra_us, sc.bound_us(), sc.seed)
    return model


class Simulation:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.world = build_world(sc)
        self.model = make_delay_model(sc)
        self.metrics = Metrics(sc.id)
        self.heap: list = []
        self.seq = 0
        self.now = 0
        self.max_honest_delay = 0
        self.late_after_gst = 0
        self.time_capped = False
        self.deliveries: dict[tuple[int, str], tuple[bytes, str]] = {}
        self.dispersals: dict[int, bytes] = {}
        self.retrieval: tuple[bytes, bytes | None] | None = None
        self.retrieve_started: int | None = None
        self.broadcast_at: dict = {}
        self.timeouts: list[tuple[int, int, str]] = []
        self.monitor = None
        if sc.is_sailfish:
            nodes = {p: self.world.parties[p].node for p in self.world.honest}
            self.monitor = SailfishMonitor(nodes)

    # scheduling

    def _push(self, t: int, kind: str, data) -> None:
        heapq.heappush(self.heap, (t, self.seq, kind, data))
        self.seq += 1

    def _is_honest(self, p: int) -> bool:
        return p in self.world.honest or (p < 0 and not isinstance(self.world.parties.get(p), CorruptParty))

    def _apply(self, p: int, step: Step) -> None:
        honest = self._is_honest(p)
        for dst, msg, extra in step.messages:
            wire = encode_message(msg)
            delay = self.model.delay(p, dst, self.now) + extra
            if dst != p:
                self.metrics.bytes_sent[p] += len(wire)
                self.metrics.kind_counts[kind_name(msg)] += 1
                if honest and self._is_honest(dst):
                    self.max_honest_delay = max(self.max_honest_delay, delay)
                    if self.now >= self.sc.gst_us and delay > self.sc.bound_us():
                        self.late_after_gst += 1
            self._push(self.now + delay, "msg", (p, dst, msg, wire))
        for delay, tag in step.timers:
            self._push(self.now + delay, "timer", (p, tag))
        if honest:
            for out in step.outputs:
                self._output(p, out)

    def _output(self, p: int, out) -> None:
        m = self.metrics
        kind = out.kind
        if kind == "violation":
            m.protocol_violations.append(f"t={self.now} party {p} {out.instance}: {out.detail}")
        elif kind == "deliver":
            self.deliveries[(p, out.instance)] = (out.payload, out.latency_class)
            m.add(p, out.instance, "deliver", self.now, self.now, out.latency_class)
        elif kind == "dispersal":
            self.dispersals[p] = out.payload
            m.add(p, out.instance, "dispersal_complete", self.now, self.now, out.latency_class)
        elif kind == "retrieve":
            self.retrieval = (self.world.parties[p].client.target, out.payload)
            m.add(p, out.instance, "retrieve", self.now, self.now - (self.retrieve_started or 0), out.latency_class)
        elif kind == "vertex_broadcast":
            self.broadcast_at.setdefault(out.ref, self.now)
        elif kind == "timeout_sent":
            self.timeouts.append((p, int(out.instance[1:]), out.detail))
        elif kind == "direct_commit":
            self.monitor.direct_commit(p, out.ref.round, out.ref)
            m.extras.setdefault("direct_commits", {}).setdefault(out.detail, 0)
            m.extras["direct_commits"][out.detail] += 1
        elif kind == "vertex_added":
            self.monitor.vertex_added(p, out.ref)
        elif kind == "leader_ordered":
            self.monitor.leader_ordered(p, out.ref)
        elif kind == "a_deliver":
            self.monitor.a_deliver(p, out.ref)
            ref = out.ref
            leader = ref.source == ref.round % self.sc.n
            start = self.broadcast_at.get(ref)
            latency = None if start is None else self.now - start
            m.add(p, f"r{ref.round}/p{ref.source}", "commit", self.now, latency, "leader" if leader else "non-leader")

    # event loop

    def _drain(self) -> None:
        limit = self.sc.max_time_us
        parties = self.world.parties
        order = sorted(parties)
        while self.heap:
            t = self.heap[0][0]
            if limit is not None and t > limit:
                self.time_capped = True
                self.heap.clear()
                break
            self.now = t
            while self.heap and self.heap[0][0] == t:
                _, _, kind, data = heapq.heappop(self.heap)
                if kind == "msg":
                    src, dst, msg, wire = data
                    if dst != src:
                        self.metrics.bytes_received[dst] += len(wire)
                    party = parties.get(dst)
                    if party is None:
                        continue
                    if self.sc.record_transcripts:
                        self.metrics.transcripts.setdefault(dst, []).append((t, src, wire))
                    self._apply(dst, party.receive(src, msg))
                elif kind == "timer":
                    p, tag = data
                    self._apply(p, parties[p].timer(tag))
            if self.sc.is_sailfish:
                for p in order:
                    self._apply(p, parties[p].idle())

    def run(self) -> Metrics:
        parties = self.world.parties
        for p in sorted(parties):
            if p != RETRIEVER:
                self._apply(p, parties[p].start())
        if self.sc.is_sailfish:
            for p in sorted(parties):
                self._apply(p, parties[p].idle())
        self._drain()
        if self.sc.protocol == "avid" and self.sc.retrieve and self.dispersals:
            root = self.dispersals[min(self.dispersals)]
            self.retrieve_started = self.now
            self._apply(RETRIEVER, parties[RETRIEVER].begin_retrieval(root))
            self._drain()
        self._finish()
        return self.metrics

    # end-of-run checks

    def _step_unit(self) -> Fraction | None:
        d = self.sc.delay
        if d["model"] == "uniform" and not (self.sc.gst_us and self.sc.pre_gst_extra_us):
            return Fraction(int(d["delta_us"]))
        return Fraction(self.max_honest_delay) if self.max_honest_delay else None

    def _finish(self) -> None:
        m = self.metrics
        m.finalize(self._step_unit())
        m.extras["max_honest_delay_us"] = self.max_honest_delay
        m.extras["late_after_gst"] = self.late_after_gst
        m.extras["time_capped"] = self.time_capped
        m.extras["honest_bytes_sent"] = sum(m.bytes_sent.get(p, 0) for p in self.world.honest)
        if self.sc.is_rbc:
            self._check_rbc()
        elif self.sc.protocol == "avid":
            self._check_avid()
        else:
            self._check_sailfish()

    def _check_rbc(self) -> None:
        m = self.metrics
        honest = sorted(self.world.honest)
        for iid, value in sorted(self.world.inputs.items()):
            label = instance_label(iid)
            got = {p: self.deliveries[(p, label)][0] for p in honest if (p, label) in self.deliveries}
            if len(set(got.values())) > 1:
                m.safety_violations.append(f"{label}: agreement violated, honest parties delivered different values")
            if self.world.broadcaster_honest and any(v != value for v in got.values()):
                m.safety_violations.append(f"{label}: validity violated, delivered value differs from the input")
            if self.time_capped:
                continue
            if self.world.broadcaster_honest and len(got) < len(honest):
                missing = sorted(set(honest) - set(got))
                m.safety_violations.append(f"{label}: honest broadcaster but parties {missing} never delivered")
            elif got and len(got) < len(honest):
                missing = sorted(set(honest) - set(got))
                m.safety_violations.append(f"{label}: totality violated, parties {missing} never delivered")

    def _check_avid(self) -> None:
        m = self.metrics
        roots = {p: r for p, r in self.dispersals.items() if p in self.world.honest}
        if len(set(roots.values())) > 1:
            m.safety_violations.append("dispersal: honest servers completed with different roots")
        client = self.world.parties[CLIENT]
        client_honest = not isinstance(client, CorruptParty)
        if client_honest and not self.time_capped:
            if len(roots) < len(self.world.honest):
                m.safety_violations.append("dispersal: honest client but some honest servers never completed")
            if any(r != client.root for r in roots.values()):
                m.safety_violations.append("dispersal: completed root differs from the client's root")
        if self.retrieval is not None:
            _, value = self.retrieval
            m.extras["retrieved"] = None if value is None else value.hex()
            if client_honest and value != client.value:
                m.safety_violations.append("retrieval: returned value differs from the dispersed value")
        m.extras["dispersal_root"] = None if not roots else next(iter(roots.values())).hex()

    def _check_sailfish(self) -> None:
        m = self.metrics
        m.safety_violations.extend(self.monitor.violations)
        m.extras["monitor_checks"] = self.monitor.checks
        m.extras["timeouts"] = [list(t) for t in self.timeouts]
        nodes = {p: self.world.parties[p].node for p in self.world.honest}
        m.extras["committed_leader_rounds"] = {
            str(p): [ref.round for ref in node.dag.committed_leaders] for p, node in sorted(nodes.items())
        }


def run(sc: Scenario) -> Metrics:
    return Simulation(sc).run()
