"""Party runtimes that adapt protocol state machines to the simulator.

Every runtime exposes ``start``, ``receive``, ``timer`` and ``idle``, each
returning a :class:`Step`. Honest runtimes wrap one state machine; a
:class:`CorruptParty` drives honest puppets and filters what they send.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..avid import AvidClient, AvidKind, AvidMessage, AvidServer
from ..balanced import BalancedMessage, BalancedRbcInstance, BrbcKind, Mode
from ..coding import commit_vector
from ..coding.rs import CodewordVector, encode
from ..quorum import SystemParams, decode_threshold
from ..rbc import InstanceId, RbcHost, RbcInstance, RbcKind, RbcMessage
from ..sailfish import SailfishNode
from .adversary import CrashAtRound, SelectiveDelay, Silent, SplitBrain, TamperCodeword, WithholdEchoReady


@dataclass(frozen=True)
class Output:
    kind: str
    instance: str
    payload: bytes | None = None
    latency_class: str = ""
    detail: str = ""
    ref: object = None


@dataclass
class Step:
    messages: list = field(default_factory=list)
    outputs: list[Output] = field(default_factory=list)
    timers: list = field(default_factory=list)

    def add(self, other: "Step") -> None:
        self.messages.extend(other.messages)
        self.outputs.extend(other.outputs)
        self.timers.extend(other.timers)


RBC_FAMILY = ("opt_rbc", "bracha_rbc", "balanced_rbc")


def instance_label(iid: InstanceId) -> str:
    return f"{iid.broadcaster}:{iid.seq}"


def tampered_vector(m: bytes, n: int, k: int, share: int) -> CodewordVector:
    vector = encode(m, n, k)
    shares = list(vector.shares)
    shares[share] = bytes(b ^ 0xFF for b in shares[share]) or b"\xff"
    return CodewordVector(tuple(shares), n, k)


# RBC family

def forge_rbc_propose(protocol: str, mode: str, params: SystemParams, iid: InstanceId, value: bytes, recipient: int):
    """The proposal an honest broadcaster with input ``value`` would send."""
    if protocol in ("opt_rbc", "bracha_rbc"):
        return RbcMessage(RbcKind.PROPOSE, iid, value)
    k = decode_threshold(params)
    root, frags = commit_vector(encode(value, params.n, k))
    if Mode(mode) is Mode.UNBALANCED:
        return BalancedMessage(BrbcKind.PROPOSE_FULL, iid, root, payload=value)
    return BalancedMessage(BrbcKind.PROPOSE, iid, root, fragment=frags[recipient])


def is_propose(msg) -> bool:
    if isinstance(msg, RbcMessage):
        return msg.kind == RbcKind.PROPOSE
    if isinstance(msg, BalancedMessage):
        return msg.kind in (BrbcKind.PROPOSE, BrbcKind.PROPOSE_FULL)
    if isinstance(msg, AvidMessage):
        return msg.kind == AvidKind.DISPERSE
    return False


def is_echo_vote_ready(msg) -> bool:
    if isinstance(msg, RbcMessage):
        return msg.kind in (RbcKind.ECHO, RbcKind.VOTE, RbcKind.READY)
    if isinstance(msg, BalancedMessage):
        return msg.kind in (BrbcKind.ECHO, BrbcKind.VOTE, BrbcKind.READY)
    if isinstance(msg, AvidMessage):
        return msg.kind in (AvidKind.ECHO, AvidKind.VOTE, AvidKind.READY)
    return False


class RbcParty:
    def __init__(self, params: SystemParams, me: int, protocol: str, inputs: dict[InstanceId, bytes], mode: str = "balanced", override: bytes | None = None):
        self.params = params
        self.me = me
        self.protocol = protocol
        self.mode = mode
        self.inputs = inputs
        self.override = override
        self.host = RbcHost()
        for iid in inputs:
            self.host.register(iid, self._make(iid))

    def _make(self, iid: InstanceId):
        if self.protocol == "balanced_rbc":
            return BalancedRbcInstance(self.params, self.me, iid, self.mode)
        return RbcInstance(self.params, self.me, iid, optimistic=self.protocol == "opt_rbc")

    def start(self) -> Step:
        step = Step()
        for iid, value in sorted(self.inputs.items()):
            if iid.broadcaster == self.me:
                m = self.override if self.override is not None else value
                step.messages.extend((d, msg, 0) for d, msg in self.host.instances[iid].broadcast(m))
        return step

    def receive(self, sender: int, msg) -> Step:
        step = Step()
        iid = msg.instance
        if (
            self.override is not None
            and is_propose(msg)
            and sender == iid.broadcaster
            and self.me != iid.broadcaster
        ):
            msg = forge_rbc_propose(self.protocol, self.mode, self.params, iid, self.override, self.me)
        inst = self.host.get(iid)
        if inst is None:
            self.host.handle(sender, msg)
            step.outputs.append(Output("violation", instance_label(iid), detail=f"unknown instance from {sender}"))
            return step
        before = len(inst.violations)
        out, delivery = inst.handle(sender, msg)
        step.messages.extend((d, m, 0) for d, m in out)
        for text in inst.violations[before:]:
            step.outputs.append(Output("violation", instance_label(iid), detail=text))
        if delivery is not None:
            step.outputs.append(Output("deliver", instance_label(iid), delivery.payload, delivery.latency_class.value))
        return step

    def timer(self, tag) -> Step:
        return Step()

    def idle(self) -> Step:
        return Step()

    @property
    def terminated(self) -> bool:
        return all(i.delivered is not None for i in self.host.instances.values())

    def clone(self) -> "RbcParty":
        c = object.__new__(RbcParty)
        c.__dict__.update(self.__dict__)
        c.host = RbcHost()
        for iid, inst in self.host.instances.items():
            c.host.instances[iid] = inst.clone()
        return c

    def state_key(self) -> tuple:
        return tuple(inst.state_key() for _, inst in sorted(self.host.instances.items()))

    def instances(self):
        return self.host.instances


# dispersal

class AvidServerParty:
    def __init__(self, params: SystemParams, me: int, iid: InstanceId, mode: str):
        self.me = me
        self.server = AvidServer(params, me, iid, mode)
        self.label = instance_label(iid)

    def start(self) -> Step:
        return Step()

    def receive(self, sender: int, msg) -> Step:
        step = Step()
        before = len(self.server.violations)
        out, done = self.server.handle(sender, msg)
        step.messages.extend((d, m, 0) for d, m in out)
        for text in self.server.violations[before:]:
            step.outputs.append(Output("violation", self.label, detail=text))
        if done is not None:
            step.outputs.append(Output("dispersal", self.label, done.root, done.latency_class.value, ref=done))
        return step

    def timer(self, tag) -> Step:
        return Step()

    def idle(self) -> Step:
        return Step()


class AvidClientParty:
    def __init__(self, params: SystemParams, me: int, iid: InstanceId, mode: str, value: bytes):
        self.me = me
        self.params = params
        self.client = AvidClient(params, iid, mode, me=me)
        self.value = value
        self.label = instance_label(iid)
        self.root: bytes | None = None

    def start(self) -> Step:
        msgs = self.client.disperse(self.value)
        self.root = self.client.dispersed_root
        return Step(messages=[(d, m, 0) for d, m in msgs])

    def begin_retrieval(self, root: bytes) -> Step:
        return Step(messages=[(d, m, 0) for d, m in self.client.retrieve(root)])

    def receive(self, sender: int, msg) -> Step:
        step = Step()
        before = len(self.client.violations)
        result = self.client.handle(sender, msg)
        for text in self.client.violations[before:]:
            step.outputs.append(Output("violation", self.label, detail=text))
        if result is not None:
            step.outputs.append(Output("retrieve", self.label, result.value, "bottom" if result.value is None else "value"))
        return step

    def timer(self, tag) -> Step:
        return Step()

    def idle(self) -> Step:
        return Step()


# consensus

class SailfishParty:
    def __init__(self, params: SystemParams, me: int, transport: str, delta_bound_us: int, max_rounds: int, blocks: list[bytes]):
        self.me = me
        self.node = SailfishNode(params, me, transport, delta_bound_us, max_rounds)
        for b in blocks:
            self.node.a_bcast(b)

    @property
    def round(self) -> int:
        return self.node.round

    def _wrap(self, fx) -> Step:
        step = Step(messages=[(d, m, 0) for d, m in fx.messages], timers=list(fx.timers))
        for ev in fx.events:
            step.outputs.append(Output(ev.kind, f"r{ev.round}", ev.block, detail=ev.detail, ref=ev.ref))
        return step

    def start(self) -> Step:
        return self._wrap(self.node.start())

    def receive(self, sender: int, msg) -> Step:
        return self._wrap(self.node.handle(sender, msg))

    def timer(self, tag) -> Step:
        return self._wrap(self.node.on_timer(tag))

    def idle(self) -> Step:
        return self._wrap(self.node.on_idle())


# corrupt parties

class CorruptParty:
    """Runs honest puppets and rewrites, drops or delays what they send."""

    def __init__(self, me: int, behavior, factory, forge_tampered=None):
        self.me = me
        self.behavior = behavior
        self.forge_tampered = forge_tampered
        self.routes: list[frozenset[int] | None] = []
        self.puppets: list = []
        if isinstance(behavior, SplitBrain):
            for route in behavior.routes:
                self.puppets.append(factory(route.value))
                self.routes.append(route.recipients)
        elif not isinstance(behavior, (Silent, TamperCodeword)):
            self.puppets.append(factory(None))
            self.routes.append(None)

    @property
    def reactive(self) -> bool:
        return bool(self.puppets)

    def _filter(self, idx: int, step: Step) -> Step:
        out = Step(timers=[(delay, (idx, tag)) for delay, tag in step.timers])
        local = []
        b = self.behavior
        for dst, msg, extra in step.messages:
            route = self.routes[idx]
            if route is not None and dst not in route:
                continue
            if isinstance(b, WithholdEchoReady) and is_echo_vote_ready(msg):
                continue
            if isinstance(b, CrashAtRound) and self.puppets[idx].round >= b.round:
                continue
            if isinstance(b, SelectiveDelay) and dst in b.targets:
                extra += b.delay_us
            if dst == self.me:
                local.append(msg)
            else:
                out.messages.append((dst, msg, extra))
        for msg in local:
            out.add(self._feed(idx, self.me, msg))
        return out

    def _feed(self, idx: int, sender: int, msg) -> Step:
        return self._filter(idx, self.puppets[idx].receive(sender, msg))

    def start(self) -> Step:
        if isinstance(self.behavior, TamperCodeword):
            return Step(messages=[(d, m, 0) for d, m in self.forge_tampered(self.behavior) if d != self.me])
        step = Step()
        for idx, puppet in enumerate(self.puppets):
            step.add(self._filter(idx, puppet.start()))
        return step

    def receive(self, sender: int, msg) -> Step:
        step = Step()
        for idx in range(len(self.puppets)):
            step.add(self._feed(idx, sender, msg))
        return step

    def timer(self, tag) -> Step:
        idx, inner = tag
        return self._filter(idx, self.puppets[idx].timer(inner))

    def idle(self) -> Step:
        step = Step()
        for idx, puppet in enumerate(self.puppets):
            step.add(self._filter(idx, puppet.idle()))
        return step

    @property
    def terminated(self) -> bool:
        return not self.puppets

    def clone(self) -> "CorruptParty":
        c = object.__new__(CorruptParty)
        c.__dict__.update(self.__dict__)
        c.puppets = [p.clone() for p in self.puppets]
        return c

    def state_key(self) -> tuple:
        return tuple(p.state_key() for p in self.puppets)


def forge_tampered_rbc(params: SystemParams, iid: InstanceId, mode: str, value: bytes):
    def forge(behavior: TamperCodeword):
        k = decode_threshold(params)
        root, frags = commit_vector(tampered_vector(behavior.value or value, params.n, k, behavior.share))
        return [(j, BalancedMessage(BrbcKind.PROPOSE, iid, root, fragment=frags[j])) for j in range(params.n)]

    return forge


def forge_tampered_avid(params: SystemParams, iid: InstanceId, value: bytes):
    def forge(behavior: TamperCodeword):
        k = decode_threshold(params)
        root, frags = commit_vector(tampered_vector(behavior.value or value, params.n, k, behavior.share))
        return [(j, AvidMessage(AvidKind.DISPERSE, iid, root, frags[j])) for j in range(params.n)]

    return forge
