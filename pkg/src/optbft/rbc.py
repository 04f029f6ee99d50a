"""Optimistic reliable broadcast as an I/O-free state machine.

An instance commits after two message steps (propose, echo) when enough
non-broadcasters echo, and otherwise falls back to the echo/ready path in
three or four steps. With ``optimistic=False`` the vote messages and the
2-step commit are disabled, which leaves the classic 3-step echo/ready
broadcast.
"""

from __future__ import annotations

import enum
import hashlib
from collections import deque
from dataclasses import dataclass
from typing import Callable, NamedTuple

from .quorum import SystemParams, rbc_thresholds

MAX_CANDIDATES = 8
BUFFER_CAP = 1024


class InstanceId(NamedTuple):
    broadcaster: int
    seq: int


class RbcKind(enum.IntEnum):
    PROPOSE = 1
    ECHO = 2
    VOTE = 3
    READY = 4


class LatencyClass(str, enum.Enum):
    OPT2 = "Opt2"
    STD = "Std3or4"


@dataclass(frozen=True)
class RbcMessage:
    kind: RbcKind
    instance: InstanceId
    payload: bytes


@dataclass(frozen=True)
class Delivery:
    payload: bytes
    latency_class: LatencyClass


class ProtocolError(RuntimeError):
    pass


def digest(payload: bytes) -> bytes:
    return hashlib.sha256(payload).digest()


class RbcInstance:
    def __init__(self, params: SystemParams, me: int, instance: InstanceId, optimistic: bool = True):
        self.params = params
        self.thresholds = rbc_thresholds(params)
        self.me = me
        self.instance = instance
        self.broadcaster = instance.broadcaster
        self.optimistic = optimistic
        self.echo_senders: dict[bytes, set[int]] = {}
        self.vote_senders: dict[bytes, set[int]] = {}
        self.ready_senders: dict[bytes, set[int]] = {}
        self.payloads: dict[bytes, bytes] = {}
        self.broadcast_done = False
        self.echoed = False
        self.voted: bytes | None = None
        self.readied: bytes | None = None
        self.delivered: Delivery | None = None
        self.violations: list[str] = []

    def _to_all(self, kind: RbcKind, payload: bytes) -> list[tuple[int, RbcMessage]]:
        msg = RbcMessage(kind, self.instance, payload)
        return [(j, msg) for j in range(self.params.n)]

    def broadcast(self, m: bytes) -> list[tuple[int, RbcMessage]]:
        if self.me != self.broadcaster:
            raise ProtocolError(f"party {self.me} is not the broadcaster of {self.instance}")
        if self.broadcast_done:
            raise ProtocolError(f"instance {self.instance} already broadcast")
        self.broadcast_done = True
        return self._to_all(RbcKind.PROPOSE, bytes(m))

    def deliveries(self) -> Delivery | None:
        return self.delivered

    def _remember(self, sender: int, payload: bytes) -> bytes | None:
        d = digest(payload)
        if d not in self.payloads:
            if len(self.payloads) >= MAX_CANDIDATES:
                self.violations.append(f"candidate limit reached, dropped payload from {sender}")
                return None
            self.payloads[d] = payload
        return d

    def handle(self, sender: int, msg: RbcMessage) -> tuple[list[tuple[int, RbcMessage]], Delivery | None]:
        if msg.instance != self.instance:
            raise ProtocolError(f"message for {msg.instance} routed to {self.instance}")
        if self.delivered is not None:
            return [], None
        out: list[tuple[int, RbcMessage]] = []
        kind = msg.kind
        if kind == RbcKind.PROPOSE:
            if sender != self.broadcaster:
                self.violations.append(f"propose from non-broadcaster {sender}")
                return [], None
            if self.echoed:
                return [], None
            if self._remember(sender, msg.payload) is None:
                return [], None
            self.echoed = True
            return self._to_all(RbcKind.ECHO, msg.payload), None
        if kind == RbcKind.VOTE and not self.optimistic:
            return [], None
        d = self._remember(sender, msg.payload)
        if d is None:
            return [], None
        if kind == RbcKind.ECHO:
            if sender != self.broadcaster:
                self.echo_senders.setdefault(d, set()).add(sender)
        elif kind == RbcKind.VOTE:
            if sender != self.broadcaster:
                self.vote_senders.setdefault(d, set()).add(sender)
        elif kind == RbcKind.READY:
            self.ready_senders.setdefault(d, set()).add(sender)
        delivery = self._progress(d, out)
        return out, delivery

    def _progress(self, d: bytes, out: list) -> Delivery | None:
        t = self.thresholds
        echoes = len(self.echo_senders.get(d, ()))
        votes = len(self.vote_senders.get(d, ()))
        readies = len(self.ready_senders.get(d, ()))
        m = self.payloads[d]
        if self.optimistic and self.voted is None and echoes >= t.vote:
            self.voted = d
            out.extend(self._to_all(RbcKind.VOTE, m))
        if self.readied is None and (
            echoes >= t.ready_from_echo
            or (self.optimistic and votes >= t.ready_from_vote)
            or readies >= t.ready_amplify
        ):
            self.readied = d
            out.extend(self._to_all(RbcKind.READY, m))
        if self.optimistic and echoes >= t.opt_commit:
            self.delivered = Delivery(m, LatencyClass.OPT2)
        elif readies >= t.commit:
            self.delivered = Delivery(m, LatencyClass.STD)
        return self.delivered

    def clone(self) -> "RbcInstance":
        c = object.__new__(RbcInstance)
        c.__dict__.update(self.__dict__)
        c.echo_senders = {d: set(s) for d, s in self.echo_senders.items()}
        c.vote_senders = {d: set(s) for d, s in self.vote_senders.items()}
        c.ready_senders = {d: set(s) for d, s in self.ready_senders.items()}
        c.payloads = dict(self.payloads)
        c.violations = list(self.violations)
        return c

    def state_key(self) -> tuple:
        if self.delivered is not None:
            return ("done", self.delivered.payload, self.delivered.latency_class.value, self.voted, self.readied)

        def frozen(t):
            return tuple(sorted((d, tuple(sorted(s))) for d, s in t.items()))

        return (
            self.echoed,
            tuple(sorted(self.payloads)),
            self.voted,
            self.readied,
            frozen(self.echo_senders),
            frozen(self.vote_senders),
            frozen(self.ready_senders),
        )


class RbcHost:
    """Routes messages to per-instance state machines.

    Messages for instances that are not yet known are held per sender, at
    most ``cap`` of them, dropping the oldest first. ``factory`` may create
    instances on demand; returning None leaves the message buffered.
    """

    def __init__(self, factory: Callable[[InstanceId], object | None] | None = None, cap: int = BUFFER_CAP):
        self.instances: dict[InstanceId, object] = {}
        self.factory = factory
        self.cap = cap
        self.pending: dict[int, deque] = {}

    def register(self, instance_id: InstanceId, inst) -> list[tuple[int, object, tuple]]:
        """Add an instance; returns (sender, msg, result) for replayed messages."""
        self.instances[instance_id] = inst
        replayed = []
        for sender, queue in sorted(self.pending.items()):
            keep = deque(maxlen=self.cap)
            for msg in queue:
                if msg.instance == instance_id:
                    replayed.append((sender, msg, inst.handle(sender, msg)))
                else:
                    keep.append(msg)
            self.pending[sender] = keep
        return replayed

    def flush(self) -> list[tuple[int, object, tuple]]:
        """Retry buffered messages against the factory."""
        replayed = []
        for sender, queue in sorted(self.pending.items()):
            keep = deque(maxlen=self.cap)
            for msg in queue:
                inst = self.get(msg.instance)
                if inst is None:
                    keep.append(msg)
                else:
                    replayed.append((sender, msg, inst.handle(sender, msg)))
            self.pending[sender] = keep
        return replayed

    def get(self, instance_id: InstanceId):
        inst = self.instances.get(instance_id)
        if inst is None and self.factory is not None:
            inst = self.factory(instance_id)
            if inst is not None:
                self.instances[instance_id] = inst
        return inst

    def handle(self, sender: int, msg):
        inst = self.get(msg.instance)
        if inst is None:
            self.pending.setdefault(sender, deque(maxlen=self.cap)).append(msg)
            return None
        return inst.handle(sender, msg)

    def buffered(self, sender: int) -> int:
        return len(self.pending.get(sender, ()))
