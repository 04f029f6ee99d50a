"""Balanced optimistic reliable broadcast for long messages.

The broadcaster erasure-codes the payload and commits to the shares with a
Merkle root; every protocol message then carries a single share rather than
the whole payload, so each party sends about L + κ·n·log n bits.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .coding import CodedFragment, commit_vector, decode, encode_fragments, verify_interpolation
from .quorum import SystemParams, rbc_thresholds
from .rbc import Delivery, InstanceId, LatencyClass, ProtocolError

MAX_ROOTS = 8


class BrbcKind(enum.IntEnum):
    PROPOSE = 1
    PROPOSE_FULL = 2
    ECHO = 3
    VOTE = 4
    READY = 5


class Mode(str, enum.Enum):
    BALANCED = "balanced"
    UNBALANCED = "unbalanced"


@dataclass(frozen=True)
class BalancedMessage:
    kind: BrbcKind
    instance: InstanceId
    root: bytes
    fragment: CodedFragment | None = None
    payload: bytes | None = None


def payload_of(vector) -> bytes:
    return decode([(i, vector.shares[i]) for i in range(vector.k)], vector.n, vector.k)


class BalancedRbcInstance:
    def __init__(self, params: SystemParams, me: int, instance: InstanceId, mode: Mode | str = Mode.BALANCED):
        self.params = params
        self.thresholds = rbc_thresholds(params)
        self.k = self.thresholds.decode_k
        self.me = me
        self.instance = instance
        self.broadcaster = instance.broadcaster
        self.mode = Mode(mode)
        self.echo_fragments: dict[bytes, dict[int, CodedFragment]] = {}
        self.vote_fragments: dict[bytes, dict[int, CodedFragment]] = {}
        self.ready_senders: dict[bytes, set[int]] = {}
        self.interpolated: dict[bytes, object] = {}
        self.broadcast_done = False
        self.echoed = False
        self.voted: bytes | None = None
        self.readied: bytes | None = None
        self.delivered: Delivery | None = None
        self.violations: list[str] = []

    def broadcast(self, m: bytes) -> list[tuple[int, BalancedMessage]]:
        if self.me != self.broadcaster:
            raise ProtocolError(f"party {self.me} is not the broadcaster of {self.instance}")
        if self.broadcast_done:
            raise ProtocolError(f"instance {self.instance} already broadcast")
        self.broadcast_done = True
        n = self.params.n
        root, frags = encode_fragments(bytes(m), n, self.k)
        if self.mode is Mode.UNBALANCED:
            msg = BalancedMessage(BrbcKind.PROPOSE_FULL, self.instance, root, payload=bytes(m))
            return [(j, msg) for j in range(n)]
        return [(j, BalancedMessage(BrbcKind.PROPOSE, self.instance, root, fragment=frags[j])) for j in range(n)]

    def deliveries(self) -> Delivery | None:
        return self.delivered

    def _track(self, root: bytes, sender: int) -> bool:
        known = set(self.echo_fragments) | set(self.vote_fragments) | set(self.ready_senders)
        if root in known or len(known) < MAX_ROOTS:
            return True
        self.violations.append(f"root limit reached, dropped message from {sender}")
        return False

    def _valid(self, frag: CodedFragment | None, root: bytes, index: int, sender: int, what: str) -> bool:
        if frag is None or frag.index != index or not frag.verify(root, self.params.n):
            self.violations.append(f"invalid {what} fragment from {sender}")
            return False
        return True

    def handle(self, sender: int, msg: BalancedMessage):
        if msg.instance != self.instance:
            raise ProtocolError(f"message for {msg.instance} routed to {self.instance}")
        if self.delivered is not None:
            return [], None
        n = self.params.n
        kind, root = msg.kind, msg.root
        if kind in (BrbcKind.PROPOSE, BrbcKind.PROPOSE_FULL):
            if sender != self.broadcaster:
                self.violations.append(f"propose from non-broadcaster {sender}")
                return [], None
            if self.echoed:
                return [], None
            if kind == BrbcKind.PROPOSE_FULL:
                if msg.payload is None:
                    self.violations.append("full propose without payload")
                    return [], None
                h, frags = encode_fragments(msg.payload, n, self.k)
                if h != root:
                    self.violations.append("full propose root does not match payload")
                    return [], None
                own = frags[self.me]
            else:
                if not self._valid(msg.fragment, root, self.me, sender, "propose"):
                    return [], None
                own = msg.fragment
            if not self._track(root, sender):
                return [], None
            self.echoed = True
            echo = BalancedMessage(BrbcKind.ECHO, self.instance, root, fragment=own)
            return [(j, echo) for j in range(n)], None

        if not self._track(root, sender):
            return [], None
        if kind == BrbcKind.ECHO:
            if not self._valid(msg.fragment, root, sender, sender, "echo"):
                return [], None
            self.echo_fragments.setdefault(root, {}).setdefault(sender, msg.fragment)
        elif kind == BrbcKind.VOTE:
            if not self._valid(msg.fragment, root, self.me, sender, "vote"):
                return [], None
            if sender != self.broadcaster:
                self.vote_fragments.setdefault(root, {}).setdefault(sender, msg.fragment)
        elif kind == BrbcKind.READY:
            self.ready_senders.setdefault(root, set()).add(sender)
        else:
            self.violations.append(f"unknown message kind {kind!r}")
            return [], None
        out: list = []
        delivery = self._progress(root, out)
        return out, delivery

    def _echo_count(self, root: bytes) -> int:
        return sum(1 for s in self.echo_fragments.get(root, {}) if s != self.broadcaster)

    def _interpolation(self, root: bytes):
        if root in self.interpolated:
            return self.interpolated[root]
        frags = list(self.echo_fragments.get(root, {}).values())
        if len({f.index for f in frags}) < self.k:
            return None
        vector = verify_interpolation(frags, root, self.params.n, self.k)
        self.interpolated[root] = vector
        return vector

    def _progress(self, root: bytes, out: list) -> Delivery | None:
        t = self.thresholds
        n = self.params.n
        echoes = self._echo_count(root)
        votes = len(self.vote_fragments.get(root, {}))
        readies = len(self.ready_senders.get(root, ()))
        vector = self._interpolation(root) if echoes >= t.vote else None

        if self.voted is None and echoes >= t.vote and vector is not None:
            self.voted = root
            _, frags = commit_vector(vector)
            for j in range(n):
                out.append((j, BalancedMessage(BrbcKind.VOTE, self.instance, root, fragment=frags[j])))
        if self.readied is None and (
            (echoes >= t.ready_from_echo and vector is not None)
            or votes >= t.ready_from_vote
            or readies >= t.ready_amplify
        ):
            self.readied = root
            ready = BalancedMessage(BrbcKind.READY, self.instance, root)
            out.extend((j, ready) for j in range(n))
        if echoes >= t.opt_commit and vector is not None:
            self._deliver(payload_of(vector), LatencyClass.OPT2)
        elif readies >= t.commit:
            vector = self._interpolation(root)
            if vector is not None:
                self._deliver(payload_of(vector), LatencyClass.STD)
            elif root in self.interpolated:
                self.violations.append("ready quorum for a root that is not a codeword")
        return self.delivered

    def _deliver(self, payload: bytes, cls: LatencyClass) -> None:
        self.delivered = Delivery(payload, cls)
        self.echo_fragments.clear()
        self.vote_fragments.clear()
        self.ready_senders.clear()
        self.interpolated.clear()

    def clone(self) -> "BalancedRbcInstance":
        c = object.__new__(BalancedRbcInstance)
        c.__dict__.update(self.__dict__)
        c.echo_fragments = {r: dict(m) for r, m in self.echo_fragments.items()}
        c.vote_fragments = {r: dict(m) for r, m in self.vote_fragments.items()}
        c.ready_senders = {r: set(s) for r, s in self.ready_senders.items()}
        c.interpolated = dict(self.interpolated)
        c.violations = list(self.violations)
        return c

    def state_key(self) -> tuple:
        if self.delivered is not None:
            return ("done", self.delivered.payload, self.delivered.latency_class.value, self.voted, self.readied)

        def frozen(t):
            return tuple(sorted((r, tuple(sorted(m))) for r, m in t.items()))

        return (
            self.echoed,
            self.voted,
            self.readied,
            frozen(self.echo_fragments),
            frozen(self.vote_fragments),
            frozen(self.ready_senders),
        )
