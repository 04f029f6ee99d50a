"""Optimistic asynchronous verifiable information dispersal.

A client (party id -1) disperses a coded message to n servers. Servers run
an echo/vote/ready exchange and store their own share on completion; any
client can later retrieve the message from the stored shares.

In ``root_only`` mode echo, vote and ready carry only the root. Servers then
skip the codeword check, so dispersal can complete on inconsistent input and
the retrieving client is responsible for detecting it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .coding import CodedFragment, commit_vector, decode, encode_fragments, verify_interpolation
from .quorum import SystemParams, avid_thresholds
from .rbc import InstanceId, LatencyClass, ProtocolError

CLIENT = -1
MAX_ROOTS = 8


class AvidKind(enum.IntEnum):
    DISPERSE = 1
    ECHO = 2
    VOTE = 3
    READY = 4
    RETRIEVE = 5
    SYMBOL = 6


class AvidMode(str, enum.Enum):
    FULL = "full"
    ROOT_ONLY = "root_only"


@dataclass(frozen=True)
class AvidMessage:
    kind: AvidKind
    instance: InstanceId
    root: bytes
    fragment: CodedFragment | None = None


@dataclass(frozen=True)
class DispersalComplete:
    root: bytes
    fragment: CodedFragment | None
    latency_class: LatencyClass


@dataclass(frozen=True)
class RetrievalResult:
    """Outcome of a retrieval; ``value`` is None when the client outputs ⊥."""

    root: bytes
    value: bytes | None


class AvidServer:
    def __init__(self, params: SystemParams, me: int, instance: InstanceId, mode: AvidMode | str = AvidMode.FULL):
        self.params = params
        self.thresholds = avid_thresholds(params)
        self.k = self.thresholds.decode_k
        self.me = me
        self.instance = instance
        self.client = instance.broadcaster
        self.mode = AvidMode(mode)
        self.own: CodedFragment | None = None
        self.echo_fragments: dict[bytes, dict[int, CodedFragment]] = {}
        self.echo_senders: dict[bytes, set[int]] = {}
        self.vote_fragments: dict[bytes, dict[int, CodedFragment]] = {}
        self.vote_senders: dict[bytes, set[int]] = {}
        self.ready_senders: dict[bytes, set[int]] = {}
        self.interpolated: dict[bytes, object] = {}
        self.echoed = False
        self.voted: bytes | None = None
        self.readied: bytes | None = None
        self.stored: DispersalComplete | None = None
        self.waiting_retrievals: list[tuple[int, bytes]] = []
        self.violations: list[str] = []

    @property
    def full(self) -> bool:
        return self.mode is AvidMode.FULL

    def _to_servers(self, msg: AvidMessage) -> list[tuple[int, AvidMessage]]:
        return [(j, msg) for j in range(self.params.n)]

    def _valid(self, frag, root: bytes, index: int, sender: int, what: str) -> bool:
        if frag is None or frag.index != index or not frag.verify(root, self.params.n):
            self.violations.append(f"invalid {what} fragment from {sender}")
            return False
        return True

    def _track(self, root: bytes, sender: int) -> bool:
        known = set(self.echo_senders) | set(self.vote_senders) | set(self.ready_senders)
        if root in known or len(known) < MAX_ROOTS:
            return True
        self.violations.append(f"root limit reached, dropped message from {sender}")
        return False

    def handle(self, sender: int, msg: AvidMessage):
        if msg.instance != self.instance:
            raise ProtocolError(f"message for {msg.instance} routed to {self.instance}")
        kind, root = msg.kind, msg.root
        if kind == AvidKind.RETRIEVE:
            return self._retrieve(sender, root), None
        if self.stored is not None:
            return [], None
        if kind == AvidKind.DISPERSE:
            if sender != self.client:
                self.violations.append(f"disperse from non-client {sender}")
                return [], None
            if self.echoed or not self._valid(msg.fragment, root, self.me, sender, "disperse"):
                return [], None
            if not self._track(root, sender):
                return [], None
            self.echoed = True
            self.own = msg.fragment
            echo = AvidMessage(AvidKind.ECHO, self.instance, root, msg.fragment if self.full else None)
            return self._to_servers(echo), None
        if not self._track(root, sender):
            return [], None
        if kind == AvidKind.ECHO:
            if self.full:
                if not self._valid(msg.fragment, root, sender, sender, "echo"):
                    return [], None
                self.echo_fragments.setdefault(root, {}).setdefault(sender, msg.fragment)
            self.echo_senders.setdefault(root, set()).add(sender)
        elif kind == AvidKind.VOTE:
            if self.full:
                if not self._valid(msg.fragment, root, self.me, sender, "vote"):
                    return [], None
                self.vote_fragments.setdefault(root, {}).setdefault(sender, msg.fragment)
            self.vote_senders.setdefault(root, set()).add(sender)
        elif kind == AvidKind.READY:
            self.ready_senders.setdefault(root, set()).add(sender)
        else:
            self.violations.append(f"unexpected {kind.name} from {sender}")
            return [], None
        out: list = []
        done = self._progress(root, out)
        return out, done

    def _fragments(self, root: bytes) -> list[CodedFragment]:
        frags = list(self.echo_fragments.get(root, {}).values())
        votes = self.vote_fragments.get(root, {})
        if votes:
            frags.append(next(iter(votes.values())))
        return frags

    def _interpolation(self, root: bytes):
        if root in self.interpolated:
            return self.interpolated[root]
        frags = self._fragments(root)
        if len({f.index for f in frags}) < self.k:
            return None
        vector = verify_interpolation(frags, root, self.params.n, self.k)
        self.interpolated[root] = vector
        return vector

    def _progress(self, root: bytes, out: list) -> DispersalComplete | None:
        t = self.thresholds
        n = self.params.n
        echoes = len(self.echo_senders.get(root, ()))
        votes = len(self.vote_senders.get(root, ()))
        readies = len(self.ready_senders.get(root, ()))
        if self.full:
            vector = self._interpolation(root) if echoes >= t.vote else None
            checked = vector is not None
        else:
            vector, checked = None, True

        if self.voted is None and echoes >= t.vote and checked:
            self.voted = root
            if self.full:
                _, frags = commit_vector(vector)
                for j in range(n):
                    out.append((j, AvidMessage(AvidKind.VOTE, self.instance, root, frags[j])))
            else:
                out.extend(self._to_servers(AvidMessage(AvidKind.VOTE, self.instance, root)))
        if self.readied is None and (
            (echoes >= t.ready_from_echo and checked) or votes >= t.ready_from_vote or readies >= t.ready_amplify
        ):
            self.readied = root
            out.extend(self._to_servers(AvidMessage(AvidKind.READY, self.instance, root)))

        if echoes >= t.opt_commit and checked:
            self._complete(root, vector, LatencyClass.OPT2, out)
        elif readies >= t.commit:
            if not self.full:
                self._complete(root, None, LatencyClass.STD, out)
            else:
                vector = self._interpolation(root)
                if vector is not None:
                    self._complete(root, vector, LatencyClass.STD, out)
        return self.stored

    def _complete(self, root: bytes, vector, cls: LatencyClass, out: list) -> None:
        if vector is not None:
            _, frags = commit_vector(vector)
            frag = frags[self.me]
        elif self.own is not None and self.own.root == root:
            frag = self.own
        else:
            frag = None
        self.stored = DispersalComplete(root, frag, cls)
        for requester, want in self.waiting_retrievals:
            out.extend(self._retrieve(requester, want))
        self.waiting_retrievals.clear()
        self.echo_fragments.clear()
        self.vote_fragments.clear()
        self.interpolated.clear()

    def _retrieve(self, requester: int, root: bytes) -> list[tuple[int, AvidMessage]]:
        if self.stored is None:
            self.waiting_retrievals.append((requester, root))
            return []
        if self.stored.root != root or self.stored.fragment is None:
            return []
        return [(requester, AvidMessage(AvidKind.SYMBOL, self.instance, root, self.stored.fragment))]


class AvidClient:
    def __init__(self, params: SystemParams, instance: InstanceId, mode: AvidMode | str = AvidMode.FULL, me: int = CLIENT):
        self.params = params
        self.thresholds = avid_thresholds(params)
        self.k = self.thresholds.decode_k
        self.instance = instance
        self.mode = AvidMode(mode)
        self.me = me
        self.phase = "idle"
        self.dispersed_root: bytes | None = None
        self.target: bytes | None = None
        self.symbols: dict[int, CodedFragment] = {}
        self.result: RetrievalResult | None = None
        self.violations: list[str] = []

    def disperse(self, m: bytes) -> list[tuple[int, AvidMessage]]:
        if self.dispersed_root is not None:
            raise ProtocolError("client already dispersed on this instance")
        self.phase = "dispersing"
        root, frags = encode_fragments(bytes(m), self.params.n, self.k)
        self.dispersed_root = root
        return [(j, AvidMessage(AvidKind.DISPERSE, self.instance, root, frags[j])) for j in range(self.params.n)]

    def retrieve(self, root: bytes) -> list[tuple[int, AvidMessage]]:
        self.phase = "retrieving"
        self.target = root
        self.symbols = {}
        self.result = None
        msg = AvidMessage(AvidKind.RETRIEVE, self.instance, root)
        return [(j, msg) for j in range(self.params.n)]

    def handle(self, sender: int, msg: AvidMessage) -> RetrievalResult | None:
        if msg.kind != AvidKind.SYMBOL or self.phase != "retrieving" or self.result is not None:
            return None
        frag = msg.fragment
        if msg.root != self.target or frag is None or frag.index != sender or not frag.verify(self.target, self.params.n):
            self.violations.append(f"invalid symbol from {sender}")
            return None
        self.symbols.setdefault(frag.index, frag)
        if len(self.symbols) < self.k:
            return None
        frags = list(self.symbols.values())
        if self.mode is AvidMode.ROOT_ONLY:
            vector = verify_interpolation(frags, self.target, self.params.n, self.k)
            value = None if vector is None else decode(
                [(i, vector.shares[i]) for i in range(self.k)], self.params.n, self.k
            )
        else:
            value = decode([(f.index, f.share) for f in frags], self.params.n, self.k)
        self.result = RetrievalResult(self.target, value)
        return self.result
