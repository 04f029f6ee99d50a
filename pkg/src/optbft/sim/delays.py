"""Network delay models. All times are integer microseconds."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from importlib import resources


class DelayModel:
    def delay(self, src: int, dst: int, send_time: int) -> int:
        raise NotImplementedError

    def max_delay(self, parties) -> int:
        """Largest delay between any two distinct parties (an upper bound for random models)."""
        raise NotImplementedError


@dataclass
class Uniform(DelayModel):
    delta_us: int
    self_us: int = 0

    def delay(self, src: int, dst: int, send_time: int) -> int:
        return self.self_us if src == dst else self.delta_us

    def max_delay(self, parties) -> int:
        return self.delta_us


def load_gcp_ping() -> dict:
    data = resources.files("optbft.sim").joinpath("data/gcp_ping_ms.json").read_text()
    return json.loads(data)


class PerLinkMatrix(DelayModel):
    """One-way delay per ordered pair of parties.

    ``from_regions`` maps parties round-robin onto regions and halves the
    round-trip ping between them.
    """

    def __init__(self, matrix: list[list[int]], self_us: int = 0):
        self.matrix = matrix
        self.self_us = self_us

    @classmethod
    def from_regions(cls, n: int, ping_ms: list[list[float]] | None = None, self_us: int = 0) -> "PerLinkMatrix":
        if ping_ms is None:
            ping_ms = load_gcp_ping()["ping_ms"]
        regions = len(ping_ms)
        matrix = [
            [round(ping_ms[i % regions][j % regions] * 1000 / 2) for j in range(n)]
            for i in range(n)
        ]
        return cls(matrix, self_us)

    def delay(self, src: int, dst: int, send_time: int) -> int:
        if src == dst:
            return self.self_us
        return self.matrix[src][dst]

    def max_delay(self, parties) -> int:
        ps = list(parties)
        return max((self.matrix[a][b] for a in ps for b in ps if a != b), default=0)


class JitterRange(DelayModel):
    """Uniformly random delay in ``[low_us, high_us]`` from a seeded generator."""

    def __init__(self, low_us: int, high_us: int, seed: int = 0, self_us: int = 0):
        if not 0 <= low_us <= high_us:
            raise ValueError("jitter range must satisfy 0 <= low <= high")
        self.low_us, self.high_us = low_us, high_us
        self.self_us = self_us
        self.rng = random.Random(seed)

    def delay(self, src: int, dst: int, send_time: int) -> int:
        if src == dst:
            return self.self_us
        return self.rng.randint(self.low_us, self.high_us)

    def max_delay(self, parties) -> int:
        return self.high_us


class GstWrapper(DelayModel):
    """Before ``gst_us`` messages may be held up to ``extra_us`` longer, but
    never past ``gst_us + bound_us``; afterwards the inner model applies."""

    def __init__(self, inner: DelayModel, gst_us: int, extra_us: int, bound_us: int, seed: int = 0):
        self.inner = inner
        self.gst_us = gst_us
        self.extra_us = extra_us
        self.bound_us = bound_us
        self.rng = random.Random(seed ^ 0x6A5)

    def delay(self, src: int, dst: int, send_time: int) -> int:
        base = self.inner.delay(src, dst, send_time)
        if send_time >= self.gst_us or src == dst or self.extra_us <= 0:
            return base
        extra = self.rng.randint(0, self.extra_us)
        latest = max(self.gst_us + self.bound_us - send_time, base)
        return min(base + extra, latest)

    def max_delay(self, parties) -> int:
        return self.inner.max_delay(parties)
