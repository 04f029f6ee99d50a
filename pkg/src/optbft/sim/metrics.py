"""Per-run measurements and their CSV/JSON exports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import statistics
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction

CSV_COLUMNS = ("scenario_id", "party", "instance", "event", "virtual_time_us", "steps", "class", "bytes_sent")


@dataclass(frozen=True)
class Record:
    party: int
    instance: str
    event: str
    time_us: int
    latency_us: int | None
    latency_class: str = ""
    steps: Fraction | None = None


def format_steps(steps: Fraction | None) -> str:
    if steps is None:
        return "-"
    return f"{float(steps):.1f} δ" if steps.denominator == 1 else f"{steps} δ ({float(steps):.3f})"


@dataclass
class Metrics:
    scenario_id: str
    step_unit_us: Fraction | None = None
    records: list[Record] = field(default_factory=list)
    bytes_sent: Counter = field(default_factory=Counter)
    bytes_received: Counter = field(default_factory=Counter)
    kind_counts: Counter = field(default_factory=Counter)
    protocol_violations: list[str] = field(default_factory=list)
    safety_violations: list[str] = field(default_factory=list)
    transcripts: dict[int, list[tuple[int, int, bytes]]] = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def add(self, party: int, instance: str, event: str, time_us: int, latency_us: int | None, cls: str = "") -> None:
        self.records.append(Record(party, instance, event, time_us, latency_us, cls))

    def finalize(self, step_unit_us: Fraction | None) -> None:
        """Fix the step unit and derive every record's step latency from it."""
        self.step_unit_us = step_unit_us
        self.records = [
            replace(r, steps=None if not step_unit_us or r.latency_us is None else Fraction(r.latency_us) / step_unit_us)
            for r in self.records
        ]

    def events(self, event: str) -> list[Record]:
        return [r for r in self.records if r.event == event]

    @property
    def safe(self) -> bool:
        return not self.safety_violations

    def csv_rows(self) -> list[dict]:
        return [
            {
                "scenario_id": self.scenario_id,
                "party": r.party,
                "instance": r.instance,
                "event": r.event,
                "virtual_time_us": r.time_us,
                "steps": "" if r.steps is None else str(r.steps),
                "class": r.latency_class,
                "bytes_sent": self.bytes_sent.get(r.party, 0),
            }
            for r in self.records
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(self.csv_rows())
        return buf.getvalue()

    def latency_summary(self) -> dict:
        out = {}
        for event in sorted({r.event for r in self.records}):
            rows = [r for r in self.records if r.event == event]
            steps = [r.steps for r in rows if r.steps is not None]
            entry = {
                "count": len(rows),
                "classes": dict(sorted(Counter(r.latency_class for r in rows).items())),
            }
            if steps:
                entry["mean_steps"] = str(sum(steps, Fraction(0)) / len(steps))
                entry["max_steps"] = str(max(steps))
                entry["min_steps"] = str(min(steps))
                entry["median_steps"] = str(Fraction(statistics.median_low(steps)))
            out[event] = entry
        return out

    def summary(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "step_unit_us": None if self.step_unit_us is None else str(self.step_unit_us),
            "latency": self.latency_summary(),
            "bytes_sent": {str(p): b for p, b in sorted(self.bytes_sent.items())},
            "bytes_received": {str(p): b for p, b in sorted(self.bytes_received.items())},
            "message_counts": dict(sorted(self.kind_counts.items())),
            "protocol_violations": list(self.protocol_violations),
            "safety_violations": list(self.safety_violations),
            "extras": self.extras,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True, default=str)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.to_csv().encode())
        h.update(self.to_json().encode())
        for party in sorted(self.transcripts):
            for t, src, wire in self.transcripts[party]:
                h.update(f"{party}:{t}:{src}:".encode() + wire)
        return h.hexdigest()
