"""Scenario files: parsing, validation, overrides and adversary compilation."""

from __future__ import annotations

import copy
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from ..quorum import SystemParams
from .adversary import (
    WORLDS,
    CrashAtRound,
    Route,
    SelectiveDelay,
    Silent,
    SplitBrain,
    TamperCodeword,
    WithholdEchoReady,
    compile_world,
    pretend_input,
    world_sets,
)

PROTOCOLS = ("opt_rbc", "bracha_rbc", "balanced_rbc", "avid", "sailfish_opt", "sailfish_bracha")
RBC_PROTOCOLS = ("opt_rbc", "bracha_rbc", "balanced_rbc")
SAILFISH_PROTOCOLS = ("sailfish_opt", "sailfish_bracha")
DELAY_MODELS = ("uniform", "matrix", "jitter")

FIELDS = {
    "id", "n", "f", "protocol", "mode", "delay", "gst_us", "pre_gst_extra_us", "delta_bound_us",
    "adversary", "payload", "payload_size", "rounds_or_instances", "seed", "broadcaster",
    "record_transcripts", "retrieve", "max_time_us", "description",
}
ADVERSARY_FIELDS = {"silent_count", "behaviors", "world", "client"}
BEHAVIOR_KINDS = (
    "silent", "withhold_echo_ready", "equivocate", "pretend_input",
    "selective_delay", "tamper_codeword", "crash_at_round",
)


class ScenarioError(ValueError):
    """Validation failure; ``problems`` lists every issue found."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class Scenario:
    id: str
    n: int
    f: int
    protocol: str
    mode: str = ""
    delay: dict = field(default_factory=lambda: {"model": "uniform", "delta_us": 10})
    gst_us: int = 0
    pre_gst_extra_us: int = 0
    delta_bound_us: int | None = None
    adversary: dict = field(default_factory=dict)
    payload: str | dict | None = None
    payload_size: int = 32
    rounds_or_instances: int = 1
    seed: int = 0
    broadcaster: int = 0
    record_transcripts: bool = False
    retrieve: bool = True
    max_time_us: int | None = None
    description: str = ""

    @property
    def params(self) -> SystemParams:
        return SystemParams(self.n, self.f)

    @property
    def is_rbc(self) -> bool:
        return self.protocol in RBC_PROTOCOLS

    @property
    def is_sailfish(self) -> bool:
        return self.protocol in SAILFISH_PROTOCOLS

    def effective_mode(self) -> str:
        if self.mode:
            return self.mode
        return {"balanced_rbc": "balanced", "avid": "full"}.get(self.protocol, "")

    def bound_us(self) -> int:
        if self.delta_bound_us is not None:
            return self.delta_bound_us
        d = self.delay
        if d.get("model") == "jitter":
            return int(d.get("high_us", 10))
        if d.get("model") == "matrix":
            return 200_000
        return int(d.get("delta_us", 10))

    def to_dict(self) -> dict:
        out = {k: copy.deepcopy(getattr(self, k)) for k in sorted(FIELDS)}
        return {k: v for k, v in out.items() if v is not None and v != ""}

    def canonical_json(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()

    def input_for(self, seq: int) -> bytes:
        p = self.payload
        if isinstance(p, str):
            return p.encode()
        if isinstance(p, dict) and "hex" in p:
            return bytes.fromhex(p["hex"])
        rng = random.Random(f"{self.seed}:{seq}")
        return rng.randbytes(self.payload_size)


def _key_line(text: str | None, key: str) -> str:
    if not text:
        return ""
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return f"line {lineno}: "
    return ""


def from_dict(raw: dict, text: str | None = None) -> Scenario:
    """Build and validate a scenario; raises ScenarioError listing every problem."""
    problems: list[str] = []

    def bad(key: str, msg: str) -> None:
        problems.append(f"{_key_line(text, key)}{key}: {msg}")

    if not isinstance(raw, dict):
        raise ScenarioError(["scenario must be a JSON object"])
    for key in sorted(set(raw) - FIELDS):
        bad(key, "unknown field")
    for key in ("n", "f", "protocol"):
        if key not in raw:
            problems.append(f"{key}: required field missing")
    if problems:
        raise ScenarioError(problems)

    kw = {k: raw[k] for k in FIELDS & set(raw)}
    kw.setdefault("id", f"{raw['protocol']}_n{raw['n']}")
    for key in ("n", "f", "gst_us", "pre_gst_extra_us", "payload_size", "rounds_or_instances", "seed", "broadcaster"):
        if key in kw and (not isinstance(kw[key], int) or isinstance(kw[key], bool)):
            bad(key, f"expected an integer, got {kw[key]!r}")
    if problems:
        raise ScenarioError(problems)
    sc = Scenario(**kw)
    validate(sc, text, problems)
    if problems:
        raise ScenarioError(problems)
    return sc


def validate(sc: Scenario, text: str | None = None, problems: list[str] | None = None) -> list[str]:
    problems = [] if problems is None else problems

    def bad(key: str, msg: str) -> None:
        problems.append(f"{_key_line(text, key)}{key}: {msg}")

    try:
        SystemParams(sc.n, sc.f)
    except (ValueError, TypeError) as exc:
        bad("n", str(exc))
        return problems
    if sc.protocol not in PROTOCOLS:
        bad("protocol", f"unknown protocol {sc.protocol!r}; expected one of {', '.join(PROTOCOLS)}")
        return problems
    mode = sc.effective_mode()
    if sc.protocol == "balanced_rbc" and mode not in ("balanced", "unbalanced"):
        bad("mode", f"balanced_rbc mode must be balanced or unbalanced, got {mode!r}")
    if sc.protocol == "avid" and mode not in ("full", "root_only"):
        bad("mode", f"avid mode must be full or root_only, got {mode!r}")
    if not 0 <= sc.broadcaster < sc.n:
        bad("broadcaster", f"must be a party id in [0, {sc.n})")
    if sc.rounds_or_instances < 1:
        bad("rounds_or_instances", "must be at least 1")
    if sc.payload_size < 0:
        bad("payload_size", "must be non-negative")
    if isinstance(sc.payload, dict):
        try:
            bytes.fromhex(sc.payload.get("hex", ""))
        except ValueError:
            bad("payload", "hex payload is not valid hex")
    elif sc.payload is not None and not isinstance(sc.payload, str):
        bad("payload", "must be a string or {\"hex\": ...}")
    _validate_delay(sc, bad)
    if sc.gst_us < 0 or sc.pre_gst_extra_us < 0:
        bad("gst_us", "GST parameters must be non-negative")
    try:
        compile_adversary(sc)
    except ScenarioError as exc:
        problems.extend(f"{_key_line(text, 'adversary')}{p}" for p in exc.problems)
    return problems


def _validate_delay(sc: Scenario, bad) -> None:
    d = sc.delay
    if not isinstance(d, dict) or d.get("model") not in DELAY_MODELS:
        bad("delay", f"delay.model must be one of {', '.join(DELAY_MODELS)}")
        return
    if d["model"] == "uniform" and not (isinstance(d.get("delta_us"), int) and d["delta_us"] > 0):
        bad("delay", "uniform delay needs a positive integer delta_us")
    if d["model"] == "jitter":
        lo, hi = d.get("low_us"), d.get("high_us")
        if not (isinstance(lo, int) and isinstance(hi, int) and 0 < lo <= hi):
            bad("delay", "jitter delay needs integers 0 < low_us <= high_us")
    if d["model"] == "matrix" and "matrix_us" in d:
        m = d["matrix_us"]
        if len(m) != sc.n or any(len(row) != sc.n for row in m):
            bad("delay", f"matrix_us must be {sc.n}x{sc.n}")


@dataclass
class CompiledAdversary:
    behaviors: dict = field(default_factory=dict)
    client: object = None
    broadcaster_input: bytes | None = None

    @property
    def corrupt(self) -> frozenset[int]:
        return frozenset(self.behaviors)


def _behavior(spec: dict, sc: Scenario):
    kind = spec.get("kind")
    if kind == "silent":
        return Silent()
    if kind == "withhold_echo_ready":
        return WithholdEchoReady()
    if kind == "pretend_input":
        return pretend_input(str(spec["value"]).encode())
    if kind == "equivocate":
        routes = []
        for r in spec["routes"]:
            to = r.get("to")
            routes.append(Route(None if to is None else frozenset(int(x) for x in to), str(r["value"]).encode()))
        return SplitBrain(tuple(routes))
    if kind == "selective_delay":
        return SelectiveDelay(frozenset(int(x) for x in spec["targets"]), int(spec["delay_us"]))
    if kind == "tamper_codeword":
        value = spec.get("value")
        return TamperCodeword(int(spec.get("share", 0)), None if value is None else str(value).encode())
    if kind == "crash_at_round":
        return CrashAtRound(int(spec["round"]))
    raise ScenarioError([f"adversary: unknown behaviour kind {kind!r}; expected one of {', '.join(BEHAVIOR_KINDS)}"])


def compile_adversary(sc: Scenario) -> CompiledAdversary:
    adv = sc.adversary or {}
    problems = []
    if not isinstance(adv, dict):
        raise ScenarioError(["adversary: must be an object"])
    unknown = set(adv) - ADVERSARY_FIELDS
    if unknown:
        raise ScenarioError([f"adversary: unknown field(s) {', '.join(sorted(unknown))}"])
    out = CompiledAdversary()
    if adv.get("world"):
        world = adv["world"]
        if world not in WORLDS:
            raise ScenarioError([f"adversary.world: expected one of {', '.join(WORLDS)}, got {world!r}"])
        try:
            compiled = compile_world(world, world_sets(sc.n, sc.f, sc.broadcaster))
        except ValueError as exc:
            raise ScenarioError([f"adversary.world: {exc}"]) from None
        out.behaviors.update(compiled.behaviors)
        out.broadcaster_input = compiled.broadcaster_input
    for spec in adv.get("behaviors", []):
        try:
            party = int(spec["party"])
            b = _behavior(spec, sc)
        except ScenarioError as exc:
            problems.extend(exc.problems)
            continue
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"adversary: malformed behaviour {spec!r} ({exc})")
            continue
        if not 0 <= party < sc.n:
            problems.append(f"adversary: party {party} out of range")
            continue
        if party in out.behaviors:
            problems.append(f"adversary: party {party} has two behaviours")
            continue
        out.behaviors[party] = b
    silent = adv.get("silent_count", 0)
    if not isinstance(silent, int) or silent < 0:
        problems.append("adversary.silent_count: must be a non-negative integer")
        silent = 0
    candidates = [p for p in reversed(range(sc.n)) if p != sc.broadcaster and p not in out.behaviors]
    if silent > len(candidates):
        problems.append("adversary.silent_count: more silent parties than available")
    for p in candidates[:silent]:
        out.behaviors[p] = Silent()
    if adv.get("client"):
        if sc.protocol != "avid":
            problems.append("adversary.client: only meaningful for avid")
        else:
            try:
                out.client = _behavior(adv["client"], sc)
            except (ScenarioError, KeyError, TypeError, ValueError) as exc:
                problems.append(f"adversary.client: {exc}")
    if len(out.behaviors) > sc.f:
        problems.append(f"adversary: {len(out.behaviors)} corrupt parties exceeds f={sc.f}")
    if problems:
        raise ScenarioError(problems)
    return out


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(raw: dict, path: str, value) -> dict:
    """Set a dotted path (``adversary.silent_count``) on a copy of ``raw``."""
    out = copy.deepcopy(raw)
    keys = path.split(".")
    node = out
    for k in keys[:-1]:
        nxt = node.get(k)
        if not isinstance(nxt, dict):
            nxt = {}
            node[k] = nxt
        node = nxt
    node[keys[-1]] = value
    return out


def load_raw(path: str | Path) -> tuple[dict, str]:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    return raw, text


def load(path: str | Path, overrides: dict | None = None) -> Scenario:
    raw, text = load_raw(path)
    for key, value in (overrides or {}).items():
        raw = apply_override(raw, key, value)
    return from_dict(raw, text)
