"""Command-line front end: ``optbft run | sweep | check``.

Exit codes: 0 ok, 1 usage error, 2 invalid scenario, 3 safety violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

from .quorum import avid_thresholds, max_opt_faults, rbc_thresholds
from .sim import Metrics, Scenario, ScenarioError, format_steps, from_dict, run
from .sim.scenario import FIELDS, apply_override, load_raw, parse_value

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_UNSAFE = 0, 1, 2, 3

AGGREGATE_COLUMNS = (
    "run_id", "axes", "protocol", "n", "f", "payload_size", "honest_bytes_sent", "total_bytes_sent",
    "max_party_sent", "min_party_sent", "deliveries", "mean_steps", "max_steps", "classes",
    "safety_violations", "exit_status",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def scenario_digest(sc: Scenario) -> str:
    return hashlib.sha256(sc.canonical_json()).hexdigest()


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = parse_value(value)
    if args.seed is not None:
        out["seed"] = args.seed
    return out


def _load(path: str, overrides: dict) -> Scenario:
    raw, text = load_raw(path)
    for key, value in overrides.items():
        raw = apply_override(raw, key, value)
    return from_dict(raw, text)


# reports

def _party_lines(m: Metrics) -> list[str]:
    lines = []
    by_party: dict[int, list] = {}
    for r in m.records:
        by_party.setdefault(r.party, []).append(r)
    for p in sorted(by_party):
        rows = by_party[p]
        steps = [r.steps for r in rows if r.steps is not None]
        classes = Counter(r.latency_class for r in rows)
        cls = ",".join(f"{k}={v}" for k, v in sorted(classes.items()))
        if steps:
            mean = sum(steps, Fraction(0)) / len(steps)
            lines.append(
                f"  party {p}: commit_steps = {format_steps(mean)} (max {format_steps(max(steps))}, {len(rows)} events, {cls})"
                f", bytes sent {m.bytes_sent.get(p, 0)}"
            )
        else:
            lines.append(f"  party {p}: {len(rows)} events ({cls}), bytes sent {m.bytes_sent.get(p, 0)}")
    return lines


def render_report(sc: Scenario, m: Metrics, status: int) -> str:
    unit = "-" if m.step_unit_us is None else f"{m.step_unit_us} us"
    lines = [
        f"scenario {sc.id}  sha256 {scenario_digest(sc)[:16]}",
        f"protocol {sc.protocol}  n={sc.n} f={sc.f}  step unit {unit}",
        "latency:",
    ]
    for event, entry in m.latency_summary().items():
        cls = ", ".join(f"{k}={v}" for k, v in entry["classes"].items())
        if "mean_steps" in entry:
            mean, top = Fraction(entry["mean_steps"]), Fraction(entry["max_steps"])
            lines.append(f"  {event}: {entry['count']} records, mean {format_steps(mean)}, max {format_steps(top)}  [{cls}]")
        else:
            lines.append(f"  {event}: {entry['count']} records  [{cls}]")
    if sc.is_sailfish:
        for cls in ("leader", "non-leader"):
            steps = [r.steps for r in m.events("commit") if r.latency_class == cls and r.steps is not None]
            if steps:
                lines.append(f"  {cls} vertex commit: min {format_steps(min(steps))}, max {format_steps(max(steps))}")
    lines.append("parties:")
    lines.extend(_party_lines(m))
    timeouts = m.extras.get("timeouts") or []
    if sc.is_sailfish:
        amplified = [t for t in timeouts if t[2] == "amplify"]
        lines.append(f"timeouts: {len(timeouts)} sent, {len(amplified)} by amplification")
        for p, r, why in timeouts:
            lines.append(f"  party {p} round {r} ({why})")
    if m.protocol_violations:
        lines.append(f"protocol violations observed: {len(m.protocol_violations)}")
        lines.extend(f"  {v}" for v in m.protocol_violations[:20])
    if m.safety_violations:
        lines.append("SAFETY VIOLATIONS:")
        lines.extend(f"  {v}" for v in m.safety_violations)
    else:
        lines.append("safety: ok")
    lines.append(f"exit status {status}")
    return "\n".join(lines) + "\n"


def write_outputs(sc: Scenario, m: Metrics, out: Path) -> int:
    status = EXIT_UNSAFE if m.safety_violations else EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(m.to_csv())
    summary = m.summary()
    summary["scenario_digest"] = scenario_digest(sc)
    summary["scenario"] = sc.to_dict()
    summary["exit_status"] = status
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")
    (out / "report.txt").write_text(render_report(sc, m, status))
    return status


# commands

def cmd_run(args) -> int:
    sc = _load(args.scenario, _overrides(args))
    m = run(sc)
    out = Path(args.out or Path("runs") / sc.id)
    status = write_outputs(sc, m, out)
    sys.stdout.write((out / "report.txt").read_text())
    return status


def cmd_check(args) -> int:
    try:
        sc = _load(args.scenario, _overrides(args))
    except ScenarioError as exc:
        print(f"{args.scenario}: invalid")
        for p in exc.problems:
            print(f"  {p}")
        return EXIT_INVALID
    p = sc.params
    t = avid_thresholds(p) if sc.protocol == "avid" else rbc_thresholds(p)
    print(f"{args.scenario}: ok ({sc.protocol}, n={sc.n}, f={sc.f})")
    print(
        f"  opt={t.opt_commit} vote={t.vote} ready={t.ready_from_echo} amplify={t.ready_amplify}"
        f" commit={t.commit} decode_k={t.decode_k}"
    )
    if sc.protocol != "avid":
        print(f"  max faults for the 2-step path: {max_opt_faults(p)}")
    if sc.is_sailfish:
        print(f"  leader commit: {2 * sc.f + 1} first messages or {sc.f + 1} delivered votes")
    return EXIT_OK


def _axis(spec: str) -> tuple[str, list]:
    if "=" not in spec:
        raise UsageError(f"--sweep expects axis=v1,v2,..., got {spec!r}")
    name, values = spec.split("=", 1)
    name = name.strip()
    if name.split(".")[0] not in FIELDS:
        raise ScenarioError([f"sweep axis {name!r} is not a scenario field"])
    vals = [parse_value(v) for v in values.split(",") if v.strip() != ""]
    return name, vals


def _sweep_one(job) -> dict:
    raw, run_id, axes, out = job
    try:
        sc = from_dict(raw)
    except ScenarioError as exc:
        return {"run_id": run_id, "axes": axes, "safety_violations": "; ".join(exc.problems), "exit_status": EXIT_INVALID}
    m = run(sc)
    status = write_outputs(sc, m, Path(out) / run_id)
    honest = m.extras.get("honest_bytes_sent", 0)
    sent = [b for p, b in m.bytes_sent.items() if p >= 0 and b > 0]
    steps = [r.steps for r in m.records if r.steps is not None]
    return {
        "run_id": run_id,
        "axes": axes,
        "protocol": sc.protocol,
        "n": sc.n,
        "f": sc.f,
        "payload_size": sc.payload_size,
        "honest_bytes_sent": honest,
        "total_bytes_sent": sum(m.bytes_sent.values()),
        "max_party_sent": max(sent, default=0),
        "min_party_sent": min(sent, default=0),
        "deliveries": len(m.records),
        "mean_steps": str(sum(steps, Fraction(0)) / len(steps)) if steps else "",
        "max_steps": str(max(steps)) if steps else "",
        "classes": ";".join(f"{k}={v}" for k, v in sorted(Counter(r.latency_class for r in m.records).items())),
        "safety_violations": len(m.safety_violations),
        "exit_status": status,
    }


def sweep_jobs(raw: dict, axes: list[tuple[str, list]], out: str) -> list:
    jobs = []
    names = [a for a, _ in axes]
    base_id = raw.get("id", "sweep")
    for combo in itertools.product(*[vals for _, vals in axes]):
        r = raw
        for name, value in zip(names, combo):
            r = apply_override(r, name, value)
        # sweeping n alone keeps the largest tolerated f at each size
        if "n" in names and "f" not in names and isinstance(r.get("n"), int):
            r = apply_override(r, "f", max((r["n"] - 1) // 3, 0))
        label = ",".join(f"{n}={v}" for n, v in zip(names, combo))
        run_id = base_id + ("__" + "_".join(f"{n.split('.')[-1]}{v}" for n, v in zip(names, combo)) if combo else "")
        r = apply_override(r, "id", run_id)
        jobs.append((r, run_id, label, out))
    return jobs


def cmd_sweep(args) -> int:
    raw, _ = load_raw(args.scenario)
    for key, value in _overrides(args).items():
        raw = apply_override(raw, key, value)
    # an axis with no values contributes nothing, so an empty sweep is one run
    axes = [a for a in (_axis(s) for s in args.sweep or []) if a[1]]
    out = args.out or str(Path("runs") / (raw.get("id", "sweep") + "_sweep"))
    jobs = sweep_jobs(raw, axes, out)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    Path(out).mkdir(parents=True, exist_ok=True)
    with open(Path(out) / "aggregate.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=AGGREGATE_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for row in rows:
        print(f"{row['run_id']}: {row.get('classes', '')} honest_bytes={row.get('honest_bytes_sent', '')} exit={row['exit_status']}")
    print(f"aggregate: {Path(out) / 'aggregate.csv'} ({len(rows)} rows)")
    return max((row["exit_status"] for row in rows), default=EXIT_OK)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="optbft", description="Simulate optimistic reliable broadcast, dispersal and DAG consensus.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted-path override, repeatable")

    p_run = sub.add_parser("run", help="run one scenario")
    common(p_run)
    p_run.add_argument("--out", help="output directory (default runs/<id>)")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the cross product of parameter axes")
    common(p_sweep)
    p_sweep.add_argument("--sweep", action="append", metavar="AXIS=V1,V2", help="axis values, repeatable")
    p_sweep.add_argument("--out", help="output directory")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_sweep.set_defaults(func=cmd_sweep)

    p_check = sub.add_parser("check", help="validate a scenario without running it")
    common(p_check)
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"optbft: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print("optbft: invalid scenario", file=sys.stderr)
        for p in exc.problems:
            print(f"  {p}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"optbft: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
