"""Command-line front end.

Three subcommands: ``run`` executes scenarios and writes trace plus report
files, ``verify`` replays the checkers over a stored trace and compares the
verdicts, and ``vectors`` regenerates the golden crypto and encoding vectors
against the committed copies.

Exit codes are a machine contract: 0 pass, 1 check failure, 2 configuration
error, 3 I/O error.
"""

import argparse
import concurrent.futures
import dataclasses
import json
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import vectors as vectors_mod
from .scenarios import SCENARIOS, randomized_scenario
from .sim import (
    Scenario,
    check_economic_safety,
    check_liveness,
    read_trace,
    reports_to_dict,
    run,
    write_trace,
)
from .timestamping import Mode

EXIT_PASS = 0
EXIT_CHECK_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3

ENV_OUT = "REMOTESTAKE_OUT"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# scenario construction from names, config files, and overrides
# ---------------------------------------------------------------------------

_FACTORY_KWARGS = ("n", "seed", "mode", "gst")


def _parse_mode(value: str) -> Mode:
    try:
        return Mode(value)
    except ValueError:
        choices = ", ".join(m.value for m in Mode)
        raise ConfigError(f"unknown mode {value!r} (choose from {choices})")


def _coerce(field: dataclasses.Field, raw: object):
    """Parse a config or --set value into the scenario field's type."""
    if isinstance(raw, str):
        text = raw
    else:
        return raw
    name = field.name
    if name == "mode":
        return _parse_mode(text)
    typ = field.type
    if typ.startswith("Tuple[int"):
        if not text:
            return ()
        return tuple(int(part) for part in text.split(","))
    if typ == "bool":
        if text.lower() in ("1", "true", "yes"):
            return True
        if text.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{name} expects a boolean, got {text!r}")
    if typ in ("int", "Optional[int]"):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{name} expects an integer, got {text!r}")
    if typ == "str":
        return text
    raise ConfigError(f"field {name} cannot be set from the command line")


_SETTABLE = {f.name: f for f in dataclasses.fields(Scenario)
             if f.name not in ("name", "script", "notes")}


def build_scenario(name: str, overrides: Dict[str, object]) -> Scenario:
    """Instantiate a named scenario, then apply overrides with the protocol
    preconditions re-checked."""
    parsed: Dict[str, object] = {}
    for key, raw in overrides.items():
        field = _SETTABLE.get(key)
        if field is None:
            raise ConfigError(f"unknown scenario field {key!r}")
        parsed[key] = _coerce(field, raw)

    if name.startswith("random:"):
        try:
            index = int(name.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad corpus index in {name!r}")
        sc = randomized_scenario(index)
    else:
        factory = SCENARIOS.get(name)
        if factory is None:
            known = ", ".join(sorted(SCENARIOS))
            raise ConfigError(f"unknown scenario {name!r} (choose from {known}, "
                              f"or random:<index>)")
        import inspect

        accepted = inspect.signature(factory).parameters
        fkw = {k: parsed.pop(k) for k in _FACTORY_KWARGS
               if k in parsed and k in accepted}
        sc = factory(**fkw)

    if parsed:
        sc = dataclasses.replace(sc, **parsed)
    try:
        sc.params()  # n >= 3f+1 and the inclusion-bound floor
    except ValueError as exc:
        raise ConfigError(str(exc))
    if not sc.params().k_d < sc.params().k_u:
        raise ConfigError("timestamp delay must stay below the unbonding delay")
    return sc


def load_config(path: str) -> Dict[str, object]:
    """Config files are JSON objects: {"scenario": name-or-list, "seed": int,
    "mode": str, "out": path, "jobs": int, "overrides": {field: value}}."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    unknown = set(data) - {"scenario", "seed", "mode", "out", "jobs", "overrides"}
    if unknown:
        raise ConfigError(f"config {path} has unknown keys: {sorted(unknown)}")
    overrides = data.get("overrides", {})
    if not isinstance(overrides, dict):
        raise ConfigError("config overrides must be an object")
    return data


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _passed(sc: Scenario, safety, liveness) -> bool:
    if not safety.ok:
        return False
    if sc.expect_liveness and not liveness.ok:
        return False
    return True


def _run_one(sc: Scenario, out_dir: Path) -> Tuple[str, bool, str]:
    trace, safety, liveness = run(sc)
    tag = f"{sc.name}-s{sc.seed}-{sc.mode.value}"
    run_dir = out_dir / tag
    run_dir.mkdir(parents=True, exist_ok=True)
    write_trace(run_dir / "trace.jsonl", trace)
    with open(run_dir / "report.json", "w") as fh:
        json.dump(reports_to_dict(safety, liveness), fh, indent=2, sort_keys=True)
    ok = _passed(sc, safety, liveness)
    bits = [f"safety={'ok' if safety.ok else 'FAIL'}"]
    if sc.expect_liveness:
        bits.append(f"liveness={'ok' if liveness.ok else 'FAIL'}")
    else:
        bits.append("liveness=waived")
    if safety.slashed:
        bits.append(f"burned={sorted(s['validator'] for s in safety.slashed)}")
    return tag, ok, " ".join(bits)


def cmd_run(args) -> int:
    cfg: Dict[str, object] = {}
    if args.config:
        cfg = load_config(args.config)

    names: List[str] = []
    if args.scenario:
        names = list(args.scenario)
    else:
        raw = cfg.get("scenario")
        if isinstance(raw, str):
            names = [raw]
        elif isinstance(raw, list):
            names = [str(x) for x in raw]
    if not names:
        raise ConfigError("no scenario given (use --scenario or a config file)")

    overrides = dict(cfg.get("overrides", {}))
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = args.seed
    elif "seed" in cfg:
        overrides["seed"] = cfg["seed"]
    if args.mode is not None:
        overrides["mode"] = args.mode
    elif "mode" in cfg:
        overrides["mode"] = cfg["mode"]

    out_dir = Path(args.out or cfg.get("out")
                   or os.environ.get(ENV_OUT) or "out")
    jobs = args.jobs or int(cfg.get("jobs", 1) or 1)

    scenarios = [build_scenario(name, overrides) for name in names]
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output dir: {exc}", file=sys.stderr)
        return EXIT_IO_ERROR

    results: List[Tuple[str, bool, str]] = []
    if jobs > 1 and len(scenarios) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one, sc, out_dir) for sc in scenarios]
            results = [f.result() for f in futures]
    else:
        results = [_run_one(sc, out_dir) for sc in scenarios]

    failed = 0
    for tag, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {tag}: {detail}")
        if not ok:
            failed += 1
    if failed:
        print(f"{failed}/{len(results)} runs failed", file=sys.stderr)
        return EXIT_CHECK_FAILURE
    return EXIT_PASS


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    path = Path(args.path)
    trace_path = path / "trace.jsonl" if path.is_dir() else path
    report_path = trace_path.parent / "report.json"
    try:
        trace = read_trace(trace_path)
        with open(report_path) as fh:
            stored = json.load(fh)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO_ERROR
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"error: stored run is unreadable: {exc}", file=sys.stderr)
        return EXIT_IO_ERROR

    try:
        safety = check_economic_safety(trace)
        liveness = check_liveness(trace)
        fresh = reports_to_dict(safety, liveness)
    except (KeyError, ValueError, TypeError) as exc:
        print(f"verify: trace does not replay cleanly: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILURE

    if fresh != stored:
        diffs = [k for k in ("v", "safety", "liveness") if fresh.get(k) != stored.get(k)]
        print(f"verify: recomputed reports differ in {diffs}", file=sys.stderr)
        return EXIT_CHECK_FAILURE
    print(f"verify: {trace_path} matches its stored reports")
    return EXIT_PASS


# ---------------------------------------------------------------------------
# vectors
# ---------------------------------------------------------------------------


def cmd_vectors(args) -> int:
    directory = Path(args.dir) if args.dir else vectors_mod.default_dir()
    try:
        problems = vectors_mod.refresh(directory)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO_ERROR
    if problems:
        for p in problems:
            print(f"vectors: {p}", file=sys.stderr)
        return EXIT_CHECK_FAILURE
    print(f"vectors: {len(vectors_mod.FILES)} files match in {directory}")
    return EXIT_PASS


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="remotestake",
        description="Remote-staking protocol simulator: run scenarios, "
                    "verify stored traces, and maintain golden vectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one or more scenarios")
    p_run.add_argument("--scenario", action="append",
                       help="scenario name (repeatable); random:<i> picks "
                            "from the randomized corpus")
    p_run.add_argument("--config", help="JSON config file")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out", help=f"output dir (default ${ENV_OUT} or ./out)")
    p_run.add_argument("--jobs", type=int, help="parallel worker threads")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a scenario field (repeatable)")
    p_run.add_argument("--mode", choices=[m.value for m in Mode])
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify",
                              help="recompute the checkers over a stored trace")
    p_verify.add_argument("path", help="run directory or trace.jsonl path")
    p_verify.set_defaults(func=cmd_verify)

    p_vec = sub.add_parser("vectors",
                           help="regenerate golden vectors and compare")
    p_vec.add_argument("--dir", help="vector directory (default: packaged)")
    p_vec.set_defaults(func=cmd_vectors)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO_ERROR


if __name__ == "__main__":
    sys.exit(main())
