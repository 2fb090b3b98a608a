"""``polaron-lab`` command line: run, presets, verify."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig
from .presets import PRESETS, preset_names
from .runner import EXIT_CONFIG, EXIT_PASS, run, verify


def _cmd_run(args) -> int:
    try:
        config = ExperimentConfig.load(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or config.out or f"runs/{config.experiment}-{config.config_hash[:12]}")
    rec = run(config, out, jobs=args.jobs, use_cache=not args.no_cache)
    for p in rec.properties:
        mark = "PASS" if p["passed"] else "FAIL"
        val = "" if p["value"] is None else f" value={p['value']}"
        print(f"[{mark}] {p['name']}{val}")
    if rec.error:
        print(f"error: {rec.error['type']}: {rec.error['message']}", file=sys.stderr)
    print(f"{rec.experiment}: {rec.status} in {rec.wall_time:.1f}s -> {out / 'record.json'}")
    return rec.exit_code


def _cmd_presets(args) -> int:
    for name in preset_names():
        p = PRESETS[name]
        print(f"{name:20s} {p['experiment']:18s} {p.get('description', '')}")
    return EXIT_PASS


def _cmd_verify(args) -> int:
    try:
        report = verify(args.record)
    except (OSError, json.JSONDecodeError) as err:
        print(f"cannot read record: {err}", file=sys.stderr)
        return EXIT_CONFIG
    bad = {k: v for k, v in report.items() if v != "ok"}
    for k, v in report.items():
        print(f"{v:8s} {k}")
    print(f"{len(report) - len(bad)}/{len(report)} artifacts verified")
    return EXIT_PASS if not bad else 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polaron-lab", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a TOML config")
    r.add_argument("--config", required=True, help="TOML experiment config")
    r.add_argument("--out", help="output directory")
    r.add_argument("--jobs", type=int, default=1, help="worker threads for independent solves")
    r.add_argument("--no-cache", action="store_true", help="ignore and do not write the crystal cache")
    r.set_defaults(func=_cmd_run)
    p = sub.add_parser("presets", help="list shipped presets")
    p.set_defaults(func=_cmd_presets)
    v = sub.add_parser("verify", help="recompute artifact hashes of a record")
    v.add_argument("--record", required=True, help="path to record.json")
    v.set_defaults(func=_cmd_verify)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return int(args.func(args))


if __name__ == "__main__":
    sys.exit(main())
