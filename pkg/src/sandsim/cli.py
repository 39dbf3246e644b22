"""Command-line front end.

    sandsim list-presets
    sandsim run <preset> [--seeds N] [--out DIR] [--config FILE] [--workers W]
    sandsim replay <manifest.json> [--out DIR]
    sandsim snapshot <run-dir> --round R [--out FILE]

Failures exit non-zero after printing one JSON line to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as cfgmod
from .experiments import PRESETS, PresetError, get_preset, replay, run_preset, snapshot_run
from .protocol import ConfigError


def _fail(kind: str, message: str, code: int = 2) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sandsim", description="SAND topology management simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list-presets", help="show available experiment presets")

    run = sub.add_parser("run", help="run an experiment preset")
    run.add_argument("preset")
    run.add_argument("--seeds", type=int, default=None, help="replications per sweep point")
    run.add_argument("--out", default=None, help="output directory (default results/<preset>)")
    run.add_argument("--config", default=None, help="key = value file overriding the preset base")
    run.add_argument("--workers", type=int, default=1)

    rep = sub.add_parser("replay", help="re-execute every run listed in a manifest")
    rep.add_argument("manifest")
    rep.add_argument("--out", default=None)
    rep.add_argument("--workers", type=int, default=1)

    snap = sub.add_parser("snapshot", help="export the topology of a run at a given round")
    snap.add_argument("run")
    snap.add_argument("--round", type=int, required=True)
    snap.add_argument("--out", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-presets":
            for p in PRESETS.values():
                values = ", ".join(str(v) for v in p.values)
                print(f"{p.name:14s} {p.axis}={{{values}}}  seeds={p.seeds}  {p.description}")
            return 0
        if args.command == "run":
            preset = get_preset(args.preset)
            base = cfgmod.load(args.config, preset.base) if args.config else None
            out = Path(args.out) if args.out else Path("results") / preset.name
            results = run_preset(preset.name, args.seeds, out, base, args.workers)
            print(f"{len(results)} runs written to {out}")
            return 0
        if args.command == "replay":
            results = replay(args.manifest, args.out, args.workers)
            print(f"{len(results)} runs replayed")
            return 0
        if args.command == "snapshot":
            path = snapshot_run(args.run, args.round, args.out)
            print(path)
            return 0
    except PresetError as exc:
        return _fail("unknown_preset", str(exc))
    except ConfigError as exc:
        return _fail("config", str(exc))
    except FileNotFoundError as exc:
        return _fail("not_found", str(exc))
    except (PermissionError, IsADirectoryError, NotADirectoryError) as exc:
        return _fail("unwritable", str(exc))
    except ValueError as exc:
        return _fail("invalid", str(exc))
    return _fail("usage", f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
