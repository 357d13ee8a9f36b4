"""Command line entry point.

Each subcommand reads a JSON run config, executes it, and writes results
under the output directory.  Failures exit nonzero after printing a
machine-readable error JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import RunConfig, run

# CLI subcommand -> RunConfig kind.
COMMANDS = {
    "solve-exact": "solve-exact",
    "solve-lp": "solve-lp",
    "train": "train",
    "evaluate": "evaluate",
    "pareto-sweep": "pareto-sweep",
    "ablate": "ablation",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxmin-morl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=f"run a config with kind={COMMANDS[name]}")
        cmd.add_argument("--config", required=True, help="path to the run config JSON")
        cmd.add_argument("--out", default=None, help="output directory (default runs/<command>)")
        cmd.add_argument(
            "--seed",
            type=int,
            action="append",
            default=None,
            help="override config seeds; repeatable",
        )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    out_dir = Path(args.out) if args.out else Path("runs") / args.command
    try:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
        doc["kind"] = COMMANDS[args.command]
        if args.seed:
            doc["seeds"] = args.seed
        config = RunConfig.from_dict(doc)
        result = run(config, out_dir)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        error = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(error), file=sys.stderr)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(json.dumps(error), encoding="utf-8")
        except OSError:
            pass
        return 1
    summary = {
        "kind": result.kind,
        "min_return": result.min_return,
        "value": result.value,
        "out": str(out_dir),
    }
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
