"""Command-line front end: one subcommand per named experiment.

Exit codes: 0 all checks passed, 1 an invariant check failed (or --check
found drift), 2 config error, 3 numerical failure mid-pipeline.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (EXPERIMENTS, ConfigError, ExperimentError,
                          check_outputs, run_experiment, validate_config)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vplab",
        description="Experiments on the collisional mode system; each "
                    "subcommand runs one named pipeline and writes CSV/JSON "
                    "artifacts plus a manifest.")
    sub = parser.add_subparsers(dest="experiment", required=True,
                                metavar="|".join(EXPERIMENTS))
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, default=None,
                        help="config file (key = value sections); defaults "
                             "are filled for anything unset")
        sp.add_argument("--out", default=None,
                        help="output directory (default results/<experiment>)")
        sp.add_argument("--set", action="append", default=[], dest="overrides",
                        metavar="SECTION.KEY=VALUE",
                        help="override one config entry; repeatable")
        sp.add_argument("--threads", type=int, default=None,
                        help="sweep worker threads")
        sp.add_argument("--check", action="store_true",
                        help="re-validate stored outputs in --out against "
                             "current code instead of running fresh")
    return parser


def _bound_text(c: dict) -> str:
    mode, bound = c["mode"], c["bound"]
    if mode == "report":
        return "(reported)"
    if mode == "in":
        return f"in [{bound[0]:g}, {bound[1]:g}]"
    return {"le": "<=", "ge": ">=", "gt": ">"}[mode] + f" {bound:g}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    try:
        text = args.config.read_text() if args.config else ""
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    overrides = list(args.overrides)
    if args.out:
        overrides.append(f"run.out={args.out}")
    if args.threads is not None:
        overrides.append(f"run.threads={args.threads}")
    try:
        cfg = validate_config(text, experiment=args.experiment,
                              overrides=overrides)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    if args.check:
        try:
            result = check_outputs(cfg.out)
        except (OSError, ValueError) as e:
            print(f"cannot re-validate {cfg.out}: {e}", file=sys.stderr)
            return 2
        for d in result["diffs"]:
            print(f"drift: {d}", file=sys.stderr)
        print(f"{cfg.out}: {'outputs reproduced' if result['match'] else 'MISMATCH'}")
        return 0 if result["match"] else 1

    try:
        manifest = run_experiment(cfg)
    except ExperimentError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        print(f"partial manifest: {Path(cfg.out) / 'manifest.json'}",
              file=sys.stderr)
        return 3

    for c in manifest["checks"]:
        flag = "PASS" if c["passed"] else "FAIL"
        print(f"{flag}  {c['name']} = {c['value']:.6g}  {_bound_text(c)}")
    print(f"manifest: {Path(cfg.out) / 'manifest.json'}  "
          f"({manifest['wall_time_s']:.1f}s)")
    return 0 if manifest["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
