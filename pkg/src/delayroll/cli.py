"""``delayroll`` command line entry point.

Exit codes: 0 success, 2 invalid config, 3 numerical divergence, 4 I/O or
parse failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ._version import __version__
from .exceptions import NumericalError, ParseError
from .experiment import (
    ConfigError,
    Pipeline,
    StageError,
    bundled_configs,
    ingest_csv,
    load_config,
    override_seed,
    sweep,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("delayroll")

STAGES = ("generate", "fit", "train", "rollout", "evaluate", "run")


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    # Subparsers get SUPPRESS defaults so flags may appear on either side
    # of the subcommand without clobbering each other.
    default = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=default, help="JSON config file or bundled name (%s)" % ", ".join(bundled_configs()))
    p.add_argument("--seed", type=int, default=default, help="override every seed in the config")
    p.add_argument("--out", default=default, help="output directory (default: config output_dir)")
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delayroll",
        description="Time-delayed DMD and transformer forecasting experiments.",
        parents=[_global_options(False)],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _global_options(True)
    helps = {
        "generate": "generate (or ingest) trajectories and write them out",
        "fit": "fit TD-DMD",
        "train": "train TD-TF",
        "rollout": "roll saved models forward from test windows",
        "evaluate": "score saved predictions",
        "run": "all stages in order",
    }
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=helps[name])
    sw = sub.add_parser("sweep", parents=[common], help="TD-TF RMSE over an (n, h) grid")
    sw.add_argument("--n", dest="n_values", type=int, nargs="+", required=True)
    sw.add_argument("--h", dest="h_values", type=int, nargs="+", required=True)
    sw.add_argument("--repeats", type=int, default=5)
    sw.add_argument("--seed-stride", type=int, default=1, help="seed increment between repeats (0: identical)")
    ing = sub.add_parser("ingest", parents=[common], help="parse a directory of trajectory CSV files")
    ing.add_argument("directory")
    return parser


def _load(args):
    if not args.config:
        raise ConfigError("--config is required for this command", "config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = override_seed(cfg, args.seed)
    return cfg


def _out_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    return Path(cfg.get("output_dir", f"runs/{cfg['experiment']}"))


def _summary(metrics: dict) -> dict:
    out = {}
    for name, report in metrics.items():
        entry = dict(report.get("mean", {}))
        for key in ("field_rmse", "amplitude_ratio_final_third"):
            if key in report:
                entry[key] = report[key]
        out[name] = entry
    return out


def _dispatch(args) -> int:
    if args.command == "ingest":
        trajs = ingest_csv(args.directory)
        rows = [{"label": t.label, "states": len(t), "d": t.d, "dt": t.dt, "t0": t.t0} for t in trajs]
        if not args.quiet:
            print(json.dumps(rows, indent=2))
        return EXIT_OK

    cfg = _load(args)
    out = _out_dir(args, cfg)
    if args.command == "sweep":
        out.mkdir(parents=True, exist_ok=True)
        rows = sweep(cfg, args.n_values, args.h_values, args.repeats, args.seed_stride, out / "sweep.csv")
        if not args.quiet:
            for row in rows:
                print(f"n={row['n']} h={row['h']} mean_rmse={row['mean_rmse']:.6g} "
                      f"std_rmse={row['std_rmse']:.6g} status={row['status']}")
        return EXIT_OK

    pipeline = Pipeline(cfg, out)
    result = getattr(pipeline, args.command)()
    if args.command in ("run", "evaluate") and not args.quiet:
        print(json.dumps(_summary(result), indent=2, sort_keys=True))
    log.info("%s finished; artifacts in %s", args.command, out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"numerical error in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NumericalError as exc:
        stage = getattr(exc, "stage", None) or args.command
        print(f"numerical error in stage '{stage}': {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ParseError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
