"""Command-line entry point ``fiber-rates``.

Exit codes: 0 success, 1 runtime failure, 2 bad configuration or usage,
3 sweep finished but some points failed. Failures print one JSON object
``{"error": <type>, "message": <text>}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .constellation import build_qam, maxwell_boltzmann_pmf, optimize_shaping
from .errors import ConfigError, FiberRatesError
from .harness import PROFILES, format_results, journal_path, load_config, run_sweep, split_by_group

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _error_line(kind, message):
    print(json.dumps({"error": kind, "message": str(message)}), file=sys.stderr)


def build_parser():
    p = _Parser(prog="fiber-rates", description="Achievable rates of simulated fiber links.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a sweep and write CSV/JSON results")
    run.add_argument("--config", required=True, help="INI file with [sweep] and [link.*] sections")
    run.add_argument("--profile", choices=sorted(PROFILES), default=None,
                     help="preset applied before the config file ('paper' is long-running)")
    run.add_argument("--out", default=None, help="output file (stdout if omitted)")
    run.add_argument("--format", choices=("csv", "json"), default=None)
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--seed", type=int, default=None, help="replace the configured seed list")
    run.add_argument("-v", "--verbose", action="store_true")

    orc = sub.add_parser("oracle", help="print the exact AWGN mutual information")
    orc.add_argument("--m", type=int, required=True, choices=(2, 4, 6))
    orc.add_argument("--snr-db", type=float, required=True)
    shape = orc.add_mutually_exclusive_group()
    shape.add_argument("--lambda", dest="lam", type=float, default=None)
    shape.add_argument("--shape-auto", action="store_true")
    return p


def _group_path(out, key, n_groups):
    if n_groups == 1:
        return Path(out)
    m, seed = key
    out = Path(out)
    return out.with_name(f"{out.stem}_m{m}_seed{seed}{out.suffix}")


def cmd_run(args):
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if not Path(args.config).is_file():
        raise ConfigError(f"config file not found: {args.config}")
    spec = load_config(args.config, profile=args.profile)
    if args.format:
        spec.output_format = args.format
    if args.workers is not None:
        spec.workers = args.workers
    if args.seed is not None:
        spec.seeds = (args.seed,)
    spec.out = args.out
    spec.validate()

    reports = run_sweep(spec)
    groups = split_by_group(reports)
    if args.out is None:
        if len(groups) > 1:
            raise ConfigError("several modulation orders or seeds need --out")
        sys.stdout.write(format_results(reports, spec.output_format))
    else:
        for key, rows in groups.items():
            _group_path(args.out, key, len(groups)).write_text(format_results(rows, spec.output_format))
        journal_path(args.out).unlink(missing_ok=True)

    failed = [r for r in reports if r.error is not None]
    if failed:
        _error_line("PointFailure", f"{len(failed)} of {len(reports)} reports failed; first: {failed[0].error}")
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_oracle(args):
    from .rates import awgn_mi_oracle

    const = build_qam(args.m)
    if args.shape_auto:
        const = const.with_pmf(optimize_shaping(const, args.snr_db))
    elif args.lam is not None:
        const = const.with_pmf(maxwell_boltzmann_pmf(const, args.lam))
    mi = awgn_mi_oracle(const, 10 ** (-args.snr_db / 10))
    print(json.dumps({"m": args.m, "snr_db": args.snr_db, "lambda": float(const.pmf.lam or 0.0), "mi": mi}))
    return EXIT_OK


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return cmd_run(args) if args.command == "run" else cmd_oracle(args)
    except ConfigError as exc:
        _error_line("ConfigError", exc)
        return EXIT_CONFIG
    except (FiberRatesError, ValueError, OSError) as exc:
        _error_line(type(exc).__name__, exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
