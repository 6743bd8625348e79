"""Command-line entry point: ``renormstat {compare,sweep,diagnose,cache}``.

Values come from the built-in defaults, then the ``--config`` file, then the
command-line flags. Exit codes: 0 success, 1 configuration error, 2 numerical
error, 3 sweep finished with failed points.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import diagnostics as diag
from .errors import ConfigError, RenormStatError, ResourceError, ValidationError
from .experiments import ExperimentConfig, PointError, run_diagnose, run_comparison, run_sweep, write_outputs
from .spectra import SpectrumCache, read_spectrum

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="renormstat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="flat key = value config file")
        p.add_argument("--out", type=Path, help="output directory (default: config 'output' or ./out)")
        p.add_argument("--seed", type=int, help="run a single disorder seed")
        p.add_argument("--no-cache", action="store_true", help="do not read or write spectra/")
        p.add_argument("--max-dim", type=int, help="total dimension cap")
        p.add_argument("--allow-large-dim", action="store_true", help="acknowledge a cap above 2^14")

    p = sub.add_parser("compare", help="bare vs renormalized canonical fit at one point")
    common(p)
    p = sub.add_parser("sweep", help="run the Cartesian sweep over epsilon, size and seeds")
    common(p)
    p.add_argument("--workers", type=int, help="worker processes (default: available CPUs)")
    p = sub.add_parser("diagnose", help="matrix-element and ETH diagnostics at one point")
    common(p)
    p.add_argument("--only", nargs="+", help="subset of diagnostics to run")
    p = sub.add_parser("cache", help="inspect or clear the spectrum cache")
    p.add_argument("action", choices=("list", "clear", "verify"))
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory holding spectra/")
    return parser


def load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes, model_changes = {}, {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.no_cache:
        changes["cache"] = False
    if args.allow_large_dim:
        changes["allow_large_dim"] = True
    if args.max_dim is not None:
        model_changes["max_dim"] = args.max_dim
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    if model_changes:
        changes["model"] = config.model.with_(**model_changes)
    return config.with_(**changes) if changes else config


def _out_dir(args, config) -> Path:
    return Path(args.out) if args.out else Path(config.output)


def _cache(config, out: Path):
    return SpectrumCache(out / "spectra") if config.cache else None


def _exit_code_for(exc) -> int:
    cause = exc.cause if isinstance(exc, PointError) else exc
    if isinstance(cause, (ConfigError, ValidationError, ResourceError)):
        return EXIT_CONFIG
    return EXIT_NUMERIC


def cmd_compare(args) -> int:
    config = load_config(args)
    out = _out_dir(args, config)
    try:
        report = run_comparison(config, _cache(config, out))
    except PointError as exc:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(
            json.dumps({"error": str(exc), "partial": diag._jsonable(exc.partial)}, indent=2, sort_keys=True) + "\n"
        )
        raise
    paths = write_outputs(report, out)
    print(f"D_bare = {report.d_bare:.6g}  D_renorm = {report.d_renorm:.6g}  D_meanfield = {report.d_meanfield:.6g}")
    print(f"wrote {paths['report']} and {paths['csv']}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = load_config(args)
    out = _out_dir(args, config)
    cache_dir = out / "spectra" if config.cache else None
    if cache_dir:
        cache_dir.mkdir(parents=True, exist_ok=True)
    result = run_sweep(config, cache_dir)
    paths = write_outputs(result, out)
    for name, fit in result.fits.items():
        print(f"{name}: slope {fit['slope']:.4f} [{fit['ci_low']:.4f}, {fit['ci_high']:.4f}]")
    print(f"{len(result.reports) - len(result.failures)}/{len(result.reports)} points ok; wrote {paths['csv']}")
    for failure in result.failures:
        print(f"failed: {failure['message']}", file=sys.stderr)
    return EXIT_PARTIAL if result.failures else EXIT_OK


def cmd_diagnose(args) -> int:
    config = load_config(args)
    out = _out_dir(args, config)
    result = run_diagnose(config, _cache(config, out), args.only)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "diagnostics.json"
    path.write_text(json.dumps(diag._jsonable(result), indent=2, sort_keys=True) + "\n")
    for name, summary in result["diagnostics"].items():
        print(name + ": " + ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in summary.items()))
    return EXIT_OK


def cmd_cache(args) -> int:
    cache = SpectrumCache(Path(args.out) / "spectra")
    if args.action == "list":
        for path in cache.entries():
            print(f"{path.name}  {path.stat().st_size} bytes")
    elif args.action == "clear":
        print(f"removed {cache.clear()} entries")
    else:
        bad = 0
        for path in cache.entries():
            try:
                read_spectrum(path, bytes.fromhex(path.stem))
            except ValidationError as exc:
                bad += 1
                print(f"corrupt: {exc}")
        print(f"{len(cache.entries()) - bad} ok, {bad} corrupt")
        return EXIT_NUMERIC if bad else EXIT_OK
    return EXIT_OK


COMMANDS = {"compare": cmd_compare, "sweep": cmd_sweep, "diagnose": cmd_diagnose, "cache": cmd_cache}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ResourceError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RenormStatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
