"""dmimo command-line front end.

Each subcommand resolves its config, refuses to clobber existing outputs unless
--force is given, writes a run manifest, then computes and writes one CSV plus
a JSON sidecar per table.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .channel import sample_paths, sort_paths, write_path_dump
from .closedform import Architecture, dmt_curve, integer_restricted
from .config import ConfigError, DmtOptions, OutageOptions, RunConfig, load_config, parse_dmt
from .montecarlo import (
    ResultTable,
    estimate_outage,
    multiuser_rate_experiment,
    provenance,
    run_mux_convergence,
    run_rate_experiment,
    trial_rng,
)
from .report import OutputExistsError, check_writable, write_csv, write_json

OUTPUT_ENV = "DMIMO_OUTPUT_DIR"
DEFAULT_OUTPUT = "dmimo_out"
MANIFEST_SUFFIX = ".manifest.json"

EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_EXISTS = 3


def _common(parser: argparse.ArgumentParser, needs_config: bool = True) -> None:
    parser.add_argument("--config", type=Path, required=needs_config, help="YAML or JSON experiment config")
    parser.add_argument("--out", type=Path, default=None,
                        help=f"output directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    parser.add_argument("--seed", type=int, default=None, help="override the config's master seed (u64)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for trials (default 1)")
    parser.add_argument("--force", action="store_true", help="overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmimo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dmimo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate-curve", help="Monte Carlo ergodic rate versus SNR_a, with the closed form")
    _common(p)
    p.add_argument("--dump-paths", type=int, default=0, metavar="TRIALS",
                   help="also write the path list of the first TRIALS realizations per case")

    p = sub.add_parser("mux-gain", help="closed-form Psi and per-doubling slope")
    _common(p)

    p = sub.add_parser("outage", help="outage probability of one ordered path and its log-log slope")
    _common(p)
    p.add_argument("--stream-index", type=int, default=None, help="path rank l (1 = strongest)")
    p.add_argument("--rate-exponent", type=float, default=None, help="r_l in [0, 1)")
    p.add_argument("--rate-floor-bits", type=float, default=None, help="target rate used when r_l = 0")

    p = sub.add_parser("multiuser", help="multiuser downlink rates with concatenated beam steering")
    _common(p)
    p.add_argument("--k-u", type=int, default=None, help="number of users")

    p = sub.add_parser("dmt", help="diversity-multiplexing tradeoff curve")
    _common(p, needs_config=False)
    p.add_argument("--architecture", choices=[a.value for a in Architecture], default=None)
    for name in ("l-s", "k-t", "k-r", "paths", "k-u", "k-b"):
        p.add_argument(f"--{name}", type=int, default=None)
    p.add_argument("--d-step", type=float, default=0.25, help="spacing of the d grid (breakpoints always added)")

    p = sub.add_parser("validate", help="run the invariant suite and report pass/fail per check")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="master seed for the randomized checks")
    return parser


def _output_dir(args) -> Path:
    if args.out is not None:
        return args.out
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))


def _meta(subcommand: str, table: ResultTable, runtime: float) -> dict:
    meta = dict(table.metadata)
    config = meta.pop("config")
    warnings = meta.pop("warnings", {})
    meta.pop("provenance", None)
    return {
        "subcommand": subcommand,
        "config": config,
        "seed": config.get("seed"),
        "trials": config.get("trials"),
        "runtime_seconds": runtime,
        "warnings": warnings,
        "provenance": provenance(config),
        "results": meta,
    }


class _Run:
    """Plans outputs, guards against overwrites, writes the manifest, then the artifacts."""

    def __init__(self, args, subcommand: str, run: RunConfig | None, stems: list[str]):
        self.subcommand = subcommand
        self.out = _output_dir(args)
        self.stems = stems
        self.manifest = self.out / (subcommand.replace("-", "_") + MANIFEST_SUFFIX)
        files = [self.manifest]
        for stem in stems:
            files += [self.out / f"{stem}.csv", self.out / f"{stem}.meta.json"]
        check_writable(files, args.force)
        self.out.mkdir(parents=True, exist_ok=True)
        snapshot = [raw for _, raw in run.cases()] if run is not None else []
        write_json({
            "subcommand": subcommand,
            "config_path": str(args.config) if getattr(args, "config", None) else None,
            "output_dir": str(self.out),
            "seed_override": args.seed,
            "resolved_config": snapshot,
            "outputs": [f"{stem}.csv" for stem in stems],
            "version": __version__,
        }, self.manifest)

    def emit(self, stem: str, table: ResultTable, runtime: float, meta: dict | None = None) -> None:
        write_csv(table, self.out / f"{stem}.csv")
        write_json(meta if meta is not None else _meta(self.subcommand, table, runtime),
                   self.out / f"{stem}.meta.json")
        print(f"wrote {self.out / (stem + '.csv')}")


def _load(args) -> RunConfig:
    run = load_config(args.config)
    if args.seed is not None:
        run = run.with_seed(args.seed)
    return run


def _stems(prefix: str, run: RunConfig) -> list[tuple[str, object]]:
    return [(prefix if name is None else f"{prefix}_{name}", cfg) for name, cfg in run.experiments()]


def cmd_rate_curve(args) -> int:
    run = _load(args)
    cases = _stems("rate_curve", run)
    extra = [f"{stem}_paths" for stem, _ in cases] if args.dump_paths else []
    job = _Run(args, "rate-curve", run, [stem for stem, _ in cases])
    check_writable([job.out / f"{s}.csv" for s in extra], args.force)
    for stem, cfg in cases:
        start = time.perf_counter()
        table = run_rate_experiment(cfg, threads=args.threads)
        job.emit(stem, table, time.perf_counter() - start)
        if args.dump_paths:
            records = [(t, sort_paths(sample_paths(cfg.geometry, cfg.link, trial_rng(cfg.seed, t))))
                       for t in range(min(args.dump_paths, cfg.trials))]
            write_path_dump(records, job.out / f"{stem}_paths.csv")
    return 0


def cmd_mux_gain(args) -> int:
    run = _load(args)
    cases = _stems("mux_gain", run)
    job = _Run(args, "mux-gain", run, [stem for stem, _ in cases])
    for stem, cfg in cases:
        start = time.perf_counter()
        table = run_mux_convergence(cfg)
        job.emit(stem, table, time.perf_counter() - start)
    return 0


def cmd_outage(args) -> int:
    run = _load(args)
    opts = run.outage
    if args.stream_index is not None:
        opts = OutageOptions(args.stream_index,
                             args.rate_exponent if args.rate_exponent is not None else 0.0,
                             args.rate_floor_bits if args.rate_floor_bits is not None else 1.0)
    elif opts is not None and (args.rate_exponent is not None or args.rate_floor_bits is not None):
        opts = OutageOptions(opts.stream_index,
                             opts.rate_exponent if args.rate_exponent is None else args.rate_exponent,
                             opts.rate_floor_bits if args.rate_floor_bits is None else args.rate_floor_bits)
    if opts is None:
        raise ConfigError("outage.stream_index", "give an outage section or --stream-index")
    cases = _stems("outage", run)
    job = _Run(args, "outage", run, [stem for stem, _ in cases])
    for stem, cfg in cases:
        start = time.perf_counter()
        table = estimate_outage(cfg, opts.stream_index, opts.rate_exponent, opts.rate_floor_bits,
                                threads=args.threads)
        table.metadata["config"]["outage"] = {"stream_index": opts.stream_index,
                                              "rate_exponent": opts.rate_exponent,
                                              "rate_floor_bits": opts.rate_floor_bits}
        job.emit(stem, table, time.perf_counter() - start)
        m = table.metadata
        print(f"{stem}: fitted slope {m['fitted_slope']:.4f}, oracle {m['oracle_slope']:.4f}, "
              f"asymptotic {m['asymptotic_slope']:.4f}")
    return 0


def cmd_multiuser(args) -> int:
    run = _load(args)
    k_u = args.k_u if args.k_u is not None else run.k_u
    if k_u is None:
        raise ConfigError("multiuser.k_u", "give a multiuser section or --k-u")
    cases = _stems("multiuser", run)
    job = _Run(args, "multiuser", run, [stem for stem, _ in cases])
    for stem, cfg in cases:
        start = time.perf_counter()
        table = multiuser_rate_experiment(cfg, k_u, threads=args.threads)
        job.emit(stem, table, time.perf_counter() - start)
    return 0


def _dmt_options(args) -> DmtOptions:
    if args.architecture is not None:
        raw = {"architecture": args.architecture}
        for key in ("l_s", "k_t", "k_r", "paths", "k_u", "k_b"):
            if getattr(args, key) is not None:
                raw[key] = getattr(args, key)
        return parse_dmt(raw, "dmt")
    if args.config is None:
        raise ConfigError("dmt", "give --architecture with its parameters or a config with a dmt section")
    run = load_config(args.config)
    if run.dmt is None:
        raise ConfigError("dmt", "config has no dmt section")
    return run.dmt


def dmt_table(opts: DmtOptions, d_step: float = 0.25) -> ResultTable:
    """d, g_m and the integer-restricted gain floor(G_m(d)) at integer d (NaN between integers)."""
    if opts.d_grid is not None:
        grid = opts.d_grid
    else:
        if not d_step > 0:
            raise ConfigError("d_step", "must be > 0")
        d_max = dmt_curve(opts.architecture, None, **opts.params).params["max_diversity"]
        grid = tuple(np.arange(0.0, d_max + 0.5 * d_step, d_step).clip(max=d_max))
    try:
        curve = dmt_curve(opts.architecture, grid, **opts.params)
    except ValueError as exc:
        raise ConfigError("dmt.d_grid", str(exc)) from None
    d, g = curve.d, curve.g_m
    g_int = np.array([float(integer_restricted(v)) if float(x).is_integer() else math.nan for x, v in zip(d, g)])
    config = {"dmt": {"architecture": opts.architecture.value, **opts.params, "d_grid": [float(x) for x in grid]}}
    meta = {"config": config, "provenance": provenance(config),
            "breakpoints": curve.breakpoints, "max_diversity": curve.params["max_diversity"],
            "warnings": {}}
    if opts.architecture is Architecture.MULTIUSER_UPLINK:
        meta["warnings"]["uplink_limit_assumed_k_b_l"] = 1
    return ResultTable({"d": d, "g_m": g, "g_m_integer": g_int}, meta)


def cmd_dmt(args) -> int:
    opts = _dmt_options(args)
    job = _Run(args, "dmt", None, ["dmt"])
    start = time.perf_counter()
    table = dmt_table(opts, args.d_step)
    job.emit("dmt", table, time.perf_counter() - start)
    return 0


def cmd_validate(args) -> int:
    from .validate import run_checks

    results = run_checks(seed=args.seed if args.seed is not None else 2024, threads=args.threads)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAILURE
    return 0


COMMANDS = {
    "rate-curve": cmd_rate_curve,
    "mux-gain": cmd_mux_gain,
    "outage": cmd_outage,
    "multiuser": cmd_multiuser,
    "dmt": cmd_dmt,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXISTS
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
