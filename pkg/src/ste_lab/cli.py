"""Command-line entry point: ``ste-lab {simulate,ste,gc,table,adjust}``."""
from __future__ import annotations

import argparse
import csv
import itertools
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .copulas import FAMILIES
from .dvine import DIRECTIONS
from .engine import SteConfig, bh_adjust, rejection, run_matrix
from .errors import ConfigError, InputError, SteError
from .experiments import COLUMNS, EXPERIMENTS, Study, run_study
from .granger import fit_var, wald_gc_test
from .signal_lab import BANDS, FilterSpec, filter_band, parse_band
from .simulate import SimulationConfig, gen_channel_pair

log = logging.getLogger("ste_lab")

RESULT_COLUMNS = ["source", "target", "band_source", "band_target", "direction", "estimate",
                  "p_raw", "p_adjusted", "significant", "exact_zero", "resamples_used", "error"]


def root_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("STE_LAB_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"STE_LAB_SEED must be an integer, got {env!r}") from None


def parse_list(text: str, cast=str) -> list:
    return [cast(t.strip()) for t in text.split(",") if t.strip()]


def band_registry(custom: list[str] | None) -> dict:
    reg = dict(BANDS)
    for text in custom or []:
        if "=" not in text:
            raise ConfigError(f"custom band needs a name: NAME=LO:HI, got {text!r}")
        band = parse_band(text, {})
        reg[band.name] = band
    return reg


def parse_band_pairs(text: str, registry: dict) -> list[tuple[str, str]]:
    """``all``, or comma-separated ``a:b`` (ordered) and ``a`` (same band) items."""
    if text == "all":
        return [(a, b) for a in registry for b in registry]
    pairs = []
    for item in parse_list(text):
        a, _, b = item.partition(":")
        b = b or a
        for name in (a, b):
            if name not in registry:
                raise ConfigError(f"unknown band {name!r}; known: {', '.join(registry)}")
        pairs.append((a, b))
    return pairs


def parse_pairs(text: str, labels: list[str]) -> list[tuple[int, int]] | None:
    """``all`` or comma-separated ``A:B`` channel labels (or 0-based indices)."""
    if text == "all":
        return None
    index = {lab: i for i, lab in enumerate(labels)}
    out = []
    for item in parse_list(text):
        a, sep, b = item.partition(":")
        if not sep:
            raise ConfigError(f"channel pair must look like A:B, got {item!r}")
        ij = []
        for tok in (a, b):
            if tok in index:
                ij.append(index[tok])
            elif tok.isdigit() and int(tok) < len(labels):
                ij.append(int(tok))
            else:
                raise ConfigError(f"unknown channel {tok!r}")
        out.append(tuple(ij))
    return out


def _segment(text):
    return None if text in ("none", "0", "global") else float(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    seed = root_seed(args.seed)
    if args.config:
        cfg = SimulationConfig.from_dict(io.read_json(args.config))
    else:
        cfg = SimulationConfig()
    if args.n_seconds is not None:
        cfg = SimulationConfig.from_dict({**cfg.to_dict(), "n_seconds": args.n_seconds})
    if args.print_config:
        sys.stdout.write(io.dumps(cfg.to_dict()))
        return 0
    if not args.out:
        raise ConfigError("--out is required")
    manifest = io.RunManifest("simulate", list(args.argv), cfg.to_dict(), seed).start()
    if args.config:
        manifest.add_input(args.config)
    pair = gen_channel_pair(cfg, seed)
    out = Path(args.out)
    truth_path = out.with_suffix(".truth.json")
    io.write_signal_csv(out, [pair.x, pair.y])
    io.write_json(truth_path, {"fs": cfg.fs, "n": cfg.n, "links": pair.truth})
    manifest.finish([out, truth_path])
    manifest.write(io.manifest_path(out))
    return 0


def ste_config(args) -> SteConfig:
    return SteConfig(m=args.m, k=args.k, ell=args.l, margin=args.margin,
                     segment_seconds=_segment(args.segment_seconds), families=tuple(parse_list(args.families)),
                     R=args.R, n_mc=args.n_mc, filter_order=args.filter_order,
                     zero_phase=not args.causal_filter, raw_pvalue=args.raw_pvalue)


def cmd_ste(args) -> int:
    seed = root_seed(args.seed)
    cfg = ste_config(args)
    manifest = io.RunManifest("ste", list(args.argv), {**cfg.to_dict(), "alpha": args.alpha,
                              "bands": args.bands, "pairs": args.pairs, "jobs": args.jobs}, seed).start()
    channels = io.read_signal_csv(args.input, args.fs)
    registry = band_registry(args.band)
    pairs = parse_band_pairs(args.bands, registry)
    chan_pairs = parse_pairs(args.pairs, [c.label for c in channels])
    rows = run_matrix(channels, registry, pairs, cfg, seed, chan_pairs, jobs=args.jobs)

    out = Path(args.out)
    result = {
        "command": "ste",
        "input_sha256": io.sha256_file(args.input),
        "seed": seed,
        "alpha": args.alpha,
        "config": cfg.to_dict(),
        "bands": {k: b.to_dict() for k, b in registry.items()},
        "results": [r.to_dict() | {"significant": rejection(r.p_adjusted, args.alpha)} for r in rows],
    }
    io.write_json(out, result)
    outputs = [out]
    if args.csv:
        flat = [{"source": r.source, "target": r.target, "band_source": r.band_source,
                 "band_target": r.band_target, "direction": r.direction, "estimate": r.estimate,
                 "p_raw": r.p_raw, "p_adjusted": r.p_adjusted,
                 "significant": int(rejection(r.p_adjusted, args.alpha)), "exact_zero": int(r.exact_zero),
                 "resamples_used": r.resamples_used, "error": r.error} for r in rows]
        io.write_rows_csv(args.csv, flat, RESULT_COLUMNS)
        outputs.append(Path(args.csv))

    manifest.add_input(args.input)
    manifest.failures = [{"cell": r.cell, "direction": r.direction, "error": r.error} for r in rows if r.error]
    manifest.finish(outputs)
    manifest.write(io.manifest_path(out))
    failed = sum(r.error is not None for r in rows)
    if failed:
        log.warning("%d of %d tests failed; see the error fields", failed, len(rows))
    return 0


def cmd_gc(args) -> int:
    manifest = io.RunManifest("gc", list(args.argv), {"order": args.order, "bands": args.bands}, 0).start()
    channels = io.read_signal_csv(args.input, args.fs)
    labels = [c.label for c in channels]
    pairs = parse_pairs(args.pairs, labels) or list(itertools.combinations(range(len(labels)), 2))
    registry = band_registry(args.band)
    band_pairs = parse_band_pairs(args.bands, registry) if args.bands else [(None, None)]
    results = []
    for i, j in pairs:
        for bx, by in band_pairs:
            x, y = channels[i], channels[j]
            if bx is not None:
                x = filter_band(x, FilterSpec(registry[bx], zero_phase=not args.causal_filter))
                y = filter_band(y, FilterSpec(registry[by], zero_phase=not args.causal_filter))
            model = fit_var(x, y, args.order)
            for d in DIRECTIONS:
                stat, p = wald_gc_test(model, d)
                src, dst = (labels[i], labels[j]) if d == DIRECTIONS[0] else (labels[j], labels[i])
                results.append({"pair": [src, dst], "band_pair": [bx, by] if d == DIRECTIONS[0] else [by, bx],
                                "direction": d, "order": args.order, "statistic": stat, "p_value": p})
    text = io.dumps({"command": "gc", "results": results})
    if args.out:
        Path(args.out).write_text(text)
        manifest.add_input(args.input)
        manifest.finish([args.out])
        manifest.write(io.manifest_path(args.out))
    else:
        sys.stdout.write(text)
    return 0


def cmd_table(args) -> int:
    seed = root_seed(args.seed)
    base = SimulationConfig.from_dict(io.read_json(args.config)) if args.config else SimulationConfig()
    kw = {}
    if args.eta:
        kw["etas"] = tuple(parse_list(args.eta, int))
    if args.lags:
        kw["orders"] = tuple(parse_list(args.lags, int))
    study = Study(args.experiment, replicates=args.replicates, n_seconds=tuple(parse_list(args.n_seconds, float)),
                  block_sizes=tuple(parse_list(args.m, int)), R=args.R, n_mc=args.n_mc, alpha=args.alpha,
                  seed=seed, base=base, **kw)
    manifest = io.RunManifest("table", list(args.argv), study.to_dict(), seed).start()
    if args.config:
        manifest.add_input(args.config)
    rows = run_study(study, jobs=args.jobs)
    io.write_rows_csv(args.out, rows, COLUMNS)
    manifest.finish([args.out])
    manifest.write(io.manifest_path(args.out))
    return 0


def cmd_adjust(args) -> int:
    try:
        with open(args.input, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            fields = list(reader.fieldnames or [])
    except OSError as exc:
        raise InputError(f"cannot read {args.input}: {exc.strerror or exc}") from exc
    col = args.column or next((c for c in ("p_raw", "p_value", "p") if c in fields), None)
    if col is None or col not in fields:
        raise InputError(f"{args.input}: no p-value column (use --column)")
    try:
        p = np.array([float(r[col]) for r in rows])
    except ValueError:
        raise InputError(f"{args.input}: non-numeric p-value") from None
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise InputError(f"{args.input}: p-values must lie in [0, 1]")
    adj = bh_adjust(p)
    for r, a in zip(rows, adj):
        r["p_adjusted"] = io.fmt(a)
        r["significant"] = int(a <= args.alpha)
    out_fields = fields + [c for c in ("p_adjusted", "significant") if c not in fields]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, out_fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_band_flags(p, default):
    p.add_argument("--bands", default=default,
                   help="band pairs: 'all', or comma-separated SRC:TGT (ordered) or NAME (same band)")
    p.add_argument("--band", action="append", metavar="NAME=LO:HI",
                   help="register a custom band (repeatable)")
    p.add_argument("--causal-filter", action="store_true", help="one-pass causal filter instead of zero-phase")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ste-lab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a two-channel signal with known causal links")
    p.add_argument("--config", help="simulation config JSON (default: built-in)")
    p.add_argument("--out", help="output CSV; ground truth goes to <out>.truth.json")
    p.add_argument("--seed", type=int, help="root seed (fallback: STE_LAB_SEED, then 0)")
    p.add_argument("--n-seconds", type=float, help="override the series duration")
    p.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ste", help="STE tests for every channel pair and band pair")
    p.add_argument("input", help="CSV with a header row of channel labels")
    p.add_argument("--fs", type=float, required=True, help="sampling rate in Hz")
    p.add_argument("--out", default="ste_results.json")
    p.add_argument("--csv", help="also write a flat CSV of the results")
    _add_band_flags(p, "all")
    p.add_argument("--pairs", default="all", help="'all' or comma-separated A:B channel pairs")
    p.add_argument("--m", type=int, default=64, help="block size in samples")
    p.add_argument("-k", type=int, default=2, help="source lags")
    p.add_argument("-l", type=int, default=2, help="target lags")
    p.add_argument("-R", type=int, default=5000, help="null resamples per test")
    p.add_argument("--n-mc", type=int, default=10_000, help="Monte-Carlo draws per TE estimate")
    p.add_argument("--alpha", type=float, default=0.10, help="level applied to BH-adjusted p-values")
    p.add_argument("--margin", choices=("ecdf", "gev"), default="ecdf")
    p.add_argument("--segment-seconds", default="15", help="margin segment length; 'none' for one global fit")
    p.add_argument("--families", default=",".join(FAMILIES), help="candidate pair-copula families")
    p.add_argument("--filter-order", type=int, default=4)
    p.add_argument("--raw-pvalue", action="store_true", help="use count/R instead of (1+count)/(1+R)")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_ste)

    p = sub.add_parser("gc", help="Wald test for Granger causality on a VAR(p)")
    p.add_argument("input")
    p.add_argument("--fs", type=float, required=True)
    p.add_argument("--order", type=int, default=2, help="VAR lag order p")
    p.add_argument("--pairs", default="0:1")
    _add_band_flags(p, None)
    p.add_argument("--out", help="output JSON (default: stdout)")
    p.set_defaults(func=cmd_gc)

    p = sub.add_parser("table", help="replicated simulation study, rejection proportions as CSV")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("-R", type=int, default=200)
    p.add_argument("--n-mc", type=int, default=10_000)
    p.add_argument("--n-seconds", default="30", help="comma-separated durations N")
    p.add_argument("--m", default="32,64", help="comma-separated block sizes")
    p.add_argument("--lags", help="comma-separated k=l values (STE) or VAR orders (table2)")
    p.add_argument("--eta", help="comma-separated mean interval lengths")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--config", help="base simulation config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="table.csv")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("adjust", help="Benjamini-Hochberg adjustment of a p-value column")
    p.add_argument("input")
    p.add_argument("--column", help="p-value column (default: p_raw, p_value or p)")
    p.add_argument("--alpha", type=float, default=0.10)
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_adjust)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SteError as exc:
        print(f"ste-lab {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
