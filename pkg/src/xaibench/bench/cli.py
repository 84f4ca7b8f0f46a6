"""Command-line entry point: ``xaibench <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .. import synthgen
from .config import ConfigError, load_config, output_dir
from .runner import StageError, emit_all, run, validate_manifest

DEFAULT_CONFIG = "grid"
UNTIL = {"train": "model", "explain": "explain", "evaluate": "evaluate", "run": "report"}


def _common(p: argparse.ArgumentParser, pipeline: bool = True) -> None:
    p.add_argument("--config", default=DEFAULT_CONFIG,
                   help="YAML config path or shipped config name (default: %(default)s)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory (default: config 'output', else $XAIBENCH_OUT/<name>)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
    if pipeline:
        p.add_argument("--dataset", action="append", help="restrict to a dataset or group name (repeatable)")
        p.add_argument("--method", action="append", help="restrict to an explainer (repeatable)")
        p.add_argument("--data-dir", help="directory holding registered dataset files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xaibench", description="Local explanation benchmark for tree models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    g = sub.add_parser("generate", help="write the synthetic grid datasets and a manifest")
    _common(g, pipeline=False)
    for name, text in [("train", "fit models (runs dataset stages as needed)"),
                       ("explain", "compute attributions"),
                       ("evaluate", "compute metrics from stored attributions"),
                       ("run", "full pipeline including report layouts")]:
        _common(sub.add_parser(name, help=text))
    r = sub.add_parser("report", help="emit report layouts from an evaluated run")
    _common(r, pipeline=False)
    r.add_argument("--layout", action="append", choices=("table4-9", "figure-boxplot", "figure-heatmap"),
                   help="layout to emit (repeatable; default: all available)")
    o = sub.add_parser("validate-oracle", help="explainer vs exact Shapley sweep on random trees")
    o.add_argument("--cases", type=int, default=200)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--jobs", type=int, default=1)
    o.add_argument("--tol-tree", type=float, default=1e-9)
    o.add_argument("--tol-kernel", type=float, default=1e-6)
    return parser


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "data_dir", None):
        from dataclasses import replace
        cfg = replace(cfg, data_dir=args.data_dir)
    return cfg.select(datasets=getattr(args, "dataset", None), methods=getattr(args, "method", None),
                      seed=args.seed)


def _generate(args) -> int:
    cfg = _load(args)
    if cfg.synthetic is None:
        raise ConfigError("generate needs a config with a 'synthetic' section")
    s = cfg.synthetic
    specs = synthgen.enumerate_grid(s.n, cfg.seed, s.mu, s.functions, s.rhos, s.epsilons)
    out = output_dir(cfg, args.out)
    manifest = synthgen.write_grid(specs, out)
    print(f"generate: wrote {len(specs)} datasets to {out} (manifest {manifest.name})")
    return 0


def _report(args) -> int:
    from . import report

    cfg = load_config(args.config).select(seed=args.seed)
    out = output_dir(cfg, args.out)
    rdir = out / "reports"
    if not (rdir / "metrics.tsv").is_file():
        raise StageError("report", str(out), "no evaluated run here; run 'evaluate' first")
    if not args.layout:
        files = emit_all(out)
    else:
        rep = report.load_report(rdir)
        files = []
        for layout in args.layout:
            if layout == "table4-9":
                files += report.emit_report(rep, layout, rdir / "table.tsv")
            elif layout == "figure-heatmap":
                files += report.emit_report(rep, layout, rdir / "heatmaps")
            else:
                files += report.emit_report(rep, layout, rdir / "boxplots", report.read_shares(rdir / "shares.tsv"))
    print(f"report: wrote {len(files)} files under {rdir}")
    return 0


def _pipeline(args) -> int:
    cfg = _load(args)
    manifest = run(cfg, args.out, jobs=args.jobs, until=UNTIL[args.command])
    counts: dict = {}
    for r in manifest.records:
        counts.setdefault(r.stage, {}).setdefault(r.status, 0)
        counts[r.stage][r.status] += 1
    for stage, c in counts.items():
        print(f"{stage}: " + ", ".join(f"{n} {s}" for s, n in sorted(c.items())))
    problems = validate_manifest(manifest.out_dir)
    for p in problems:
        print(f"manifest: {p}", file=sys.stderr)
    print(f"manifest: {Path(manifest.out_dir) / 'manifest.json'}")
    return 1 if problems else 0


def _oracle(args) -> int:
    from ..explainers.oracle import oracle_sweep

    cases = oracle_sweep(args.cases, args.seed, args.jobs)
    bad_t = [c for c in cases if not c.tshap_err <= args.tol_tree]
    bad_k = [c for c in cases if not c.kshap_err <= args.tol_kernel]
    worst_t = max(c.tshap_err for c in cases)
    worst_k = max(c.kshap_err for c in cases)
    print(f"Tshap vs exact: {len(cases) - len(bad_t)}/{len(cases)} within {args.tol_tree:g} "
          f"(max err {worst_t:.3g}) {'PASS' if not bad_t else 'FAIL'}")
    print(f"Kshap vs exact: {len(cases) - len(bad_k)}/{len(cases)} within {args.tol_kernel:g} "
          f"(max err {worst_k:.3g}) {'PASS' if not bad_k else 'FAIL'}")
    return 0 if not (bad_t or bad_k) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    handlers = {"generate": _generate, "report": _report, "validate-oracle": _oracle}
    try:
        return handlers.get(args.command, _pipeline)(args)
    except ConfigError as exc:
        print(f"xaibench {args.command}: config: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"xaibench {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
