"""Command-line entry point: ``vqopt run|qubo compile|noise-hist|diagnose``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import __version__
from .experiments import (
    OUTPUT_ENV,
    ConfigError,
    diagnose_directory,
    load_config,
    noise_histogram,
    output_dir,
    run_experiment,
    run_stability,
    write_noise_histogram,
)
from .quantum import CapabilityError
from .qubo import QuboFormatError, format_ising, parse_qubo, qubo_to_ising

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3
log = logging.getLogger("vqopt")


def _out(cfg, args) -> Path:
    return Path(args.out) / cfg.output if args.out else output_dir(cfg)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if cfg.experiment == "noise-hist":
        return _noise_hist(cfg, _out(cfg, args))
    out = _out(cfg, args)
    if cfg.experiment == "stability":
        from .plotting import plot_stability

        run_stability(cfg, out)
        plot_stability(_read_rows(out / "stability.csv"), out / "stability.svg")
        log.info("wrote %s", out / "stability.csv")
        return EXIT_OK
    from .plotting import render_run

    result = run_experiment(cfg, out, args.workers)
    labels = [o.label for o in cfg.optimizers]
    metric = next(iter(result.batches.values())).traces[0].metric_name
    render_run(out, labels, metric)
    for label, batch in result.batches.items():
        s = batch.summary
        log.info("%s: final mean %s %.4f over %d trials", label, metric, s["metric_mean"][-1], len(batch.traces))
    if result.any_diverged:
        bad = {k: v for k, v in result.diverged.items() if v}
        print(f"vqopt: divergence in trials {bad}; artifacts written to {out}", file=sys.stderr)
        return EXIT_DIVERGED
    print(out)
    return EXIT_OK


def _read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]


def _noise_hist(cfg, out: Path) -> int:
    from .plotting import plot_histograms

    h = noise_histogram(cfg)
    write_noise_histogram(h, out)
    for m, per_dir in h.samples.items():
        plot_histograms(per_dir, out / f"histograms_shots{m}.svg")
    print(out)
    return EXIT_OK


def cmd_noise_hist(args) -> int:
    cfg = load_config(args.config)
    if cfg.experiment != "noise-hist":
        raise ConfigError(f"experiment: noise-hist needs experiment = 'noise-hist', got {cfg.experiment!r}")
    return _noise_hist(cfg, _out(cfg, args))


def cmd_qubo_compile(args) -> int:
    try:
        text = Path(args.file).read_text()
    except OSError as exc:
        raise ConfigError(f"{args.file}: cannot read ({exc.strerror})") from None
    try:
        problem = parse_qubo(text)
    except QuboFormatError as exc:
        raise ConfigError(f"{args.file}: {exc}") from None
    sys.stdout.write(format_ising(qubo_to_ising(problem)))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    rows = diagnose_directory(args.dir, h=args.h, every=args.every, stencil=args.stencil)
    print(Path(args.dir) / "diagnostics.csv")
    log.info("%d checkpoints diagnosed", len(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vqopt", description=__doc__)
    p.add_argument("--version", action="version", version=f"vqopt {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./runs)")
    r.add_argument("--workers", type=int, default=None, help="concurrent trials (results do not depend on it)")
    r.set_defaults(func=cmd_run)

    q = sub.add_parser("qubo", help="QUBO utilities")
    qsub = q.add_subparsers(dest="qubo_command", required=True)
    c = qsub.add_parser("compile", help="print the Ising form of a QUBO problem file")
    c.add_argument("file")
    c.set_defaults(func=cmd_qubo_compile)

    n = sub.add_parser("noise-hist", help="sample partial-derivative noise at a checkpoint")
    n.add_argument("config")
    n.add_argument("--out")
    n.set_defaults(func=cmd_noise_hist)

    d = sub.add_parser("diagnose", help="Lipschitz ratios at stored checkpoints")
    d.add_argument("dir")
    d.add_argument("--h", type=float, default=1e-3, help="finite-difference step")
    d.add_argument("--every", type=int, default=1, help="use every k-th checkpoint")
    d.add_argument("--stencil", action="store_true", help="cost-only Hessian stencil instead of gradient differences")
    d.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, CapabilityError) as exc:
        print(f"vqopt: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
