"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 I/O error (including a missing
prerequisite stage), 3 internal invariant breach.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from . import synthgen
from .errors import AccnetError, ConfigError

STAGES = {
    "ingest-check": pl.stage_ingest,
    "build-graphs": pl.stage_graphs,
    "communities": pl.stage_communities,
    "correlations": pl.stage_correlations,
    "pca": pl.stage_pca,
    "sweep-qr": pl.stage_qr_sweep,
    "run": pl.run_pipeline,
}

# flag dest -> config key
FLAG_KEYS = {
    "input": "input",
    "out": "out",
    "qr": "qr_threshold",
    "min_statements": "min_statements",
    "max_gap_days": "max_gap_days",
    "mc_samples": "mc_samples",
    "alpha": "alpha",
    "prune": "prune",
    "presence": "presence_fraction",
    "periods": "periods",
    "seed": "seed",
    "qr_sweep": "qr_sweep",
    "redundant": "redundant_codes",
    "dump_matrices": "dump_matrices",
}


def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file, or a run manifest (.json) to replay")
    p.add_argument("--input", help="statement file (bank_id,country,statement_date,variable_code,value)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--qr", type=float, help="minimum Quality Ratio (default 0.5)")
    p.add_argument("--min-statements", type=int, help="minimum annual statements (default 10)")
    p.add_argument("--max-gap-days", type=int, help="largest allowed gap between statements (default 700)")
    p.add_argument("--mc-samples", type=int, help="permutations per link test (default 1000)")
    p.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    p.add_argument("--prune", help="pruning threshold, or ascending comma list for a sweep (default 0.4)")
    p.add_argument("--presence", type=float, help="presence fraction for PCA measures (default 0.8)")
    p.add_argument("--periods", help="PCA periods, e.g. 2001-2006,2007-2009,2010-2013")
    p.add_argument("--seed", type=int, help="root random seed (default 0)")
    p.add_argument("--qr-sweep", help="QR thresholds for sweep-qr (default 0.3,0.5,0.8)")
    p.add_argument("--redundant", help="comma list of total/sub-total codes to drop")
    p.add_argument("--dump-matrices", action="store_true", default=None, help="write per-year feature matrices")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="accnet", description="Accounting network toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "run every stage",
        "ingest-check": "parse, validate and filter the statement file",
        "build-graphs": "build significance-filtered similarity graphs per year",
        "communities": "Louvain communities for each pruning threshold",
        "correlations": "yearly network-vs-indicator correlations",
        "pca": "PCA contribution rankings per community and period",
        "sweep-qr": "node and edge counts across QR thresholds",
    }
    for name, text in helps.items():
        _pipeline_flags(sub.add_parser(name, help=text))

    gen = sub.add_parser("generate", help="write a synthetic statement panel and its ground truth")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--banks", type=int, default=60)
    gen.add_argument("--groups", type=int, default=3)
    gen.add_argument("--variables", type=int, default=20)
    gen.add_argument("--start-year", type=int, default=2001)
    gen.add_argument("--end-year", type=int, default=2013)
    gen.add_argument("--noise", type=float, default=0.05, help="within-group noise")
    gen.add_argument("--separation", type=float, default=1.0, help="between-group separation")
    gen.add_argument("--missing", type=float, default=0.05, help="missing-observation rate")
    gen.add_argument("--missing-jitter", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args: argparse.Namespace) -> pl.PipelineConfig:
    values = pl.load_config_file(args.config) if args.config else {}
    for dest, key in FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[key] = v
    if args.command in ("run", "ingest-check") and not values.get("input"):
        raise ConfigError("--input is required")
    return pl.make_config(values)


def _generate(args) -> None:
    spec = synthgen.SyntheticSpec(
        n_banks=args.banks,
        n_groups=args.groups,
        n_variables=args.variables,
        start_year=args.start_year,
        end_year=args.end_year,
        within_noise=args.noise,
        between_separation=args.separation,
        missing_rate=args.missing,
        missing_rate_jitter=args.missing_jitter,
        rng_seed=args.seed,
    )
    records, truth = synthgen.generate(spec)
    out = Path(args.out)
    synthgen.write_generated(records, truth, out / "statements.csv", out / "ground_truth.csv")
    print(f"wrote {len(records)} records for {spec.n_banks} banks to {out / 'statements.csv'}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "generate":
            _generate(args)
        else:
            config = config_from_args(args)
            STAGES[args.command](config)
            print(f"{args.command}: outputs in {config.out_dir}")
    except AccnetError as exc:
        print(f"[{args.command}] error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"[{args.command}] I/O error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - unexpected failures are invariant breaches
        print(f"[{args.command}] internal error: {exc!r}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
