"""Command-line entry point: generate-cohort, run, tune, report.

Exit codes: 0 success, 1 configuration error, 2 partial grid failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from .cohort import (
    PHENOTYPES,
    GeneratorParams,
    generate_cohort,
    heuristic_labels,
    load_cohort,
    load_dictionary,
    save_cohort,
    save_dictionary,
)
from .cohort.schema import LABEL_SOURCES
from .dsl import ParseError, parse_file, render, size
from .exceptions import ConfigurationError, PhenosynthError
from .experiment import load_config, load_outcome, run_experiment
from .report import write_reports
from .tuner import TuneConfig, tune_program, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

log = logging.getLogger("phenosynth")


def generate_cohort_command(params: GeneratorParams, out_dir) -> dict:
    """Write cohort.csv, dictionary.json and manifest.json into ``out_dir``."""
    table = generate_cohort(params)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_cohort(table, out / "cohort.csv")
    save_dictionary(table.schema, out / "dictionary.json")
    cols = table.columns()
    manifest = {
        "seed": params.seed,
        "params": params.to_dict(),
        "n": table.n_rows,
        "prevalence": {
            ph: {"heuristic": float(heuristic_labels(ph, cols).mean()),
                 "dx": float(table.label(ph, "dx").mean())}
            for ph in PHENOTYPES
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def _cmd_generate(args) -> int:
    params = GeneratorParams(n=args.n, seed=args.seed, fn_rate=args.fn_rate, fp_rate=args.fp_rate)
    generate_cohort_command(params, args.out)
    print(f"wrote {args.out}/cohort.csv, dictionary.json, manifest.json")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.output:
        cfg.output_dir = Path(args.output)
    if args.scripted:
        cfg.scripted_responses = Path(args.scripted)
    outcome = run_experiment(cfg)
    write_reports(outcome, Path(cfg.output_dir) / "report")
    manifest = {"finished": datetime.now(timezone.utc).isoformat(), "config": str(args.config),
                "runs": len(outcome.results), "failures": len(outcome.failures)}
    (Path(cfg.output_dir) / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"{len(outcome.results)} runs, {len(outcome.failures)} failures; reports in {cfg.output_dir}/report")
    return outcome.exit_code


def _cmd_tune(args) -> int:
    dictionary = load_dictionary(args.dictionary) if args.dictionary else None
    table = load_cohort(args.cohort, dictionary)
    try:
        program = parse_file(args.program, table.schema)
    except ParseError as exc:
        raise ConfigurationError(f"{args.program}: {exc}") from exc
    labels = table.label(args.phenotype, args.label_source)
    tuned, res = tune_program(program, table, labels, TuneConfig(budget=args.budget, seed=args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tuned.phen").write_text(render(tuned), encoding="utf-8")
    write_trace(res, out / "trace.csv")
    summary = {**res.summary(), "size": size(tuned)}
    (out / "result.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"AUPRC {res.original_score:.4f} -> {res.tuned_score:.4f} in {res.evaluations_used} evaluations")
    return EXIT_OK


def _cmd_report(args) -> int:
    outcome = load_outcome(args.run_dir)
    paths = write_reports(outcome, args.out or Path(args.run_dir) / "report")
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return EXIT_PARTIAL if outcome.failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phenosynth", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-cohort", help="write a synthetic cohort, its dictionary and a manifest")
    g.add_argument("--n", type=int, default=1199)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--fn-rate", type=float, default=0.10)
    g.add_argument("--fp-rate", type=float, default=0.02)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)

    r = sub.add_parser("run", help="run an experiment grid from a TOML config")
    r.add_argument("config")
    r.add_argument("--output", help="override output_dir")
    r.add_argument("--scripted", help="JSON array of scripted responses (no network)")
    r.set_defaults(func=_cmd_run)

    t = sub.add_parser("tune", help="tune the numeric literals of a .phen program")
    t.add_argument("--program", required=True)
    t.add_argument("--cohort", required=True)
    t.add_argument("--dictionary")
    t.add_argument("--phenotype", choices=PHENOTYPES, default="aTRH")
    t.add_argument("--label-source", choices=LABEL_SOURCES, default="heuristic")
    t.add_argument("--budget", type=int, default=1000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=_cmd_tune)

    rep = sub.add_parser("report", help="rebuild report files from a run directory")
    rep.add_argument("run_dir")
    rep.add_argument("--out")
    rep.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, PhenosynthError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
