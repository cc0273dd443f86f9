"""Summary, per-run and subgroup report files."""
from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path
from typing import List

from .prompts import format_decimal

SUMMARY_COLUMNS = ("phenotype", "label_source", "strategy", "rich_prompt", "expert_features", "tuned",
                   "size", "auroc", "auprc", "source")
RUN_COLUMNS = ("phenotype", "label_source", "richness", "feature_set", "strategy", "seed", "fold", "status",
               "selected_iteration", "size", "n_features_used", "literal_count", "train_auprc",
               "validation_auprc", "validation_auroc", "validation_fp_rate", "validation_fn_rate", "calls",
               "program_path")
SUBGROUP_COLUMNS = ("phenotype", "label_source", "strategy", "richness", "feature_set", "tuned", "race", "sex",
                    "n", "n_positive", "prevalence", "auprc", "auroc", "fp_rate", "fn_rate", "undefined", "low_n")


def reference_rows() -> dict:
    text = resources.files("phenosynth").joinpath("data/reference_rows.json").read_text(encoding="utf-8")
    return json.loads(text)


def format_ci(point, lo, hi) -> str:
    f = lambda x: format_decimal(x, 2)  # noqa: E731
    return f"{f(point)} ({f(lo)} - {f(hi)})"


def _num(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return int(x)
    return repr(x) if isinstance(x, float) else x


def _block_cells(block):
    if not block or "error" in block:
        return "", ""
    return (format_ci(block["auroc"], *block["auroc_ci"]), format_ci(block["auprc"], *block["auprc_ci"]))


def summary_rows(finals) -> List[dict]:
    rows = []
    for f in sorted(finals, key=lambda f: _cell_key(f["cell"])):
        c = f["cell"]
        base = {"phenotype": c["phenotype"], "label_source": c["label_source"], "strategy": c["strategy"],
                "rich_prompt": int(c["richness"] == "rich"), "expert_features": int(c["feature_set"] == "expert"),
                "source": "computed"}
        auroc, auprc = _block_cells(f.get("heldout"))
        size = f["final"]["size"] if f.get("final") else ""
        rows.append({**base, "tuned": 0, "size": size, "auroc": auroc, "auprc": auprc})
        if f.get("tuned"):
            auroc, auprc = _block_cells(f["tuned"]["heldout"])
            rows.append({**base, "tuned": 1, "size": f["tuned"]["size"], "auroc": auroc, "auprc": auprc})
    return rows


def _cell_key(c):
    return (c["phenotype"], c["label_source"], c["richness"], c["feature_set"], c["strategy"])


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _num(r.get(k)) for k in columns})


def write_reports(outcome, out_dir, include_reference: bool = True) -> dict:
    """Write summary.csv/json, runs.csv and subgroups.csv; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summary_rows(outcome.finals)
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
    ref = reference_rows() if include_reference else {"note": "", "rows": []}
    (out / "summary.json").write_text(json.dumps(
        {"rows": summary, "reference_rows": ref["rows"], "reference_note": ref["note"]},
        indent=2, sort_keys=True) + "\n", encoding="utf-8")

    runs = []
    for r in sorted(outcome.results, key=lambda r: (_cell_key(r.cell.to_dict()), r.seed, r.fold)):
        v = r.validation or {}
        runs.append({**r.cell.to_dict(), "seed": r.seed, "fold": r.fold, "status": r.status,
                     "selected_iteration": r.selected_iteration, "size": r.size,
                     "n_features_used": r.n_features_used, "literal_count": r.literal_count,
                     "train_auprc": r.train_auprc, "validation_auprc": v.get("auprc"),
                     "validation_auroc": v.get("auroc"), "validation_fp_rate": v.get("fp_rate"),
                     "validation_fn_rate": v.get("fn_rate"), "calls": r.calls, "program_path": r.program_path})
    _write_csv(out / "runs.csv", RUN_COLUMNS, runs)

    subgroups = []
    for f in sorted(outcome.finals, key=lambda f: _cell_key(f["cell"])):
        blocks = [(0, f.get("heldout"))]
        if f.get("tuned"):
            blocks.append((1, f["tuned"]["heldout"]))
        for tuned, block in blocks:
            for cell in (block or {}).get("subgroups", []):
                subgroups.append({**f["cell"], "tuned": tuned, **cell})
    _write_csv(out / "subgroups.csv", SUBGROUP_COLUMNS, subgroups)
    return {"summary": out / "summary.csv", "summary_json": out / "summary.json",
            "runs": out / "runs.csv", "subgroups": out / "subgroups.csv"}
