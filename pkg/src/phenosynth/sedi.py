"""Zero-shot generation and the synthesize-execute-debug-instruct loop.

Iteration 1 answers the opening prompt. After every iteration except the
last, the model receives either a debug prompt (the candidate failed to
extract, parse or run) or an instruct prompt (training metrics plus sampled
false positives and negatives). A run therefore makes at most
``max_iterations + 1`` calls and shows at most ``max_iterations`` rounds
of examples.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .cohort.schema import CohortTable
from .dsl import EvalOutcome, ParseError, PhenotypeProgram, evaluate, parse, render, size
from .dsl.analysis import features_used
from .exceptions import ConfigurationError, SchemaError, UndefinedMetricError
from .llm import (
    ChatTranscript,
    ExtractionError,
    ScriptedClient,
    ScriptExhaustedError,
    TruncatedResponseError,
    extract_program,
)
from .metrics import MetricsReport, compute_metrics
from .prompts import FeedbackBundle, PromptSpec, build_debug, build_initial, build_instruct, format_patient_example

log = logging.getLogger(__name__)

STRATEGIES = ("zero_shot", "sedi")
TRUNCATED_PLACEHOLDER = "[response truncated]"


@dataclass(frozen=True)
class SediConfig:
    max_iterations: int = 10
    fp_sample_count: int = 10
    fn_sample_count: int = 10
    example_budget: int = 200
    strategy: str = "sedi"
    seed: int = 0
    threshold: float = 0.5
    extra_features: int = 5
    label_source: str = "heuristic"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"strategy must be one of {STRATEGIES}")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be at least 1")
        per_iter = self.fp_sample_count + self.fn_sample_count
        if min(self.fp_sample_count, self.fn_sample_count) < 0 or per_iter > 20:
            raise ConfigurationError("fp + fn samples per iteration must be between 0 and 20")
        if self.max_iterations * per_iter > self.example_budget:
            raise ConfigurationError("max_iterations x samples per iteration exceeds example_budget")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigurationError("threshold must be in [0, 1]")

    def to_dict(self):
        return asdict(self)


@dataclass
class IterationRecord:
    index: int
    prompt: str
    response: Optional[str]
    status: str  # ok | truncated | extraction | parse | runtime
    error: Optional[str] = None
    source: Optional[str] = None
    program: Optional[PhenotypeProgram] = None
    metrics: Optional[MetricsReport] = None
    size: Optional[int] = None
    improved: Optional[bool] = None
    fp_ids: Tuple[str, ...] = ()
    fn_ids: Tuple[str, ...] = ()
    feedback: Optional[str] = None  # "debug" | "instruct" | None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self):
        return {
            "index": self.index,
            "status": self.status,
            "error": self.error,
            "source": self.source,
            "program": render(self.program) if self.program is not None else None,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "size": self.size,
            "improved": self.improved,
            "fp_ids": list(self.fp_ids),
            "fn_ids": list(self.fn_ids),
            "feedback": self.feedback,
            "prompt": self.prompt,
            "response": self.response,
        }


@dataclass
class SediRun:
    config: SediConfig
    spec: PromptSpec
    transcript: ChatTranscript
    records: List[IterationRecord]
    selected_best: Optional[int]
    train_prevalence: float
    diagnostic: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.selected_best is None

    @property
    def final_program(self) -> Optional[PhenotypeProgram]:
        if self.selected_best is None:
            return None
        return self.record(self.selected_best).program

    def record(self, index: int) -> IterationRecord:
        return self.records[index - 1]

    def examples_shown(self) -> int:
        return sum(len(r.fp_ids) + len(r.fn_ids) for r in self.records)

    def best_so_far(self) -> List[Optional[float]]:
        out, best = [], None
        for r in self.records:
            if r.ok and (best is None or r.metrics.auprc > best):
                best = r.metrics.auprc
            out.append(best)
        return out

    def predict_outcome(self, table: CohortTable) -> EvalOutcome:
        prog = self.final_program
        if prog is None:
            return EvalOutcome(probabilities=np.full(table.n_rows, self.train_prevalence))
        try:
            return evaluate(prog, table)
        except SchemaError as exc:
            from .dsl.interpreter import EvalFailure

            return EvalOutcome(failure=EvalFailure("runtime", str(exc)))

    def predict(self, table: CohortTable) -> np.ndarray:
        """Probabilities from the selected program, or the constant
        training prevalence when there is none or it fails on ``table``."""
        out = self.predict_outcome(table)
        if out.ok:
            return np.asarray(out.probabilities)
        log.warning("selected program failed on new data (%s); using constant fallback", out.failure)
        return np.full(table.n_rows, self.train_prevalence)

    def replay_client(self) -> ScriptedClient:
        """A scripted client that reproduces this run's responses, including
        truncated ones (raised again rather than returned as text)."""
        responses = []
        for r in self.records:
            if r.status == "truncated":
                partial = "" if r.response == TRUNCATED_PLACEHOLDER else r.response
                responses.append(TruncatedResponseError(r.error, partial))
            else:
                responses.append(r.response)
        return ScriptedClient(responses)

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "phenotype": self.spec.phenotype,
            "richness": self.spec.richness,
            "feature_set": self.spec.feature_set,
            "selected_best": self.selected_best,
            "train_prevalence": self.train_prevalence,
            "diagnostic": self.diagnostic,
            "records": [r.to_dict() for r in self.records],
        }


def sample_misclassified(probs, labels, threshold: float = 0.5, k: int = 10, seed=0,
                         k_fn: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Uniformly sampled row positions of false positives and false negatives.

    FP: prob >= threshold on a negative row; FN: prob < threshold on a
    positive row. Each list has min(k, available) entries.
    """
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels, dtype=bool)
    rng = np.random.default_rng(seed)
    fp_pool = np.flatnonzero((p >= threshold) & ~y)
    fn_pool = np.flatnonzero((p < threshold) & y)
    k_fn = k if k_fn is None else k_fn
    fp = rng.choice(fp_pool, size=min(k, len(fp_pool)), replace=False) if len(fp_pool) else fp_pool
    fn = rng.choice(fn_pool, size=min(k_fn, len(fn_pool)), replace=False) if len(fn_pool) else fn_pool
    return np.asarray(fp, dtype=int), np.asarray(fn, dtype=int)


def _selection_key(r: IterationRecord):
    return (-r.metrics.auprc, r.index, r.size)


def select_best_index(records: Sequence[IterationRecord]) -> Optional[int]:
    valid = [r for r in records if r.ok]
    if not valid:
        return None
    return min(valid, key=_selection_key).index


def select_best(run: SediRun) -> Optional[PhenotypeProgram]:
    """Program with the highest training AUPRC; earliest iteration, then the
    smaller program, wins ties. ``None`` means the run fell back to the
    constant predictor."""
    return run.final_program


def _example_text(table: CohortTable, i: int, feats) -> Tuple[dict, str]:
    row = {name: float(table.values[i, j]) for j, name in enumerate(table.schema.names) if name in feats}
    return row, format_patient_example(row, feats, order=table.schema.names)


def _attempt(text: str, names, train: CohortTable, labels, threshold):
    """extract -> parse -> evaluate; returns (status, error, source, program, probs)."""
    try:
        source = extract_program(text)
    except ExtractionError as exc:
        return "extraction", str(exc), None, None, None
    try:
        prog = parse(source, names)
    except ParseError as exc:
        return "parse", str(exc), source, None, None
    try:
        out = evaluate(prog, train)
    except SchemaError as exc:
        return "runtime", str(exc), source, None, None
    if not out.ok:
        return "runtime", out.failure.message, source, None, None
    return "ok", None, source, prog, np.asarray(out.probabilities)


def run_sedi(spec: PromptSpec, train: CohortTable, client, cfg: SediConfig = None) -> SediRun:
    """Run the loop (or a single zero-shot call when ``cfg.strategy`` says so)."""
    cfg = cfg or SediConfig()
    labels = train.label(spec.phenotype, cfg.label_source)
    if not labels.any():
        raise UndefinedMetricError("training labels contain no positives")
    prevalence = float(labels.mean())
    names = [n for n in spec.dictionary() if n in train.schema]
    system, user = build_initial(spec)
    transcript = ChatTranscript().add("system", system).add("user", user)
    calls = 1 if cfg.strategy == "zero_shot" else cfg.max_iterations + 1
    records: List[IterationRecord] = []
    diagnostic = None
    prompt = user
    prev_valid_auprc = None
    shown = 0

    for i in range(1, calls + 1):
        try:
            reply = client.complete(transcript)
            text = reply.content
            status, error, source, prog, probs = _attempt(text, names, train, labels, cfg.threshold)
        except TruncatedResponseError as exc:
            text = exc.partial or TRUNCATED_PLACEHOLDER
            status, error, source, prog, probs = "truncated", str(exc), None, None, None
        except ScriptExhaustedError as exc:
            diagnostic = f"stopped before iteration {i}: {exc}"
            break
        transcript.add("assistant", text)
        rec = IterationRecord(i, prompt, text, status, error, source)
        if status == "ok":
            rec.program = prog
            rec.size = size(prog)
            rec.metrics = compute_metrics(probs, labels, cfg.threshold)
            if prev_valid_auprc is not None:
                rec.improved = rec.metrics.auprc > prev_valid_auprc
            prev_valid_auprc = rec.metrics.auprc
        records.append(rec)
        if i == calls:
            break

        if status != "ok":
            rec.feedback = "debug"
            prompt = build_debug(error)
        else:
            room = cfg.example_budget - shown
            k_fp = min(cfg.fp_sample_count, room)
            k_fn = min(cfg.fn_sample_count, room - k_fp)
            fp, fn = sample_misclassified(probs, labels, cfg.threshold, k_fp, (cfg.seed, i, 0), k_fn=k_fn)
            shown += len(fp) + len(fn)
            rec.fp_ids = tuple(train.ids[j] for j in fp)
            rec.fn_ids = tuple(train.ids[j] for j in fn)
            used = features_used(prog)
            pool = [n for n in names if n not in used]
            rng = np.random.default_rng((cfg.seed, i, 1))
            extra = rng.choice(len(pool), size=min(cfg.extra_features, len(pool)), replace=False) if pool else []
            feats = set(used) | {pool[j] for j in extra}
            m = rec.metrics
            bundle = FeedbackBundle(
                m.auroc, m.auprc, m.fp_rate, m.fn_rate,
                tuple(_example_text(train, j, feats) for j in fp),
                tuple(_example_text(train, j, feats) for j in fn),
                rec.improved,
                int(round(m.fp_rate * (m.n - m.n_positive))),
                int(round(m.fn_rate * m.n_positive)),
            )
            rec.feedback = "instruct"
            prompt = build_instruct(bundle, spec, train.n_rows)
        transcript.add("user", prompt)

    best = select_best_index(records)
    if best is None and diagnostic is None:
        diagnostic = "no valid program was produced; using the constant training-prevalence predictor"
    elif best is None:
        diagnostic += "; no valid program, using the constant training-prevalence predictor"
    return SediRun(cfg, spec, transcript, records, best, prevalence, diagnostic)


def run_zero_shot(spec: PromptSpec, train: CohortTable, client, cfg: SediConfig = None) -> SediRun:
    cfg = cfg or SediConfig()
    if cfg.strategy != "zero_shot":
        cfg = SediConfig(**{**cfg.to_dict(), "strategy": "zero_shot"})
    return run_sedi(spec, train, client, cfg)


METRIC_COLUMNS = ("index", "status", "auprc", "auroc", "fp_rate", "fn_rate", "size",
                  "improved", "n_fp_shown", "n_fn_shown", "feedback", "error")


def save_run(run: SediRun, directory) -> Path:
    """Write transcript, candidate programs, metrics CSV and the selection."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "transcript.jsonl").write_text(run.transcript.to_jsonl(), encoding="utf-8")
    with open(d / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in run.records:
            m = r.metrics
            w.writerow([
                r.index, r.status,
                *(("", "", "", "") if m is None else (repr(m.auprc), repr(m.auroc), repr(m.fp_rate), repr(m.fn_rate))),
                "" if r.size is None else r.size,
                "" if r.improved is None else int(r.improved),
                len(r.fp_ids), len(r.fn_ids), r.feedback or "", r.error or "",
            ])
    for r in run.records:
        if r.program is not None:
            (d / f"iteration_{r.index:02d}.phen").write_text(render(r.program), encoding="utf-8")
        elif r.source is not None:
            (d / f"iteration_{r.index:02d}.phen").write_text(r.source + "\n", encoding="utf-8")
    if run.final_program is not None:
        (d / "selected.phen").write_text(render(run.final_program), encoding="utf-8")
    summary = {k: v for k, v in run.to_dict().items() if k != "records"}
    (d / "run.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return d
