"""Config-driven experiment grid with incremental persistence.

For every grid cell the cohort is split into a stratified train/held-out
partition; the preprocessor is fitted on the train partition only. Each
(seed, fold) runs zero-shot or SEDI on the fold's training rows and scores
every valid candidate on the fold's validation rows. The cell's final model
is the candidate with the best validation AUPRC over all folds, seeds and
iterations; only then is the held-out partition touched.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import sedi as sedi_mod
from . import tuner as tuner_mod
from .cohort import (
    LABEL_SOURCES,
    PHENOTYPES,
    CohortPreprocessor,
    CohortTable,
    GeneratorParams,
    generate_cohort,
    holdout_indices,
    kfold_indices,
    load_cohort,
    load_dictionary,
)
from .dsl import evaluate, parse, render, stats
from .evaluation import EvalProtocol, evaluate_with_ci, subgroup_report
from .exceptions import ConfigurationError, PhenosynthError, UndefinedMetricError
from .llm import ChatClient, LlmConfig, ScriptedClient
from .metrics import compute_metrics
from .prompts import FEATURE_SETS, RICHNESS, PromptSpec
from .sedi import STRATEGIES, SediConfig
from .tuner import TuneConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridAxes:
    phenotypes: Tuple[str, ...] = PHENOTYPES
    label_sources: Tuple[str, ...] = LABEL_SOURCES
    richness: Tuple[str, ...] = RICHNESS
    feature_sets: Tuple[str, ...] = FEATURE_SETS
    strategies: Tuple[str, ...] = STRATEGIES

    def __post_init__(self):
        allowed = {
            "phenotypes": PHENOTYPES, "label_sources": LABEL_SOURCES, "richness": RICHNESS,
            "feature_sets": FEATURE_SETS, "strategies": STRATEGIES,
        }
        for name, ok in allowed.items():
            vals = tuple(getattr(self, name))
            object.__setattr__(self, name, vals)
            if not vals:
                raise ConfigurationError(f"grid axis {name!r} is empty")
            bad = [v for v in vals if v not in ok]
            if bad:
                raise ConfigurationError(f"grid axis {name!r} has unknown value {bad[0]!r}")

    def cells(self) -> List["Cell"]:
        return [Cell(*c) for c in itertools.product(
            self.phenotypes, self.label_sources, self.richness, self.feature_sets, self.strategies)]


@dataclass(frozen=True)
class Cell:
    phenotype: str
    label_source: str
    richness: str
    feature_set: str
    strategy: str

    @property
    def name(self) -> str:
        return "__".join((self.phenotype, self.label_source, self.richness, self.feature_set, self.strategy))

    def to_dict(self):
        return asdict(self)


@dataclass
class ExperimentConfig:
    output_dir: Path = Path("runs")
    cohort: GeneratorParams = field(default_factory=GeneratorParams)
    cohort_file: Optional[Path] = None
    dictionary_file: Optional[Path] = None
    protocol: EvalProtocol = field(default_factory=EvalProtocol)
    split_seed: int = 0
    grid: GridAxes = field(default_factory=GridAxes)
    llm: LlmConfig = field(default_factory=LlmConfig)
    scripted_responses: Optional[Path] = None
    scripted_dir: Optional[Path] = None
    scripted_exhaustion: str = "repeat-last"
    sedi: SediConfig = field(default_factory=SediConfig)
    tune: bool = False
    tune_config: TuneConfig = field(default_factory=TuneConfig)

    @property
    def scripted(self) -> bool:
        return self.scripted_responses is not None or self.scripted_dir is not None

    def client_for(self, cell: Cell):
        if self.scripted_dir is not None:
            path = Path(self.scripted_dir) / f"{cell.name}.json"
            if not path.exists():
                path = Path(self.scripted_dir) / "default.json"
            return ScriptedClient.from_file(path, self.scripted_exhaustion)
        if self.scripted_responses is not None:
            return ScriptedClient.from_file(self.scripted_responses, self.scripted_exhaustion)
        return ChatClient(self.llm)


def _section(data: dict, name: str, cls, allowed=None):
    sub = data.get(name, {})
    if not isinstance(sub, dict):
        raise ConfigurationError(f"[{name}] must be a table")
    unknown = set(sub) - set(allowed if allowed is not None else cls.__dataclass_fields__)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    return sub


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read a TOML experiment file. Paths are relative to the file."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data, base=path.parent, overrides=overrides)


def config_from_dict(data: dict, base: Path = Path("."), overrides: Optional[dict] = None) -> ExperimentConfig:
    data = dict(data)
    data.update(overrides or {})
    known = {"output_dir", "cohort", "protocol", "grid", "llm", "sedi", "tune"}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown config key(s): {', '.join(sorted(unknown))}")

    def rel(p):
        return None if p is None else (Path(p) if Path(p).is_absolute() else base / p)

    try:
        cohort = dict(_section(data, "cohort", GeneratorParams,
                               set(GeneratorParams.__dataclass_fields__) | {"file", "dictionary"}))
        cohort_file = rel(cohort.pop("file", None))
        dictionary_file = rel(cohort.pop("dictionary", None))
        gen = GeneratorParams(**cohort)
        gen.validate()
        proto = dict(_section(data, "protocol", EvalProtocol, set(EvalProtocol.__dataclass_fields__) | {"split_seed"}))
        split_seed = int(proto.pop("split_seed", 0))
        protocol = EvalProtocol(**proto)
        grid = GridAxes(**_section(data, "grid", GridAxes))
        llm = dict(_section(data, "llm", LlmConfig,
                            set(LlmConfig.__dataclass_fields__) | {"scripted_responses", "scripted_dir", "exhaustion"}))
        scripted = rel(llm.pop("scripted_responses", None))
        scripted_dir = rel(llm.pop("scripted_dir", None))
        exhaustion = llm.pop("exhaustion", "repeat-last")
        if "audit_log" in llm:
            llm["audit_log"] = str(rel(llm["audit_log"]))
        llm_cfg = LlmConfig(**llm)
        sedi_cfg = SediConfig(**_section(data, "sedi", SediConfig))
        tune = dict(_section(data, "tune", TuneConfig, set(TuneConfig.__dataclass_fields__) | {"enabled"}))
        enabled = bool(tune.pop("enabled", False))
        tune_cfg = TuneConfig(**tune)
    except TypeError as exc:
        raise ConfigurationError(f"invalid config value: {exc}") from exc
    if exhaustion not in ("error", "repeat-last"):
        raise ConfigurationError("llm.exhaustion must be 'error' or 'repeat-last'")
    return ExperimentConfig(
        output_dir=rel(data.get("output_dir", "runs")),
        cohort=gen, cohort_file=cohort_file, dictionary_file=dictionary_file,
        protocol=protocol, split_seed=split_seed, grid=grid, llm=llm_cfg,
        scripted_responses=scripted, scripted_dir=scripted_dir, scripted_exhaustion=exhaustion,
        sedi=sedi_cfg, tune=enabled, tune_config=tune_cfg,
    )


# -- results -----------------------------------------------------------------

@dataclass
class RunResult:
    cell: Cell
    seed: int
    fold: int
    status: str  # "ok" or "fallback"
    selected_iteration: Optional[int]
    program_path: Optional[str]
    size: Optional[int]
    n_features_used: Optional[int]
    literal_count: Optional[int]
    train_auprc: Optional[float]
    validation: Optional[dict]
    calls: int
    diagnostic: Optional[str]
    candidates: List[dict] = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["cell"] = self.cell.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["cell"] = Cell(**d["cell"])
        return cls(**d)


def load_cohort_for(cfg: ExperimentConfig) -> CohortTable:
    if cfg.cohort_file is not None:
        dictionary = load_dictionary(cfg.dictionary_file) if cfg.dictionary_file else None
        return load_cohort(cfg.cohort_file, dictionary)
    return generate_cohort(cfg.cohort)


def _validation_metrics(program, table, labels, threshold):
    out = evaluate(program, table)
    if not out.ok:
        return None, out.failure.message
    try:
        return compute_metrics(out.probabilities, labels, threshold).to_dict(), None
    except UndefinedMetricError as exc:
        return None, str(exc)


def _run_one(cfg: ExperimentConfig, cell: Cell, train: CohortTable, val: CohortTable,
             seed: int, fold: int, run_dir: Path) -> RunResult:
    spec = PromptSpec(cell.phenotype, cell.richness, cell.feature_set, train.schema.dictionary())
    sedi_cfg = SediConfig(**{**cfg.sedi.to_dict(), "strategy": cell.strategy,
                             "seed": cfg.sedi.seed * 1_000_003 + seed * 1000 + fold,
                             "label_source": cell.label_source})
    client = cfg.client_for(cell)
    run = sedi_mod.run_sedi(spec, train, client, sedi_cfg)
    sedi_mod.save_run(run, run_dir)
    y_val = val.label(cell.phenotype, cell.label_source)
    candidates = []
    for r in run.records:
        if not r.ok:
            continue
        vm, err = _validation_metrics(r.program, val, y_val, sedi_cfg.threshold)
        candidates.append({
            "iteration": r.index, "program": render(r.program), "size": r.size,
            "train_auprc": r.metrics.auprc,
            "validation_auprc": None if vm is None else vm["auprc"], "validation_error": err,
        })
    best = run.selected_best
    prog = run.final_program
    st = stats(prog) if prog is not None else None
    if prog is not None:
        validation, _ = _validation_metrics(prog, val, y_val, sedi_cfg.threshold)
    else:
        try:
            p = np.full(val.n_rows, run.train_prevalence)
            validation = compute_metrics(p, y_val, sedi_cfg.threshold).to_dict()
        except UndefinedMetricError:
            validation = None
    return RunResult(
        cell, seed, fold, "ok" if prog is not None else "fallback", best,
        f"runs/{cell.name}/seed{seed}_fold{fold}/selected.phen" if prog is not None else None,
        st.size if st else None, len(st.features_used) if st else None, st.literal_count if st else None,
        run.record(best).metrics.auprc if best is not None else None,
        validation, len(run.records), run.diagnostic, candidates,
    )


def _choose_final(results: Sequence[RunResult]):
    """Best validation AUPRC over every candidate; ties go to the earliest
    (seed, fold, iteration), then the smaller program."""
    best, key = None, None
    for r in results:
        for c in r.candidates:
            v = c.get("validation_auprc")
            if v is None:
                continue
            k = (-v, r.seed, r.fold, c["iteration"], c["size"])
            if key is None or k < key:
                best, key = (r, c), k
    return best


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)


@dataclass
class ExperimentOutcome:
    results: List[RunResult]
    finals: List[dict]
    failures: List[dict]

    @property
    def exit_code(self) -> int:
        return 2 if self.failures else 0


def _heldout_stage(cfg: ExperimentConfig, cell: Cell, chosen, train: CohortTable, test: CohortTable,
                   fallback_prevalence: float) -> dict:
    """The only place the held-out partition is read."""
    proto = cfg.protocol
    y_test = test.label(cell.phenotype, cell.label_source)
    threshold = cfg.sedi.threshold
    out = {"cell": cell.to_dict(), "n_train": train.n_rows, "n_test": test.n_rows}
    if chosen is None:
        program = None
        out["final"] = None
        scores = np.full(test.n_rows, fallback_prevalence)
    else:
        r, c = chosen
        program = parse(c["program"], train.schema)
        out["final"] = {"seed": r.seed, "fold": r.fold, "iteration": c["iteration"], "program": c["program"],
                        "size": c["size"], "validation_auprc": c["validation_auprc"]}
        res = evaluate(program, test)
        scores = np.asarray(res.probabilities) if res.ok else np.full(test.n_rows, fallback_prevalence)
        out["heldout_error"] = None if res.ok else res.failure.message
    out["heldout"] = _score_block(scores, y_test, test, threshold, proto)
    out["tuned"] = None
    if cfg.tune and program is not None:
        y_train = train.label(cell.phenotype, cell.label_source)
        tuned, tres = tuner_mod.tune_program(program, train, y_train, cfg.tune_config)
        res = evaluate(tuned, test)
        t_scores = np.asarray(res.probabilities) if res.ok else np.full(test.n_rows, fallback_prevalence)
        out["tuned"] = {"program": render(tuned), "size": stats(tuned).size, "tune": tres.summary(),
                        "heldout": _score_block(t_scores, y_test, test, threshold, proto)}
    return out


def _score_block(scores, y, table, threshold, proto: EvalProtocol) -> dict:
    try:
        rep = evaluate_with_ci(scores, y, threshold, proto.ci_level, proto.bootstrap_resamples, seed=0).to_dict()
    except UndefinedMetricError as exc:
        rep = {"error": str(exc)}
    rep["subgroups"] = subgroup_report(scores, y, table.sex, table.race, threshold).to_rows()
    return rep


def run_experiment(cfg: ExperimentConfig) -> ExperimentOutcome:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cohort = load_cohort_for(cfg)
    proto = cfg.protocol
    results: List[RunResult] = []
    finals: List[dict] = []
    failures: List[dict] = []

    for cell in cfg.grid.cells():
        cell_dir = out_dir / "runs" / cell.name
        try:
            labels = cohort.label(cell.phenotype, cell.label_source)
            tr_idx, te_idx = holdout_indices(labels, proto.train_fraction, cfg.split_seed)
            raw_train, raw_test = cohort.take(tr_idx), cohort.take(te_idx)
            pre = CohortPreprocessor().fit(raw_train)
            train, test = pre.transform(raw_train), pre.transform(raw_test)
        except PhenosynthError as exc:
            log.error("cell %s could not be prepared: %s", cell.name, exc)
            failures.append({"cell": cell.name, "seed": None, "fold": None, "error": str(exc)})
            continue

        cell_results: List[RunResult] = []
        y_train = train.label(cell.phenotype, cell.label_source)
        for seed in range(proto.seeds):
            folds = kfold_indices(y_train, proto.folds, seed)
            for fold, (f_tr, f_va) in enumerate(folds):
                run_dir = cell_dir / f"seed{seed}_fold{fold}"
                done = run_dir / "result.json"
                if done.exists():
                    cell_results.append(RunResult.from_dict(json.loads(done.read_text(encoding="utf-8"))))
                    continue
                try:
                    rr = _run_one(cfg, cell, train.take(f_tr), train.take(f_va), seed, fold, run_dir)
                except Exception as exc:  # isolate: one failed run never aborts the grid
                    log.error("run %s seed %d fold %d failed: %s", cell.name, seed, fold, exc)
                    failures.append({"cell": cell.name, "seed": seed, "fold": fold,
                                     "error": f"{type(exc).__name__}: {exc}"})
                    continue
                _write_json(done, rr.to_dict())
                cell_results.append(rr)
        results.extend(cell_results)
        if not cell_results:
            continue  # every run failed and is logged; nothing to select from

        final_path = out_dir / "cells" / cell.name / "final.json"
        if final_path.exists() and not any(f["cell"] == cell.name for f in failures):
            finals.append(json.loads(final_path.read_text(encoding="utf-8")))
            continue
        try:
            chosen = _choose_final(cell_results)
            final = _heldout_stage(cfg, cell, chosen, train, test, float(y_train.mean()))
        except Exception as exc:
            log.error("held-out stage for %s failed: %s", cell.name, exc)
            failures.append({"cell": cell.name, "seed": None, "fold": None, "error": f"{type(exc).__name__}: {exc}"})
            continue
        if not any(f["cell"] == cell.name for f in failures):
            _write_json(final_path, final)
        finals.append(final)

    with open(out_dir / "failures.jsonl", "w", encoding="utf-8") as fh:
        for f in failures:
            fh.write(json.dumps(f, sort_keys=True) + "\n")
    return ExperimentOutcome(results, finals, failures)


def load_outcome(out_dir) -> ExperimentOutcome:
    """Rebuild an outcome from the files a previous run persisted."""
    out_dir = Path(out_dir)
    results = [RunResult.from_dict(json.loads(p.read_text(encoding="utf-8")))
               for p in sorted((out_dir / "runs").glob("*/seed*_fold*/result.json"))]
    results.sort(key=lambda r: (r.cell.name, r.seed, r.fold))
    finals = [json.loads(p.read_text(encoding="utf-8")) for p in sorted((out_dir / "cells").glob("*/final.json"))]
    failures = []
    fpath = out_dir / "failures.jsonl"
    if fpath.exists():
        failures = [json.loads(line) for line in fpath.read_text(encoding="utf-8").splitlines() if line.strip()]
    return ExperimentOutcome(results, finals, failures)
