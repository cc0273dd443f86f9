"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v``; the lines are printed in the
terminal summary (and immediately with ``-s``).
"""
import gc
import json
import random
import signal
import time

import numpy as np

from phenosynth.cohort import (
    DEFAULT_PREVALENCE,
    HEURISTIC_PROGRAMS,
    PHENOTYPES,
    CohortPreprocessor,
    FeatureSchema,
    GeneratorParams,
    generate_cohort,
    heuristic_labels,
    holdout_indices,
    kfold_indices,
)
from phenosynth.cohort.generate import DEFAULT_RACE
from phenosynth.dsl import ParseError, PhenotypeProgram, evaluate, parse, size
from phenosynth.evaluation import evaluate_with_ci
from phenosynth.experiment import config_from_dict, run_experiment
from phenosynth.llm import ChatClient, ChatTranscript, LlmConfig, ScriptedClient
from phenosynth.metrics import auprc, auroc
from phenosynth.prompts import PromptSpec, build_initial
from phenosynth.sedi import SediConfig, run_sedi, save_run
from phenosynth.tuner import TuneConfig, tune_program

from conftest import ACCEPTANCE, SELECTION_SCRIPT, selection_table
from oracles import ap_threshold_sweep, auroc_pairwise, random_instance
from test_prompts import GOLDEN as PROMPT_GOLDEN, golden_cases

# held-out AUPRC of the aTRH oracle program against dx labels on the default
# cohort (seed 0), held-out split seed 0 stratified on dx; frozen at first run
CEILING_GOLDEN = 0.878285123966942


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def oracle_response(ph):
    return f"```\n{HEURISTIC_PROGRAMS[ph]}```"


# -- 1 -----------------------------------------------------------------------

def test_criterion_1_metric_oracle_equivalence():
    rng = np.random.default_rng(20240101)
    t0 = time.perf_counter()
    worst_ap, auroc_mismatch = 0.0, 0
    for _ in range(200):
        s, y = random_instance(rng)
        worst_ap = max(worst_ap, abs(auprc(s, y) - ap_threshold_sweep(s, y)))
        auroc_mismatch += auroc(s, y) != auroc_pairwise(s, y)
    elapsed = time.perf_counter() - t0
    ok = worst_ap <= 1e-12 and auroc_mismatch == 0 and elapsed < 5
    record(1, ok, f"200 instances, max |AP - sweep| = {worst_ap:.1e}, "
                  f"AUROC mismatches {auroc_mismatch}, {elapsed:.2f}s")


# -- 2 -----------------------------------------------------------------------

def test_criterion_2_heuristic_oracle_end_to_end(tmp_path):
    scripts = tmp_path / "scripts"
    scripts.mkdir()
    for ph in PHENOTYPES:
        (scripts / f"{ph}__heuristic__rich__all__sedi.json").write_text(json.dumps([oracle_response(ph)]))
    cfg = config_from_dict({
        "output_dir": "out",
        "cohort": {"n": 1199, "seed": 1},
        "grid": {"phenotypes": list(PHENOTYPES), "label_sources": ["heuristic"], "richness": ["rich"],
                 "feature_sets": ["all"], "strategies": ["sedi"]},
        "llm": {"scripted_dir": "scripts"},
    }, base=tmp_path)
    t0 = time.perf_counter()
    out = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    val = [c["validation_auprc"] for r in out.results for c in r.candidates]
    held = {f["cell"]["phenotype"]: f["heldout"]["auprc"] for f in out.finals}
    ok = (not out.failures and len(out.results) == 3 * 5 * 10 and val
          and all(abs(v - 1.0) <= 1e-9 for v in val)
          and set(held) == set(PHENOTYPES) and all(abs(v - 1.0) <= 1e-9 for v in held.values())
          and elapsed < 30)
    record(2, ok, f"{len(out.results)} runs, {len(val)} validation scores all 1.0: "
                  f"{all(abs(v - 1.0) <= 1e-9 for v in val)}, held-out {held}, {elapsed:.1f}s")


# -- 3 -----------------------------------------------------------------------

def _ceiling(cohort, ph):
    y = cohort.label(ph, "dx")
    _, te = holdout_indices(y, 0.75, 0)
    test = cohort.take(te)
    probs = evaluate(parse(HEURISTIC_PROGRAMS[ph], cohort.schema), test).probabilities
    return auprc(probs, test.label(ph, "dx")), ap_threshold_sweep(probs, test.label(ph, "dx"))


def test_criterion_3_noisy_label_ceiling(cohort_default):
    value, oracle = _ceiling(cohort_default, "aTRH")
    others = {ph: round(_ceiling(cohort_default, ph)[0], 3) for ph in ("HTN", "HTN-HypoK")}
    ok = 0.80 < value < 1.0 and abs(value - CEILING_GOLDEN) <= 1e-9 and abs(value - oracle) <= 1e-12
    record(3, ok, f"aTRH dx held-out AUPRC {value:.6f} (golden {CEILING_GOLDEN:.6f}); "
                  f"informational: {others}")


# -- 4 -----------------------------------------------------------------------

def _selection_run(client):
    t = selection_table()
    spec = PromptSpec("aTRH", "rich", "all", t.schema.dictionary())
    return run_sedi(spec, t, client, SediConfig(max_iterations=3))


def test_criterion_4_sedi_selection_and_debug(tmp_path):
    client = ScriptedClient(SELECTION_SCRIPT)
    run = _selection_run(client)
    k = 3
    debug = sum(1 for m in run.transcript if m.role == "user" and m.content.startswith("PhenoDSL encountered an error"))
    best = run.record(run.selected_best)
    counts = (run.transcript.count("system"), run.transcript.count("user"), run.transcript.count("assistant"))
    bounds = len(run.transcript) <= 2 * (k + 1) + 1 and counts == (1, k + 1, k + 1) and run.examples_shown() <= 200

    a = save_run(run, tmp_path / "a")
    b = save_run(_selection_run(ScriptedClient(SELECTION_SCRIPT)), tmp_path / "b")
    c = save_run(_selection_run(ScriptedClient.from_transcript(run.transcript)), tmp_path / "c")
    files = sorted(p.name for p in a.iterdir())
    identical = all((a / f).read_bytes() == (b / f).read_bytes() == (c / f).read_bytes() for f in files)

    ok = (debug == 1 and abs(best.metrics.auprc - 0.8) <= 1e-12 and "f_b" in best.response
          and bounds and identical and client.calls == k + 1)
    record(4, ok, f"debug prompts {debug}, selected iteration {run.selected_best} "
                  f"(AUPRC {best.metrics.auprc:.3f}), messages {counts}, examples {run.examples_shown()}, "
                  f"replay byte-identical over {len(files)} files: {identical}")


# -- 5 -----------------------------------------------------------------------

def test_criterion_5_prompt_goldens():
    cases = golden_cases()
    mismatched = [n for n, text in cases.items() if (PROMPT_GOLDEN / n).read_bytes() != text.encode("utf-8")]
    rich = build_initial(PromptSpec("aTRH", "rich", "expert", FeatureSchema.default().dictionary()))[1]
    sentence = "2 or more high blood pressure measurements while prescribed 3 or more hypertension medications"
    ok = not mismatched and sentence in rich
    record(5, ok, f"{len(cases) - len(mismatched)}/{len(cases)} goldens byte-identical, "
                  f"rich aTRH sentence present: {sentence in rich}")


# -- 6 -----------------------------------------------------------------------

def test_criterion_6_tuner_recovery(cohort_default):
    y = cohort_default.label("aTRH", "heuristic")
    tr, _ = holdout_indices(y, 0.75, 0)
    raw = cohort_default.take(tr)
    train = CohortPreprocessor().fit(raw).transform(raw)
    yt = train.label("aTRH", "heuristic")
    prog = parse(HEURISTIC_PROGRAMS["aTRH"].replace(">= 2", ">= 5"), train.schema)
    gains, never_worse, same_size, first_hit = [], True, True, []
    for seed in range(10):
        tuned, res = tune_program(prog, train, yt, TuneConfig(budget=1000, seed=seed))
        gains.append(res.tuned_score - res.original_score)
        never_worse &= res.tuned_score >= res.original_score
        same_size &= size(tuned) == size(prog)
        hit = next((r.evaluation for r in res.trace if r.score - res.original_score >= 0.10), None)
        first_hit.append(hit)
    improved = sum(g >= 0.10 for g in gains)
    ok = improved >= 9 and never_worse and same_size and res.evaluations_used <= 1000
    record(6, ok, f"{improved}/10 seeds improved by >= 0.10 (gain {min(gains):.3f}..{max(gains):.3f}, "
                  f"first reached at evaluation {min(h for h in first_hit if h is not None)}.."
                  f"{max(h for h in first_hit if h is not None)}), never worse: {never_worse}, "
                  f"size unchanged: {same_size}")


# -- 7 -----------------------------------------------------------------------

def test_criterion_7_generator_statistics():
    t = generate_cohort(GeneratorParams(n=2000))
    cols = t.columns()
    prev = {ph: float(np.mean(heuristic_labels(ph, cols))) for ph in PHENOTYPES}
    prev_ok = all(abs(prev[ph] - DEFAULT_PREVALENCE[ph]) <= 0.02 for ph in PHENOTYPES)
    female = float(np.mean(np.asarray(t.sex) == "F"))
    race = {r: float(np.mean(np.asarray(t.race) == r)) for r in DEFAULT_RACE}
    demo_ok = abs(female - 0.615) <= 0.03 and all(abs(race[r] - DEFAULT_RACE[r]) <= 0.03 for r in race)
    targets = {"HTN": 0.507, "HTN-HypoK": 0.143, "aTRH": 0.147}
    ok = prev_ok and demo_ok and DEFAULT_PREVALENCE == targets
    record(7, ok, "prevalence " + ", ".join(f"{k} {v:.3f}" for k, v in prev.items())
           + f"; female {female:.3f}; race " + ", ".join(f"{k} {v:.3f}" for k, v in race.items()))


# -- 8 -----------------------------------------------------------------------

def test_criterion_8_protocol_shape(cohort_seed1):
    y = cohort_seed1.label("aTRH", "heuristic")
    tr, te = holdout_indices(y, 0.75, 0)
    split_ok = (len(tr), len(te)) == (899, 300) and not set(tr) & set(te)
    yt = y[tr]
    folds = kfold_indices(yt, 5, 0)
    expected = yt.sum() / 5
    pos = [int(yt[va].sum()) for _, va in folds]
    folds_ok = len(folds) == 5 and all(abs(p - expected) <= 1 for p in pos)
    folds_ok &= sorted(np.concatenate([va for _, va in folds]).tolist()) == list(range(len(yt)))
    yte = y[te]
    rep = evaluate_with_ci(yte.astype(float), yte, 0.5, 0.90, 1000, seed=0)
    ci_ok = tuple(rep.auprc_ci) == (1.0, 1.0) and tuple(rep.auroc_ci) == (1.0, 1.0)
    ok = split_ok and folds_ok and ci_ok
    record(8, ok, f"split {len(tr)}/{len(te)}, fold positives {pos} (proportional {expected:.1f}), "
                  f"perfect-predictor CI {list(rep.auprc_ci)}")


# -- 9 -----------------------------------------------------------------------

def test_criterion_9_wire_golden():
    t = ChatTranscript().add("system", "You are terse.").add("user", "Write a program.")
    body = ChatClient(LlmConfig()).request_body(t)
    golden = ('{"model": "gpt-4o", "messages": [{"role": "system", "content": "You are terse."}, '
              '{"role": "user", "content": "Write a program."}], "temperature": 0.5, "top_p": 1.0, '
              '"max_tokens": 2048}')
    ok = (json.dumps(body) == golden and set(body) == {"model", "messages", "temperature", "top_p", "max_tokens"}
          and body["temperature"] == 0.5 and body["top_p"] == 1.0)
    record(9, ok, f"fields {sorted(body)}, temperature {body['temperature']}, top_p {body['top_p']}")


# -- 10 ----------------------------------------------------------------------

ALPHABET = "phenotype{}();,=<>!+-*/ andornotletifelsereturnclampmaxminabs0123456789._ \n\tbp_nhigh_bp_n"
TOKENS = ["phenotype", "p", "{", "}", "(", ")", ";", ",", "=", "==", "!=", "<", "<=", ">", ">=", "+", "-",
          "*", "/", "and", "or", "not", "let", "if", "else", "return", "clamp", "max", "min", "abs",
          "bp_n", "high_bp_n", "x", "0", "1", "2.5", "1e308", "1e400", "0.0", "@", "#", "é", "\n"]
SEEDS = [HEURISTIC_PROGRAMS[ph] for ph in PHENOTYPES] + [
    "phenotype p {\n  let s = 0.1;\n  if (high_bp_n >= 3 and bp_n > 0) { s = s + 0.4; } else { s = s - 0.05; }\n"
    "  return clamp(s + abs(mean_systolic - 140) / 100, 0, 1);\n}\n",
]


class _Hang(Exception):
    pass


def _alarm(signum, frame):
    raise _Hang


def _fuzz_inputs(n, seed=7):
    r = random.Random(seed)
    for i in range(n):
        kind = i % 10
        if kind < 3:
            yield "".join(r.choice(ALPHABET) for _ in range(r.randint(0, 120)))
        elif kind < 5:
            yield " ".join(r.choice(TOKENS) for _ in range(r.randint(0, 60)))
        elif kind < 8:
            s = list(r.choice(SEEDS))
            for _ in range(r.randint(1, 4)):
                op, j = r.random(), r.randrange(len(s) + 1)
                if op < 0.4:
                    s.insert(j, r.choice(TOKENS))
                elif op < 0.8 and s:
                    del s[min(j, len(s) - 1)]
                elif s:
                    s[min(j, len(s) - 1)] = r.choice(ALPHABET)
            yield "".join(s)
        elif kind < 9:
            yield bytes(r.getrandbits(8) for _ in range(r.randint(0, 80)))
        else:
            yield "".join(chr(r.randint(0, 0x2FFF)) for _ in range(r.randint(0, 40)))


def _large_inputs():
    mb = 1_000_000
    body = "".join(f"let v{i} = {i} * 2 + 1; " for i in range(60000))
    yield ("phenotype p { " + body)[: mb - 20] + " return 1; }"
    yield "phenotype p { return " + "1 + " * (mb // 4 - 10) + "1; }"
    yield "phenotype p { return " + "(" * (mb - 30)
    yield " " * (mb - 30) + "phenotype p { return 1; }"
    yield "phenotype p { return " + "a" * (mb - 30) + "; }"
    yield "phenotype p { return " + "9" * (mb - 30) + "; }"
    yield "@" * mb
    yield bytes(range(256)) * (mb // 256)
    yield ("phenotype p { let s = 0; " + "if (s > 0) { s = s + 1; } else { s = s - 1; } " * 30000)[:mb]
    yield "\n" * mb
    yield "phenotype p { return " + "not " * (mb // 4 - 10) + "1; }"
    yield ("phenotype p { return max(" + "1, " * (mb // 3))[:mb]


def test_criterion_10_parser_robustness():
    names = list(generate_cohort(GeneratorParams(n=5, seed=0)).schema.names)
    old = signal.signal(signal.SIGALRM, _alarm)
    crashes, hangs, parsed, worst, n = [], 0, 0, 0.0, 0
    # time the parser, not full collections over objects other tests left behind
    gc.collect()
    gc.freeze()
    try:
        for src in list(_large_inputs()) + list(_fuzz_inputs(100_000 - 12)):
            n += 1
            assert len(src) <= 1_000_000
            signal.setitimer(signal.ITIMER_REAL, 2.0)
            t0 = time.perf_counter()
            try:
                out = parse(src, names)
                parsed += isinstance(out, PhenotypeProgram)
            except ParseError:
                pass
            except _Hang:
                hangs += 1
            except Exception as exc:  # anything else is a crash
                crashes.append(f"{type(exc).__name__}: {exc}"[:120])
            finally:
                signal.setitimer(signal.ITIMER_REAL, 0)
            worst = max(worst, time.perf_counter() - t0)
    finally:
        signal.signal(signal.SIGALRM, old)
        gc.unfreeze()
    ok = n == 100_000 and not crashes and not hangs and worst <= 0.1
    record(10, ok, f"{n} inputs (12 near 1 MB), {parsed} parsed, crashes {len(crashes)}"
                   f"{' e.g. ' + crashes[0] if crashes else ''}, slowest {worst * 1000:.1f} ms")
