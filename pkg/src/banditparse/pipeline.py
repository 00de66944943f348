"""End-to-end desk study: corpus, baseline, log, counterfactual runs, report.

Every stage writes its artifact into the study directory and is skipped when
the artifact already exists, so an interrupted study resumes where it left
off.  The stages mirror the learning protocol: generate and split the corpus,
train the supervised baseline once, parse the log split with the frozen
baseline, attach simulated feedback, then run each counterfactual objective
from the same starting point with several seeds.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import cflearn
from .cflearn import CfConfig, LogEntry, OslSchedule, b2s_extract, read_log, write_log
from .corpus import (GenConfig, SupervisedPair, dedupe_pairs, generate_pairs,
                     load_lexicon, read_pairs, split_dataset, tokenize_question,
                     write_pairs)
from .errors import InsufficientDataError
from .evaluation import SystemResult, answer_f1, experiment_report, format_report
from .geo import GeoDatabase
from .policy import Policy, TrainConfig, train_supervised
from .simlog import (LoggingRun, attach_simulated_feedback, create_log,
                     fully_correct_fraction)
from .toydb import default_db
from .vocab import Vocab

log = logging.getLogger(__name__)

#: Table order of the systems in the final report.
SYSTEMS = ("baseline", "dpm", "dpm+osl", "dpm+t", "dpm+t+osl", "b2s")

#: Reweighting schedules compared in the dedicated study (the no-reweighting
#: row is covered by plain DPM+T, the every-validation row by the main runs).
STUDY_SCHEDULES = (OslSchedule.ONCE, OslSchedule.EVERY_EPOCH)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for one desk study; defaults reproduce the checked-in protocol."""

    out_dir: Path
    corpus_seed: int = 7
    split_seed: int = 11
    rounds: int = 800
    corpus_size: int = 1500
    split_sizes: tuple[int, int, int] = (100, 92, 100)
    baseline_seed: int = 1
    sup_epochs: int = 500
    sup_batch_size: int = 16
    sup_validate_every: int = 35
    log_beam: int = 1
    cf_seeds: tuple[int, ...] = (0, 1, 2)
    cf_epochs: int = 10
    cf_batch_size: int = 16
    validations_per_epoch: int = 4
    osl_schedule: OslSchedule = OslSchedule.EVERY_VALIDATION
    minibatch_log_size: int = 100
    minibatch_study_epochs: int = 2
    eval_beam: int = 12
    significance_iterations: int = 10000
    significance_seed: int = 0
    alpha: float = 0.05
    progress: Callable[[str], None] | None = None

    def __post_init__(self):
        if self.corpus_size <= sum(self.split_sizes):
            raise InsufficientDataError(
                f"corpus of {self.corpus_size} leaves no log split beyond "
                f"{sum(self.split_sizes)} supervised/dev/test pairs")
        if not self.cf_seeds:
            raise ValueError("need at least one counterfactual seed")
        object.__setattr__(self, "out_dir", Path(self.out_dir))

    def say(self, message: str) -> None:
        log.info("%s", message)
        if self.progress is not None:
            self.progress(message)


@dataclass
class Corpus:
    """The four splits plus everything needed to train and evaluate on them."""

    pairs: list[SupervisedPair]
    sup: list[SupervisedPair]
    dev: list[SupervisedPair]
    test: list[SupervisedPair]
    log_pool: list[SupervisedPair]
    src_vocab: Vocab
    tgt_vocab: Vocab
    db: GeoDatabase = field(repr=False)

    def gold_by_question(self) -> dict[str, str]:
        return {p.question: str(p.query) for p in self.pairs}


def _slug(objective: str) -> str:
    return objective.replace("+", "-")


class Study:
    """Artifact-path bookkeeping and stage execution for one study directory."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        cfg.out_dir.mkdir(parents=True, exist_ok=True)

    # -- artifact paths -----------------------------------------------------

    def path(self, name: str) -> Path:
        return self.cfg.out_dir / name

    def cf_model_path(self, objective: str, seed: int) -> Path:
        return self.path(f"cf_{_slug(objective)}_s{seed}.npz")

    def cf_trace_path(self, objective: str, seed: int) -> Path:
        return self.path(f"trace_{_slug(objective)}_s{seed}.tsv")

    def schedule_model_path(self, schedule: OslSchedule, seed: int) -> Path:
        return self.path(f"osl_{schedule.value}_s{seed}.npz")

    # -- corpus and splits --------------------------------------------------

    def ensure_corpus(self) -> Corpus:
        cfg = self.cfg
        db = default_db()
        names = ("corpus.tsv", "sup.tsv", "dev.tsv", "test.tsv", "logpool.tsv")
        paths = [self.path(n) for n in names]
        if all(p.exists() for p in paths):
            pairs, sup, dev, test, pool = (read_pairs(p) for p in paths)
        else:
            cfg.say(f"generating corpus ({cfg.corpus_size} pairs)")
            gen = GenConfig(rounds=cfg.rounds, max_pairs=cfg.corpus_size)
            pairs = dedupe_pairs(generate_pairs(load_lexicon(), db, gen,
                                                rng_seed=cfg.corpus_seed))
            if len(pairs) < cfg.corpus_size:
                raise InsufficientDataError(
                    f"generator produced {len(pairs)} distinct pairs, "
                    f"need {cfg.corpus_size}; raise rounds")
            pairs = pairs[:cfg.corpus_size]
            sup, dev, test, pool = split_dataset(pairs, cfg.split_sizes,
                                                 rng_seed=cfg.split_seed)
            for path, chunk in zip(paths, (pairs, sup, dev, test, pool)):
                write_pairs(path, chunk)
        src_path, tgt_path = self.path("src_vocab.txt"), self.path("tgt_vocab.txt")
        if src_path.exists() and tgt_path.exists():
            src_vocab, tgt_vocab = Vocab.load(src_path), Vocab.load(tgt_path)
        else:
            # Vocabularies cover the whole corpus so logged outputs stay
            # representable during counterfactual training.
            src_vocab = Vocab.build([tokenize_question(p.question) for p in pairs])
            tgt_vocab = Vocab.build([str(p.query).split() for p in pairs])
            src_vocab.save(src_path)
            tgt_vocab.save(tgt_path)
        return Corpus(pairs, sup, dev, test, pool, src_vocab, tgt_vocab, db)

    # -- shared evaluation helpers -------------------------------------------

    def dev_validator(self, corpus: Corpus, policy: Policy) -> Callable[[dict], float]:
        dev_q = [p.question for p in corpus.dev]
        dev_gold = [str(p.query) for p in corpus.dev]

        def validate(params: dict) -> float:
            probe = Policy(policy.cfg, params, policy.src_vocab, policy.tgt_vocab)
            out = probe.decode_top1(dev_q)
            return answer_f1([s.query for s in out], dev_gold, corpus.db).f1

        return validate

    def test_verdicts(self, corpus: Corpus, policy: Policy) -> tuple[float, tuple[str, ...]]:
        test_q = [p.question for p in corpus.test]
        test_gold = [str(p.query) for p in corpus.test]
        out = policy.decode_top1(test_q, beam_size=self.cfg.eval_beam)
        report = answer_f1([s.query for s in out], test_gold, corpus.db)
        return report.f1, report.verdicts

    # -- baseline -------------------------------------------------------------

    def ensure_baseline(self, corpus: Corpus) -> Policy:
        cfg = self.cfg
        model_path = self.path("baseline.npz")
        if model_path.exists():
            return Policy.load(model_path)
        cfg.say("training supervised baseline")
        policy = Policy.fresh(corpus.src_vocab, corpus.tgt_vocab, seed=cfg.baseline_seed)
        src_seqs = [policy.encode_question(p.question) for p in corpus.sup]
        tgt_seqs = [policy.encode_query(p.query) for p in corpus.sup]
        tc = TrainConfig(epochs=cfg.sup_epochs, batch_size=cfg.sup_batch_size,
                         seed=cfg.baseline_seed, validate_every=cfg.sup_validate_every,
                         progress=cfg.progress)
        result = train_supervised(policy.params, policy.cfg, src_seqs, tgt_seqs,
                                  validate=self.dev_validator(corpus, policy), tc=tc)
        policy.params = result.best_params
        policy.save(model_path)
        with open(self.path("baseline_history.tsv"), "w") as fh:
            fh.write("update\tepoch\tloss\tdev_f1\n")
            for h in result.history:
                fh.write(f"{h['update']}\t{h['epoch']}\t{h['loss']:.6f}\t"
                         f"{h.get('score', float('nan')):.6f}\n")
        cfg.say(f"baseline best dev F1 {result.best_score:.3f}")
        return policy

    # -- logged feedback -------------------------------------------------------

    def ensure_raw_log(self, corpus: Corpus, baseline: Policy) -> list[LogEntry]:
        """Parse the log split with the frozen baseline; rewards still zero."""
        cfg = self.cfg
        raw_path = self.path("log_raw.tsv")
        if raw_path.exists():
            return read_log(raw_path)
        cfg.say(f"creating log from {len(corpus.log_pool)} questions")
        run = create_log(baseline, [p.question for p in corpus.log_pool],
                         beam_size=cfg.log_beam)
        write_log(list(run.entries), raw_path)
        cfg.say(f"log: {len(run.entries)} entries, {run.discarded} discarded")
        return list(run.entries)

    def ensure_log(self, corpus: Corpus, baseline: Policy) -> list[LogEntry]:
        """Raw log plus simulated gold-comparison feedback."""
        cfg = self.cfg
        log_path = self.path("log.tsv")
        if log_path.exists():
            return read_log(log_path)
        raw = self.ensure_raw_log(corpus, baseline)
        run = LoggingRun(tuple(raw), len(corpus.log_pool) - len(raw),
                         tuple(p.question for p in corpus.log_pool))
        entries = attach_simulated_feedback(run, corpus.gold_by_question())
        write_log(entries, log_path)
        cfg.say(f"simulated feedback: {fully_correct_fraction(entries):.3f} fully correct")
        return entries

    # -- counterfactual runs ----------------------------------------------------

    def ensure_cf_run(self, corpus: Corpus, entries: list[LogEntry],
                      objective: str, seed: int,
                      schedule: OslSchedule | None = None,
                      model_path: Path | None = None,
                      trace_path: Path | None = None,
                      epochs: int | None = None) -> Policy:
        cfg = self.cfg
        schedule = cfg.osl_schedule if schedule is None else schedule
        model_path = self.cf_model_path(objective, seed) if model_path is None else model_path
        trace_path = self.cf_trace_path(objective, seed) if trace_path is None else trace_path
        if model_path.exists():
            return Policy.load(model_path)
        base = Policy.load(self.path("baseline.npz"))
        cfg.say(f"counterfactual {objective} seed {seed} ({schedule.value})")
        cf_cfg = CfConfig(epochs=cfg.cf_epochs if epochs is None else epochs,
                          batch_size=cfg.cf_batch_size, seed=seed,
                          validations_per_epoch=cfg.validations_per_epoch,
                          progress=cfg.progress)
        result = cflearn.train_counterfactual(
            base, entries, objective, schedule=schedule, cfg=cf_cfg,
            validate=self.dev_validator(corpus, base))
        cflearn.write_trace(result.trace, trace_path)
        base.save(model_path)
        cfg.say(f"{objective} seed {seed} best dev F1 {result.best_score:.3f}")
        return base

    # -- full study ---------------------------------------------------------------

    def run(self) -> dict:
        cfg = self.cfg
        t_start = time.time()
        corpus = self.ensure_corpus()
        baseline = self.ensure_baseline(corpus)
        entries = self.ensure_log(corpus, baseline)

        results_path = self.path("results.json")
        results = json.loads(results_path.read_text()) if results_path.exists() else {}

        if "baseline" not in results:
            f1, verdicts = self.test_verdicts(corpus, baseline)
            results["baseline"] = {"f1": [f1], "verdicts": [list(verdicts)]}
            results_path.write_text(json.dumps(results, indent=2))
            cfg.say(f"baseline test F1 {f1:.3f}")

        for objective in SYSTEMS[1:]:
            entry = results.setdefault(
                objective, {"f1": [], "verdicts": [], "seeds": []})
            entry.setdefault("seeds", list(cfg.cf_seeds[:len(entry["f1"])]))
            for seed in cfg.cf_seeds:
                if seed in entry["seeds"]:
                    continue
                policy = self.ensure_cf_run(corpus, entries, objective, seed)
                f1, verdicts = self.test_verdicts(corpus, policy)
                entry["f1"].append(f1)
                entry["verdicts"].append(list(verdicts))
                entry["seeds"].append(seed)
                results_path.write_text(json.dumps(results, indent=2))
                cfg.say(f"{objective} seed {seed} test F1 {f1:.3f}")

        if "schedules" not in results:
            results["schedules"] = self.run_schedule_study(corpus, entries)
            results_path.write_text(json.dumps(results, indent=2))

        if "b2s_stats" not in results:
            extracted = b2s_extract(entries)
            results["b2s_stats"] = {
                "log_size": len(entries),
                "extracted": len(extracted),
                "fully_correct_fraction": fully_correct_fraction(entries),
            }
            results_path.write_text(json.dumps(results, indent=2))

        results["wall_seconds"] = time.time() - t_start
        results_path.write_text(json.dumps(results, indent=2))
        return results

    def run_schedule_study(self, corpus: Corpus, entries: list[LogEntry]) -> dict:
        """Vary how often the reweighting constant is refreshed (token-level
        objective), reusing the main runs for the every-validation row."""
        cfg = self.cfg
        study: dict[str, dict] = {}
        results_path = self.path("results.json")
        results = json.loads(results_path.read_text()) if results_path.exists() else {}
        study["never"] = {"f1": results.get("dpm+t", {}).get("f1", [])}
        study[OslSchedule.EVERY_VALIDATION.value] = {
            "f1": results.get("dpm+t+osl", {}).get("f1", [])}
        for schedule in STUDY_SCHEDULES:
            f1s = []
            for seed in cfg.cf_seeds:
                policy = self.ensure_cf_run(
                    corpus, entries, "dpm+t+osl", seed, schedule=schedule,
                    model_path=self.schedule_model_path(schedule, seed),
                    trace_path=self.path(f"osl_{schedule.value}_s{seed}.tsv"))
                f1, _ = self.test_verdicts(corpus, policy)
                f1s.append(f1)
            study[schedule.value] = {"f1": f1s}
        # Refreshing after every minibatch is only affordable on a log small
        # enough that the full-log pass per update stays cheap.
        small = list(entries[:cfg.minibatch_log_size])
        policy = self.ensure_cf_run(
            corpus, small, "dpm+t+osl", cfg.cf_seeds[0],
            schedule=OslSchedule.EVERY_MINIBATCH,
            model_path=self.schedule_model_path(OslSchedule.EVERY_MINIBATCH, cfg.cf_seeds[0]),
            trace_path=self.path(f"osl_{OslSchedule.EVERY_MINIBATCH.value}_s{cfg.cf_seeds[0]}.tsv"),
            epochs=cfg.minibatch_study_epochs)
        f1, _ = self.test_verdicts(corpus, policy)
        study[OslSchedule.EVERY_MINIBATCH.value] = {
            "f1": [f1], "log_size": len(small)}
        return study

    def evaluate_existing(self) -> dict:
        """Score whatever checkpoints are present on the test split and
        update results.json; nothing is trained here."""
        cfg = self.cfg
        corpus = self.ensure_corpus()
        results_path = self.path("results.json")
        results = json.loads(results_path.read_text()) if results_path.exists() else {}
        if "baseline" not in results:
            f1, verdicts = self.test_verdicts(
                corpus, Policy.load(self.path("baseline.npz")))
            results["baseline"] = {"f1": [f1], "verdicts": [list(verdicts)]}
            cfg.say(f"baseline test F1 {f1:.3f}")
        for objective in SYSTEMS[1:]:
            entry = results.setdefault(
                objective, {"f1": [], "verdicts": [], "seeds": []})
            entry.setdefault("seeds", list(cfg.cf_seeds[:len(entry["f1"])]))
            for seed in cfg.cf_seeds:
                model_path = self.cf_model_path(objective, seed)
                if seed in entry["seeds"] or not model_path.exists():
                    continue
                f1, verdicts = self.test_verdicts(corpus, Policy.load(model_path))
                entry["f1"].append(f1)
                entry["verdicts"].append(list(verdicts))
                entry["seeds"].append(seed)
                cfg.say(f"{objective} seed {seed} test F1 {f1:.3f}")
        results_path.write_text(json.dumps(results, indent=2))
        return results


def compare_models(study: Study, path_a, path_b) -> dict:
    """Test-set comparison of two checkpoints: F1s, delta, and the
    approximate-randomization p-value."""
    from .evaluation import approx_randomization_test

    cfg = study.cfg
    corpus = study.ensure_corpus()
    f1_a, verdicts_a = study.test_verdicts(corpus, Policy.load(path_a))
    f1_b, verdicts_b = study.test_verdicts(corpus, Policy.load(path_b))
    p = approx_randomization_test(verdicts_a, verdicts_b,
                                  iterations=cfg.significance_iterations,
                                  rng_seed=cfg.significance_seed)
    return {"f1_a": f1_a, "f1_b": f1_b, "delta": f1_a - f1_b, "p_value": p}


def system_results(results: dict, cf_seeds: int) -> list[SystemResult]:
    """Shape the raw study output for the significance machinery.  Systems
    with no finished run are left out.  The baseline was trained once; its
    verdicts are repeated per seed so pooled comparisons stay aligned with
    the multi-seed systems."""
    out = []
    for name in SYSTEMS:
        entry = results.get(name)
        if not entry or not entry["f1"]:
            continue
        runs = [tuple(v) for v in entry["verdicts"]]
        scores = list(entry["f1"])
        if name == "baseline":
            runs = runs * cf_seeds
        out.append(SystemResult(name, scores, runs))
    return out


def run_study(cfg: PipelineConfig) -> dict:
    """Execute (or resume) the full study and write the text report."""
    study = Study(cfg)
    results = study.run()
    systems = system_results(results, len(cfg.cf_seeds))
    rows = experiment_report(systems, iterations=cfg.significance_iterations,
                             rng_seed=cfg.significance_seed, alpha=cfg.alpha)
    text = format_report(rows)
    study.path("report.txt").write_text(text + "\n")
    cfg.say(text)
    return results
