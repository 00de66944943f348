"""Command-line entry point: one subcommand per pipeline stage.

The stages form a chain over a shared study directory::

    gen-corpus -> train-sup -> make-log -> simulate-feedback -> train-cf -> eval -> report
                                        \\-> serve-feedback (human judgments over HTTP)

Every stage is resumable: artifacts that already exist are loaded instead of
recomputed, so rerunning a command is cheap and identical seeds reproduce
identical reports.  Configuration comes from flags or an optional JSON file
(``--config``) whose keys match the PipelineConfig fields; flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields as dataclass_fields
from pathlib import Path

from .cflearn import OBJECTIVES, OslSchedule, read_log, write_log
from .errors import BanditParseError
from .pipeline import PipelineConfig, Study, compare_models
from .service import FormStore, serve

log = logging.getLogger(__name__)


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    """Merge defaults, the optional JSON config file, and explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        values.update(json.loads(Path(args.config).read_text()))
    field_names = {f.name for f in dataclass_fields(PipelineConfig)}
    unknown = set(values) - field_names
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    for name in ("corpus_seed", "split_seed", "rounds", "corpus_size",
                 "baseline_seed", "eval_beam"):
        if getattr(args, name, None) is not None:
            values[name] = getattr(args, name)
    if "osl_schedule" in values:
        values["osl_schedule"] = OslSchedule.parse(values["osl_schedule"])
    if "cf_seeds" in values:
        values["cf_seeds"] = tuple(values["cf_seeds"])
    if "split_sizes" in values:
        values["split_sizes"] = tuple(values["split_sizes"])
    values["out_dir"] = Path(args.study)
    if not args.quiet:
        values["progress"] = lambda msg: print(msg, file=sys.stderr)
    return PipelineConfig(**values)


def cmd_gen_corpus(args) -> int:
    study = Study(_build_config(args))
    corpus = study.ensure_corpus()
    print(f"corpus {len(corpus.pairs)} pairs: sup {len(corpus.sup)} "
          f"dev {len(corpus.dev)} test {len(corpus.test)} log {len(corpus.log_pool)}")
    return 0


def cmd_train_sup(args) -> int:
    cfg = _build_config(args)
    if args.epochs is not None:
        cfg = PipelineConfig(**{**_config_dict(cfg), "sup_epochs": args.epochs})
    study = Study(cfg)
    corpus = study.ensure_corpus()
    baseline = study.ensure_baseline(corpus)
    f1, _ = study.test_verdicts(corpus, baseline)
    print(f"baseline test F1 {f1:.4f}")
    return 0


def cmd_make_log(args) -> int:
    study = Study(_build_config(args))
    corpus = study.ensure_corpus()
    baseline = study.ensure_baseline(corpus)
    entries = study.ensure_raw_log(corpus, baseline)
    print(f"log_raw.tsv: {len(entries)} entries")
    return 0


def cmd_simulate_feedback(args) -> int:
    study = Study(_build_config(args))
    corpus = study.ensure_corpus()
    baseline = study.ensure_baseline(corpus)
    entries = study.ensure_log(corpus, baseline)
    fully = sum(1 for e in entries if e.seq_reward == 1.0)
    print(f"log.tsv: {len(entries)} entries, {fully} fully correct")
    return 0


def cmd_serve_feedback(args) -> int:
    study = Study(_build_config(args))
    raw_path = study.path("log_raw.tsv")
    if not raw_path.exists():
        print("run make-log first: no log_raw.tsv in the study directory",
              file=sys.stderr)
        return 1
    entries = read_log(raw_path)
    store = FormStore([(e.question, e.query) for e in entries],
                      study.path("feedback_events.jsonl"),
                      reserve_timeout=args.reserve_timeout)
    server = serve(store, host=args.host, port=args.port,
                   static_dir=args.static_dir)
    host, port = server.server_address[:2]
    print(f"serving feedback forms on http://{host}:{port}/ "
          f"({store.progress()['forms_total']} forms); Ctrl-C to stop")
    try:
        while True:
            time.sleep(1.0)
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        judged = store.export_entries()
        write_log(judged, study.path("log.tsv"))
        study.path("timing.json").write_text(
            json.dumps(store.timing_summary(), indent=2))
        print(f"wrote {len(judged)} judged entries to log.tsv")
    return 0


def cmd_train_cf(args) -> int:
    study = Study(_build_config(args))
    corpus = study.ensure_corpus()
    baseline = study.ensure_baseline(corpus)
    entries = study.ensure_log(corpus, baseline)
    schedule = OslSchedule.parse(args.schedule) if args.schedule else None
    seeds = [args.seed] if args.seed is not None else list(study.cfg.cf_seeds)
    for seed in seeds:
        policy = study.ensure_cf_run(corpus, entries, args.objective, seed,
                                     schedule=schedule, epochs=args.epochs)
        f1, _ = study.test_verdicts(corpus, policy)
        print(f"{args.objective} seed {seed} test F1 {f1:.4f}")
    return 0


def cmd_eval(args) -> int:
    study = Study(_build_config(args))
    if args.model:
        against = args.against or str(study.path("baseline.npz"))
        outcome = compare_models(study, args.model, against)
        print(f"F1 {outcome['f1_a']:.4f} vs {outcome['f1_b']:.4f}  "
              f"delta {outcome['delta']:+.4f}  p {outcome['p_value']:.4f}")
        return 0
    results = study.evaluate_existing()
    evaluated = [k for k in results if k not in ("schedules", "b2s_stats", "wall_seconds")]
    print(f"evaluated systems: {', '.join(evaluated)}")
    return 0


def cmd_report(args) -> int:
    from .reporting import render_study

    cfg = _build_config(args)
    results_path = cfg.out_dir / "results.json"
    if not results_path.exists():
        print("no results.json in the study directory; run eval first",
              file=sys.stderr)
        return 1
    written = render_study(cfg.out_dir, cfg)
    print((cfg.out_dir / "report.txt").read_text(), end="")
    for path in written:
        print(f"wrote {path}")
    return 0


def _config_dict(cfg: PipelineConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in dataclass_fields(PipelineConfig)}


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--study", required=True, help="study artifact directory")
    sub.add_argument("--config", help="JSON file with PipelineConfig keys")
    sub.add_argument("--quiet", action="store_true", help="suppress progress lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="banditparse",
        description="counterfactual learning for a neural semantic parser")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("gen-corpus", help="generate and split the corpus")
    _add_common(p)
    p.add_argument("--corpus-seed", type=int, dest="corpus_seed")
    p.add_argument("--split-seed", type=int, dest="split_seed")
    p.add_argument("--rounds", type=int)
    p.add_argument("--corpus-size", type=int, dest="corpus_size")
    p.set_defaults(func=cmd_gen_corpus)

    p = commands.add_parser("train-sup", help="train the supervised baseline")
    _add_common(p)
    p.add_argument("--baseline-seed", type=int, dest="baseline_seed")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train_sup)

    p = commands.add_parser("make-log", help="parse the log split with the baseline")
    _add_common(p)
    p.set_defaults(func=cmd_make_log)

    p = commands.add_parser("simulate-feedback",
                            help="attach gold-comparison rewards to the log")
    _add_common(p)
    p.set_defaults(func=cmd_simulate_feedback)

    p = commands.add_parser("serve-feedback",
                            help="serve annotation forms over HTTP")
    _add_common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8767)
    p.add_argument("--static-dir", dest="static_dir",
                   help="directory with the annotator UI to serve at /")
    p.add_argument("--reserve-timeout", type=float, dest="reserve_timeout",
                   default=600.0, help="seconds before an unanswered form is re-served")
    p.set_defaults(func=cmd_serve_feedback)

    p = commands.add_parser("train-cf", help="counterfactual training on the log")
    _add_common(p)
    p.add_argument("--objective", required=True, choices=OBJECTIVES)
    p.add_argument("--seed", type=int, help="single seed (default: all configured)")
    p.add_argument("--schedule", help="reweighting schedule override")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train_cf)

    p = commands.add_parser("eval", help="score checkpoints on the test split")
    _add_common(p)
    p.add_argument("--eval-beam", type=int, dest="eval_beam")
    p.add_argument("--model", help="checkpoint to compare against --against")
    p.add_argument("--against", help="second checkpoint (default: baseline)")
    p.set_defaults(func=cmd_eval)

    p = commands.add_parser("report", help="render figures and tables")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BanditParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
