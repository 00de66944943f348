"""Answer-level F1 evaluation and significance testing.

Recall is the fraction of fully correct answers over all questions; precision
is the fraction of correct answers among those with non-empty answers; F1 is
their harmonic mean.  An answer is correct iff it fully equals the gold
answer (set semantics for list answers; both sides executed against the same
database).  Queries that fail to parse or execute count as empty.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geo import GeoDatabase, execute_linear


@dataclass(frozen=True)
class F1Report:
    precision: float
    recall: float
    f1: float
    verdicts: tuple[str, ...]  # per question: "correct" | "wrong" | "empty"
    correct: int
    nonempty: int
    total: int
    degenerate_precision: bool = False

    def __post_init__(self):
        if self.correct != sum(v == "correct" for v in self.verdicts):
            raise ValueError("correct count disagrees with verdicts")
        if self.nonempty != sum(v != "empty" for v in self.verdicts):
            raise ValueError("non-empty count disagrees with verdicts")


def harmonic_f1(precision: float, recall: float) -> float:
    if precision <= 0.0 or recall <= 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def judge_one(system_query: str, gold_query: str, db: GeoDatabase) -> str:
    """Verdict for one question; any failure on the system side is "empty"."""
    system_answer = execute_linear(db, system_query)
    if system_answer is None or system_answer.is_empty():
        return "empty"
    gold_answer = execute_linear(db, gold_query)
    return "correct" if gold_answer is not None and system_answer == gold_answer else "wrong"


def report_from_verdicts(verdicts: Sequence[str]) -> F1Report:
    verdicts = tuple(verdicts)
    total = len(verdicts)
    correct = sum(v == "correct" for v in verdicts)
    nonempty = sum(v != "empty" for v in verdicts)
    recall = correct / total if total else 0.0
    degenerate = nonempty == 0
    precision = 0.0 if degenerate else correct / nonempty
    return F1Report(precision, recall, harmonic_f1(precision, recall), verdicts,
                    correct, nonempty, total, degenerate_precision=degenerate)


def answer_f1(system_queries: Sequence[str], gold_queries: Sequence[str],
              db: GeoDatabase) -> F1Report:
    if len(system_queries) != len(gold_queries):
        raise ValueError("system and gold query lists must align")
    return report_from_verdicts(
        [judge_one(s, g, db) for s, g in zip(system_queries, gold_queries)])


def f1_from_verdicts(verdicts: Sequence[str]) -> float:
    return report_from_verdicts(verdicts).f1


def approx_randomization_test(verdicts_a: Sequence[str], verdicts_b: Sequence[str],
                              iterations: int = 10000, rng_seed: int = 0) -> float:
    """Two-sided approximate randomization test on the F1 difference: swap the
    two systems' outputs per question with probability 1/2 and count how often
    the swapped difference is at least the observed one."""
    if len(verdicts_a) != len(verdicts_b):
        raise ValueError("verdict lists must align")
    a = np.asarray(verdicts_a, dtype=object)
    b = np.asarray(verdicts_b, dtype=object)
    observed = abs(f1_from_verdicts(a) - f1_from_verdicts(b))
    rng = np.random.default_rng(rng_seed)
    at_least = 0
    for _ in range(iterations):
        swap = rng.integers(0, 2, size=len(a)).astype(bool)
        sa = np.where(swap, b, a)
        sb = np.where(swap, a, b)
        if abs(f1_from_verdicts(sa) - f1_from_verdicts(sb)) >= observed - 1e-15:
            at_least += 1
    return (at_least + 1) / (iterations + 1)


# ---------------------------------------------------------------------------
# multi-run experiment tables


@dataclass
class SystemResult:
    """All runs of one system; verdict lists enable significance testing."""

    name: str
    f1_scores: list[float]
    verdict_runs: list[tuple[str, ...]] = field(default_factory=list)

    def mean(self) -> float:
        return float(np.mean(self.f1_scores))

    def stddev(self) -> float:
        # population stddev; with a single run this is 0
        return float(np.std(self.f1_scores))


@dataclass(frozen=True)
class ReportRow:
    number: int
    name: str
    mean: float
    stddev: float
    delta: float           # vs the first (baseline) system
    beats: tuple[int, ...]  # 1-based numbers of systems beaten at p < 0.05


def pooled_verdicts(system: SystemResult) -> tuple[str, ...]:
    out: list[str] = []
    for run in system.verdict_runs:
        out.extend(run)
    return tuple(out)


def experiment_report(systems: Sequence[SystemResult], iterations: int = 10000,
                      rng_seed: int = 0, alpha: float = 0.05) -> list[ReportRow]:
    """Rows in input order, first system is the baseline.  Significance is
    tested pairwise on verdicts pooled across runs; system i is marked as
    beating j when its pooled F1 is higher and the test rejects at alpha."""
    if not systems:
        raise ValueError("need at least one system")
    rows = []
    for i, sys_i in enumerate(systems):
        beats = []
        for j, sys_j in enumerate(systems):
            if i == j or not sys_i.verdict_runs or not sys_j.verdict_runs:
                continue
            vi, vj = pooled_verdicts(sys_i), pooled_verdicts(sys_j)
            if f1_from_verdicts(vi) <= f1_from_verdicts(vj):
                continue
            p = approx_randomization_test(vi, vj, iterations, rng_seed)
            if p < alpha:
                beats.append(j + 1)
        rows.append(ReportRow(i + 1, sys_i.name, sys_i.mean(), sys_i.stddev(),
                              sys_i.mean() - systems[0].mean(), tuple(beats)))
    return rows


def format_report(rows: Sequence[ReportRow], scale: float = 100.0) -> str:
    """Aligned text table, F1 in percent like the reference tables."""
    lines = [f"{'#':>2}  {'system':<14} {'F1':>14} {'dF1':>7}  beats"]
    for r in rows:
        mean = f"{r.mean * scale:.2f}"
        spread = f"+-{r.stddev * scale:.2f}"
        delta = f"{r.delta * scale:+.2f}" if r.number > 1 else ""
        beats = ",".join(str(b) for b in r.beats)
        lines.append(f"{r.number:>2}  {r.name:<14} {mean:>7} {spread:>6} {delta:>7}  {beats}")
    return "\n".join(lines)
