"""Deterministic logging with a frozen baseline policy, plus simulated
feedback against gold queries.

The logging policy always emits its most likely output (top-1 beam), so all
propensities are 1.  Outputs whose token sequence does not form a tree are
discarded and counted, mirroring a production system that rejects unparseable
queries before showing them to anyone.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import mrl
from .cflearn import LogEntry
from .errors import BanditParseError


@dataclass(frozen=True)
class LoggingRun:
    entries: tuple[LogEntry, ...]
    discarded: int
    questions: tuple[str, ...]

    def __post_init__(self):
        if len(self.entries) + self.discarded != len(self.questions):
            raise ValueError("logged + discarded must partition the questions")


def create_log(policy, questions: list[str], beam_size: int = 1,
               batch_size: int = 64) -> LoggingRun:
    """Parse every question with the frozen policy; keep structurally valid
    outputs as zero-reward entries (feedback is attached later)."""
    entries: list[LogEntry] = []
    discarded = 0
    for start in range(0, len(questions), batch_size):
        chunk = questions[start:start + batch_size]
        for question, top in zip(chunk, policy.decode_top1(chunk, beam_size)):
            try:
                mrl.delinearize(mrl.LinearQuery.parse(top.query))
            except BanditParseError:
                discarded += 1
                continue
            entries.append(LogEntry(question, top.query, 0.0))
    return LoggingRun(tuple(entries), discarded, tuple(questions))


def simulate_seq_feedback(entry: LogEntry, gold: str) -> float:
    """1 iff the logged query is string-identical to the gold query."""
    return 1.0 if entry.query == gold else 0.0


def simulate_token_feedback(entry: LogEntry, gold: str) -> tuple[float, ...]:
    """Positionwise comparison over the logged output's tokens; logged
    positions beyond the gold length score 0."""
    logged = entry.query.split()
    gold_tokens = gold.split()
    return tuple(1.0 if j < len(gold_tokens) and tok == gold_tokens[j] else 0.0
                 for j, tok in enumerate(logged))


def attach_simulated_feedback(run: LoggingRun, gold_by_question: dict[str, str]) -> list[LogEntry]:
    """Rewrite every entry with simulated sequence- and token-level rewards."""
    out = []
    for e in run.entries:
        gold = gold_by_question[e.question]
        out.append(LogEntry(e.question, e.query, simulate_seq_feedback(e, gold),
                            simulate_token_feedback(e, gold)))
    return out


def fully_correct_fraction(entries: list[LogEntry]) -> float:
    if not entries:
        return 0.0
    return sum(1 for e in entries if e.seq_reward == 1.0) / len(entries)
