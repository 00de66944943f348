"""Feedback forms: turn a query into human-judgeable statements and map the
judgments back to per-token rewards.

Eight statement types exist; each fires off the shape of the query:

  Town                   OSM tags of `area`
  Reference Point        OSM tags of the `center` point of interest
  POI(s)                 tags of `search` if `center` is set, else of `nwr`
  Question Type          arguments of `qtype`
  Proximity              `around` is present
  Restriction: Closest   `around` and `topx` are present
  Distance               argument of `maxdist`
  Cardinal Direction     `north`, `east`, `south` or `west` is present

Statements appear in that fixed trigger order.  Every statement records the
query token positions it covers; a "No" judgment zeroes exactly those
positions, all other tokens (including purely structural ones) keep reward 1,
and the sequence reward is 1 iff every statement is judged "Yes".
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import IncompleteJudgmentsError
from .mrl import (CARDINAL_OPS, DEFAULT_DISTANCES, LinearQuery, PosNode,
                  parse_nodes)

TOWN = "Town"
REFERENCE_POINT = "Reference Point"
POIS = "POI(s)"
QUESTION_TYPE = "Question Type"
PROXIMITY = "Proximity: Around/Near"
CLOSEST = "Restriction: Closest"
DISTANCE = "Distance"
CARDINAL = "Cardinal Direction"

STATEMENT_TYPES = (TOWN, REFERENCE_POINT, POIS, QUESTION_TYPE, PROXIMITY,
                   CLOSEST, DISTANCE, CARDINAL)

QTYPE_TEXT = {"count": "how many (a count)", "latlong": "where (locations)",
              "existence": "is there (yes or no)"}


@dataclass(frozen=True)
class Statement:
    type: str
    text: str
    covered: tuple[int, ...]
    tooltip: str = ""

    def __post_init__(self):
        if self.type not in STATEMENT_TYPES:
            raise ValueError(f"unknown statement type {self.type!r}")


@dataclass(frozen=True)
class StatementBlock:
    question: str
    query: str
    statements: tuple[Statement, ...]


@dataclass(frozen=True)
class FeedbackRecord:
    judgments: tuple[bool, ...]  # True = Yes
    elapsed_seconds: float = 0.0
    annotator_id: str = ""

    def __post_init__(self):
        if self.elapsed_seconds < 0:
            raise ValueError("elapsed time must be >= 0")


def _pretty(value: str) -> str:
    return value.replace("_", " ")


def _keyval_leaves(node: PosNode) -> list[tuple[PosNode, PosNode]]:
    """(key leaf, value leaf) for every keyval under ``node``."""
    return [(kv.children[0], kv.children[1]) for kv in node.find("keyval")]


def _tag_statement(stype: str, text: str, key: PosNode, value: PosNode,
                   table: dict[str, str]) -> Statement:
    tip = table.get(f"{key.label}={value.label}", table.get(key.label, ""))
    return Statement(stype, text, (key.index, value.index), tip)


def generate_statements(query: str | LinearQuery, question: str = "",
                        descriptions: dict[str, str] | None = None) -> StatementBlock:
    """Build the statement block for a valid query, statements in trigger
    order.  Deterministic: the same query yields the identical block."""
    lq = query if isinstance(query, LinearQuery) else LinearQuery.parse(str(query))
    root = parse_nodes(lq)
    table = descriptions if descriptions is not None else default_descriptions()
    stmts: list[Statement] = []

    for area in root.find("area"):
        for key, value in _keyval_leaves(area):
            stmts.append(_tag_statement(
                TOWN, f"The question is about the town {_pretty(value.label)}.",
                key, value, table))

    centers = root.find("center")
    for center in centers:
        for key, value in _keyval_leaves(center.children[1]):
            stmts.append(_tag_statement(
                REFERENCE_POINT,
                f"Everything is relative to the reference point {_pretty(value.label)}.",
                key, value, table))

    poi_hosts = [s.children[0] for s in root.find("search")] if centers else root.find("nwr")
    for host in poi_hosts:
        for key, value in _keyval_leaves(host):
            stmts.append(_tag_statement(
                POIS, f"The question looks for points of interest tagged "
                      f"{key.label} : {_pretty(value.label)}.",
                key, value, table))

    for qt in root.find("qtype"):
        arg = qt.children[0]
        covered = tuple(range(*arg.span()))
        if arg.label == "findkey":
            key = arg.children[0].label
            stmts.append(Statement(
                QUESTION_TYPE, f"The question asks for the value of the key '{key}'.",
                covered, table.get(key, "")))
        else:
            text = QTYPE_TEXT.get(arg.label, arg.label)
            stmts.append(Statement(
                QUESTION_TYPE, f"The question asks: {text}.", covered))

    arounds = root.find("around")
    if arounds:
        stmts.append(Statement(
            PROXIMITY, "The points of interest lie near the reference point.",
            tuple(a.index for a in arounds)))

    for around in arounds:
        for topx in around.find("topx"):
            count = topx.children[0].label
            noun = "points of interest count" if count != "1" else "point of interest counts"
            stmts.append(Statement(
                CLOSEST, f"Only the closest {count} {noun}.",
                tuple(range(*topx.span()))))

    for maxdist in root.find("maxdist"):
        arg = maxdist.children[0]
        meters = DEFAULT_DISTANCES.get(arg.label)
        about = f"within {meters:g} meters" if meters is not None else f"within {arg.label} meters"
        stmts.append(Statement(DISTANCE, f"The search radius is {about}.", (arg.index,)))

    for direction in sorted(CARDINAL_OPS):
        for node in root.find(direction):
            stmts.append(Statement(
                CARDINAL, f"Only the {direction} part of the town counts.",
                (node.index,)))

    n = len(lq.tokens)
    for s in stmts:
        if any(i < 0 or i >= n for i in s.covered):
            raise AssertionError("statement covers an out-of-range token")
    return StatementBlock(question, str(lq), tuple(stmts))


def map_feedback_to_tokens(block: StatementBlock, record: FeedbackRecord) -> list[float]:
    """Token rewards: 0 on tokens covered by any "No" statement, 1 elsewhere."""
    if len(record.judgments) != len(block.statements):
        raise IncompleteJudgmentsError(
            f"expected {len(block.statements)} judgments, got {len(record.judgments)}")
    rewards = [1.0] * len(block.query.split())
    for stmt, yes in zip(block.statements, record.judgments):
        if not yes:
            for i in stmt.covered:
                rewards[i] = 0.0
    return rewards


def sequence_reward(record: FeedbackRecord) -> float:
    return 1.0 if all(record.judgments) else 0.0


def load_descriptions(path) -> dict[str, str]:
    """Parse ``key=value<TAB>description`` (or bare ``key``) lines."""
    table = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            tag, _, description = line.partition("\t")
            table[tag.strip()] = description.strip()
    return table


@lru_cache(maxsize=1)
def default_descriptions() -> dict[str, str]:
    path = resources.files("banditparse").joinpath("data", "tag_descriptions.tsv")
    with resources.as_file(path) as p:
        return load_descriptions(p)


def tooltip_lookup(tag_or_key: str, table: dict[str, str] | None = None) -> str:
    """Description for an ``key=value`` tag or bare key; "" when unknown."""
    table = table if table is not None else default_descriptions()
    return table.get(tag_or_key.strip(), "")
