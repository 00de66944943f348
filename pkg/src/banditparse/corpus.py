"""Synthetic question-query corpus generation by placeholder sampling.

For every expression-tag pair in the lexicon, each sampling round draws a
city (``$LOC``), a question type (``$QTYPE``, uniform over the four primary
types), and depending on the structural form a reference point (``$POI``),
an answer key (``$KEY``, drawn from keys actually present on matching
objects so the query is answerable) and a distance option (``$DIST``,
walking distance adds "in walking distance" to the question).  Every
generated gold query validates and executes to a non-empty answer on the
generation database.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from importlib import resources

from . import mrl
from .errors import InsufficientDataError, ParseError
from .geo import GeoDatabase, GeoObject
from .mrl import DIST_INTOWN, WALKING_DIST, LinearQuery, QueryTree, leaf, linearize, op

log = logging.getLogger(__name__)

QTYPES = ("count", "latlong", "existence", "findkey")
STRUCTURES = ("plain", "around", "closest", "cardinal")
CLOSEST_QTYPES = ("latlong", "findkey")

_PUNCT = str.maketrans("", "", "?.!,;:")


def tokenize_question(text: str) -> list[str]:
    return text.lower().translate(_PUNCT).split()


@dataclass(frozen=True)
class ExpressionTagPair:
    expression: str
    key: str
    value: str

    def __post_init__(self):
        if not self.expression or not self.key or not self.value:
            raise ParseError("empty lexicon field")


@dataclass(frozen=True)
class SupervisedPair:
    question: str
    query: LinearQuery

    def line(self) -> str:
        return f"{self.question}\t{self.query}"


def load_lexicon(path=None) -> list[ExpressionTagPair]:
    """Parse ``expression<TAB>key=value`` lines."""
    src = resources.files("banditparse").joinpath("data", "lexicon.tsv") if path is None else path
    text = src.read_text() if hasattr(src, "read_text") else open(src).read()
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or "=" not in parts[1]:
            raise ParseError("expected expression<TAB>key=value", str(src), lineno)
        key, _, value = parts[1].partition("=")
        pairs.append(ExpressionTagPair(parts[0], key, value))
    return pairs


def load_templates(path=None) -> dict[str, str]:
    src = resources.files("banditparse").joinpath("data", "templates.tsv") if path is None else path
    text = src.read_text() if hasattr(src, "read_text") else open(src).read()
    templates = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        name, sep, template = line.partition("\t")
        if not sep:
            raise ParseError("expected name<TAB>template", str(src), lineno)
        templates[name] = template
    return templates


# -- query construction -------------------------------------------------

def kv(key: str, value: str) -> QueryTree:
    return op("keyval", QueryTree(key), leaf(value))


def area_of(city: str) -> QueryTree:
    return op("area", kv("name", city))


def qtype_node(qtype: str, key: str | None = None) -> QueryTree:
    if qtype == "findkey":
        return op("qtype", op("findkey", QueryTree(key)))
    return op("qtype", op(qtype))


def build_query(structure: str, qtype: str, tag: tuple[str, str], loc: str,
                poi: str | None = None, key: str | None = None,
                dist: str | None = None, direction: str | None = None) -> QueryTree:
    nwr = op("nwr", kv(*tag))
    qt = qtype_node(qtype, key)
    if structure == "plain":
        return op("query", area_of(loc), nwr, qt)
    if structure == "cardinal":
        return op("query", op(direction, area_of(loc), nwr), qt)
    center = op("center", area_of(loc), op("nwr", kv("name", poi)))
    around_children = [center, op("search", nwr), op("maxdist", QueryTree(dist))]
    if structure == "closest":
        around_children.append(op("topx", QueryTree("1")))
    return op("query", op("around", *around_children), qt)


# -- generation ----------------------------------------------------------

@dataclass
class GenConfig:
    rounds: int = 2
    max_pairs: int | None = None
    structure_weights: dict[str, float] = field(default_factory=lambda: {
        "plain": 0.5, "around": 0.2, "closest": 0.15, "cardinal": 0.15})
    poi_attempts: int = 8


class _TagIndex:
    """Per-tag matching objects grouped by city, precomputed once."""

    def __init__(self, db: GeoDatabase):
        self.db = db
        self.city_objects = {name: db.objects_in_area(name) for name in db.area_names()}

    def matches(self, tag: tuple[str, str], city: str) -> list[GeoObject]:
        key, value = tag
        return [o for o in self.city_objects[city] if o.tags.get(key) == value]

    def cities_with(self, tag: tuple[str, str]) -> list[str]:
        return [c for c in sorted(self.city_objects) if self.matches(tag, c)]


def _answer_ok(db: GeoDatabase, tree: QueryTree, qtype: str) -> bool:
    from .geo import execute

    try:
        ans = execute(db, tree)
    except Exception:
        return False
    if ans.is_empty():
        return False
    if qtype == "count":
        return int(ans.values[0]) > 0
    if qtype == "existence":
        return ans.values[0] == "yes"
    return True


def _sample_one(rng: random.Random, entry: ExpressionTagPair, index: _TagIndex,
                templates: dict[str, str], config: GenConfig) -> SupervisedPair | None:
    db = index.db
    tag = (entry.key, entry.value)
    cities = index.cities_with(tag)
    if not cities:
        return None
    loc = rng.choice(cities)
    names = sorted(config.structure_weights)
    weights = [config.structure_weights[n] for n in names]
    structure = rng.choices(names, weights=weights)[0]
    qtype = rng.choice(CLOSEST_QTYPES if structure == "closest" else QTYPES)

    key = None
    if qtype == "findkey":
        keys = sorted({k for o in index.matches(tag, loc) for k in o.tags})
        key = rng.choice(keys)

    poi = dist = direction = None
    tree = None
    if structure in ("around", "closest"):
        pool = [o for o in index.city_objects[loc] if o.name()]
        for _ in range(config.poi_attempts):
            poi = rng.choice(pool).name()
            dist = rng.choice((WALKING_DIST, DIST_INTOWN))
            candidate = build_query(structure, qtype, tag, loc, poi=poi, key=key, dist=dist)
            if _answer_ok(db, candidate, qtype):
                tree = candidate
                break
        if tree is None:
            structure = "plain"
    elif structure == "cardinal":
        for direction in rng.sample(mrl.CARDINAL_OPS, len(mrl.CARDINAL_OPS)):
            candidate = build_query(structure, qtype, tag, loc, key=key, direction=direction)
            if _answer_ok(db, candidate, qtype):
                tree = candidate
                break
        else:
            structure = "plain"

    if structure == "plain":
        tree = build_query("plain", qtype, tag, loc, key=key)
        if not _answer_ok(db, tree, qtype):
            return None

    base = f"{qtype}.{structure}"
    variants = [t for name, t in sorted(templates.items())
                if name == base or name.startswith(base + ".")]
    if not variants:
        raise KeyError(f"no template for {base}")
    question = rng.choice(variants).format(
        expr=entry.expression,
        loc=loc,
        poi=(poi or "").replace("_", " "),
        key=(key or "").replace("_", " "),
        dist=" in walking distance" if dist == WALKING_DIST else "",
        dir=direction or "",
    )
    return SupervisedPair(question, linearize(tree))


def generate_pairs(lexicon: list[ExpressionTagPair], db: GeoDatabase,
                   config: GenConfig, rng_seed: int,
                   templates: dict[str, str] | None = None) -> list[SupervisedPair]:
    """Sample ``config.rounds`` question-query pairs per lexicon entry.

    Entries whose tag matches nothing anywhere are skipped (logged once).
    Duplicates across rounds are kept here; deduplicate with
    :func:`dedupe_pairs` when assembling a corpus.
    """
    rng = random.Random(rng_seed)
    index = _TagIndex(db)
    templates = load_templates() if templates is None else templates
    pairs: list[SupervisedPair] = []
    skipped: set[str] = set()
    for round_no in range(config.rounds):
        for entry in lexicon:
            sample = _sample_one(rng, entry, index, templates, config)
            if sample is None:
                if entry.expression not in skipped:
                    skipped.add(entry.expression)
                    log.warning("no matching objects for %s=%s (%r), skipping",
                                entry.key, entry.value, entry.expression)
                continue
            pairs.append(sample)
        if config.max_pairs is not None and len(dedupe_pairs(pairs)) >= config.max_pairs:
            break
    return pairs


def dedupe_pairs(pairs: list[SupervisedPair]) -> list[SupervisedPair]:
    """Drop exact duplicates, keeping first occurrences in order."""
    seen = set()
    out = []
    for p in pairs:
        fp = (p.question, str(p.query))
        if fp not in seen:
            seen.add(fp)
            out.append(p)
    return out


def split_dataset(pairs: list[SupervisedPair], sizes: tuple[int, int, int],
                  rng_seed: int):
    """Shuffle and cut into (sup, dev, test, log); the remainder is the log."""
    n_sup, n_dev, n_test = sizes
    if n_sup + n_dev + n_test > len(pairs):
        raise InsufficientDataError(
            f"need {n_sup + n_dev + n_test} pairs, have {len(pairs)}")
    shuffled = list(pairs)
    random.Random(rng_seed).shuffle(shuffled)
    sup = shuffled[:n_sup]
    dev = shuffled[n_sup:n_sup + n_dev]
    test = shuffled[n_sup + n_dev:n_sup + n_dev + n_test]
    rest = shuffled[n_sup + n_dev + n_test:]
    return sup, dev, test, rest


def write_pairs(path, pairs: list[SupervisedPair]) -> None:
    with open(path, "w") as fh:
        for p in pairs:
            fh.write(p.line() + "\n")


def read_pairs(path) -> list[SupervisedPair]:
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            question, sep, query = line.partition("\t")
            if not sep:
                raise ParseError("expected question<TAB>query", str(path), lineno)
            pairs.append(SupervisedPair(question, LinearQuery.parse(query)))
    return pairs
