"""Machine-readable query language: trees, arity-annotated token strings, validation.

A query is a tree of operators over a small geographic query language.  For
the neural parser the tree is serialized to a flat token sequence by a
pre-order traversal where every token carries its child count, e.g.
``query@2 west@2 area@1 keyval@2 name@0 Paris@s ...``.  String-valued leaves
(OSM values such as city or POI names) get the marker ``@s`` instead of a
number.  The operator inventory and the arities each operator may take live
in a versioned data file (``data/language_table.tsv``), not in code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

from .errors import InvalidTreeError, MalformedQueryError, ParseError

STRING_MARKER = "s"

# Fuzzy distance options of the query language, in meters.
WALKING_DIST = "WALKING_DIST"
DIST_INTOWN = "DIST_INTOWN"
DEFAULT_DISTANCES = {WALKING_DIST: 1000.0, DIST_INTOWN: 5000.0}

CARDINAL_OPS = ("north", "east", "south", "west")
QTYPE_OPS = ("count", "latlong", "existence", "findkey")


def _data_path(name: str):
    return resources.files("banditparse").joinpath("data", name)


class LanguageTable:
    """Maps each declared operator to the set of arities it may take."""

    def __init__(self, arities: dict[str, frozenset[int]]):
        self._arities = dict(arities)

    def __contains__(self, name: str) -> bool:
        return name in self._arities

    def arities(self, name: str) -> frozenset[int]:
        return self._arities.get(name, frozenset())

    def operators(self) -> list[str]:
        return sorted(self._arities)

    @classmethod
    def load(cls, path=None) -> "LanguageTable":
        """Parse a ``name<TAB>arity`` table; repeated names accumulate arities."""
        src = _data_path("language_table.tsv") if path is None else path
        arities: dict[str, set[int]] = {}
        text = src.read_text() if hasattr(src, "read_text") else open(src).read()
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError("expected name<TAB>arity", str(src), lineno)
            name, arity = parts
            try:
                k = int(arity)
            except ValueError:
                raise ParseError(f"bad arity {arity!r}", str(src), lineno) from None
            if k < 0:
                raise ParseError(f"negative arity {k}", str(src), lineno)
            arities.setdefault(name, set()).add(k)
        return cls({n: frozenset(ks) for n, ks in arities.items()})


_default_table: LanguageTable | None = None


def default_table() -> LanguageTable:
    global _default_table
    if _default_table is None:
        _default_table = LanguageTable.load()
    return _default_table


@dataclass(frozen=True)
class Token:
    """A single query token: surface form plus arity marker (``None`` = string leaf)."""

    surface: str
    arity: int | None

    def __post_init__(self):
        if not self.surface:
            raise MalformedQueryError("empty token surface")
        if self.arity is not None and self.arity < 0:
            raise MalformedQueryError(f"negative arity on {self.surface!r}")

    @property
    def is_string(self) -> bool:
        return self.arity is None

    def __str__(self) -> str:
        marker = STRING_MARKER if self.arity is None else str(self.arity)
        return f"{self.surface}@{marker}"

    @classmethod
    def parse(cls, text: str) -> "Token":
        surface, sep, marker = text.rpartition("@")
        if not sep or not surface:
            raise MalformedQueryError(f"token {text!r} lacks an @arity marker")
        if marker == STRING_MARKER:
            return cls(surface, None)
        try:
            return cls(surface, int(marker))
        except ValueError:
            raise MalformedQueryError(f"bad arity marker in {text!r}") from None


@dataclass(frozen=True)
class QueryTree:
    """Operator tree; ``is_string`` marks a string-valued leaf payload."""

    label: str
    children: tuple["QueryTree", ...] = ()
    is_string: bool = False

    def __post_init__(self):
        if not self.label:
            raise InvalidTreeError("empty node label")
        if self.is_string and self.children:
            raise InvalidTreeError("string leaves cannot have children")

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


def op(label: str, *children: QueryTree) -> QueryTree:
    return QueryTree(label, tuple(children))


def leaf(value: str) -> QueryTree:
    return QueryTree(value, (), is_string=True)


@dataclass(frozen=True)
class LinearQuery:
    """Pre-order serialization of a query tree as a whitespace-joined token string."""

    tokens: tuple[Token, ...]

    def __str__(self) -> str:
        return " ".join(str(t) for t in self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def surfaces(self) -> list[str]:
        return [str(t) for t in self.tokens]

    @classmethod
    def parse(cls, text: str) -> "LinearQuery":
        parts = text.split()
        return cls(tuple(Token.parse(p) for p in parts))


def check_tree(tree: QueryTree, table: LanguageTable | None = None) -> None:
    """Raise InvalidTreeError wherever a node disagrees with the arity table.

    Declared operators must carry one of their declared arities; undeclared
    symbols (OSM keys, distance constants, numerals) must be leaves.
    """
    table = table or default_table()
    for node in tree.walk():
        if node.is_string:
            continue
        if node.label in table:
            if len(node.children) not in table.arities(node.label):
                raise InvalidTreeError(
                    f"operator {node.label!r} has {len(node.children)} children,"
                    f" allowed: {sorted(table.arities(node.label))}"
                )
        elif node.children:
            raise InvalidTreeError(
                f"undeclared symbol {node.label!r} cannot have children"
            )


def linearize(tree: QueryTree, table: LanguageTable | None = None) -> LinearQuery:
    """Pre-order serialization with ``@arity`` suffixes; string leaves get ``@s``."""
    check_tree(tree, table)
    tokens: list[Token] = []

    def visit(node: QueryTree):
        if node.is_string:
            tokens.append(Token(node.label, None))
        else:
            tokens.append(Token(node.label, len(node.children)))
            for child in node.children:
                visit(child)

    visit(tree)
    return LinearQuery(tuple(tokens))


def delinearize(q: LinearQuery) -> QueryTree:
    """Rebuild the unique tree whose pre-order serialization is ``q``.

    Purely structural: consumes tokens left-to-right by their own arity
    markers.  Raises MalformedQueryError when the sequence underflows or
    leaves tokens unconsumed, which happens routinely for parser outputs.
    """
    tokens = q.tokens
    pos = 0

    def consume() -> QueryTree:
        nonlocal pos
        if pos >= len(tokens):
            raise MalformedQueryError("token sequence ended mid-tree")
        tok = tokens[pos]
        pos += 1
        if tok.is_string:
            return leaf(tok.surface)
        children = tuple(consume() for _ in range(tok.arity))
        return QueryTree(tok.surface, children)

    if not tokens:
        raise MalformedQueryError("empty token sequence")
    tree = consume()
    if pos != len(tokens):
        raise MalformedQueryError(f"{len(tokens) - pos} trailing tokens")
    return tree


def validate(q: LinearQuery, table: LanguageTable | None = None) -> bool:
    """True iff ``q`` delinearizes, conforms to the table, and has a proper root."""
    table = table or default_table()
    try:
        tree = delinearize(q)
        check_tree(tree, table)
    except (MalformedQueryError, InvalidTreeError):
        return False
    if tree.label != "query":
        return False
    qtype_children = [c for c in tree.children if not c.is_string and c.label == "qtype"]
    return len(qtype_children) == 1


@dataclass(frozen=True)
class PosNode:
    """Parse node annotated with its token position, for statement back-mapping."""

    label: str
    is_string: bool
    index: int
    children: tuple["PosNode", ...] = field(default=())

    def span(self) -> tuple[int, int]:
        """Token index range [start, end) covered by this subtree."""
        end = self.index + 1
        for child in self.children:
            end = child.span()[1]
        return self.index, end

    def find(self, label: str):
        """All non-string descendants (including self) with the given label."""
        out = []
        if not self.is_string and self.label == label:
            out.append(self)
        for child in self.children:
            out.extend(child.find(label))
        return out


def parse_nodes(q: LinearQuery) -> PosNode:
    """Like delinearize, but keeps the token index of every node."""
    tokens = q.tokens
    pos = 0

    def consume() -> PosNode:
        nonlocal pos
        if pos >= len(tokens):
            raise MalformedQueryError("token sequence ended mid-tree")
        tok = tokens[pos]
        index = pos
        pos += 1
        if tok.is_string:
            return PosNode(tok.surface, True, index)
        children = tuple(consume() for _ in range(tok.arity))
        return PosNode(tok.surface, False, index, children)

    if not tokens:
        raise MalformedQueryError("empty token sequence")
    node = consume()
    if pos != len(tokens):
        raise MalformedQueryError(f"{len(tokens) - pos} trailing tokens")
    return node
