"""Toy in-memory geographic database and query-tree interpreter.

Stands in for a real map database at desk scale: a flat list of tagged
point objects plus named city areas modeled as bounding circles.  The
interpreter executes query trees against it with a linear scan, producing
the answers the F1 evaluation compares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

from . import mrl
from .errors import ExecutionError, ParseError

EARTH_RADIUS_M = 6371000.0


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


@dataclass(frozen=True)
class GeoObject:
    id: int
    lat: float
    lon: float
    tags: dict[str, str]

    def name(self) -> str | None:
        return self.tags.get("name")


@dataclass(frozen=True)
class Area:
    """A named city region: bounding circle around a center point."""

    name: str
    lat: float
    lon: float
    radius_m: float


class GeoDatabase:
    """Immutable after construction; concurrent reads are safe."""

    def __init__(self, objects: list[GeoObject], areas: list[Area]):
        ids = [o.id for o in objects]
        if len(set(ids)) != len(ids):
            raise ParseError("duplicate object ids")
        names = [a.name for a in areas]
        if len(set(names)) != len(names):
            raise ParseError("duplicate area names")
        for o in objects:
            if not (-90 <= o.lat <= 90 and -180 <= o.lon <= 180):
                raise ParseError(f"object {o.id} has out-of-range coordinates")
        self.objects = tuple(sorted(objects, key=lambda o: o.id))
        self.areas = {a.name: a for a in areas}
        self._keys = frozenset(k for o in objects for k in o.tags)

    def known_keys(self) -> frozenset[str]:
        return self._keys

    def area_names(self) -> list[str]:
        return sorted(self.areas)

    def in_area(self, obj: GeoObject, area_name: str) -> bool:
        area = self.areas[area_name]
        return haversine_m(obj.lat, obj.lon, area.lat, area.lon) <= area.radius_m

    def objects_in_area(self, area_name: str) -> list[GeoObject]:
        if area_name not in self.areas:
            raise ExecutionError(f"unknown area {area_name!r}")
        return [o for o in self.objects if self.in_area(o, area_name)]


def load_areas(path=None) -> list[Area]:
    """Parse the city list: ``name<TAB>lat<TAB>lon<TAB>radius_m``."""
    src = resources.files("banditparse").joinpath("data", "cities.tsv") if path is None else path
    text = src.read_text() if hasattr(src, "read_text") else open(src).read()
    areas = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError("expected name<TAB>lat<TAB>lon<TAB>radius_m", str(src), lineno)
        try:
            areas.append(Area(parts[0], float(parts[1]), float(parts[2]), float(parts[3])))
        except ValueError as e:
            raise ParseError(str(e), str(src), lineno) from None
    return areas


def parse_db_line(line: str, lineno: int, path: str) -> GeoObject:
    parts = line.split("\t")
    if len(parts) != 4:
        raise ParseError("expected id<TAB>lat<TAB>lon<TAB>tags", path, lineno)
    try:
        oid, lat, lon = int(parts[0]), float(parts[1]), float(parts[2])
    except ValueError as e:
        raise ParseError(str(e), path, lineno) from None
    tags = {}
    for piece in parts[3].split(";"):
        piece = piece.strip()
        if not piece:
            continue
        key, sep, value = piece.partition("=")
        if not sep or not key or not value:
            raise ParseError(f"malformed tag {piece!r}", path, lineno)
        tags[key] = value
    return GeoObject(oid, lat, lon, tags)


def load_db(path, areas_path=None) -> GeoDatabase:
    """Load ``id<TAB>lat<TAB>lon<TAB>key=value;key=value;...`` object lines."""
    objects = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            objects.append(parse_db_line(line, lineno, str(path)))
    return GeoDatabase(objects, load_areas(areas_path))


@dataclass(frozen=True)
class AnswerSet:
    """Executed answer: kind is fixed by the query's qtype argument."""

    kind: str  # count | boolean | coordinates | list-of-names | key-values
    values: tuple[str, ...]

    def is_empty(self) -> bool:
        return len(self.values) == 0

    def as_set(self) -> frozenset[str]:
        return frozenset(self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AnswerSet):
            return NotImplemented
        return self.kind == other.kind and self.as_set() == other.as_set()

    def __hash__(self):
        return hash((self.kind, self.as_set()))


def format_coord(lat: float, lon: float) -> str:
    return f"{lat:.5f},{lon:.5f}"


def _keyval_pair(node: mrl.QueryTree) -> tuple[str, str]:
    if node.label != "keyval" or len(node.children) != 2:
        raise ExecutionError("expected keyval(key, value)")
    key, value = node.children
    return key.label, value.label


def _expect(node: mrl.QueryTree, label: str) -> mrl.QueryTree:
    if node.is_string or node.label != label:
        raise ExecutionError(f"expected {label!r} node, got {node.label!r}")
    return node


def _match_tag(db: GeoDatabase, objects: list[GeoObject], key: str, value: str) -> list[GeoObject]:
    if key not in db.known_keys():
        raise ExecutionError(f"unknown tag key {key!r}")
    return [o for o in objects if o.tags.get(key) == value]


def _resolve_area_nwr(db: GeoDatabase, area_node, nwr_node) -> list[GeoObject]:
    """Objects inside the area that match the nwr tag filter."""
    area_kv = _keyval_pair(_expect(area_node, "area").children[0])
    if area_kv[0] != "name":
        raise ExecutionError("area must be named via keyval('name', ...)")
    candidates = db.objects_in_area(area_kv[1])
    key, value = _keyval_pair(_expect(nwr_node, "nwr").children[0])
    return _match_tag(db, candidates, key, value)


def _cardinal_filter(db: GeoDatabase, area_name: str, objects: list[GeoObject], direction: str):
    center = db.areas[area_name]
    if direction == "west":
        return [o for o in objects if o.lon < center.lon]
    if direction == "east":
        return [o for o in objects if o.lon > center.lon]
    if direction == "north":
        return [o for o in objects if o.lat > center.lat]
    if direction == "south":
        return [o for o in objects if o.lat < center.lat]
    raise ExecutionError(f"unknown direction {direction!r}")


def _content_objects(db: GeoDatabase, node: mrl.QueryTree, distances: dict[str, float]) -> list[GeoObject]:
    """Evaluate the content part of a query (everything except qtype)."""
    if node.is_string:
        raise ExecutionError("string leaf in content position")

    if node.label in mrl.CARDINAL_OPS:
        area_node, nwr_node = node.children
        matches = _resolve_area_nwr(db, area_node, nwr_node)
        area_name = _keyval_pair(area_node.children[0])[1]
        return _cardinal_filter(db, area_name, matches, node.label)

    if node.label == "around":
        center_node = _expect(node.children[0], "center")
        refs = _resolve_area_nwr(db, center_node.children[0], center_node.children[1])
        if not refs:
            raise ExecutionError("reference point not found")
        ref = refs[0]
        search_node = _expect(node.children[1], "search")
        key, value = _keyval_pair(_expect(search_node.children[0], "nwr").children[0])
        maxdist_node = _expect(node.children[2], "maxdist")
        dist_name = maxdist_node.children[0].label
        if dist_name not in distances:
            raise ExecutionError(f"unknown distance {dist_name!r}")
        radius = distances[dist_name]
        matches = _match_tag(db, list(db.objects), key, value)
        matches = [o for o in matches if o.id != ref.id]
        within = [o for o in matches if haversine_m(o.lat, o.lon, ref.lat, ref.lon) <= radius]
        within.sort(key=lambda o: (haversine_m(o.lat, o.lon, ref.lat, ref.lon), o.id))
        if len(node.children) == 4:
            topx_node = _expect(node.children[3], "topx")
            try:
                k = int(topx_node.children[0].label)
            except ValueError:
                raise ExecutionError("topx argument must be an integer") from None
            within = within[:k]
        return within

    # plain form: the (area, nwr) pair handled at the query level
    raise ExecutionError(f"cannot interpret operator {node.label!r}")


def _answer_for(qtype_arg: mrl.QueryTree, objects: list[GeoObject]) -> AnswerSet:
    label = qtype_arg.label
    if label == "count":
        return AnswerSet("count", (str(len(objects)),))
    if label == "existence":
        return AnswerSet("boolean", ("yes" if objects else "no",))
    if label == "latlong":
        return AnswerSet("coordinates", tuple(sorted(format_coord(o.lat, o.lon) for o in objects)))
    if label == "findkey":
        key = qtype_arg.children[0].label
        if key == "name":
            values = sorted({o.tags["name"] for o in objects if "name" in o.tags})
            return AnswerSet("list-of-names", tuple(values))
        values = sorted({o.tags[key] for o in objects if key in o.tags})
        return AnswerSet("key-values", tuple(values))
    raise ExecutionError(f"unknown question type {label!r}")


def execute(db: GeoDatabase, tree: mrl.QueryTree, distances: dict[str, float] | None = None) -> AnswerSet:
    """Deterministically interpret a query tree; raises ExecutionError on bad input."""
    distances = distances if distances is not None else mrl.DEFAULT_DISTANCES
    if tree.is_string or tree.label != "query":
        raise ExecutionError("root must be a query node")
    qtype_nodes = [c for c in tree.children if not c.is_string and c.label == "qtype"]
    if len(qtype_nodes) != 1:
        raise ExecutionError("query must contain exactly one qtype")
    qtype_node = qtype_nodes[0]
    content = [c for c in tree.children if c is not qtype_node]

    if len(content) == 2:  # query(area, nwr, qtype)
        objects = _resolve_area_nwr(db, content[0], content[1])
    elif len(content) == 1:
        objects = _content_objects(db, content[0], distances)
    else:
        raise ExecutionError("query must have 2 or 3 children")
    return _answer_for(qtype_node.children[0], objects)


def execute_linear(db: GeoDatabase, query, distances: dict[str, float] | None = None) -> AnswerSet | None:
    """Execute a linear query (or its string form); None on any failure.

    Downstream evaluation treats None as the empty answer string: it counts
    against recall but is excluded from the precision denominator.
    """
    try:
        if isinstance(query, str):
            query = mrl.LinearQuery.parse(query)
        tree = mrl.delinearize(query)
        return execute(db, tree, distances)
    except Exception:
        return None
