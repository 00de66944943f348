"""Deterministic builder for the desk-scale geo database fixture.

The checked-in ``data/toy_db.tsv`` is the output of :func:`build_toy_db`
with the default seed (see ``scripts/build_toy_db.py``).  Object names are
single tokens (underscores instead of spaces) so they can serve as string
leaves in linearized queries.
"""

from __future__ import annotations

import math
import random
from importlib import resources

from .corpus import load_lexicon
from .geo import Area, GeoDatabase, GeoObject, load_areas, load_db

# How many objects a (city, tag) combination gets; ~35% of combinations are
# absent so existence and sampling logic see real variety.
_COUNT_CHOICES = (0, 1, 2, 3, 4, 5)
_COUNT_WEIGHTS = (35, 25, 18, 12, 6, 4)

# Landmark names are deliberately a small shared pool: every city reuses the
# same twenty names (each at most once per city), so questions that refer to
# a point of interest draw from a compact, learnable vocabulary.  Only a few
# objects per city carry a name at all; anonymous objects can still be search
# targets but never serve as reference points.
LANDMARK_NAMES = (
    "Golden_Lion", "Silver_Swan", "Old_Bridge", "Royal_Tower", "Blue_Anchor",
)
_LANDMARKS_PER_CITY = (3, 5)

_OPERATORS = (
    "CityWorks_Ltd", "Metro_Group", "Blue_River_Co", "Stadtwerke_AG",
    "Harbor_Trust", "Northline_SA", "Commune_Services", "Crown_Estates",
)
_CUISINES = ("regional", "italian", "french", "indian", "greek", "thai", "german")
_HOURS = ("Mo-Fr_08:00-18:00", "Mo-Su_09:00-20:00", "24/7", "Mo-Sa_10:00-19:00")
_EXTRA_KEYS = ("website", "opening_hours", "operator")


def _offset_position(rng: random.Random, area: Area) -> tuple[float, float]:
    """Uniform point within 85% of the area radius."""
    r = area.radius_m * 0.85 * math.sqrt(rng.random())
    theta = rng.random() * 2 * math.pi
    dlat = (r * math.cos(theta)) / 111320.0
    dlon = (r * math.sin(theta)) / (111320.0 * math.cos(math.radians(area.lat)))
    return area.lat + dlat, area.lon + dlon


def _extra_tags(rng: random.Random, slug: str) -> dict[str, str]:
    tags = {}
    for key in rng.sample(_EXTRA_KEYS, rng.randint(2, 3)):
        if key == "website":
            tags[key] = f"https://www.{slug.lower()}.example.org"
        elif key == "opening_hours":
            tags[key] = rng.choice(_HOURS)
        elif key == "operator":
            tags[key] = rng.choice(_OPERATORS)
        elif key == "wheelchair":
            tags[key] = rng.choice(("yes", "no", "limited"))
        elif key == "cuisine":
            tags[key] = rng.choice(_CUISINES)
    return tags


def build_toy_db(seed: int = 13, areas: list[Area] | None = None,
                 tags: list[tuple[str, str]] | None = None) -> GeoDatabase:
    rng = random.Random(seed)
    areas = areas if areas is not None else load_areas()
    if tags is None:
        tags = [(p.key, p.value) for p in load_lexicon()]
    objects: list[GeoObject] = []
    next_id = 1
    for area in sorted(areas, key=lambda a: a.name):
        city_objects: list[GeoObject] = []
        for key, value in tags:
            n = rng.choices(_COUNT_CHOICES, weights=_COUNT_WEIGHTS)[0]
            for _ in range(n):
                lat, lon = _offset_position(rng, area)
                city_objects.append(GeoObject(next_id, lat, lon, {key: value}))
                next_id += 1
        n_landmarks = min(len(city_objects), rng.randint(*_LANDMARKS_PER_CITY))
        named = rng.sample(city_objects, n_landmarks)
        for obj, name in zip(named, rng.sample(LANDMARK_NAMES, n_landmarks)):
            obj.tags["name"] = name
        for obj in city_objects:
            slug = obj.name() or f"poi{obj.id}"
            obj.tags.update(_extra_tags(rng, slug))
        objects.extend(city_objects)
    return GeoDatabase(objects, areas)


def write_db(db: GeoDatabase, path) -> None:
    with open(path, "w") as fh:
        fh.write("# id<TAB>lat<TAB>lon<TAB>key=value;key=value;...\n")
        for o in db.objects:
            tag_str = ";".join(f"{k}={v}" for k, v in sorted(o.tags.items()))
            fh.write(f"{o.id}\t{o.lat:.6f}\t{o.lon:.6f}\t{tag_str}\n")


def default_db() -> GeoDatabase:
    """Load the checked-in fixture database."""
    path = resources.files("banditparse").joinpath("data", "toy_db.tsv")
    with resources.as_file(path) as p:
        return load_db(p)
