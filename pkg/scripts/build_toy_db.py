#!/usr/bin/env python
"""Regenerate the checked-in toy database fixture (data/toy_db.tsv)."""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from banditparse.toydb import build_toy_db, write_db  # noqa: E402

if __name__ == "__main__":
    out = pathlib.Path(__file__).resolve().parents[1] / "src" / "banditparse" / "data" / "toy_db.tsv"
    db = build_toy_db(seed=13)
    write_db(db, out)
    print(f"wrote {len(db.objects)} objects to {out}")
