"""Shared builders for tests: tiny registries and synthetic trip files."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.csv as pacsv

from odcompare.crosswalk import load_crosswalk

EPOCH_2021 = np.datetime64("2021-01-01T00:00:00", "s").astype(np.int64)


def one_to_one_registry(n_zones: int):
    """Zones "1".."n", each with a single unit "u<i>" of weight 1."""
    return load_crosswalk([(f"u{i}", str(i), 1.0) for i in range(1, n_zones + 1)])


def trip_arrays(n_records: int, n_zones: int, seed: int, n_days: int = 7):
    """Random (origin index, destination index, seconds since 2021-01-01) triples."""
    rng = np.random.default_rng(seed)
    o = rng.integers(0, n_zones, n_records)
    d = rng.integers(0, n_zones, n_records)
    t = rng.integers(0, n_days * 86400, n_records)
    return o, d, t


def write_trip_csv(path, o, d, t, zones, order=None) -> Path:
    """Taxi-style CSV (pickup_datetime, PULocationID, DOLocationID) built column-wise in Arrow."""
    if order is not None:
        o, d, t = o[order], d[order], t[order]
    names = pa.array(list(zones), type=pa.string())
    stamps = pa.array(t + EPOCH_2021, type=pa.int64()).cast(pa.timestamp("s"))
    table = pa.table(
        {
            "pickup_datetime": stamps.cast(pa.string()),
            "PULocationID": names.take(pa.array(o)),
            "DOLocationID": names.take(pa.array(d)),
        }
    )
    path = Path(path)
    pacsv.write_csv(table, path, pacsv.WriteOptions(quoting_style="none"))
    return path
