"""Small file helpers shared by the loaders and emitters."""

from __future__ import annotations

import csv
import gzip
import hashlib
import io
import os
from pathlib import Path
from typing import IO, Iterator

GZIP_MAGIC = b"\x1f\x8b"


def is_gzip(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(2) == GZIP_MAGIC


def open_text(path) -> IO[str]:
    """Open a plain or gzip-compressed text file for reading."""
    if is_gzip(path):
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, "r", encoding="utf-8", newline="")


def iter_csv_dicts(path) -> Iterator[dict]:
    with open_text(path) as fh:
        yield from csv.DictReader(fh)


def sha256_file(path, chunk: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while block := fh.read(chunk):
            h.update(block)
    return h.hexdigest()


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def fmt_float(x: float, digits: int = 12) -> str:
    """Stable text form for floats in emitted CSVs (``repr`` is platform-stable but noisy)."""
    if x != x:
        return ""
    return format(x, f".{digits}g")


def zone_sort_key(zone_id: str):
    # numeric ids sort numerically ("2" < "10"), everything else lexically after them
    return (0, int(zone_id), "") if zone_id.isdigit() else (1, 0, zone_id)


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path
