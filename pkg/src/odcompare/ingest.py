"""Streaming ingestion of trip records into zone x zone flow tables.

Two record styles are supported:

* taxi style: one row per trip with pickup datetime and pickup/dropoff
  zone ids (``pickup_datetime,PULocationID,DOLocationID``);
* device style: one row per (day, origin unit) with a JSON object mapping
  destination units to device counts (``date,origin_census_block_group,
  destination_cbgs``).

Both are summed over a study window into a dense ``int64`` matrix over the
registry's zones, so memory is O(zones^2) per worker regardless of input
size. Plain files are split into newline-aligned byte ranges that workers
process independently; the per-range tables are combined by integer
addition, so the result does not depend on the number of workers or on the
order of the records.
"""

from __future__ import annotations

import csv
import io
import json
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np
import pyarrow as pa
import pyarrow.compute as pc
import pyarrow.csv as pacsv

from ._io import is_gzip, open_text
from .crosswalk import ZoneRegistry
from .errors import (
    ConfigError,
    DataError,
    DuplicateRowError,
    EmptyInputError,
    MissingColumnError,
    NegativeCountError,
    RejectThresholdError,
)

if TYPE_CHECKING:
    import pandas as pd

EPOCH = date(1970, 1, 1)
DEFAULT_MAX_REJECT_FRACTION = 0.05
BLOCK_SIZE = 2 << 20

# reasons that count towards the schema-drift threshold
THRESHOLD_REASONS = ("malformed", "unknown_zone", "origin_outside_registry")


@dataclass(frozen=True)
class DateWindow:
    """Inclusive calendar date range."""

    start: date
    end: date

    def __post_init__(self):
        if self.start > self.end:
            raise ConfigError(f"window start {self.start} is after end {self.end}")

    @classmethod
    def parse(cls, text: str) -> "DateWindow":
        """Parse ``start..end``; each side is ``YYYY-MM-DD`` or ``YYYY-MM`` (whole month)."""
        try:
            lo, hi = (s.strip() for s in text.split(".."))
            start = _parse_day_or_month(lo, first=True)
            end = _parse_day_or_month(hi, first=False)
        except ValueError as exc:
            raise ConfigError(f"bad window {text!r}: expected start..end") from exc
        return cls(start, end)

    def __contains__(self, day: date) -> bool:
        return self.start <= day <= self.end

    def epoch_days(self) -> tuple[int, int]:
        return (self.start - EPOCH).days, (self.end - EPOCH).days

    def months(self) -> list[str]:
        out, y, m = [], self.start.year, self.start.month
        while (y, m) <= (self.end.year, self.end.month):
            out.append(f"{y:04d}-{m:02d}")
            y, m = (y + 1, 1) if m == 12 else (y, m + 1)
        return out

    def __str__(self) -> str:
        return f"{self.start.isoformat()}..{self.end.isoformat()}"


def _parse_day_or_month(text: str, first: bool) -> date:
    if len(text) == 7:
        y, m = int(text[:4]), int(text[5:7])
        if first:
            return date(y, m, 1)
        nxt = date(y + 1, 1, 1) if m == 12 else date(y, m + 1, 1)
        return nxt - timedelta(days=1)
    return date.fromisoformat(text)


@dataclass
class FlowTable:
    """Trip counts between zones for one dataset.

    ``counts[i, j]`` is the number of trips from ``zones[i]`` to ``zones[j]``.
    ``rejected`` counts whole records dropped per reason; ``dropped`` counts
    trips removed from records that were otherwise accepted (device-style
    destinations outside the registry, excluded self flows).
    """

    dataset_id: str
    zones: tuple[str, ...]
    counts: np.ndarray
    n_records: int = 0
    rejected: Counter = field(default_factory=Counter)
    dropped: Counter = field(default_factory=Counter)
    daily: dict[date, np.ndarray] | None = None

    @classmethod
    def empty(cls, dataset_id: str, zones: Sequence[str], keep_daily: bool = False) -> "FlowTable":
        n = len(zones)
        return cls(dataset_id, tuple(zones), np.zeros((n, n), dtype=np.int64), daily={} if keep_daily else None)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_rejected(self) -> int:
        return sum(self.rejected.values())

    @property
    def n_accepted(self) -> int:
        return self.n_records - self.n_rejected

    @property
    def cells(self) -> dict[tuple[str, str], int]:
        ii, jj = np.nonzero(self.counts)
        return {(self.zones[i], self.zones[j]): int(self.counts[i, j]) for i, j in zip(ii, jj)}

    def identical(self, other: "FlowTable") -> bool:
        return (
            self.dataset_id == other.dataset_id
            and self.zones == other.zones
            and self.counts.dtype == other.counts.dtype
            and np.array_equal(self.counts, other.counts)
            and self.n_records == other.n_records
            and self.rejected == other.rejected
            and self.dropped == other.dropped
        )

    def reject_log(self) -> dict:
        return {
            "records": self.n_records,
            "accepted": self.n_accepted,
            "rejected": dict(sorted(self.rejected.items())),
            "dropped_trips": dict(sorted(self.dropped.items())),
        }

    # -- persistence -----------------------------------------------------

    def to_csv(self, path) -> Path:
        """Write nonzero cells as ``origin,destination,count`` plus a ``.rejects.json`` sidecar."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        ii, jj = np.nonzero(self.counts)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("origin,destination,count\n")
            for i, j in zip(ii, jj):
                fh.write(f"{self.zones[i]},{self.zones[j]},{int(self.counts[i, j])}\n")
        meta = {"dataset_id": self.dataset_id, "zones": list(self.zones), **self.reject_log()}
        with open(path.with_suffix(".rejects.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def from_csv(cls, path) -> "FlowTable":
        path = Path(path)
        with open(path.with_suffix(".rejects.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
        table = cls.empty(meta["dataset_id"], meta["zones"])
        index = {z: i for i, z in enumerate(table.zones)}
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                table.counts[index[row["origin"]], index[row["destination"]]] += int(row["count"])
        table.n_records = int(meta["records"])
        table.rejected = Counter(meta["rejected"])
        table.dropped = Counter(meta["dropped_trips"])
        return table


def merge_flow_tables(a: FlowTable, b: FlowTable) -> FlowTable:
    """Cellwise sum of two partial tables of the same dataset."""
    if a.dataset_id != b.dataset_id:
        raise DataError(f"cannot merge dataset {a.dataset_id!r} with {b.dataset_id!r}")
    if a.zones != b.zones:
        raise DataError("cannot merge flow tables built on different zone registries")
    daily = None
    if a.daily is not None or b.daily is not None:
        daily = {k: v.copy() for k, v in (a.daily or {}).items()}
        for k, v in (b.daily or {}).items():
            daily[k] = daily[k] + v if k in daily else v.copy()
    return FlowTable(
        a.dataset_id,
        a.zones,
        a.counts + b.counts,
        a.n_records + b.n_records,
        a.rejected + b.rejected,
        a.dropped + b.dropped,
        daily,
    )


def _check_threshold(table: FlowTable, max_fraction: float) -> FlowTable:
    if table.n_records == 0:
        return table
    bad = sum(table.rejected[r] for r in THRESHOLD_REASONS)
    if bad / table.n_records > max_fraction:
        detail = ", ".join(f"{r}={table.rejected[r]}" for r in THRESHOLD_REASONS if table.rejected[r])
        raise RejectThresholdError(
            f"{table.dataset_id}: {bad} of {table.n_records} records unusable ({detail}); "
            f"limit is {max_fraction:.1%}"
        )
    return table


# ---------------------------------------------------------------------------
# Partitioning


@dataclass(frozen=True)
class _Task:
    path: str
    header: tuple[str, ...] | None  # None: stream carries its own header (gzip)
    start: int = 0
    end: int = -1


class _RangeFile(io.RawIOBase):
    """Read-only view of ``[start, end)`` of a file."""

    def __init__(self, path, start: int, end: int):
        self._fh = open(path, "rb")
        self._fh.seek(start)
        self._left = end - start

    def readable(self):
        return True

    def readinto(self, buf):
        if self._left <= 0:
            return 0
        n = self._fh.readinto(memoryview(buf)[: min(len(buf), self._left)])
        self._left -= n
        return n

    def close(self):
        self._fh.close()
        super().close()


def _plan(paths: Sequence[str], parts: int) -> list[_Task]:
    """Split each plain file into newline-aligned byte ranges; gzip files stay whole."""
    tasks = []
    for path in paths:
        path = str(path)
        if is_gzip(path):
            tasks.append(_Task(path, None))
            continue
        size = os.path.getsize(path)
        with open(path, "rb") as fh:
            header_line = fh.readline()
            body = fh.tell()
            header = tuple(next(csv.reader([header_line.decode("utf-8-sig")]), []))
            if not header:
                raise EmptyInputError(f"{path}: missing header row")
            cuts = [body]
            for k in range(1, parts):
                target = body + (size - body) * k // parts
                if target <= cuts[-1]:
                    continue
                fh.seek(target - 1)
                fh.readline()
                pos = fh.tell()
                if pos < size and pos > cuts[-1]:
                    cuts.append(pos)
            cuts.append(size)
        tasks.extend(_Task(path, header, s, e) for s, e in zip(cuts[:-1], cuts[1:]) if e > s)
        if size <= body:
            tasks.append(_Task(path, header, body, body))
    return tasks


def _normalize_paths(paths) -> list[str]:
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    out = []
    for p in paths:
        if not Path(p).exists():
            raise DataError(f"input file not found: {p}")
        out.append(str(p))
    if not out:
        raise ConfigError("no input files given")
    return out


def _run_tasks(fn, tasks, args, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t, *args) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        futures = [pool.submit(fn, t, *args) for t in tasks]
        return [f.result() for f in futures]


def _reduce(parts: Iterable[FlowTable]) -> FlowTable:
    parts = list(parts)
    out = parts[0]
    for p in parts[1:]:
        out = merge_flow_tables(out, p)
    return out


# ---------------------------------------------------------------------------
# Taxi-style records


@dataclass(frozen=True)
class OdColumns:
    """Column names for taxi-style input.

    ``datetime_format`` is a strptime format for the full pickup timestamp;
    when unset only the leading ``YYYY-MM-DD`` is parsed. ``count`` names an
    optional per-record multiplicity column (e.g. ``passenger_count``); by
    default each record is one trip.
    """

    pickup_datetime: str = "pickup_datetime"
    origin: str = "PULocationID"
    destination: str = "DOLocationID"
    count: str | None = None
    datetime_format: str | None = None

    @classmethod
    def from_mapping(cls, mapping) -> "OdColumns":
        if not mapping:
            return cls()
        unknown = set(mapping) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown column mapping keys {sorted(unknown)}")
        return cls(**mapping)


def _read_chunks(task: _Task):
    """Newline-aligned byte chunks of about ``BLOCK_SIZE`` covering ``[start, end)``."""
    with open(task.path, "rb") as fh:
        fh.seek(task.start)
        pos = task.start
        while pos < task.end:
            buf = fh.read(min(BLOCK_SIZE, task.end - pos))
            pos += len(buf)
            if pos < task.end and not buf.endswith(b"\n"):
                # range cuts sit on line starts, so this never reads past ``end``
                tail = fh.readline()
                pos += len(tail)
                buf += tail
            if not buf:
                break
            yield buf


def _arrow_batches(task: _Task, columns: Sequence[str], on_invalid):
    """Record batches of ``columns`` (all as strings) from one task.

    Plain files are parsed chunk by chunk from in-memory buffers so each
    worker holds at most one chunk; gzip streams go through Arrow's
    streaming reader on a native decompressing stream.
    """
    parse_opts = pacsv.ParseOptions(invalid_row_handler=on_invalid)
    convert_opts = pacsv.ConvertOptions(
        include_columns=list(columns),
        column_types={c: pa.string() for c in columns},
        strings_can_be_null=False,
    )
    if task.header is None:
        raw = pa.CompressedInputStream(pa.OSFile(task.path), "gzip")
        read_opts = pacsv.ReadOptions(block_size=BLOCK_SIZE, use_threads=False)
        try:
            reader = pacsv.open_csv(raw, read_options=read_opts, parse_options=parse_opts, convert_options=convert_opts)
        except pa.ArrowInvalid as exc:
            if "Empty CSV file" in str(exc):
                return
            if "not found" in str(exc).lower():
                raise MissingColumnError(f"{task.path}: {exc}") from None
            raise DataError(f"{task.path}: {exc}") from None
        yield from reader
        return

    missing = [c for c in columns if c not in task.header]
    if missing:
        raise MissingColumnError(f"{task.path}: missing columns {missing}")
    read_opts = pacsv.ReadOptions(column_names=list(task.header), block_size=2 * BLOCK_SIZE, use_threads=False)
    for buf in _read_chunks(task):
        try:
            table = pacsv.read_csv(
                pa.py_buffer(buf), read_options=read_opts, parse_options=parse_opts, convert_options=convert_opts
            )
        except pa.ArrowInvalid as exc:
            raise DataError(f"{task.path}: {exc}") from None
        yield from table.to_batches()


def _epoch_days(col: pa.ChunkedArray | pa.Array, fmt: str | None) -> np.ndarray:
    if fmt is None:
        col = pc.utf8_slice_codeunits(col, 0, 10)
        fmt = "%Y-%m-%d"
    ts = pc.strptime(col, format=fmt, unit="s", error_is_null=True)
    days = pc.cast(pc.cast(ts, pa.date32()), pa.int32())
    return pc.fill_null(days, np.iinfo(np.int32).min).to_numpy(zero_copy_only=False)


def _ingest_od_task(task: _Task, dataset_id, zones, window: DateWindow, cols: OdColumns, keep_daily: bool) -> FlowTable:
    n = len(zones)
    table = FlowTable.empty(dataset_id, zones, keep_daily)
    flat = np.zeros(n * n, dtype=np.int64)
    invalid = [0]

    def on_invalid(row):
        invalid[0] += 1
        return "skip"

    wanted = [cols.pickup_datetime, cols.origin, cols.destination] + ([cols.count] if cols.count else [])
    value_set = pa.array(zones, type=pa.string())
    lo, hi = window.epoch_days()
    n_rows = 0

    for batch in _arrow_batches(task, wanted, on_invalid):
        if batch.num_rows == 0:
            continue
        n_rows += batch.num_rows
        o_str = pc.utf8_trim_whitespace(batch.column(cols.origin))
        d_str = pc.utf8_trim_whitespace(batch.column(cols.destination))
        o = pc.fill_null(pc.index_in(o_str, value_set=value_set), -1).to_numpy(zero_copy_only=False)
        d = pc.fill_null(pc.index_in(d_str, value_set=value_set), -1).to_numpy(zero_copy_only=False)
        day = _epoch_days(batch.column(cols.pickup_datetime), cols.datetime_format)

        malformed = (day == np.iinfo(np.int32).min)
        malformed |= (pc.utf8_length(o_str).to_numpy(zero_copy_only=False) == 0)
        malformed |= (pc.utf8_length(d_str).to_numpy(zero_copy_only=False) == 0)
        weight = None
        if cols.count:
            raw_w = pc.utf8_trim_whitespace(batch.column(cols.count))
            numeric = pc.match_substring_regex(raw_w, r"^\d+(\.0*)?$")
            w = pc.cast(pc.if_else(numeric, raw_w, "0"), pa.float64())
            weight = w.to_numpy(zero_copy_only=False)
            bad_w = ~numeric.to_numpy(zero_copy_only=False)
            malformed |= bad_w
        outside = ~malformed & ((day < lo) | (day > hi))
        unknown = ~malformed & ~outside & ((o < 0) | (d < 0))
        ok = ~(malformed | outside | unknown)

        table.rejected["malformed"] += int(malformed.sum())
        table.rejected["outside_window"] += int(outside.sum())
        table.rejected["unknown_zone"] += int(unknown.sum())

        idx = o[ok].astype(np.int64) * n + d[ok]
        wk = None if weight is None else weight[ok]
        flat += np.bincount(idx, weights=wk, minlength=n * n).astype(np.int64)
        if keep_daily:
            dk = day[ok]
            for dd in np.unique(dk):
                sel = dk == dd
                m = np.bincount(idx[sel], weights=None if wk is None else wk[sel], minlength=n * n)
                key = EPOCH + timedelta(days=int(dd))
                cur = table.daily.get(key)
                m = m.astype(np.int64).reshape(n, n)
                table.daily[key] = m if cur is None else cur + m

    table.counts = flat.reshape(n, n)
    table.n_records = n_rows + invalid[0]
    table.rejected["malformed"] += invalid[0]
    table.rejected = Counter({k: v for k, v in table.rejected.items() if v})
    return table


def ingest_od_trips(
    paths,
    registry: ZoneRegistry,
    window: DateWindow,
    columns: OdColumns | None = None,
    dataset_id: str = "taxi",
    workers: int = 1,
    max_reject_fraction: float = DEFAULT_MAX_REJECT_FRACTION,
    keep_daily: bool = False,
) -> FlowTable:
    """Tally taxi-style trip records into a :class:`FlowTable`.

    Each accepted record adds one trip (or its ``columns.count`` value) to
    cell (pickup zone, dropoff zone). Records dated outside ``window``,
    naming zones not in ``registry`` or failing to parse are counted in
    ``rejected``; if malformed plus unknown-zone records exceed
    ``max_reject_fraction`` of the input, :class:`RejectThresholdError` is
    raised.
    """
    paths = _normalize_paths(paths)
    columns = columns or OdColumns()
    tasks = _plan(paths, max(1, workers))
    parts = _run_tasks(_ingest_od_task, tasks, (dataset_id, registry.zones, window, columns, keep_daily), workers)
    return _check_threshold(_reduce(parts), max_reject_fraction)


# ---------------------------------------------------------------------------
# Device-style records


@dataclass(frozen=True)
class UnitFlowColumns:
    date: str = "date"
    origin: str = "origin_census_block_group"
    destinations: str = "destination_cbgs"

    @classmethod
    def from_mapping(cls, mapping) -> "UnitFlowColumns":
        if not mapping:
            return cls()
        unknown = set(mapping) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown column mapping keys {sorted(unknown)}")
        return cls(**mapping)


def _iter_task_rows(task: _Task):
    if task.header is None:
        with open_text(task.path) as fh:
            yield from csv.DictReader(fh)
        return
    raw = io.BufferedReader(_RangeFile(task.path, task.start, task.end), 1 << 20)
    with io.TextIOWrapper(raw, encoding="utf-8", newline="") as fh:
        yield from csv.DictReader(fh, fieldnames=list(task.header))


def _parse_destinations(text: str) -> dict[str, int] | None:
    try:
        data = json.loads(text)
    except (TypeError, ValueError):
        return None
    if not isinstance(data, dict):
        return None
    out = {}
    for k, v in data.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v) or v < 0:
            return None
        out[str(k)] = int(v)
    return out


def _ingest_unit_task(
    task: _Task, dataset_id, zones, unit_zone: dict[str, int], window: DateWindow, cols: UnitFlowColumns,
    include_self: bool, keep_daily: bool,
) -> FlowTable:
    n = len(zones)
    table = FlowTable.empty(dataset_id, zones, keep_daily)
    counts = table.counts
    if task.header is not None:
        missing = [c for c in (cols.date, cols.origin, cols.destinations) if c not in task.header]
        if missing:
            raise MissingColumnError(f"{task.path}: missing columns {missing}")
    for row in _iter_task_rows(task):
        table.n_records += 1
        try:
            day = date.fromisoformat((row.get(cols.date) or "")[:10])
        except ValueError:
            table.rejected["malformed"] += 1
            continue
        dests = _parse_destinations(row.get(cols.destinations))
        origin = (row.get(cols.origin) or "").strip()
        if dests is None or not origin:
            table.rejected["malformed"] += 1
            continue
        if day not in window:
            table.rejected["outside_window"] += 1
            continue
        oz = unit_zone.get(origin)
        if oz is None:
            table.rejected["origin_outside_registry"] += 1
            continue
        daily = None
        if keep_daily:
            daily = table.daily.setdefault(day, np.zeros((n, n), dtype=np.int64))
        for dest, c in dests.items():
            if c == 0:
                continue
            dz = unit_zone.get(dest)
            if dz is None:
                table.dropped["destination_outside_registry"] += c
                continue
            if dest == origin and not include_self:
                table.dropped["self_flow_excluded"] += c
                continue
            counts[oz, dz] += c
            if daily is not None:
                daily[oz, dz] += c
    table.rejected = Counter({k: v for k, v in table.rejected.items() if v})
    return table


def ingest_unit_flows(
    paths,
    registry: ZoneRegistry,
    window: DateWindow,
    include_self: bool = True,
    columns: UnitFlowColumns | None = None,
    dataset_id: str = "device",
    workers: int = 1,
    max_reject_fraction: float = DEFAULT_MAX_REJECT_FRACTION,
    keep_daily: bool = False,
) -> FlowTable:
    """Tally device-style origin -> {destination: count} records into a :class:`FlowTable`.

    Units are routed to the zone holding their largest crosswalk share, so
    counts stay integral. Origins outside the registry drop the record;
    destinations outside it drop only that entry (both are logged). A
    destination equal to the origin unit is kept only if ``include_self``.
    """
    paths = _normalize_paths(paths)
    columns = columns or UnitFlowColumns()
    tasks = _plan(paths, max(1, workers))
    args = (dataset_id, registry.zones, registry.unit_zone_lookup(), window, columns, include_self, keep_daily)
    parts = _run_tasks(_ingest_unit_task, tasks, args, workers)
    return _check_threshold(_reduce(parts), max_reject_fraction)


# ---------------------------------------------------------------------------
# Device home panel


@dataclass(frozen=True)
class DevicePanel:
    """Monthly device counts per unit, indexed by ``(unit_id, month)``.

    ``month`` is a ``YYYY-MM`` string. Columns: ``devices_residing``
    (primary nighttime location) and ``devices_daytime``.
    """

    frame: pd.DataFrame

    def __len__(self) -> int:
        return len(self.frame)

    def lookup(self, unit: str, month: str) -> tuple[float, float]:
        row = self.frame.loc[(unit, month)]
        return float(row["devices_residing"]), float(row["devices_daytime"])

    def mean_monthly(self, window: DateWindow | None = None) -> pd.DataFrame:
        """Per-unit mean over the months (inside ``window``) in which the unit is reported."""
        frame = self.frame
        if window is not None:
            months = set(window.months())
            frame = frame[frame.index.get_level_values("month").isin(months)]
        if frame.empty:
            raise EmptyInputError(f"device panel has no rows in window {window}")
        return frame.groupby(level="unit_id").mean()


PANEL_COLUMNS = {
    "census_block_group": "unit_id",
    "month": "month",
    "number_devices_residing": "devices_residing",
    "number_devices_primary_daytime": "devices_daytime",
}


def load_device_panel(source) -> DevicePanel:
    """Read ``census_block_group,month,number_devices_residing,number_devices_primary_daytime``."""
    import pandas as pd

    if isinstance(source, (str, os.PathLike)):
        with open_text(source) as fh:
            text = fh.read()
        source = io.StringIO(text)
    try:
        frame = pd.read_csv(source, dtype={"census_block_group": str, "month": str})
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame(columns=list(PANEL_COLUMNS))
    missing = [c for c in PANEL_COLUMNS if c not in frame.columns]
    if missing:
        raise MissingColumnError(f"device panel lacks columns {missing}")
    frame = frame[list(PANEL_COLUMNS)].rename(columns=PANEL_COLUMNS)
    frame["unit_id"] = frame["unit_id"].astype(str).str.strip()
    frame["month"] = frame["month"].astype(str).str.strip().str[:7]
    for c in ("devices_residing", "devices_daytime"):
        frame[c] = frame[c].astype(float)
        if (frame[c] < 0).any():
            raise NegativeCountError(f"negative {c} in device panel")
    dup = frame.duplicated(["unit_id", "month"])
    if dup.any():
        u, m = frame.loc[dup, ["unit_id", "month"]].iloc[0]
        raise DuplicateRowError(f"device panel repeats ({u}, {m})")
    return DevicePanel(frame.set_index(["unit_id", "month"]).sort_index())
