from __future__ import annotations

import csv
import gzip
import json
from collections import Counter
from datetime import date

import numpy as np
import pytest
from _helpers import one_to_one_registry, trip_arrays, write_trip_csv

from odcompare.crosswalk import load_crosswalk
from odcompare.errors import (
    DataError,
    DuplicateRowError,
    EmptyInputError,
    MissingColumnError,
    NegativeCountError,
    RejectThresholdError,
)
from odcompare.ingest import (
    DateWindow,
    FlowTable,
    OdColumns,
    ingest_od_trips,
    ingest_unit_flows,
    load_device_panel,
    merge_flow_tables,
)

WEEK = DateWindow.parse("2021-01-01..2021-01-07")


def test_date_window_parse_days_and_months():
    w = DateWindow.parse("2021-01..2021-03")
    assert w.start == date(2021, 1, 1) and w.end == date(2021, 3, 31)
    assert w.months() == ["2021-01", "2021-02", "2021-03"]
    assert date(2021, 2, 28) in w and date(2021, 4, 1) not in w
    assert WEEK.end == date(2021, 1, 7)


def _write(path, text):
    path.write_text(text)
    return path


def test_od_rejections_are_classified(tmp_path):
    reg = one_to_one_registry(9)
    p = _write(
        tmp_path / "t.csv",
        "pickup_datetime,PULocationID,DOLocationID\n"
        "2021-01-02 10:00:00,4,7\n"
        "2021-01-02 11:00:00,4,7\n"
        "garbage,4,7\n"
        "2020-12-31 23:59:59,4,7\n"
        "2021-01-03 00:00:00,4,999\n"
        "2021-01-03 00:00:00,,3\n"
        "2021-01-07 23:59:59,1,2\n",
    )
    ft = ingest_od_trips(p, reg, WEEK, max_reject_fraction=1.0)
    assert ft.cells == {("4", "7"): 2, ("1", "2"): 1}
    assert ft.n_records == 7
    assert ft.rejected == Counter(malformed=2, outside_window=1, unknown_zone=1)
    assert ft.total == 3


def test_reject_threshold_ignores_window_rejects(tmp_path):
    reg = one_to_one_registry(3)
    rows = ["2021-01-02,1,2"] * 5 + ["2022-06-01,1,2"] * 50 + ["2021-01-02,1,77"]
    p = _write(tmp_path / "t.csv", "pickup_datetime,PULocationID,DOLocationID\n" + "\n".join(rows) + "\n")
    # 1 unknown in 56 records is under 5%; the 50 out-of-window rows do not count
    ft = ingest_od_trips(p, reg, WEEK)
    assert ft.total == 5
    with pytest.raises(RejectThresholdError):
        ingest_od_trips(p, reg, WEEK, max_reject_fraction=0.01)


def test_missing_column_is_a_data_error(tmp_path):
    reg = one_to_one_registry(3)
    p = _write(tmp_path / "t.csv", "pickup_datetime,PULocationID\n2021-01-02,1\n")
    with pytest.raises(MissingColumnError):
        ingest_od_trips(p, reg, WEEK)


def test_custom_columns_and_count_weights(tmp_path):
    reg = one_to_one_registry(3)
    p = _write(tmp_path / "t.csv", "day,o,d,n\n2021/01/02,1,2,5\n2021/01/02,2,1,3\n2021/01/02,2,1,x\n")
    cols = OdColumns.from_mapping({"pickup_datetime": "day", "origin": "o", "destination": "d", "count": "n",
                                   "datetime_format": "%Y/%m/%d"})
    ft = ingest_od_trips(p, reg, WEEK, columns=cols, max_reject_fraction=1.0)
    assert ft.cells == {("1", "2"): 5, ("2", "1"): 3}
    assert ft.rejected["malformed"] == 1


def _csv_oracle(path, zones, lo="2021-01-01", hi="2021-01-07"):
    """Independent tally with the stdlib csv module."""
    zs = set(zones)
    tally = Counter()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            day = row["pickup_datetime"][:10]
            o, d = row["PULocationID"].strip(), row["DOLocationID"].strip()
            if lo <= day <= hi and o in zs and d in zs:
                tally[(o, d)] += 1
    return dict(tally)


def test_thousand_rows_match_bruteforce_tally(tmp_path):
    reg = one_to_one_registry(12)
    o, d, t = trip_arrays(1000, 12, seed=5, n_days=9)  # two days fall outside the window
    p = write_trip_csv(tmp_path / "t.csv", o, d, t, reg.zones)
    ft = ingest_od_trips(p, reg, WEEK)
    assert ft.cells == _csv_oracle(p, reg.zones)
    assert ft.n_records == 1000
    assert ft.rejected["outside_window"] == 1000 - ft.total


def test_partitioned_merge_equals_single_pass(tmp_path):
    reg = one_to_one_registry(20)
    o, d, t = trip_arrays(20000, 20, seed=9)
    p = write_trip_csv(tmp_path / "t.csv", o, d, t, reg.zones)
    whole = ingest_od_trips(p, reg, WEEK, workers=1)
    parts = []
    for k in range(4):
        sl = slice(k * 5000, (k + 1) * 5000)
        q = write_trip_csv(tmp_path / f"p{k}.csv", o[sl], d[sl], t[sl], reg.zones)
        parts.append(ingest_od_trips(q, reg, WEEK))
    merged = parts[0]
    for part in parts[1:]:
        merged = merge_flow_tables(merged, part)
    assert merged.identical(whole)
    assert ingest_od_trips(p, reg, WEEK, workers=3).identical(whole)


def test_gzip_input_matches_plain(tmp_path):
    reg = one_to_one_registry(6)
    o, d, t = trip_arrays(3000, 6, seed=2)
    p = write_trip_csv(tmp_path / "t.csv", o, d, t, reg.zones)
    gz = tmp_path / "t.csv.gz"
    gz.write_bytes(gzip.compress(p.read_bytes()))
    assert ingest_od_trips(gz, reg, WEEK, workers=2).identical(ingest_od_trips(p, reg, WEEK))


def test_keep_daily_sums_to_total(tmp_path):
    reg = one_to_one_registry(5)
    o, d, t = trip_arrays(2000, 5, seed=3)
    p = write_trip_csv(tmp_path / "t.csv", o, d, t, reg.zones)
    ft = ingest_od_trips(p, reg, WEEK, keep_daily=True)
    assert len(ft.daily) == 7
    assert np.array_equal(sum(ft.daily.values()), ft.counts)


def test_header_only_file_gives_empty_table(tmp_path):
    reg = one_to_one_registry(3)
    p = _write(tmp_path / "t.csv", "pickup_datetime,PULocationID,DOLocationID\n")
    ft = ingest_od_trips(p, reg, WEEK, workers=2)
    assert ft.total == 0 and ft.n_records == 0


def test_missing_file():
    with pytest.raises(DataError):
        ingest_od_trips("/nonexistent/x.csv", one_to_one_registry(2), WEEK)


def test_flow_table_csv_roundtrip(tmp_path):
    reg = one_to_one_registry(4)
    o, d, t = trip_arrays(500, 4, seed=1, n_days=8)
    p = write_trip_csv(tmp_path / "t.csv", o, d, t, reg.zones)
    ft = ingest_od_trips(p, reg, WEEK, max_reject_fraction=1.0)
    out = ft.to_csv(tmp_path / "flows.csv")
    back = FlowTable.from_csv(out)
    assert back.identical(ft)


def test_merge_rejects_different_zone_sets():
    a = FlowTable.empty("x", ("1", "2"))
    b = FlowTable.empty("x", ("1", "3"))
    with pytest.raises(DataError):
        merge_flow_tables(a, b)


# ---------------------------------------------------------------------------
# device-style flows


def _device_file(tmp_path, rows):
    p = tmp_path / "dev.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "origin_census_block_group", "destination_cbgs"])
        for r in rows:
            w.writerow(r)
    return p


def test_unit_flows_routing_and_drops(tmp_path):
    # b is split 0.4/0.6 across zones 1 and 2 and routes to 2
    reg = load_crosswalk([("a", "1", 1.0), ("b", "1", 0.4), ("b", "2", 0.6), ("c", "3", 1.0)])
    p = _device_file(
        tmp_path,
        [
            ("2021-01-02", "a", json.dumps({"b": 3, "a": 2, "x": 4})),
            ("2021-01-03", "b", json.dumps({"c": 1})),
            ("2021-01-03", "zz", json.dumps({"c": 9})),
            ("2021-02-03", "a", json.dumps({"c": 9})),
            ("2021-01-03", "a", "not json"),
        ],
    )
    ft = ingest_unit_flows(p, reg, WEEK, max_reject_fraction=1.0)
    assert ft.cells == {("1", "2"): 3, ("1", "1"): 2, ("2", "3"): 1}
    assert ft.dropped == Counter(destination_outside_registry=4)
    assert ft.rejected == Counter(origin_outside_registry=1, outside_window=1, malformed=1)

    excl = ingest_unit_flows(p, reg, WEEK, include_self=False, max_reject_fraction=1.0)
    assert ("1", "1") not in excl.cells
    assert excl.dropped["self_flow_excluded"] == 2


def test_unit_flows_worker_invariance(tmp_path):
    rng = np.random.default_rng(0)
    units = [f"u{i}" for i in range(30)]
    reg = load_crosswalk([(u, str(i % 7), 1.0) for i, u in enumerate(units)])
    rows = []
    for _ in range(600):
        dest = {units[j]: int(rng.integers(1, 5)) for j in rng.choice(30, 3, replace=False)}
        rows.append((f"2021-01-0{rng.integers(1, 8)}", units[rng.integers(30)], json.dumps(dest)))
    p = _device_file(tmp_path, rows)
    base = ingest_unit_flows(p, reg, WEEK)
    for w in (2, 4):
        assert ingest_unit_flows(p, reg, WEEK, workers=w).identical(base)


# ---------------------------------------------------------------------------
# device panel


def test_panel_mean_over_window(tmp_path):
    p = _write(
        tmp_path / "panel.csv",
        "census_block_group,month,number_devices_residing,number_devices_primary_daytime\n"
        "a,2021-01,10,4\na,2021-02,20,8\na,2021-05,999,999\nb,2021-01,3,3\n",
    )
    panel = load_device_panel(p)
    assert panel.lookup("a", "2021-02") == (20.0, 8.0)
    means = panel.mean_monthly(DateWindow.parse("2021-01..2021-03"))
    assert means.loc["a", "devices_residing"] == 15.0
    assert means.loc["a", "devices_daytime"] == 6.0
    assert means.loc["b", "devices_residing"] == 3.0
    with pytest.raises(EmptyInputError):
        panel.mean_monthly(DateWindow.parse("2019-01..2019-02"))


@pytest.mark.parametrize(
    "body, err",
    [
        ("a,2021-01,1,1\na,2021-01,2,2\n", DuplicateRowError),
        ("a,2021-01,-1,1\n", NegativeCountError),
    ],
)
def test_panel_errors(tmp_path, body, err):
    p = _write(tmp_path / "panel.csv",
               "census_block_group,month,number_devices_residing,number_devices_primary_daytime\n" + body)
    with pytest.raises(err):
        load_device_panel(p)
