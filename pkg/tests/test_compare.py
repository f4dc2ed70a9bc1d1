from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from odcompare.clustering import UNDEFINED, ClusterAssignment
from odcompare.compare import (
    ClusterODMatrix,
    build_cluster_matrix,
    compare_matrices,
    lrfr,
    lrfr_from_rf,
    normalize_per_device,
    normalize_per_population,
    pearson,
    relative_frequency,
    rfr,
    sampling_rate,
)
from odcompare.crosswalk import load_crosswalk
from odcompare.errors import DataError, EmptyInputError
from odcompare.ingest import DevicePanel, FlowTable


def _flows(counts, zones=None, name="x"):
    counts = np.asarray(counts, dtype=np.int64)
    zones = zones or tuple(str(i + 1) for i in range(len(counts)))
    ft = FlowTable.empty(name, zones)
    ft.counts = counts
    return ft


def _cluster(m, labels=None, name="x"):
    m = np.asarray(m, dtype=np.int64)
    labels = labels or tuple(f"C{i}" for i in range(len(m)))
    return ClusterODMatrix(tuple(labels), m, name)


def test_zone_to_cluster_collapse_hand_tally():
    # zones 1,2 -> C0; zone 3 -> C1; zone 4 undefined
    flows = _flows([[1, 2, 3, 0], [4, 5, 6, 1], [7, 8, 9, 0], [0, 2, 0, 3]])
    a = ClusterAssignment.from_labels({"1": "C0", "2": "C0", "3": "C1", "4": UNDEFINED})
    m = build_cluster_matrix(flows, a)
    assert m.labels == ("C0", "C1", UNDEFINED)
    assert m.cells.tolist() == [[12, 9, 1], [15, 9, 0], [2, 0, 3]]
    assert m.grand_total == flows.total
    frame = m.with_margins()
    assert frame.loc["U", "U"] == 51
    assert frame.loc["C0", "U"] == 22 and frame.loc["U", "C0"] == 29


def test_zone_with_flows_but_no_label_is_an_error():
    flows = _flows([[1, 1], [0, 0]])
    with pytest.raises(DataError):
        build_cluster_matrix(flows, ClusterAssignment.from_labels({"1": "C0"}))


def test_margined_frame_roundtrip_and_check():
    m = _cluster([[1, 2], [3, 4]])
    frame = m.with_margins()
    assert ClusterODMatrix.from_margined_frame(frame).cells.tolist() == [[1, 2], [3, 4]]
    frame.loc["C0", "U"] = 99
    with pytest.raises(DataError):
        ClusterODMatrix.from_margined_frame(frame)


def test_relative_frequency_shares():
    # cell shares of two totals (published within-cluster counts over dataset totals)
    assert 142_988_133 / 536_264_515 * 100 == pytest.approx(26.67, abs=0.01)
    rf = relative_frequency(_cluster([[142_988_133, 536_264_515 - 142_988_133], [0, 0]]))
    assert rf.values[0, 0] * 100 == pytest.approx(26.66, abs=0.01)
    assert rf.values.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(EmptyInputError):
        relative_frequency(_cluster([[0, 0], [0, 0]]))


def test_lrfr_reading_of_published_values():
    # an LRFR of 2.06 means RF(a) is about 4.17 times RF(b); -1.64 about 3.12 times smaller
    a = relative_frequency(_cluster([[2 ** 2.06 * 10**6, 10**6], [10**6, 2 ** -1.64 * 10**6]]))
    b = relative_frequency(_cluster([[10**6, 10**6], [10**6, 10**6]]))
    v = lrfr_from_rf(a, b)
    assert 2 ** 2.06 == pytest.approx(4.17, abs=0.005)
    assert 2 ** 1.64 == pytest.approx(3.12, abs=0.005)
    assert v[0, 0] - v[0, 1] == pytest.approx(2.06, abs=1e-5)
    assert v[1, 1] - v[0, 1] == pytest.approx(-1.64, abs=1e-5)


def test_zero_cells_are_masked_or_smoothed():
    a = relative_frequency(_cluster([[0, 5], [5, 10]]))
    b = relative_frequency(_cluster([[3, 0], [5, 10]]))
    r = rfr(a, b)
    assert r.mask.tolist() == [[True, True], [False, False]]
    v = lrfr(r)
    assert v.mask[0, 0] and v.mask[0, 1]
    assert v[1, 0] == pytest.approx(math.log2((5 / 20) / (5 / 18)))
    smooth = rfr(a, b, epsilon=1e-6)
    assert not np.ma.getmaskarray(smooth).any()
    assert smooth[0, 0] == pytest.approx(1e-6 / (3 / 18 + 1e-6))


def test_compare_matrices_label_mismatch():
    with pytest.raises(DataError):
        compare_matrices(_cluster([[1]], ["A"]), _cluster([[1]], ["B"]))


matrices = hnp.arrays(np.int64, st.tuples(st.integers(1, 6)).map(lambda t: (t[0], t[0])),
                      elements=st.integers(0, 10**9))


@settings(max_examples=150, deadline=None)
@given(ma=matrices, data=st.data())
def test_lrfr_algebra(ma, data):
    mb = data.draw(hnp.arrays(np.int64, ma.shape, elements=st.integers(0, 10**9)))
    if ma.sum() == 0 or mb.sum() == 0:
        return
    rep = compare_matrices(_cluster(ma, name="a"), _cluster(mb, name="b"))
    rev = compare_matrices(_cluster(mb, name="b"), _cluster(ma, name="a"))
    mask = np.ma.getmaskarray(rep.lrfr)
    assert np.array_equal(mask, (ma == 0) | (mb == 0))
    assert np.array_equal(mask, np.ma.getmaskarray(rev.lrfr))
    ok = ~mask
    np.testing.assert_allclose(2.0 ** rep.lrfr.data[ok], rep.rfr.data[ok], rtol=1e-9)
    np.testing.assert_allclose(rep.lrfr.data[ok], -rev.lrfr.data[ok], atol=1e-12, rtol=0)
    assert np.array_equal(rep.rfr.data[ok] > 1, rep.lrfr.data[ok] > 0)


def test_normalize_per_population():
    m = _cluster([[10, 20, 5], [30, 40, 0], [1, 2, 3]], ["C0", "C1", UNDEFINED])
    nf = normalize_per_population(m, {"C0": 100.0, "C1": 50.0})
    assert nf.within[:2].tolist() == [0.1, 0.8]
    assert nf.from_[:2].tolist() == [35 / 100, 70 / 50]
    assert nf.to[:2].tolist() == [41 / 100, 62 / 50]
    assert nf.flagged == (UNDEFINED,)
    assert np.isnan(nf.within[2])
    with pytest.raises(DataError):
        normalize_per_population(m, {"C0": 100.0, "C1": 0.0})


def _panel(rows):
    frame = pd.DataFrame(rows, columns=["unit_id", "month", "devices_residing", "devices_daytime"])
    return DevicePanel(frame.set_index(["unit_id", "month"]).sort_index())


def test_device_normalization_and_sampling_rates():
    reg = load_crosswalk([("a", "1", 1.0), ("b", "1", 0.5), ("b", "2", 0.5), ("c", "3", 1.0)])
    assign = ClusterAssignment.from_labels({"1": "C0", "2": "C1", "3": UNDEFINED})
    panel = _panel([
        ("a", "2021-01", 10.0, 4.0), ("a", "2021-02", 30.0, 8.0),
        ("b", "2021-01", 8.0, 2.0),
        ("c", "2021-01", 0.0, 0.0),
    ])
    m = _cluster([[4, 2, 0], [1, 6, 0], [0, 0, 1]], ["C0", "C1", UNDEFINED])
    night = normalize_per_device(m, panel, assign, reg, basis="night")
    # C0 devices: a mean 20 + half of b 4 = 24; C1: 4
    assert night.denominator[:2].tolist() == [24.0, 4.0]
    assert night.within[:2].tolist() == [4 / 24, 6 / 4]
    assert night.flagged == (UNDEFINED,)
    day = normalize_per_device(m, panel, assign, reg, basis="day")
    assert day.denominator[:2].tolist() == [7.0, 1.0]

    rates = sampling_rate(panel, {"C0": 240.0, "C1": 400.0}, assign, reg).frame
    assert rates.loc["C0", "rate_night"] == pytest.approx(10.0)
    assert rates.loc["C1", "rate_day"] == pytest.approx(0.25)
    assert list(rates.index) == ["C0", "C1"]


def test_pearson_closed_forms():
    x = [1.0, 2.0, 3.0]
    assert pearson(x, [2 * v for v in x]) == 1.0
    assert pearson(x, [-v + 7 for v in x]) == -1.0
    # closed form: sxy = 2, sxx = 2, syy = 14/3 -> 2 / sqrt(28/3)
    assert pearson([1, 2, 3], [2, 1, 4]) == pytest.approx(2 / math.sqrt(28 / 3), abs=1e-12)
    assert pearson([1, 2, 3], [2, 1, 4]) == pytest.approx(0.65465, abs=1e-4)
    with pytest.raises(DataError):
        pearson([1, 1], [2, 3])
