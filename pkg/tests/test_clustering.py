from __future__ import annotations

import itertools

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odcompare.clustering import (
    UNDEFINED,
    ClusterAssignment,
    ZScoreTable,
    assign_with_undefined,
    cluster_zones,
    kmeans,
    kmeans_array,
    lloyd,
    mode_shares,
    select_k_elbow,
    standardize,
)
from odcompare.crosswalk import FeatureTable
from odcompare.errors import ConfigError, DataError


def _table(values: dict, population=None) -> FeatureTable:
    frame = pd.DataFrame(values)
    frame.index = [str(i + 1) for i in range(len(frame))]
    frame["population"] = population if population is not None else 100
    return FeatureTable.from_frame(frame)


def _ztable(x: np.ndarray, zones=None) -> ZScoreTable:
    zones = zones or [str(i + 1) for i in range(len(x))]
    frame = pd.DataFrame(x, index=zones, columns=[f"v{j}" for j in range(x.shape[1])])
    return ZScoreTable(frame, pd.DataFrame(), ())


def test_zscore_closed_form():
    ft = _table({"a": [1.0, 2.0, 3.0], "b": [5.0, 5.0, 5.0]})
    z = standardize(ft, ["a", "b"])
    # population std of (1, 2, 3) is sqrt(2/3); z = (-1, 0, 1) / sqrt(2/3)
    assert z.values["a"].tolist() == pytest.approx([-1.224744871391589, 0.0, 1.224744871391589], abs=1e-12)
    assert z.values["b"].tolist() == [0.0, 0.0, 0.0]
    assert z.zero_variance == ("b",)


def test_standardize_skips_undefined_and_rejects_nan():
    ft = _table({"a": [1.0, 2.0, 3.0]}, population=[10, 0, 10])
    z = standardize(ft, ["a"])
    assert z.zones == ("1", "3")
    frame = pd.DataFrame({"a": [1.0, np.nan, 2.0], "population": [1, 1, 1]}, index=["1", "2", "3"])
    with pytest.raises(DataError):
        standardize(FeatureTable.from_frame(frame), ["a"])
    with pytest.raises(DataError):
        standardize(_table({"a": [1.0]}), ["a"])


def _exhaustive_two_partition(x: np.ndarray) -> float:
    best = np.inf
    n = len(x)
    for mask in itertools.product([0, 1], repeat=n - 1):
        lab = np.array((0,) + mask)
        if lab.min() == lab.max():
            continue
        w = sum(((x[lab == j] - x[lab == j].mean(axis=0)) ** 2).sum() for j in (0, 1))
        best = min(best, w)
    return best


def test_kmeans_matches_exhaustive_optimum_on_small_instances():
    rng = np.random.default_rng(11)
    hits = 0
    for _ in range(30):
        x = rng.normal(size=(6, 2))
        _, _, wcss, _, _ = kmeans_array(x, 2, seed=0, restarts=20)
        hits += wcss <= _exhaustive_two_partition(x) + 1e-9
    assert hits >= 29


def test_lloyd_history_is_non_increasing():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(60, 3))
    _, _, wcss, n_iter, history = lloyd(x, x[:4].copy())
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))
    assert wcss == history[-1] and n_iter >= 1


def test_empty_cluster_is_repaired():
    x = np.array([[0.0], [0.1], [10.0], [10.1]])
    # third centre is far from every point and would be empty
    labels, c, *_ = lloyd(x, np.array([[0.0], [10.0], [1000.0]]))
    assert sorted(np.bincount(labels, minlength=3)) == [1, 1, 2]


def test_kmeans_labels_are_canonical():
    x = np.array([[0.0], [0.1], [0.2], [5.0], [5.1], [9.0]])
    _, a = kmeans(_ztable(x), 3, seed=1)
    # C0 is the largest cluster, then ties by smallest member zone id
    assert a.labels == {"1": "C0", "2": "C0", "3": "C0", "4": "C1", "5": "C1", "6": "C2"}


def _blobs(k, per, dim, seed, spread=0.1):
    rng = np.random.default_rng(seed)
    centres = rng.uniform(-5, 5, size=(k, dim))
    x = np.vstack([c + rng.normal(scale=spread, size=(per, dim)) for c in centres])
    truth = np.repeat(np.arange(k), per)
    return x, truth


def test_elbow_finds_three_blobs():
    x, _ = _blobs(3, 20, 4, seed=4)
    elbow = select_k_elbow(_ztable(x), (2, 8), seed=0)
    assert elbow.k == 3 and not elbow.no_elbow
    ws = [w for _, w in elbow.curve]
    assert all(b <= a + 1e-9 for a, b in zip(ws, ws[1:]))


def test_elbow_on_structureless_data_reports_no_elbow():
    # points on a regular line: WCSS falls smoothly with k
    x = np.linspace(0, 1, 40)[:, None]
    elbow = select_k_elbow(_ztable(x), (2, 6), seed=0, floor=0.5)
    assert elbow.no_elbow and elbow.k == 2


def test_elbow_range_validation():
    x, _ = _blobs(2, 5, 2, seed=0)
    with pytest.raises(ConfigError):
        select_k_elbow(_ztable(x), (2, 3))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), perm_seed=st.integers(0, 10_000))
def test_kmeans_is_invariant_to_row_order(seed, perm_seed):
    x, _ = _blobs(3, 6, 2, seed, spread=0.5)
    zones = [str(i + 1) for i in range(len(x))]
    _, a = kmeans(_ztable(x, zones), 3, seed=0, restarts=5)
    perm = np.random.default_rng(perm_seed).permutation(len(x))
    _, b = kmeans(_ztable(x[perm], [zones[i] for i in perm]), 3, seed=0, restarts=5)
    assert a.labels == b.labels


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(1, 5))
def test_kmeans_partition_invariants(seed, k):
    x = np.random.default_rng(seed).normal(size=(12, 3))
    model, a = kmeans(_ztable(x), k, seed=seed, restarts=3)
    sizes = [len(a.members(lab)) for lab in a.cluster_labels]
    assert len(sizes) == k and min(sizes) >= 1 and sum(sizes) == 12
    assert sizes == sorted(sizes, reverse=True)
    # WCSS recomputed from the labels and reported centroids agrees
    lab_idx = np.array([int(a.labels[str(i + 1)][1:]) for i in range(12)])
    c = model.centroids.to_numpy()
    assert ((x - c[lab_idx]) ** 2).sum() == pytest.approx(model.wcss, rel=1e-9, abs=1e-12)


def test_assign_with_undefined_and_roundtrip(tmp_path):
    ft = _table({"a": [1.0, 1.1, 5.0, 5.1, 0.0]}, population=[10, 10, 10, 10, 0])
    result = cluster_zones(ft, k=2, variables=["a"])
    a = result.assignment
    assert a.labels["5"] == UNDEFINED
    assert a.matrix_labels() == ("C0", "C1", UNDEFINED)
    a.to_csv(tmp_path / "c.csv")
    assert ClusterAssignment.from_csv(tmp_path / "c.csv").labels == a.labels
    plain = ClusterAssignment.from_labels({"1": "C0", "2": "C1"})
    assert not plain.has_undefined and plain.matrix_labels() == ("C0", "C1")
    with_u = assign_with_undefined(plain, _table({"a": [1.0, 2.0, 3.0]}, population=[1, 1, 0]))
    assert with_u.labels["3"] == UNDEFINED


def test_mode_shares_weighted_by_population():
    ft = _table({"comDriveAlone": [10.0, 30.0], "comPublicTransit": [90.0, 70.0]}, population=[100, 300])
    a = ClusterAssignment.from_labels({"1": "C0", "2": "C0"})
    modes = ("comDriveAlone", "comPublicTransit")
    shares = mode_shares(a, ft, weighted=True, modes=modes)
    assert shares.loc["C0", "comDriveAlone"] == pytest.approx(25.0)
    assert shares.loc["C0"].sum() == pytest.approx(100.0)
    unweighted = mode_shares(a, ft, weighted=False, modes=modes)
    assert unweighted.loc["C0", "comDriveAlone"] == pytest.approx(20.0)
