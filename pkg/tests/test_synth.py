from __future__ import annotations

import math

import numpy as np
import pytest

from odcompare.clustering import ClusterAssignment
from odcompare.compare import ClusterODMatrix, build_cluster_matrix
from odcompare.errors import ConfigError, DataError
from odcompare.ingest import FlowTable
from odcompare.synth import (
    BiasSpec,
    SynthSpec,
    expected_lrfr,
    generate_city,
    generate_flows,
    make_scenario,
    match_labels,
    observe,
    random_bias,
)


def test_city_has_planted_structure():
    spec = SynthSpec(n_zones=40, k_true=3, n_undefined=4, seed=1, total_trips=50_000)
    city = generate_city(spec)
    assert city.registry.n_zones == 40
    assert int((~city.features.defined).sum()) == 4
    labels = city.truth.matrix_labels()
    assert labels == ("C0", "C1", "C2", "UNDEFINED")
    flows = generate_flows(city)
    assert flows.zones == city.registry.zones
    assert abs(flows.total - 50_000) < 5 * math.sqrt(50_000)


def test_generation_is_seeded():
    spec = SynthSpec(n_zones=30, k_true=3, n_undefined=2, seed=7, total_trips=10_000)
    a, b = make_scenario(spec), make_scenario(spec)
    assert a.observed_a.identical(b.observed_a)
    assert a.observed_b.identical(b.observed_b)
    c = make_scenario(SynthSpec(n_zones=30, k_true=3, n_undefined=2, seed=8, total_trips=10_000))
    assert not a.truth_flows.identical(c.truth_flows)


def test_infeasible_spec_rejected():
    with pytest.raises(ConfigError):
        SynthSpec(n_zones=5, k_true=5, n_undefined=2)
    with pytest.raises(ConfigError):
        generate_city(SynthSpec(n_zones=20, k_true=4, n_undefined=0, separation=1e3))


def test_binomial_thinning_within_three_sigma():
    zones = ("1", "2")
    flows = FlowTable.empty("truth", zones)
    flows.counts = np.array([[1_000_000, 400_000], [250_000, 90_000]], dtype=np.int64)
    assign = ClusterAssignment.from_labels({"1": "C0", "2": "C1"})
    bias = BiasSpec(("C0", "C1"), np.array([[0.9, 0.2], [0.5, 0.05]]), np.full((2, 2), 0.5))
    kept = observe(flows, bias, "A", seed=3, assignment=assign).counts
    n, p = flows.counts, bias.capture_a
    sigma = np.sqrt(n * p * (1 - p))
    assert (np.abs(kept - n * p) <= 3 * sigma).all()


def test_expected_lrfr_closed_form():
    truth = ClusterODMatrix(("C0", "C1"), np.array([[100, 300], [200, 400]]))
    ca = np.array([[0.8, 0.2], [0.4, 0.4]])
    cb = np.array([[0.4, 0.4], [0.4, 0.4]])
    got = expected_lrfr(BiasSpec(("C0", "C1"), ca, cb), truth)
    # expected totals: A = 80 + 60 + 80 + 160 = 380, B = 0.4 * 1000 = 400
    want = np.log2(ca / cb) + math.log2(400 / 380)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-15)
    # equal capture everywhere gives zero
    same = expected_lrfr(BiasSpec(("C0", "C1"), cb, cb), truth)
    assert np.abs(same).max() < 1e-15
    with pytest.raises(DataError):
        expected_lrfr(BiasSpec(("C0", "C1"), np.zeros((2, 2)), cb), truth)


def test_random_bias_ratio_range():
    b = random_bias(("C0", "C1", "C2"), seed=2)
    r = np.log2(b.capture_a / b.capture_b)
    assert r.min() >= -2 - 1e-12 and r.max() <= 2 + 1e-12
    assert ((b.capture_a > 0) & (b.capture_a <= 1)).all()
    assert BiasSpec.from_dict(b.to_dict()).capture_b.tolist() == b.capture_b.tolist()


def test_measured_lrfr_tracks_expected_on_truth_labels():
    spec = SynthSpec(n_zones=60, k_true=4, n_undefined=3, seed=5, total_trips=2_000_000)
    sc = make_scenario(spec)
    a = build_cluster_matrix(sc.observed_a, sc.city.truth, sc.bias.labels)
    b = build_cluster_matrix(sc.observed_b, sc.city.truth, sc.bias.labels)
    with np.errstate(divide="ignore"):
        measured = np.log2((a.cells / a.grand_total) / (b.cells / b.grand_total))
    exp = sc.expected_lrfr()
    big = sc.true_cluster_flows().cells >= 2000
    assert np.abs(measured - exp)[big].max() < 0.1


def test_match_labels_recovers_permutation():
    truth = ClusterAssignment.from_labels({"1": "C0", "2": "C0", "3": "C1", "4": "C2"})
    found = ClusterAssignment.from_labels({"1": "C2", "2": "C2", "3": "C0", "4": "C1"})
    assert match_labels(found, truth) == {"C2": "C0", "C0": "C1", "C1": "C2"}
