"""Synthetic cities with planted neighbourhoods and two biased views of one flow field.

A city is a set of zones whose features are drawn around ``k_true``
archetype vectors, plus a few zones with no residents (the undefined
cluster). Ground-truth trips follow a gravity model; each observed dataset
keeps every trip independently with a capture probability that depends on
the (origin cluster, destination cluster) pair. Because the capture matrices
are known, the LRFR the pipeline should measure has a closed form
(:func:`expected_lrfr`).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from ._io import ensure_dir, fmt_float, write_csv
from .clustering import UNDEFINED, ClusterAssignment, _canonical_order, cluster_label
from .compare import ClusterODMatrix, build_cluster_matrix
from .crosswalk import (
    CENSUS_VARIABLES,
    FeatureSchema,
    FeatureTable,
    ZoneRegistry,
    aggregate_features,
    load_crosswalk,
)
from .errors import ConfigError, DataError
from .ingest import DateWindow, FlowTable

LEVEL_VARIABLES = ("medianIncome",)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic city.

    Archetype means live in z-space; when ``archetype_means`` is not given
    they are drawn uniformly in ``[-2.5, 2.5]`` per variable, redrawn until
    every pair is at least ``separation * noise_std`` apart.
    """

    n_zones: int = 120
    k_true: int = 5
    n_undefined: int = 6
    noise_std: float = 0.1
    separation: float = 10.0
    archetype_means: tuple[tuple[float, ...], ...] | None = None
    population_range: tuple[int, int] = (2000, 20000)
    total_trips: int = 4_000_000
    distance_decay: float = 1.0
    n_split_units: int = 0
    seed: int = 0
    variables: tuple[str, ...] = CENSUS_VARIABLES

    def __post_init__(self):
        if self.k_true < 1:
            raise ConfigError("k_true must be >= 1")
        if self.n_zones - self.n_undefined < self.k_true:
            raise ConfigError(
                f"infeasible: {self.n_zones - self.n_undefined} defined zones for k_true={self.k_true}"
            )
        if self.n_undefined < 0 or self.noise_std <= 0:
            raise ConfigError("n_undefined must be >= 0 and noise_std > 0")
        lo, hi = self.population_range
        if not 0 < lo <= hi:
            raise ConfigError("population_range must satisfy 0 < low <= high")
        if self.total_trips < 0 or self.distance_decay < 0:
            raise ConfigError("total_trips and distance_decay must be non-negative")

    @classmethod
    def from_dict(cls, data: Mapping) -> "SynthSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown city keys {sorted(unknown)}")
        data = dict(data)
        for key in ("population_range", "variables"):
            if key in data:
                data[key] = tuple(data[key])
        if data.get("archetype_means") is not None:
            data["archetype_means"] = tuple(tuple(map(float, row)) for row in data["archetype_means"])
        return cls(**data)


@dataclass(frozen=True)
class BiasSpec:
    """Capture probabilities per (origin cluster, destination cluster) for datasets A and B."""

    labels: tuple[str, ...]
    capture_a: np.ndarray
    capture_b: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        for name in ("capture_a", "capture_b"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n, n):
                raise ConfigError(f"{name} must be {n}x{n}")
            if np.isnan(arr).any() or (arr < 0).any() or (arr > 1).any():
                raise ConfigError(f"{name} entries must be probabilities in [0, 1]")
            object.__setattr__(self, name, arr)

    def capture(self, which: str) -> np.ndarray:
        if which not in ("A", "B"):
            raise ConfigError("which must be 'A' or 'B'")
        return self.capture_a if which == "A" else self.capture_b

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "capture_a": self.capture_a.tolist(),
            "capture_b": self.capture_b.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BiasSpec":
        return cls(tuple(data["labels"]), np.asarray(data["capture_a"]), np.asarray(data["capture_b"]))


def random_bias(
    labels: Sequence[str],
    seed: int = 0,
    log2_range: tuple[float, float] = (-2.0, 2.0),
    base_range: tuple[float, float] = (0.5, 0.95),
) -> BiasSpec:
    """Capture matrices whose cellwise A/B ratio has ``log2`` uniform in ``log2_range``.

    The larger of the two probabilities in each cell is drawn from
    ``base_range``; the smaller is that divided by ``2**|log2 ratio|``.
    """
    rng = np.random.default_rng(seed)
    n = len(labels)
    r = rng.uniform(*log2_range, size=(n, n))
    hi = rng.uniform(*base_range, size=(n, n))
    lo = hi / 2.0 ** np.abs(r)
    a = np.where(r >= 0, hi, lo)
    b = np.where(r >= 0, lo, hi)
    return BiasSpec(tuple(labels), a, b)


@dataclass(frozen=True)
class City:
    spec: SynthSpec
    registry: ZoneRegistry
    unit_features: pd.DataFrame
    schema: FeatureSchema
    features: FeatureTable
    truth: ClusterAssignment
    coords: np.ndarray
    mass: np.ndarray
    primary_unit: Mapping[str, str]


def _archetype_means(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    d = len(spec.variables)
    if spec.archetype_means is not None:
        means = np.asarray(spec.archetype_means, dtype=float)
        if means.shape != (spec.k_true, d):
            raise ConfigError(f"archetype_means must be {spec.k_true}x{d}")
        return means
    min_dist = spec.separation * spec.noise_std
    for _ in range(1000):
        means = rng.uniform(-2.5, 2.5, size=(spec.k_true, d))
        if spec.k_true == 1:
            return means
        diff = means[:, None, :] - means[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        if dist[np.triu_indices(spec.k_true, 1)].min() >= min_dist:
            return means
    raise ConfigError("could not place archetypes at the requested separation; lower separation or noise")


def _unit_id(i: int) -> str:
    return f"36{i:010d}"


def _raw_features(z: np.ndarray, pop: np.ndarray, variables: Sequence[str]) -> dict[str, np.ndarray]:
    cols: dict[str, np.ndarray] = {}
    for j, var in enumerate(variables):
        if var in LEVEL_VARIABLES:
            cols[f"level_{j}"] = np.round(np.maximum(5000.0, 70000.0 + 20000.0 * z[:, j]), 2)
        else:
            pct = np.clip(50.0 + 12.0 * z[:, j], 0.5, 99.5)
            cols[f"num_{j}"] = np.round(pct / 100.0 * pop).astype(np.int64)
    return cols


def _schema(variables: Sequence[str]) -> FeatureSchema:
    ratios, levels = {}, {}
    for j, var in enumerate(variables):
        if var in LEVEL_VARIABLES:
            levels[var] = f"level_{j}"
        else:
            ratios[var] = (f"num_{j}", "population")
    return FeatureSchema("population", ratios, levels)


def generate_city(spec: SynthSpec) -> City:
    """Draw zones, units, unit-level counts and the ground-truth labels."""
    rng = np.random.default_rng(spec.seed)
    n, k = spec.n_zones, spec.k_true
    means = _archetype_means(spec, rng)
    zones = [str(i + 1) for i in range(n)]

    undefined = np.zeros(n, dtype=bool)
    undefined[rng.choice(n, size=spec.n_undefined, replace=False)] = True
    defined_idx = np.flatnonzero(~undefined)
    arche = np.full(n, -1)
    balanced = np.arange(len(defined_idx)) % k
    arche[defined_idx] = rng.permutation(balanced)

    lo, hi = spec.population_range
    pop = np.where(undefined, 0, rng.integers(lo, hi + 1, size=n))
    mass = np.where(undefined, rng.integers(lo, hi + 1, size=n), pop).astype(float)
    coords = rng.uniform(0.0, 1.0, size=(n, 2))

    # one unit per zone, then optional units split across two same-archetype zones
    unit_rows, unit_z, unit_pop = [], [], []
    noise = rng.normal(0.0, spec.noise_std, size=(n, len(spec.variables)))
    primary_unit = {}
    for i, zone in enumerate(zones):
        uid = _unit_id(i + 1)
        primary_unit[zone] = uid
        unit_rows.append((uid, zone, 1.0))
        a = arche[i]
        unit_z.append(means[a] + noise[i] if a >= 0 else np.zeros(len(spec.variables)))
        unit_pop.append(pop[i])
    for s in range(spec.n_split_units):
        a = s % k
        members = defined_idx[arche[defined_idx] == a]
        if len(members) < 2:
            continue
        i1, i2 = rng.choice(members, size=2, replace=False)
        w = float(rng.choice([0.25, 0.5, 0.75]))
        uid = _unit_id(n + s + 1)
        unit_rows.append((uid, zones[i1], w))
        unit_rows.append((uid, zones[i2], 1.0 - w))
        unit_z.append(means[a] + rng.normal(0.0, spec.noise_std, size=len(spec.variables)))
        unit_pop.append(int(rng.integers(lo, hi + 1)))

    registry = load_crosswalk(unit_rows, zones=zones)
    unit_ids = list(dict.fromkeys(r[0] for r in unit_rows))
    unit_pop = np.asarray(unit_pop, dtype=np.int64)
    feats = pd.DataFrame({"unit_id": unit_ids, "population": unit_pop})
    for col, values in _raw_features(np.asarray(unit_z), unit_pop, spec.variables).items():
        feats[col] = values
    feats = feats.set_index("unit_id")
    schema = _schema(spec.variables)
    features = aggregate_features(registry, feats, schema)

    # ground truth labelled with the same canonical rule the clustering uses
    defined_zones = [zones[i] for i in defined_idx]
    remap = _canonical_order(arche[defined_idx], defined_zones, k)
    labels = {z: UNDEFINED for z in zones}
    for z, a in zip(defined_zones, arche[defined_idx]):
        labels[z] = cluster_label(int(remap[a]))
    truth = ClusterAssignment(labels, k)
    return City(spec, registry, feats, schema, features, truth, coords, mass, primary_unit)


def gravity_intensity(city: City) -> np.ndarray:
    """Expected trips per zone pair, scaled to ``spec.total_trips``."""
    spec = city.spec
    diff = city.coords[:, None, :] - city.coords[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2)) + 0.05
    raw = np.outer(city.mass, city.mass) * dist ** (-spec.distance_decay)
    total = raw.sum()
    if spec.total_trips == 0 or total == 0:
        return np.zeros_like(raw)
    return raw / total * spec.total_trips


def generate_flows(city: City, spec: SynthSpec | None = None, dataset_id: str = "truth") -> FlowTable:
    """Poisson draws around the gravity intensities (deterministic given ``spec.seed``)."""
    spec = spec or city.spec
    if spec is not city.spec:
        city = replace(city, spec=spec)
    rng = np.random.default_rng([spec.seed, 1])
    lam = gravity_intensity(city)
    counts = rng.poisson(lam).astype(np.int64)
    table = FlowTable.empty(dataset_id, city.registry.zones)
    table.counts = counts
    return table


def _zone_cluster_index(zones: Sequence[str], assignment: ClusterAssignment, labels: Sequence[str]) -> np.ndarray:
    col = {lab: j for j, lab in enumerate(labels)}
    idx = np.empty(len(zones), dtype=int)
    for i, z in enumerate(zones):
        lab = assignment.labels.get(z)
        if lab not in col:
            raise DataError(f"no capture entry for zone {z!r} (cluster {lab!r})")
        idx[i] = col[lab]
    return idx


def observe(
    flows: FlowTable,
    bias: BiasSpec,
    which: str,
    seed: int,
    assignment: ClusterAssignment,
    dataset_id: str | None = None,
) -> FlowTable:
    """Binomial thinning: each trip kept with its cluster pair's capture probability."""
    cap = bias.capture(which)
    idx = _zone_cluster_index(flows.zones, assignment, bias.labels)
    p = cap[np.ix_(idx, idx)]
    rng = np.random.default_rng([seed, 2, 0 if which == "A" else 1])
    kept = rng.binomial(flows.counts, p).astype(np.int64)
    name = dataset_id or ("taxi" if which == "A" else "device")
    table = FlowTable.empty(name, flows.zones)
    table.counts = kept
    table.n_records = int(kept.sum())
    return table


def expected_lrfr(bias: BiasSpec, truth: ClusterODMatrix) -> np.ndarray:
    """LRFR implied by the capture matrices for true cluster flows ``T``.

    ``log2(ca/cb) + log2(sum(cb*T) / sum(ca*T))``.
    """
    if tuple(truth.labels) != tuple(bias.labels):
        raise DataError(f"label mismatch: {truth.labels} vs {bias.labels}")
    t = truth.cells.astype(float)
    ea, eb = (bias.capture_a * t).sum(), (bias.capture_b * t).sum()
    if ea <= 0 or eb <= 0:
        raise DataError("expected totals must be positive")
    if (bias.capture_a <= 0).any() or (bias.capture_b <= 0).any():
        raise DataError("zero capture probability gives an undefined expected cell")
    return np.log2(bias.capture_a / bias.capture_b) + np.log2(eb / ea)


def match_labels(found: ClusterAssignment, truth: ClusterAssignment) -> dict[str, str]:
    """Map found cluster labels onto truth labels by maximum overlap (Hungarian assignment)."""
    from scipy.optimize import linear_sum_assignment

    f_labels, t_labels = found.matrix_labels(), truth.matrix_labels()
    table = np.zeros((len(f_labels), len(t_labels)))
    fi = {lab: i for i, lab in enumerate(f_labels)}
    ti = {lab: i for i, lab in enumerate(t_labels)}
    for zone, lab in truth.labels.items():
        if zone in found.labels:
            table[fi[found.labels[zone]], ti[lab]] += 1
    rows, cols = linear_sum_assignment(-table)
    return {f_labels[r]: t_labels[c] for r, c in zip(rows, cols)}


@dataclass(frozen=True)
class Scenario:
    city: City
    truth_flows: FlowTable
    bias: BiasSpec
    observed_a: FlowTable
    observed_b: FlowTable

    def true_cluster_flows(self) -> ClusterODMatrix:
        return build_cluster_matrix(self.truth_flows, self.city.truth, self.bias.labels)

    def expected_lrfr(self) -> np.ndarray:
        return expected_lrfr(self.bias, self.true_cluster_flows())


def make_scenario(spec: SynthSpec, bias: BiasSpec | None = None, bias_seed: int | None = None) -> Scenario:
    """City, true flows and both observed datasets; all seeds derive from ``spec.seed``."""
    city = generate_city(spec)
    truth = generate_flows(city, spec)
    if bias is None:
        bias = random_bias(city.truth.matrix_labels(), spec.seed + 1 if bias_seed is None else bias_seed)
    a = observe(truth, bias, "A", spec.seed, city.truth)
    b = observe(truth, bias, "B", spec.seed, city.truth)
    return Scenario(city, truth, bias, a, b)


# ---------------------------------------------------------------------------
# Writing scenario inputs in the formats the ingest module reads


def _days(window: DateWindow) -> list[date]:
    return [window.start + timedelta(days=i) for i in range((window.end - window.start).days + 1)]


def write_taxi_csv(table: FlowTable, path, window: DateWindow, seed: int) -> Path:
    """One row per trip with a random pickup time inside ``window``, rows shuffled."""
    import pyarrow as pa
    import pyarrow.csv as pacsv

    rng = np.random.default_rng([seed, 3])
    n = len(table.zones)
    flat = table.counts.ravel()
    cell = np.repeat(np.arange(n * n), flat)
    cell = cell[rng.permutation(len(cell))]
    start = np.datetime64(window.start.isoformat(), "s")
    span = (window.end - window.start).days + 1
    ts = start + rng.integers(0, span * 86400, size=len(cell)).astype("timedelta64[s]")
    zones = np.asarray(table.zones)
    tbl = pa.table(
        {
            "pickup_datetime": pa.array(np.datetime_as_string(ts, unit="s")).cast(pa.string()),
            "PULocationID": pa.array(zones[cell // n]),
            "DOLocationID": pa.array(zones[cell % n]),
        }
    )
    # datetime_as_string gives 2021-01-01T00:00:00; TLC files use a space
    tbl = tbl.set_column(0, "pickup_datetime", pa.compute.replace_substring(tbl["pickup_datetime"], "T", " "))
    path = Path(path)
    pacsv.write_csv(tbl, path, pacsv.WriteOptions(quoting_style="none"))
    return path


def write_device_csv(table: FlowTable, path, window: DateWindow, primary_unit: Mapping[str, str], seed: int) -> Path:
    """Daily ``origin unit -> {destination unit: count}`` rows; counts split uniformly across days."""
    rng = np.random.default_rng([seed, 4])
    days = _days(window)
    n = len(table.zones)
    per_day = rng.multinomial(table.counts.ravel(), np.full(len(days), 1.0 / len(days)))
    per_day = per_day.reshape(n, n, len(days))
    units = [primary_unit[z] for z in table.zones]
    rows = []
    for t, day in enumerate(days):
        for i in range(n):
            nz = np.flatnonzero(per_day[i, :, t])
            if len(nz) == 0:
                continue
            dest = {units[j]: int(per_day[i, j, t]) for j in nz}
            rows.append((day.isoformat(), units[i], json.dumps(dest, separators=(",", ":"))))
    return write_csv(path, ["date", "origin_census_block_group", "destination_cbgs"], rows)


def write_panel_csv(city: City, path, window: DateWindow, seed: int) -> Path:
    """Monthly home-panel counts: a per-cluster sampling rate of each unit's population."""
    rng = np.random.default_rng([seed, 5])
    labels = city.truth.matrix_labels()
    night_rate = dict(zip(labels, rng.uniform(0.03, 0.12, size=len(labels))))
    day_rate = dict(zip(labels, rng.uniform(0.02, 0.12, size=len(labels))))
    months = window.months()
    rows = []
    for uid, pop in city.unit_features["population"].items():
        zone = city.registry.dominant_zone(uid)
        lab = city.truth.labels[zone]
        base = pop if pop > 0 else city.mass[city.registry.zone_index(zone)] * 0.2
        for m in months:
            jitter = rng.uniform(0.9, 1.1, size=2)
            night = 0.0 if pop == 0 else base * night_rate[lab] * jitter[0]
            day = base * day_rate[lab] * jitter[1]
            rows.append((uid, m, f"{night:.2f}", f"{day:.2f}"))
    header = ["census_block_group", "month", "number_devices_residing", "number_devices_primary_daytime"]
    return write_csv(path, header, rows)


@dataclass
class SynthConfig:
    """Structured config for the ``synth`` subcommand."""

    city: SynthSpec = field(default_factory=SynthSpec)
    window: str = "2021-01-01..2021-01-07"
    panel_window: str = "2021-01..2021-03"
    bias: Mapping | None = None
    bias_seed: int | None = None

    @classmethod
    def from_dict(cls, data: Mapping) -> "SynthConfig":
        data = dict(data or {})
        unknown = set(data) - {"city", "window", "panel_window", "bias", "bias_seed"}
        if unknown:
            raise ConfigError(f"unknown synth config keys {sorted(unknown)}")
        city = SynthSpec.from_dict(data.pop("city", {}) or {})
        return cls(city=city, **data)


def write_scenario(cfg: SynthConfig, out_dir) -> dict[str, Path]:
    """Generate a scenario and write every pipeline input plus the oracle files.

    Also writes ``pipeline.yaml``, a ready-to-run config for ``odcompare run``.
    """
    import yaml

    out = ensure_dir(out_dir)
    window = DateWindow.parse(cfg.window)
    panel_window = DateWindow.parse(cfg.panel_window)
    bias = BiasSpec.from_dict(cfg.bias) if cfg.bias else None
    sc = make_scenario(cfg.city, bias, cfg.bias_seed)
    city, seed = sc.city, cfg.city.seed

    files = {}
    files["zones"] = write_csv(out / "zones.csv", ["zone_id", "name"], [(z, f"zone {z}") for z in city.registry.zones])
    xw = city.registry.weights_frame()
    files["crosswalk"] = write_csv(
        out / "crosswalk.csv", ["unit_id", "zone_id", "weight"],
        [(u, z, fmt_float(w)) for u, z, w in xw.itertuples(index=False)],
    )
    feats = city.unit_features.reset_index()
    files["features"] = write_csv(out / "features.csv", list(feats.columns), feats.itertuples(index=False))
    files["feature_schema"] = out / "feature_schema.json"
    files["feature_schema"].write_text(json.dumps(city.schema.to_dict(), indent=2, sort_keys=True) + "\n")
    files["taxi"] = write_taxi_csv(sc.observed_a, out / "taxi.csv", window, seed)
    files["device"] = write_device_csv(sc.observed_b, out / "device.csv", window, city.primary_unit, seed)
    files["panel"] = write_panel_csv(city, out / "panel.csv", panel_window, seed)
    files["truth_clusters"] = city.truth.to_csv(out / "truth_clusters.csv")
    files["bias"] = out / "bias.json"
    files["bias"].write_text(json.dumps(sc.bias.to_dict(), indent=2, sort_keys=True) + "\n")
    exp = sc.expected_lrfr()
    labels = sc.bias.labels
    files["expected_lrfr"] = write_csv(
        out / "expected_lrfr.csv", ["origin", *labels],
        [(lab, *(fmt_float(v) for v in row)) for lab, row in zip(labels, exp)],
    )
    pipeline = {
        "crosswalk": "crosswalk.csv",
        "zones": "zones.csv",
        "features": "features.csv",
        "feature_schema": "feature_schema.json",
        "panel": "panel.csv",
        "datasets": {
            "taxi": {"style": "od_trips", "paths": ["taxi.csv"]},
            "device": {"style": "unit_flows", "paths": ["device.csv"]},
        },
        "compare": ["taxi", "device"],
        "window": str(window),
        "panel_window": cfg.panel_window,
        "seed": seed,
        "k_range": f"2..{min(10, city.spec.n_zones - city.spec.n_undefined)}",
        "epsilon": 0.0,
        "include_self": True,
        "out": "out",
    }
    files["pipeline"] = out / "pipeline.yaml"
    files["pipeline"].write_text(yaml.safe_dump(pipeline, sort_keys=True))
    return files


def spec_to_dict(spec: SynthSpec) -> dict:
    d = asdict(spec)
    d["variables"] = list(d["variables"])
    d["population_range"] = list(d["population_range"])
    return d
