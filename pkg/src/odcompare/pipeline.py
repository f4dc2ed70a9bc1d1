"""Pipeline configuration and the four stages: crosswalk, ingest, cluster, compare.

Each stage writes its results to the output directory and the later stages
can start from those files, so ``cluster`` and ``compare`` can be rerun on
their own.
"""

from __future__ import annotations

import logging
import os
import platform
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from . import __version__
from ._io import ensure_dir, sha256_file
from .clustering import (
    ClusterAssignment,
    ClusteringResult,
    cluster_population,
    cluster_zones,
    frame_to_csv,
)
from .compare import (
    build_cluster_matrix,
    compare_matrices,
    normalize_per_device,
    normalize_per_population,
    pearson,
    sampling_rate,
    zone_devices,
)
from .crosswalk import (
    FeatureSchema,
    FeatureTable,
    ZoneRegistry,
    aggregate_features,
    load_crosswalk,
    load_zone_list,
    read_unit_features,
)
from .errors import ConfigError, DataError, EmptyInputError
from .ingest import (
    DEFAULT_MAX_REJECT_FRACTION,
    DateWindow,
    FlowTable,
    OdColumns,
    UnitFlowColumns,
    ingest_od_trips,
    ingest_unit_flows,
    load_device_panel,
)
from .report import (
    emit_chord_edges,
    emit_heatmap,
    report_dict,
    write_cell_matrix,
    write_json,
    write_normalized,
    write_od_matrix,
    write_rf_matrix,
    write_sampling_rates,
    write_undefined_flags,
)

log = logging.getLogger(__name__)

STYLES = ("od_trips", "unit_flows")


def parse_k_range(text) -> tuple[int, int]:
    if isinstance(text, (list, tuple)):
        lo, hi = text
    else:
        try:
            lo, hi = str(text).split("..")
        except ValueError:
            raise ConfigError(f"bad k range {text!r}, expected a..b") from None
    try:
        return int(lo), int(hi)
    except ValueError:
        raise ConfigError(f"bad k range {text!r}") from None


@dataclass
class DatasetConfig:
    style: str
    paths: list[Path]
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.style not in STYLES:
            raise ConfigError(f"dataset style must be one of {STYLES}, got {self.style!r}")


@dataclass
class PipelineConfig:
    """Every knob of a run. Relative paths in a config file resolve against the file's directory."""

    crosswalk: Path
    features: Path
    feature_schema: Path
    datasets: dict[str, DatasetConfig]
    compare: tuple[str, str]
    window: DateWindow
    out: Path = Path("out")
    zones: Path | None = None
    panel: Path | None = None
    panel_window: DateWindow | None = None
    seed: int = 0
    k: int | None = None
    k_range: tuple[int, int] = (2, 10)
    restarts: int = 20
    epsilon: float = 0.0
    include_self: bool = True
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    max_reject_fraction: float = DEFAULT_MAX_REJECT_FRACTION
    weighted_modes: bool = True

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if len(self.compare) != 2 or any(d not in self.datasets for d in self.compare):
            raise ConfigError(f"compare must name two configured datasets, got {self.compare}")
        if self.panel is not None and self.panel_window is None:
            raise ConfigError("panel given without panel_window: the device averaging window must be explicit")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, data: Mapping, base: Path = Path(".")) -> "PipelineConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")

        def path(key, required=True):
            v = data.get(key)
            if v is None:
                if required:
                    raise ConfigError(f"config needs '{key}'")
                return None
            return (base / v) if not Path(v).is_absolute() else Path(v)

        datasets = {}
        for name, d in (data.get("datasets") or {}).items():
            paths = d.get("paths") or ([d["path"]] if "path" in d else [])
            datasets[str(name)] = DatasetConfig(
                d.get("style", "od_trips"), [base / p for p in paths], dict(d.get("columns") or {})
            )
        if not datasets:
            raise ConfigError("config needs at least one dataset under 'datasets'")
        if "window" not in data:
            raise ConfigError("config needs 'window' (start..end)")
        kwargs = dict(
            crosswalk=path("crosswalk"),
            features=path("features"),
            feature_schema=path("feature_schema"),
            datasets=datasets,
            compare=tuple(data.get("compare") or list(datasets)[:2]),
            window=DateWindow.parse(str(data["window"])),
            out=path("out", required=False) or base / "out",
            zones=path("zones", required=False),
            panel=path("panel", required=False),
            panel_window=DateWindow.parse(str(data["panel_window"])) if data.get("panel_window") else None,
        )
        for key in ("seed", "k", "restarts", "workers"):
            if data.get(key) is not None:
                kwargs[key] = int(data[key])
        for key in ("epsilon", "max_reject_fraction"):
            if data.get(key) is not None:
                kwargs[key] = float(data[key])
        for key in ("include_self", "weighted_modes"):
            if data.get(key) is not None:
                kwargs[key] = bool(data[key])
        if data.get("k_range") is not None:
            kwargs["k_range"] = parse_k_range(data["k_range"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"bad YAML in {path}: {exc}") from None
        return cls.from_dict(data, path.parent)

    def check_paths(self):
        required = [self.crosswalk, self.features, self.feature_schema]
        required += [p for d in self.datasets.values() for p in d.paths]
        required += [p for p in (self.zones, self.panel) if p is not None]
        missing = [str(p) for p in required if not Path(p).exists()]
        if missing:
            raise ConfigError(f"missing input files: {missing}")

    def echo(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Path):
                v = str(v)
            elif isinstance(v, DateWindow):
                v = str(v)
            elif f.name == "datasets":
                v = {k: {"style": d.style, "paths": [str(p) for p in d.paths], "columns": d.columns} for k, d in v.items()}
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def input_paths(self) -> list[Path]:
        paths = [self.crosswalk, self.features, self.feature_schema]
        paths += [p for p in (self.zones, self.panel) if p is not None]
        paths += [p for d in self.datasets.values() for p in d.paths]
        return paths


# ---------------------------------------------------------------------------
# Stages


def load_geography(cfg: PipelineConfig) -> tuple[ZoneRegistry, FeatureTable]:
    zones, names = (None, None)
    if cfg.zones is not None:
        zones, names = load_zone_list(cfg.zones)
    registry = load_crosswalk(cfg.crosswalk, zones=zones, zone_names=names)
    schema = FeatureSchema.load(cfg.feature_schema)
    features = aggregate_features(registry, read_unit_features(cfg.features), schema)
    return registry, features


def stage_ingest(cfg: PipelineConfig, registry: ZoneRegistry, names=None) -> dict[str, FlowTable]:
    out = ensure_dir(cfg.out)
    tables = {}
    for name in names or list(cfg.datasets):
        d = cfg.datasets[name]
        log.info("ingesting %s (%s, %d files)", name, d.style, len(d.paths))
        if d.style == "od_trips":
            table = ingest_od_trips(
                d.paths, registry, cfg.window, OdColumns.from_mapping(d.columns), name,
                cfg.workers, cfg.max_reject_fraction,
            )
        else:
            table = ingest_unit_flows(
                d.paths, registry, cfg.window, cfg.include_self, UnitFlowColumns.from_mapping(d.columns),
                name, cfg.workers, cfg.max_reject_fraction,
            )
        if table.total == 0:
            raise EmptyInputError(
                f"dataset {name!r}: zero accepted trips in window {cfg.window} "
                f"(records={table.n_records}, rejected={dict(table.rejected)})"
            )
        table.to_csv(out / f"flows_{name}.csv")
        tables[name] = table
    return tables


def stage_cluster(cfg: PipelineConfig, features: FeatureTable) -> ClusteringResult:
    out = ensure_dir(cfg.out)
    result = cluster_zones(
        features, k=cfg.k, k_range=cfg.k_range, seed=cfg.seed, restarts=cfg.restarts,
        weighted_modes=cfg.weighted_modes,
    )
    result.assignment.to_csv(out / "clusters.csv")
    frame_to_csv(result.profile, out / "profile.csv", "cluster")
    if result.modes is not None:
        frame_to_csv(result.modes, out / "mode_shares.csv", "cluster")
    if result.elbow is not None:
        result.elbow.to_csv(out / "elbow_curve.csv")
    return result


def stage_compare(
    cfg: PipelineConfig,
    registry: ZoneRegistry,
    features: FeatureTable,
    assignment: ClusterAssignment | None = None,
    flows: Mapping[str, FlowTable] | None = None,
) -> dict:
    out = ensure_dir(cfg.out)
    if assignment is None:
        path = out / "clusters.csv"
        if not path.exists():
            raise ConfigError(f"{path} not found; run the cluster stage first")
        assignment = ClusterAssignment.from_csv(path)
    flows = dict(flows or {})
    for name in cfg.compare:
        if name not in flows:
            path = out / f"flows_{name}.csv"
            if not path.exists():
                raise ConfigError(f"{path} not found; run the ingest stage first")
            flows[name] = FlowTable.from_csv(path)

    a_name, b_name = cfg.compare
    labels = assignment.matrix_labels()
    od = {n: build_cluster_matrix(flows[n], assignment, labels) for n in (a_name, b_name)}
    meta = {
        "window": str(cfg.window),
        "panel_window": str(cfg.panel_window) if cfg.panel_window else None,
        "include_self": cfg.include_self,
        "label_order": assignment.label_order,
    }
    report = compare_matrices(od[a_name], od[b_name], cfg.epsilon, meta)

    for n, m in od.items():
        write_od_matrix(m, out / f"od_{n}.csv")
        emit_chord_edges(m, out / f"chord_{n}.csv")
    write_rf_matrix(report.rf_a, out / f"rf_{a_name}.csv")
    write_rf_matrix(report.rf_b, out / f"rf_{b_name}.csv")
    write_cell_matrix(labels, report.rfr, out / "rfr.csv")
    write_cell_matrix(labels, report.lrfr, out / "lrfr.csv")
    write_undefined_flags(labels, report.lrfr, out / "lrfr_undefined.csv")
    emit_heatmap(report.lrfr, labels, out / "lrfr_heatmap.svg", title=f"LRFR {a_name} vs {b_name}")

    population = cluster_population(features, assignment).to_dict()
    normalized = {}
    norm_rows = {}
    for n, m in od.items():
        norm_rows.setdefault("population", []).append((n, normalize_per_population(m, population)))
    sampling = None
    correlations = {}
    if cfg.panel is not None:
        panel = load_device_panel(cfg.panel)
        sampling = sampling_rate(panel, population, assignment, registry, cfg.panel_window)
        write_sampling_rates(sampling, out / "sampling_rates.csv")
        for basis in ("night", "day"):
            for n, m in od.items():
                nf = normalize_per_device(m, panel, assignment, registry, basis, cfg.panel_window)
                norm_rows.setdefault(basis, []).append((n, nf))
        correlations = _zone_correlations(panel, registry, features, flows[b_name], cfg.panel_window)
    for basis, items in norm_rows.items():
        write_normalized(items, out / f"normalized_{basis}.csv")
        for n, nf in items:
            normalized[f"{basis}:{n}"] = nf

    write_json(report_dict(report, sampling, normalized, correlations), out / "report.json")
    return {"report": report, "sampling": sampling, "normalized": normalized, "correlations": correlations}


def _zone_correlations(panel, registry, features, device_flows: FlowTable, window) -> dict:
    """Zone-level Pearson r: devices vs trips originating, and nighttime devices vs population."""
    dev = zone_devices(panel, registry, window)
    trips = device_flows.counts.sum(axis=1).astype(float)
    night = dev["devices_night"].to_numpy()
    pop = features.population.reindex(registry.zones).to_numpy(dtype=float)
    out = {}
    has_dev = night > 0
    try:
        out["devices_night_vs_trips_from"] = pearson(night[has_dev], trips[has_dev])
    except DataError as exc:
        log.warning("devices/trips correlation skipped: %s", exc)
    has_pop = pop > 0
    try:
        out["devices_night_vs_population"] = pearson(night[has_pop], pop[has_pop])
    except DataError as exc:
        log.warning("devices/population correlation skipped: %s", exc)
    return out


def write_manifest(cfg: PipelineConfig, stage: str, extra: Mapping | None = None) -> Path:
    out = Path(cfg.out)
    outputs = sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    import pandas, pyarrow

    manifest = {
        "stage": stage,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.echo(),
        "inputs": {str(p): sha256_file(p) for p in cfg.input_paths() if Path(p).exists()},
        "outputs": {p.name: sha256_file(p) for p in outputs},
        "versions": {
            "odcompare": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pandas.__version__,
            "pyarrow": pyarrow.__version__,
        },
        "derived_seeds": "k-means restart r uses seed + r; synthetic streams use [seed, stream-id]",
    }
    if extra:
        manifest.update(extra)
    return write_json(manifest, out / "manifest.json")


def run_pipeline(cfg: PipelineConfig) -> dict:
    cfg.check_paths()
    registry, features = load_geography(cfg)
    flows = stage_ingest(cfg, registry)
    clustering = stage_cluster(cfg, features)
    result = stage_compare(cfg, registry, features, clustering.assignment, flows)
    k_info = {"k": clustering.model.k, "no_elbow": clustering.elbow.no_elbow if clustering.elbow else None}
    write_manifest(cfg, "run", {"clustering": k_info})
    result.update(flows=flows, clustering=clustering, registry=registry, features=features)
    return result
