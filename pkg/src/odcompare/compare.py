"""Cluster-level OD matrices and the cross-dataset representation metrics.

For a dataset ``G`` with cluster flow counts ``n_ij`` and total ``N``:

* relative frequency ``RF_ij = n_ij / N``
* relative frequency ratio ``RFR_ij = RF_ij(a) / RF_ij(b)``
* ``LRFR_ij = log2 RFR_ij``; positive where dataset ``a`` over-represents
  the cell relative to ``b``, and exactly antisymmetric under swapping them.

Cells where either RF is zero have no finite ratio; they are masked
(``numpy.ma``) unless additive smoothing is requested.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .clustering import UNDEFINED, ClusterAssignment
from .crosswalk import ZoneRegistry
from .errors import ConfigError, DataError, EmptyInputError
from .ingest import DateWindow, DevicePanel, FlowTable

MARGIN = "U"


@dataclass(frozen=True)
class ClusterODMatrix:
    """Square trip-count matrix between clusters with "U" (all clusters) margins."""

    labels: tuple[str, ...]
    cells: np.ndarray
    dataset_id: str = ""

    @property
    def row_margin(self) -> np.ndarray:
        return self.cells.sum(axis=1)

    @property
    def col_margin(self) -> np.ndarray:
        return self.cells.sum(axis=0)

    @property
    def grand_total(self) -> int:
        return int(self.cells.sum())

    def with_margins(self) -> pd.DataFrame:
        """Matrix plus a ``U`` column of row sums and ``U`` row of column sums."""
        frame = pd.DataFrame(self.cells, index=list(self.labels), columns=list(self.labels))
        frame[MARGIN] = self.row_margin
        frame.loc[MARGIN] = list(self.col_margin) + [self.grand_total]
        frame.index.name = "origin"
        return frame.astype(np.int64)

    @classmethod
    def from_margined_frame(cls, frame: pd.DataFrame, dataset_id: str = "") -> "ClusterODMatrix":
        labels = [c for c in frame.columns if c != MARGIN]
        cells = frame.loc[labels, labels].to_numpy(dtype=np.int64)
        m = cls(tuple(labels), cells, dataset_id)
        if MARGIN in frame.columns:
            if not np.array_equal(frame.loc[labels, MARGIN].to_numpy(), m.row_margin):
                raise DataError("stored U column disagrees with row sums")
            if not np.array_equal(frame.loc[MARGIN, labels].to_numpy(), m.col_margin):
                raise DataError("stored U row disagrees with column sums")
        return m


def zone_to_cluster_matrix(zones: Sequence[str], assignment: ClusterAssignment, labels: Sequence[str]) -> np.ndarray:
    """0/1 membership matrix (zones x labels). Zones without a label get an all-zero row."""
    col = {lab: j for j, lab in enumerate(labels)}
    p = np.zeros((len(zones), len(labels)), dtype=np.int64)
    for i, zone in enumerate(zones):
        lab = assignment.labels.get(zone)
        if lab is not None:
            if lab not in col:
                raise DataError(f"zone {zone!r} has label {lab!r} outside {list(labels)}")
            p[i, col[lab]] = 1
    return p


def build_cluster_matrix(
    flows: FlowTable,
    assignment: ClusterAssignment,
    labels: Sequence[str] | None = None,
) -> ClusterODMatrix:
    """Collapse a zone flow table to clusters: ``C = P^T F P`` in exact integers."""
    labels = tuple(labels or assignment.matrix_labels())
    p = zone_to_cluster_matrix(flows.zones, assignment, labels)
    active = (flows.counts.sum(axis=1) + flows.counts.sum(axis=0)) > 0
    orphan = active & (p.sum(axis=1) == 0)
    if orphan.any():
        zones = [z for z, bad in zip(flows.zones, orphan) if bad]
        raise DataError(f"{flows.dataset_id}: zones with flows but no cluster label: {zones[:5]}")
    cells = p.T @ flows.counts @ p
    return ClusterODMatrix(labels, cells.astype(np.int64), flows.dataset_id)


@dataclass(frozen=True)
class RFMatrix:
    labels: tuple[str, ...]
    values: np.ndarray
    grand_total: int
    dataset_id: str = ""


def relative_frequency(m: ClusterODMatrix) -> RFMatrix:
    total = m.grand_total
    if total <= 0:
        raise EmptyInputError(f"{m.dataset_id or 'matrix'}: zero grand total, relative frequency undefined")
    return RFMatrix(m.labels, m.cells / total, total, m.dataset_id)


def _check_pair(a: RFMatrix, b: RFMatrix):
    if a.labels != b.labels or a.values.shape != b.values.shape:
        raise DataError(f"label/shape mismatch: {a.labels} vs {b.labels}")


def rfr(rf_a: RFMatrix, rf_b: RFMatrix, epsilon: float = 0.0) -> np.ma.MaskedArray:
    """Cellwise ``RF(a) / RF(b)``.

    With ``epsilon == 0`` cells where either RF is zero are masked. With
    ``epsilon > 0`` both RFs are shifted by ``epsilon`` first and no cell is
    masked.
    """
    _check_pair(rf_a, rf_b)
    if epsilon < 0:
        raise ConfigError("epsilon must be >= 0")
    a = rf_a.values + epsilon
    b = rf_b.values + epsilon
    mask = (a <= 0) | (b <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mask, np.nan, a / np.where(mask, 1.0, b))
    return np.ma.masked_array(ratio, mask=mask)


def lrfr(ratio: np.ma.MaskedArray) -> np.ma.MaskedArray:
    """Base-2 log of an RFR matrix; masked cells stay masked."""
    ratio = np.ma.asarray(ratio)
    mask = np.ma.getmaskarray(ratio)
    safe = np.where(mask, 1.0, ratio.filled(1.0))
    return np.ma.masked_array(np.where(mask, np.nan, np.log2(safe)), mask=mask)


def lrfr_from_rf(rf_a: RFMatrix, rf_b: RFMatrix, epsilon: float = 0.0) -> np.ma.MaskedArray:
    """``log2 RF(a) - log2 RF(b)``: the same quantity as ``lrfr(rfr(...))`` by a separate route."""
    _check_pair(rf_a, rf_b)
    a = rf_a.values + epsilon
    b = rf_b.values + epsilon
    mask = (a <= 0) | (b <= 0)
    la = np.log2(np.where(mask, 1.0, a))
    lb = np.log2(np.where(mask, 1.0, b))
    return np.ma.masked_array(np.where(mask, np.nan, la - lb), mask=mask)


@dataclass(frozen=True)
class ComparisonReport:
    od_a: ClusterODMatrix
    od_b: ClusterODMatrix
    rf_a: RFMatrix
    rf_b: RFMatrix
    rfr: np.ma.MaskedArray
    lrfr: np.ma.MaskedArray
    smoothing_epsilon: float = 0.0
    metadata: Mapping[str, object] = field(default_factory=dict)

    @property
    def labels(self) -> tuple[str, ...]:
        return self.od_a.labels


def compare_matrices(
    od_a: ClusterODMatrix,
    od_b: ClusterODMatrix,
    epsilon: float = 0.0,
    metadata: Mapping[str, object] | None = None,
) -> ComparisonReport:
    if od_a.labels != od_b.labels:
        raise DataError(f"matrices have different labels: {od_a.labels} vs {od_b.labels}")
    rf_a, rf_b = relative_frequency(od_a), relative_frequency(od_b)
    ratio = rfr(rf_a, rf_b, epsilon)
    meta = {"dataset_a": od_a.dataset_id, "dataset_b": od_b.dataset_id, "smoothing_epsilon": epsilon}
    meta.update(metadata or {})
    return ComparisonReport(od_a, od_b, rf_a, rf_b, ratio, lrfr(ratio), epsilon, meta)


# ---------------------------------------------------------------------------
# Normalizations and sampling rates


@dataclass(frozen=True)
class NormalizedFlows:
    """Trips within / leaving / entering each cluster divided by a size measure.

    ``flagged`` lists clusters without a usable denominator; their entries
    are NaN.
    """

    labels: tuple[str, ...]
    within: np.ndarray
    from_: np.ndarray
    to: np.ndarray
    denominator: np.ndarray
    basis: str
    flagged: tuple[str, ...] = ()

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "denominator": self.denominator,
                "within": self.within,
                "from": self.from_,
                "to": self.to,
                "flagged": [lab in self.flagged for lab in self.labels],
            },
            index=pd.Index(self.labels, name="cluster"),
        )


def _normalize(m: ClusterODMatrix, denom: np.ndarray, basis: str, flagged: Sequence[str]) -> NormalizedFlows:
    denom = np.asarray(denom, dtype=float)
    ok = ~np.isin(np.array(m.labels), list(flagged))
    safe = np.where(ok, denom, 1.0)

    def div(v):
        return np.where(ok, v / safe, np.nan)

    return NormalizedFlows(
        m.labels,
        div(np.diag(m.cells)),
        div(m.row_margin),
        div(m.col_margin),
        np.where(ok, denom, np.nan),
        basis,
        tuple(flagged),
    )


def normalize_per_population(m: ClusterODMatrix, population: Mapping[str, float]) -> NormalizedFlows:
    """Trips per resident. ``UNDEFINED`` has no residents and is flagged rather than rejected."""
    denom, flagged = [], []
    for lab in m.labels:
        if lab == UNDEFINED:
            flagged.append(lab)
            denom.append(np.nan)
            continue
        pop = population.get(lab)
        if pop is None or not pop > 0:
            raise DataError(f"cluster {lab}: missing or zero population ({pop})")
        denom.append(float(pop))
    return _normalize(m, np.array(denom), "population", flagged)


BASES = {"night": "devices_residing", "day": "devices_daytime"}


def cluster_devices(
    panel: DevicePanel,
    assignment: ClusterAssignment,
    registry: ZoneRegistry,
    window: DateWindow | None = None,
    labels: Sequence[str] | None = None,
) -> pd.DataFrame:
    """Mean monthly devices per unit, prorated to zones and summed per cluster.

    Units absent from the registry are ignored. Returns a frame indexed by
    cluster with ``devices_night`` and ``devices_day`` columns.
    """
    labels = tuple(labels or assignment.matrix_labels())
    unit_means = panel.mean_monthly(window)
    weights = registry.weights_frame()
    weights = weights[weights["unit_id"].isin(unit_means.index)]
    weights = weights.assign(cluster=weights["zone_id"].map(assignment.labels))
    weights = weights.dropna(subset=["cluster"])
    w = weights["weight"].to_numpy()
    prorated = pd.DataFrame(
        {
            "cluster": weights["cluster"].to_numpy(),
            "devices_night": unit_means.loc[weights["unit_id"], "devices_residing"].to_numpy() * w,
            "devices_day": unit_means.loc[weights["unit_id"], "devices_daytime"].to_numpy() * w,
        }
    )
    out = prorated.groupby("cluster")[["devices_night", "devices_day"]].sum()
    out = out.reindex(labels, fill_value=0.0)
    out.index.name = "cluster"
    return out


def zone_devices(panel: DevicePanel, registry: ZoneRegistry, window: DateWindow | None = None) -> pd.DataFrame:
    """Mean monthly devices prorated to zones (registry order)."""
    unit_means = panel.mean_monthly(window)
    weights = registry.weights_frame()
    weights = weights[weights["unit_id"].isin(unit_means.index)]
    w = weights["weight"].to_numpy()
    frame = pd.DataFrame(
        {
            "zone_id": weights["zone_id"].to_numpy(),
            "devices_night": unit_means.loc[weights["unit_id"], "devices_residing"].to_numpy() * w,
            "devices_day": unit_means.loc[weights["unit_id"], "devices_daytime"].to_numpy() * w,
        }
    )
    out = frame.groupby("zone_id")[["devices_night", "devices_day"]].sum().reindex(registry.zones, fill_value=0.0)
    out.index.name = "zone_id"
    return out


def normalize_per_device(
    m: ClusterODMatrix,
    panel: DevicePanel,
    assignment: ClusterAssignment,
    registry: ZoneRegistry,
    basis: str = "day",
    window: DateWindow | None = None,
) -> NormalizedFlows:
    """Trips per observed device (``basis`` ``night`` or ``day``); clusters with no devices are flagged."""
    if basis not in BASES:
        raise ConfigError(f"basis must be one of {sorted(BASES)}")
    devices = cluster_devices(panel, assignment, registry, window, m.labels)[f"devices_{basis}"]
    denom = devices.reindex(m.labels).to_numpy(dtype=float)
    flagged = [lab for lab, d in zip(m.labels, denom) if not d > 0]
    return _normalize(m, denom, f"devices_{basis}", flagged)


@dataclass(frozen=True)
class SamplingRateTable:
    """Per defined cluster: population, mean monthly devices, and devices/population in percent."""

    frame: pd.DataFrame

    COLUMNS = ("population", "devices_night", "devices_day", "rate_night", "rate_day")


def sampling_rate(
    panel: DevicePanel,
    population: Mapping[str, float],
    assignment: ClusterAssignment,
    registry: ZoneRegistry,
    window: DateWindow | None = None,
) -> SamplingRateTable:
    devices = cluster_devices(panel, assignment, registry, window, assignment.cluster_labels)
    rows = []
    for lab in assignment.cluster_labels:
        pop = population.get(lab)
        if pop is None or not pop > 0:
            raise DataError(f"cluster {lab}: missing or zero population")
        night, day = devices.loc[lab, "devices_night"], devices.loc[lab, "devices_day"]
        rows.append((lab, float(pop), night, day, night / pop * 100.0, day / pop * 100.0))
    frame = pd.DataFrame(rows, columns=["cluster", *SamplingRateTable.COLUMNS]).set_index("cluster")
    return SamplingRateTable(frame)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation coefficient.

    Sums are formed in exact rational arithmetic (every finite float is a
    dyadic rational), so exactly linear data gives exactly +1 or -1 and the
    only rounding is in the final square root.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"length mismatch: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise DataError("need at least two observations")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DataError("non-finite values")
    fx = [Fraction(v) for v in x.tolist()]
    fy = [Fraction(v) for v in y.tolist()]
    n = len(fx)
    sx, sy = sum(fx), sum(fy)
    sxx = n * sum(a * a for a in fx) - sx * sx
    syy = n * sum(b * b for b in fy) - sy * sy
    sxy = n * sum(a * b for a, b in zip(fx, fy)) - sx * sy
    if sxx == 0 or syy == 0:
        raise DataError("zero variance")
    r2 = sxy * sxy / (sxx * syy)
    return math.copysign(math.sqrt(float(r2)), float(sxy)) if sxy else 0.0
