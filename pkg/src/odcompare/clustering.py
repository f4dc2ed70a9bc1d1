"""Neighbourhood delineation: z-scores, seeded k-means, elbow selection, profiles.

Zones with resident-based features are standardized per variable and
clustered with Lloyd's algorithm from k-means++ seeds. Zones without
residents are not clustered; they receive the ``UNDEFINED`` label and still
take part in the OD comparison downstream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from ._io import fmt_float, write_csv, zone_sort_key
from .crosswalk import MODE_VARIABLES, POPULATION, CENSUS_VARIABLES, FeatureTable
from .errors import ConfigError, DataError, MissingColumnError

UNDEFINED = "UNDEFINED"
LABEL_ORDER = "size-desc,min-zone"
MAX_ITER = 300
DEFAULT_RESTARTS = 20


def cluster_label(i: int) -> str:
    return f"C{i}"


@dataclass(frozen=True)
class ZScoreTable:
    """Defined zones x variables in z-score units.

    ``column_stats`` holds the mean and population std used per variable.
    Zero-variance variables are all zero and listed in ``zero_variance``.
    """

    values: pd.DataFrame
    column_stats: pd.DataFrame
    zero_variance: tuple[str, ...] = ()

    @property
    def zones(self) -> tuple[str, ...]:
        return tuple(self.values.index)


def standardize(features, variables: Sequence[str] = CENSUS_VARIABLES) -> ZScoreTable:
    """Per-column ``(x - mean) / std`` with the population std, over defined zones only."""
    if isinstance(features, FeatureTable):
        frame = features.defined_values(variables)
    else:
        frame = pd.DataFrame(features)
        missing = [c for c in variables if c not in frame.columns]
        if missing:
            raise MissingColumnError(f"feature table lacks columns {missing}")
        frame = frame[list(variables)]
    if len(frame) < 2:
        raise DataError(f"need at least 2 defined zones to standardize, got {len(frame)}")
    x = frame.to_numpy(dtype=float)
    if np.isnan(x).any():
        cols = frame.columns[np.isnan(x).any(axis=0)].tolist()
        raise DataError(f"missing feature values in defined zones for {cols}")

    mean = x.mean(axis=0)
    std = x.std(axis=0)
    flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    z = np.zeros_like(x)
    z[:, ~flat] = (x[:, ~flat] - mean[~flat]) / std[~flat]
    stats = pd.DataFrame({"mean": mean, "std": std}, index=frame.columns)
    zero_var = tuple(c for c, f in zip(frame.columns, flat) if f)
    return ZScoreTable(pd.DataFrame(z, index=frame.index.astype(str), columns=frame.columns), stats, zero_var)


@dataclass(frozen=True)
class ClusterAssignment:
    """Zone -> cluster label (``C0`` ... ``C{k-1}`` or ``UNDEFINED``)."""

    labels: Mapping[str, str]
    k: int
    label_order: str = LABEL_ORDER

    @property
    def cluster_labels(self) -> tuple[str, ...]:
        return tuple(cluster_label(i) for i in range(self.k))

    @property
    def has_undefined(self) -> bool:
        return any(v == UNDEFINED for v in self.labels.values())

    def matrix_labels(self) -> tuple[str, ...]:
        """Row/column order used for cluster OD matrices."""
        return self.cluster_labels + ((UNDEFINED,) if self.has_undefined else ())

    def members(self, label: str) -> list[str]:
        return sorted((z for z, lab in self.labels.items() if lab == label), key=zone_sort_key)

    def to_csv(self, path) -> Path:
        zones = sorted(self.labels, key=zone_sort_key)
        return write_csv(path, ["zone_id", "cluster"], [(z, self.labels[z]) for z in zones])

    @classmethod
    def from_csv(cls, path) -> "ClusterAssignment":
        with open(path, encoding="utf-8", newline="") as fh:
            labels = {row["zone_id"]: row["cluster"] for row in csv.DictReader(fh)}
        return cls.from_labels(labels)

    @classmethod
    def from_labels(cls, labels: Mapping[str, str]) -> "ClusterAssignment":
        labels = {str(z): str(v) for z, v in labels.items()}
        numbered = sorted({int(v[1:]) for v in labels.values() if v != UNDEFINED})
        if numbered != list(range(len(numbered))):
            raise DataError(f"cluster labels must be contiguous C0..C(k-1), got {numbered}")
        for v in labels.values():
            if v != UNDEFINED and v != cluster_label(int(v[1:])):
                raise DataError(f"bad cluster label {v!r}")
        return cls(labels, len(numbered))


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: pd.DataFrame
    seed: int
    restarts: int
    wcss: float
    n_iter: int
    wcss_history: tuple[float, ...] = ()


# ---------------------------------------------------------------------------
# k-means core (array level)


def _sq_dist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining points coincide with a chosen centre
            rest = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(rest)) if len(rest) else int(rng.integers(n))
        chosen.append(idx)
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return x[chosen].copy()


def _repair_empty(x, labels, d2, k):
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        own = d2[np.arange(len(x)), labels]
        own = np.where(counts[labels] > 1, own, -1.0)
        p = int(np.argmax(own))
        counts[labels[p]] -= 1
        labels[p] = j
        counts[j] = 1
    return labels


def _centroids(x, labels, k):
    c = np.zeros((k, x.shape[1]))
    np.add.at(c, labels, x)
    return c / np.bincount(labels, minlength=k)[:, None]


def _wcss(x, labels, c) -> float:
    return float(((x - c[labels]) ** 2).sum())


def lloyd(x: np.ndarray, init: np.ndarray, max_iter: int = MAX_ITER):
    """Run Lloyd iterations until the assignment stops changing.

    Returns ``(labels, centroids, wcss, n_iter, history)``; ``history`` is
    the WCSS after each centroid update.
    """
    k = len(init)
    c = init.astype(float).copy()
    labels = None
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dist(x, c)
        new = np.argmin(d2, axis=1)
        new = _repair_empty(x, new, d2, k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        c = _centroids(x, labels, k)
        history.append(_wcss(x, labels, c))
    return labels, c, history[-1], it, tuple(history)


def kmeans_array(
    x: np.ndarray,
    k: int,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    max_iter: int = MAX_ITER,
    extra_inits: Iterable[np.ndarray] = (),
):
    """Best-of-``restarts`` k-means on a dense array (no label canonicalization).

    Restart ``r`` draws its k-means++ seeds from ``default_rng(seed + r)``.
    The lowest WCSS wins; ties go to the earliest run. ``extra_inits`` are
    tried after the random restarts.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n == 0:
        raise DataError("empty feature table")
    if not 1 <= k <= n:
        raise ConfigError(f"k={k} out of range 1..{n}")
    if restarts < 1:
        raise ConfigError("restarts must be >= 1")
    best = None
    inits = [_plusplus(x, k, np.random.default_rng(seed + r)) for r in range(restarts)]
    inits.extend(np.asarray(c, dtype=float) for c in extra_inits)
    for init in inits:
        run = lloyd(x, init, max_iter)
        if best is None or run[2] < best[2]:
            best = run
    return best


def _canonical_order(labels: np.ndarray, zones: Sequence[str], k: int) -> np.ndarray:
    """old label -> new label, by descending size then smallest member zone."""
    keys = []
    for j in range(k):
        members = [zones[i] for i in np.flatnonzero(labels == j)]
        keys.append((-len(members), zone_sort_key(min(members, key=zone_sort_key)), j))
    order = [key[-1] for key in sorted(keys)]
    remap = np.empty(k, dtype=int)
    remap[order] = np.arange(k)
    return remap


def _sorted_matrix(z: ZScoreTable):
    zones = sorted(z.zones, key=zone_sort_key)
    return zones, z.values.loc[zones].to_numpy(dtype=float)


def kmeans(
    z: ZScoreTable,
    k: int,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    max_iter: int = MAX_ITER,
) -> tuple[ClusterModel, ClusterAssignment]:
    """Cluster the zones of ``z`` into ``k`` groups.

    Rows are put in canonical zone order before seeding, so the result does
    not depend on input row order. Labels are canonicalized: ``C0`` is the
    largest cluster, ties broken by the smallest member zone id.
    """
    zones, x = _sorted_matrix(z)
    labels, c, wcss, n_iter, history = kmeans_array(x, k, seed, restarts, max_iter)
    remap = _canonical_order(labels, zones, k)
    labels = remap[labels]
    cent = np.empty_like(c)
    cent[remap] = c
    centroids = pd.DataFrame(cent, index=[cluster_label(i) for i in range(k)], columns=z.values.columns)
    model = ClusterModel(k, centroids, seed, restarts, wcss, n_iter, history)
    assignment = ClusterAssignment({zn: cluster_label(int(lab)) for zn, lab in zip(zones, labels)}, k)
    return model, assignment


@dataclass(frozen=True)
class ElbowResult:
    k: int
    curve: tuple[tuple[int, float], ...]
    second_differences: Mapping[int, float] = field(default_factory=dict)
    no_elbow: bool = False

    def to_csv(self, path) -> Path:
        rows = [
            (k, fmt_float(w), fmt_float(self.second_differences.get(k, float("nan"))), int(k == self.k))
            for k, w in self.curve
        ]
        return write_csv(path, ["k", "wcss", "second_difference", "selected"], rows)


def select_k_elbow(
    z: ZScoreTable,
    k_range: tuple[int, int],
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    floor: float = 0.01,
) -> ElbowResult:
    """Pick k at the sharpest bend of the WCSS curve.

    The bend is the largest discrete second difference
    ``wcss(k-1) - 2 wcss(k) + wcss(k+1)`` over interior points of the range
    (ties to the smaller k). If it does not exceed ``floor * wcss(k_min)``
    the curve has no elbow and ``k_min`` is returned with ``no_elbow`` set.

    Each k beyond the first is also warm-started from the previous best
    centroids plus the worst-fit point, which keeps the curve non-increasing.
    """
    k_min, k_max = k_range
    zones, x = _sorted_matrix(z)
    if k_min < 1 or k_max > len(x) or k_max - k_min < 2:
        raise ConfigError(f"degenerate k range [{k_min}, {k_max}] for {len(x)} zones (need k_max - k_min >= 2)")
    curve = []
    prev = None
    for k in range(k_min, k_max + 1):
        extra = []
        if prev is not None:
            lab, c = prev
            worst = int(np.argmax(((x - c[lab]) ** 2).sum(axis=1)))
            extra.append(np.vstack([c, x[worst]]))
        lab, c, wcss, _, _ = kmeans_array(x, k, seed, restarts, extra_inits=extra)
        prev = (lab, c)
        curve.append((k, wcss))
    w = dict(curve)
    d2 = {k: w[k - 1] - 2 * w[k] + w[k + 1] for k in range(k_min + 1, k_max)}
    best_k = min(d2, key=lambda k: (-d2[k], k))
    if d2[best_k] <= floor * w[k_min]:
        return ElbowResult(k_min, tuple(curve), d2, True)
    return ElbowResult(best_k, tuple(curve), d2, False)


def assign_with_undefined(assignment: ClusterAssignment, features: FeatureTable) -> ClusterAssignment:
    """Give every zone of ``features`` a label, ``UNDEFINED`` where the zone has no residents."""
    defined = features.defined
    if not defined.any():
        raise DataError("no defined zones: nothing was clustered")
    labels = {}
    for zone, ok in defined.items():
        if ok:
            if zone not in assignment.labels:
                raise DataError(f"defined zone {zone!r} has no cluster label")
            labels[zone] = assignment.labels[zone]
        else:
            labels[zone] = UNDEFINED
    extra = set(assignment.labels) - set(labels)
    if extra:
        raise DataError(f"assignment names zones missing from the feature table: {sorted(extra)[:5]}")
    return ClusterAssignment(labels, assignment.k, assignment.label_order)


def _member_groups(assignment: ClusterAssignment, zones: Iterable[str]) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {lab: [] for lab in assignment.cluster_labels}
    for zone in zones:
        lab = assignment.labels.get(zone)
        if lab is None:
            raise DataError(f"zone {zone!r} has no cluster label")
        if lab != UNDEFINED:
            groups[lab].append(zone)
    empty = [lab for lab, m in groups.items() if not m]
    if empty:
        raise DataError(f"empty clusters: {empty}")
    return groups


def cluster_profile(assignment: ClusterAssignment, z: ZScoreTable) -> pd.DataFrame:
    """Mean z-score of each variable within each cluster (``UNDEFINED`` excluded)."""
    groups = _member_groups(assignment, z.zones)
    rows = {lab: z.values.loc[m].mean(axis=0) for lab, m in groups.items()}
    out = pd.DataFrame(rows).T
    out.index.name = "cluster"
    return out


def mode_shares(
    assignment: ClusterAssignment,
    features: FeatureTable,
    weighted: bool = True,
    modes: Sequence[str] = MODE_VARIABLES,
) -> pd.DataFrame:
    """Commute-mode percentages per cluster, renormalized to sum to 100.

    With ``weighted`` (default) zones count in proportion to population.
    """
    missing = [m for m in modes if m not in features.values.columns]
    if missing:
        raise MissingColumnError(f"missing mode columns {missing}")
    defined = features.values.loc[features.defined.to_numpy()]
    groups = _member_groups(assignment, defined.index)
    rows = {}
    for lab, members in groups.items():
        block = defined.loc[members, list(modes)].to_numpy(dtype=float)
        w = defined.loc[members, POPULATION].to_numpy(dtype=float) if weighted else np.ones(len(members))
        mean = (block * w[:, None]).sum(axis=0) / w.sum()
        total = mean.sum()
        rows[lab] = mean / total * 100.0 if total > 0 else mean
    out = pd.DataFrame(rows, index=list(modes)).T
    out.index.name = "cluster"
    return out


def cluster_population(features: FeatureTable, assignment: ClusterAssignment) -> pd.Series:
    """Resident population summed per defined cluster."""
    pop = features.population
    labels = pd.Series({z: assignment.labels.get(z) for z in pop.index})
    if labels.isna().any():
        raise DataError(f"zones without cluster labels: {labels[labels.isna()].index[:5].tolist()}")
    out = pop.groupby(labels).sum()
    return out.reindex(assignment.cluster_labels, fill_value=0.0)


@dataclass(frozen=True)
class ClusteringResult:
    z: ZScoreTable
    model: ClusterModel
    assignment: ClusterAssignment
    elbow: ElbowResult | None
    profile: pd.DataFrame
    modes: pd.DataFrame | None


def cluster_zones(
    features: FeatureTable,
    k: int | None = None,
    k_range: tuple[int, int] = (2, 10),
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    variables: Sequence[str] = CENSUS_VARIABLES,
    weighted_modes: bool = True,
) -> ClusteringResult:
    """Standardize, choose k (elbow unless ``k`` is given), cluster, label undefined zones."""
    z = standardize(features, variables)
    elbow = None
    if k is None:
        lo, hi = k_range
        hi = min(hi, len(z.zones))
        elbow = select_k_elbow(z, (lo, hi), seed, restarts)
        k = elbow.k
    model, assignment = kmeans(z, k, seed, restarts)
    assignment = assign_with_undefined(assignment, features)
    profile = cluster_profile(assignment, z)
    modes = None
    if all(m in features.values.columns for m in MODE_VARIABLES):
        modes = mode_shares(assignment, features, weighted_modes)
    return ClusteringResult(z, model, assignment, elbow, profile, modes)


def frame_to_csv(frame: pd.DataFrame, path, index_label: str) -> Path:
    rows = [[idx, *(fmt_float(float(v)) for v in row)] for idx, row in zip(frame.index, frame.to_numpy())]
    return write_csv(path, [index_label, *map(str, frame.columns)], rows)
