"""Analysis zones, the unit-to-zone matching table, and zone-level features.

Fine spatial units (census block groups, tracts) are mapped to analysis
zones through a matching table whose rows are ``(unit_id, zone_id, weight)``.
A unit that straddles several zones carries one row per zone, with weights
summing to one. Unit-level demographic counts are prorated through these
weights and re-expressed as zone-level percentages.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from ._io import iter_csv_dicts, zone_sort_key
from .errors import (
    ConfigError,
    DataError,
    DuplicateRowError,
    MissingColumnError,
    NegativeCountError,
    UnknownUnitError,
    UnknownZoneError,
    WeightSumError,
)

WEIGHT_TOL = 1e-9

# Clustering variables: demographic, socioeconomic and commuting behaviour.
CENSUS_VARIABLES = (
    "malePercent",
    "age<18Percent",
    "age>60Percent",
    "collegeAbove",
    "poverty",
    "unemployment",
    "renterPercent",
    "noCarPercent",
    "medianIncome",
    "noMove",
    "housingCostPerc",
    "comDriveAlone",
    "comCarpool",
    "comPublicTransit",
    "comWFH",
    "comTaxi",
    "comMotorcycle",
    "comBikeWalk",
    "commute<10min",
    "commute10-29min",
    "commute30-59min",
    "commute>60min",
    "White",
    "Black",
    "Asian",
    "Hispanic",
    "foreignBorn",
)

MODE_VARIABLES = (
    "comDriveAlone",
    "comCarpool",
    "comPublicTransit",
    "comWFH",
    "comTaxi",
    "comMotorcycle",
    "comBikeWalk",
)

POPULATION = "population"


@dataclass(frozen=True)
class ZoneRegistry:
    """Zones plus the unit -> [(zone, weight), ...] matching table.

    ``zones`` is kept in canonical order (numeric ids numerically, then the
    rest lexically); matrix axes throughout the package follow this order.
    """

    zones: tuple[str, ...]
    unit_map: Mapping[str, tuple[tuple[str, float], ...]]
    zone_meta: Mapping[str, Mapping[str, object]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_index", {z: i for i, z in enumerate(self.zones)})

    @property
    def n_zones(self) -> int:
        return len(self.zones)

    @property
    def units(self) -> tuple[str, ...]:
        return tuple(self.unit_map)

    def zone_index(self, zone_id: str) -> int:
        try:
            return self._index[zone_id]
        except KeyError:
            raise UnknownZoneError(f"zone {zone_id!r} is not in the registry") from None

    def has_zone(self, zone_id: str) -> bool:
        return zone_id in self._index

    def has_unit(self, unit_id: str) -> bool:
        return unit_id in self.unit_map

    def dominant_zone(self, unit_id: str) -> str:
        """Zone holding the largest share of a unit (ties go to the first zone in canonical order)."""
        entries = map_unit(self, unit_id)
        best = max(entries, key=lambda e: (e[1], -self._index[e[0]]))
        return best[0]

    def unit_zone_lookup(self) -> dict[str, int]:
        """unit id -> index of its dominant zone, for integer flow routing."""
        return {u: self._index[self.dominant_zone(u)] for u in self.unit_map}

    def weights_frame(self) -> pd.DataFrame:
        rows = [(u, z, w) for u, entries in self.unit_map.items() for z, w in entries]
        return pd.DataFrame(rows, columns=["unit_id", "zone_id", "weight"])


def _normalize_row(row) -> tuple[str, str, float]:
    if isinstance(row, Mapping):
        unit, zone, weight = row.get("unit_id"), row.get("zone_id"), row.get("weight")
    else:
        row = tuple(row)
        if len(row) == 2:
            (unit, zone), weight = row, None
        elif len(row) == 3:
            unit, zone, weight = row
        else:
            raise DataError(f"crosswalk row must have 2 or 3 fields, got {row!r}")
    if unit in (None, "") or zone in (None, ""):
        raise DataError(f"crosswalk row missing unit_id or zone_id: {row!r}")
    weight = 1.0 if weight in (None, "") else float(weight)
    return str(unit).strip(), str(zone).strip(), weight


def load_crosswalk(
    records,
    zones: Iterable[str] | None = None,
    zone_names: Mapping[str, str] | None = None,
) -> ZoneRegistry:
    """Build a :class:`ZoneRegistry` from a matching table.

    ``records`` is a path to a CSV with header ``unit_id,zone_id,weight``
    (weight optional, default 1.0) or an iterable of rows. When ``zones``
    is given it declares the full zone set: zones without units are kept
    (they end up undefined), and rows naming any other zone are rejected.
    """
    if isinstance(records, (str, Path)):
        records = iter_csv_dicts(records)

    declared = None if zones is None else {str(z) for z in zones}
    entries: dict[str, dict[str, float]] = defaultdict(dict)
    for raw in records:
        unit, zone, weight = _normalize_row(raw)
        if declared is not None and zone not in declared:
            raise UnknownZoneError(f"unit {unit!r} references undeclared zone {zone!r}")
        if not weight > 0 or weight > 1 + WEIGHT_TOL:
            raise WeightSumError(f"unit {unit!r} -> zone {zone!r}: weight {weight} outside (0, 1]")
        if zone in entries[unit]:
            raise DuplicateRowError(f"duplicate crosswalk row ({unit!r}, {zone!r})")
        entries[unit][zone] = weight

    for unit, zmap in entries.items():
        total = sum(zmap.values())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise WeightSumError(f"unit {unit!r}: weights sum to {total!r}, expected 1")

    zone_set = set(declared) if declared is not None else set()
    for zmap in entries.values():
        zone_set.update(zmap)
    ordered = tuple(sorted(zone_set, key=zone_sort_key))
    unit_map = {
        u: tuple(sorted(zmap.items(), key=lambda e: zone_sort_key(e[0])))
        for u, zmap in sorted(entries.items())
    }
    names = zone_names or {}
    meta = {z: MappingProxyType({"name": names.get(z, z)}) for z in ordered}
    return ZoneRegistry(ordered, MappingProxyType(unit_map), MappingProxyType(meta))


def load_zone_list(path) -> tuple[list[str], dict[str, str]]:
    """Read a ``zone_id[,name]`` CSV declaring the full zone set."""
    zones, names = [], {}
    for row in iter_csv_dicts(path):
        z = str(row["zone_id"]).strip()
        zones.append(z)
        if row.get("name"):
            names[z] = row["name"]
    return zones, names


def map_unit(registry: ZoneRegistry, unit: str) -> list[tuple[str, float]]:
    try:
        return list(registry.unit_map[unit])
    except KeyError:
        raise UnknownUnitError(f"unit {unit!r} is not in the crosswalk") from None


# ---------------------------------------------------------------------------
# Feature aggregation


@dataclass(frozen=True)
class FeatureSchema:
    """Role of each column in a unit-level feature file.

    ``ratios`` maps an output variable to its (numerator, denominator) count
    columns; ``levels`` maps an output variable to a level column (e.g. a
    median) that is combined as a population-weighted mean.
    """

    population: str = POPULATION
    ratios: Mapping[str, tuple[str, str]] = field(default_factory=dict)
    levels: Mapping[str, str] = field(default_factory=dict)
    counts: tuple[str, ...] = ()

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(self.ratios) + tuple(self.levels)

    @property
    def count_columns(self) -> tuple[str, ...]:
        cols = [self.population, *self.counts]
        for num, den in self.ratios.values():
            cols.extend([num, den])
        return tuple(dict.fromkeys(cols))

    @classmethod
    def from_dict(cls, data: Mapping) -> "FeatureSchema":
        """Parse ``{"columns": {col: {"role": ..., ...}}}``.

        Roles: ``population``; ``count``; ``numerator`` (needs ``denominator``
        and ``variable``); ``level`` (needs ``variable``).
        """
        population, ratios, levels, counts = None, {}, {}, []
        columns = data.get("columns")
        if not isinstance(columns, Mapping):
            raise ConfigError("feature schema needs a 'columns' mapping")
        for col, spec in columns.items():
            role = spec.get("role")
            if role == "population":
                if population is not None:
                    raise ConfigError("feature schema declares two population columns")
                population = col
            elif role == "count":
                counts.append(col)
            elif role == "numerator":
                den = spec.get("denominator")
                if not den:
                    raise ConfigError(f"numerator column {col!r} has no denominator")
                ratios[spec.get("variable", col)] = (col, den)
            elif role == "level":
                levels[spec.get("variable", col)] = col
            else:
                raise ConfigError(f"column {col!r}: unknown role {role!r}")
        if population is None:
            raise ConfigError("feature schema has no population column")
        return cls(population, ratios, levels, tuple(counts))

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        cols: dict[str, dict] = {self.population: {"role": "population"}}
        for c in self.counts:
            cols[c] = {"role": "count"}
        for var, (num, den) in self.ratios.items():
            cols[num] = {"role": "numerator", "denominator": den, "variable": var}
        for var, col in self.levels.items():
            cols[col] = {"role": "level", "variable": var}
        return {"columns": cols}


@dataclass(frozen=True)
class FeatureTable:
    """Zone x variable table.

    ``values`` holds the output variables plus ``population``; rows for
    undefined zones are NaN except population (0). ``counts`` holds the
    prorated raw count columns.
    """

    values: pd.DataFrame
    counts: pd.DataFrame
    defined: pd.Series
    variables: tuple[str, ...]
    percent_variables: tuple[str, ...] = ()
    metadata: Mapping[str, object] = field(default_factory=dict)

    @property
    def zones(self) -> tuple[str, ...]:
        return tuple(self.values.index)

    @property
    def population(self) -> pd.Series:
        return self.values[POPULATION]

    def defined_values(self, variables: Iterable[str] | None = None) -> pd.DataFrame:
        cols = list(variables) if variables is not None else list(self.variables)
        missing = [c for c in cols if c not in self.values.columns]
        if missing:
            raise MissingColumnError(f"feature table lacks columns {missing}")
        return self.values.loc[self.defined.to_numpy(), cols]

    @classmethod
    def from_frame(
        cls,
        frame: pd.DataFrame,
        population: str = POPULATION,
        percent_variables: Iterable[str] = (),
    ) -> "FeatureTable":
        """Wrap an already zone-level frame (index = zone id)."""
        frame = frame.copy()
        frame.index = frame.index.astype(str)
        if population != POPULATION:
            frame = frame.rename(columns={population: POPULATION})
        if (frame[POPULATION] < 0).any():
            raise NegativeCountError("negative population")
        defined = frame[POPULATION] > 0
        variables = tuple(c for c in frame.columns if c != POPULATION)
        frame.loc[~defined, list(variables)] = np.nan
        counts = frame[[POPULATION]].copy()
        return cls(frame, counts, defined, variables, tuple(percent_variables), {})


def read_unit_features(path) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"unit_id": str})
    if "unit_id" not in frame.columns:
        raise MissingColumnError("feature file needs a 'unit_id' column")
    if frame["unit_id"].duplicated().any():
        dup = frame.loc[frame["unit_id"].duplicated(), "unit_id"].iloc[0]
        raise DuplicateRowError(f"feature file repeats unit {dup!r}")
    return frame.set_index("unit_id")


def aggregate_features(
    registry: ZoneRegistry,
    unit_features: pd.DataFrame,
    schema: FeatureSchema,
) -> FeatureTable:
    """Prorate unit counts to zones and recompute zone-level variables.

    Percentages are rebuilt as aggregated numerator over aggregated
    denominator (never averaged). Level variables use a population-weighted
    mean of the unit values; this is an approximation for medians and is
    recorded in ``metadata["approximations"]``. Zones that receive no
    population are marked undefined.
    """
    if "unit_id" in unit_features.columns:
        unit_features = unit_features.set_index("unit_id")
    unit_features = unit_features.copy()
    unit_features.index = unit_features.index.astype(str)

    count_cols = list(schema.count_columns)
    missing = [c for c in count_cols + list(schema.levels.values()) if c not in unit_features.columns]
    if missing:
        raise MissingColumnError(f"feature data lacks columns {missing}")
    counts = unit_features[count_cols].astype(float)
    if counts.isna().any().any():
        bad = counts.columns[counts.isna().any()].tolist()
        raise MissingColumnError(f"count columns with missing values: {bad}")
    if (counts < 0).any().any():
        bad = counts.columns[(counts < 0).any()].tolist()
        raise NegativeCountError(f"negative counts in columns {bad}")

    unknown = [u for u in unit_features.index if not registry.has_unit(u)]
    if unknown:
        raise UnknownUnitError(f"{len(unknown)} feature units are not in the crosswalk, e.g. {unknown[0]!r}")

    weights = registry.weights_frame()
    weights = weights[weights["unit_id"].isin(unit_features.index)]
    w = weights["weight"].to_numpy()[:, None]

    unit_counts = counts.loc[weights["unit_id"]].to_numpy()
    prorated = pd.DataFrame(unit_counts * w, columns=count_cols)
    prorated["zone_id"] = weights["zone_id"].to_numpy()
    zone_counts = (
        prorated.groupby("zone_id", sort=False)[count_cols].sum().reindex(registry.zones, fill_value=0.0)
    )
    zone_counts.index.name = "zone_id"

    pop = zone_counts[schema.population]
    defined = pop > 0
    out = pd.DataFrame(index=zone_counts.index)

    for var, (num, den) in schema.ratios.items():
        n, d = zone_counts[num], zone_counts[den]
        with np.errstate(divide="ignore", invalid="ignore"):
            pct = np.where(d > 0, n / d * 100.0, np.nan)
        out[var] = pct

    # population-weighted mean of unit level values
    unit_pop = counts.loc[weights["unit_id"], schema.population].to_numpy() * weights["weight"].to_numpy()
    for var, col in schema.levels.items():
        levels = unit_features.loc[weights["unit_id"], col].astype(float).to_numpy()
        ok = ~np.isnan(levels)
        frame = pd.DataFrame(
            {
                "zone_id": weights["zone_id"].to_numpy()[ok],
                "wx": (levels * unit_pop)[ok],
                "w": unit_pop[ok],
            }
        )
        sums = frame.groupby("zone_id", sort=False)[["wx", "w"]].sum().reindex(registry.zones, fill_value=0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[var] = np.where(sums["w"] > 0, sums["wx"] / sums["w"], np.nan)

    variables = schema.variables
    out.loc[~defined, list(variables)] = np.nan
    out[POPULATION] = pop

    pct_vars = tuple(schema.ratios)
    if pct_vars:
        block = out.loc[defined, list(pct_vars)]
        if ((block > 100 + 1e-9) | (block < 0)).any().any():
            bad = block.columns[((block > 100 + 1e-9) | (block < 0)).any()].tolist()
            raise DataError(f"numerator exceeds denominator for {bad}")

    metadata = {
        "approximations": {var: "population-weighted mean of unit values" for var in schema.levels},
        "undefined_zones": [z for z, ok in defined.items() if not ok],
    }
    return FeatureTable(out, zone_counts, defined, variables, pct_vars, metadata)
