"""Compare two origin-destination mobility datasets at neighbourhood scale."""

__version__ = "0.1.0"

from .clustering import (
    UNDEFINED,
    ClusterAssignment,
    ClusterModel,
    ZScoreTable,
    assign_with_undefined,
    cluster_profile,
    cluster_zones,
    kmeans,
    mode_shares,
    select_k_elbow,
    standardize,
)
from .compare import (
    ClusterODMatrix,
    ComparisonReport,
    RFMatrix,
    build_cluster_matrix,
    compare_matrices,
    lrfr,
    normalize_per_device,
    normalize_per_population,
    pearson,
    relative_frequency,
    rfr,
    sampling_rate,
)
from .crosswalk import (
    CENSUS_VARIABLES,
    FeatureSchema,
    FeatureTable,
    ZoneRegistry,
    aggregate_features,
    load_crosswalk,
    map_unit,
)
from .ingest import (
    DateWindow,
    DevicePanel,
    FlowTable,
    ingest_od_trips,
    ingest_unit_flows,
    load_device_panel,
    merge_flow_tables,
)

__all__ = [
    "__version__",
    "UNDEFINED",
    "ClusterAssignment",
    "ClusterModel",
    "ZScoreTable",
    "assign_with_undefined",
    "cluster_profile",
    "cluster_zones",
    "kmeans",
    "mode_shares",
    "select_k_elbow",
    "standardize",
    "ClusterODMatrix",
    "ComparisonReport",
    "RFMatrix",
    "build_cluster_matrix",
    "compare_matrices",
    "lrfr",
    "normalize_per_device",
    "normalize_per_population",
    "pearson",
    "relative_frequency",
    "rfr",
    "sampling_rate",
    "CENSUS_VARIABLES",
    "FeatureSchema",
    "FeatureTable",
    "ZoneRegistry",
    "aggregate_features",
    "load_crosswalk",
    "map_unit",
    "DateWindow",
    "DevicePanel",
    "FlowTable",
    "ingest_od_trips",
    "ingest_unit_flows",
    "load_device_panel",
    "merge_flow_tables",
]
