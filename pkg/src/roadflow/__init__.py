"""roadflow: impute traffic volumes and vehicle-class distributions across
directed road networks by iteratively averaging over neighboring links,
weighted by prior daily truck volumes.

The package covers the full workflow: ingest a directed network, transfer
prior weights from a dense inventory network, snap station observations to
direction-consistent edges, aggregate hourly class counts into time
windows, propagate values to every edge, and score the result with masking
cross-validation against an exact linear-solve oracle.
"""

from .aggregate import (
    AggregationResult,
    AggregationWindow,
    DayFilter,
    HourBand,
    HourlyClassRecord,
    StationObservation,
    aggregate_records,
    window_from_dict,
    window_from_label,
    window_membership,
)
from .errors import NumericalError, RoadflowError, UndefinedMetricError, ValidationError
from .evaluate import (
    FoldAssignment,
    MetricsCell,
    MetricsReport,
    cel,
    mae,
    make_folds,
    pearson_r2,
    rmse,
    run_cross_validation,
)
from .geo import GeoPoint, angular_diff_deg, haversine_m, initial_bearing_deg
from .impute import (
    ImputationError,
    ImputeConfig,
    ImputeResult,
    Payload,
    Scheme,
    impute_edge,
    impute_missing_weights,
    run_imputation,
    valid_to_impute,
)
from .match import (
    DenseRoad,
    DirectionCode,
    MatchConfig,
    MatchError,
    SnapError,
    SnapResult,
    Station,
    directionalize_and_halve,
    edge_bearing,
    snap_station,
    transfer_weights,
)
from .network import (
    ClassShare,
    Edge,
    EdgeState,
    NetworkError,
    RoadNetwork,
    Status,
    VEHICLE_CLASSES,
    build_network,
    copy_states,
    init_states,
    neighbor_components,
)
from .synth import (
    GridSpec,
    OracleError,
    RandomFixture,
    fixed_point_oracle,
    fixture_observations,
    make_grid,
    make_random_fixture,
)

__version__ = "0.1.0"

__all__ = [
    "AggregationResult",
    "AggregationWindow",
    "ClassShare",
    "DayFilter",
    "DenseRoad",
    "DirectionCode",
    "Edge",
    "EdgeState",
    "FoldAssignment",
    "GeoPoint",
    "GridSpec",
    "HourBand",
    "HourlyClassRecord",
    "ImputationError",
    "ImputeConfig",
    "ImputeResult",
    "MatchConfig",
    "MatchError",
    "MetricsCell",
    "MetricsReport",
    "NetworkError",
    "NumericalError",
    "OracleError",
    "Payload",
    "RandomFixture",
    "RoadNetwork",
    "RoadflowError",
    "Scheme",
    "SnapError",
    "SnapResult",
    "Station",
    "StationObservation",
    "Status",
    "UndefinedMetricError",
    "VEHICLE_CLASSES",
    "ValidationError",
    "aggregate_records",
    "angular_diff_deg",
    "build_network",
    "cel",
    "copy_states",
    "directionalize_and_halve",
    "edge_bearing",
    "fixed_point_oracle",
    "fixture_observations",
    "haversine_m",
    "impute_edge",
    "impute_missing_weights",
    "init_states",
    "initial_bearing_deg",
    "mae",
    "make_folds",
    "make_grid",
    "make_random_fixture",
    "neighbor_components",
    "pearson_r2",
    "rmse",
    "run_cross_validation",
    "run_imputation",
    "snap_station",
    "transfer_weights",
    "valid_to_impute",
    "window_from_dict",
    "window_from_label",
    "window_membership",
]
