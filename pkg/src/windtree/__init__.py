"""Wind-tree billiards: geometry, corridors, dynamics and Monte Carlo statistics."""
from .geometry import (
    BoundaryKind,
    ModelParams,
    NonPositiveDimension,
    ParameterError,
    TrappingConfiguration,
    boundary_arclength,
    boundary_point,
    build_scatterer,
    geometry_summary,
    validate_params,
)
from .corridors import (
    CorridorSpec,
    CorridorType,
    Regime,
    axis_corridors,
    classify_regime,
    enumerate_corridors,
    exact_width,
    lemma3_L0,
    oblique_type1,
    oblique_type2,
    type1_suppression_sup,
)
from .dynamics import (
    Billiard,
    CorridorClass,
    PhasePoint,
    Trajectory,
    billiard_map,
    inverse_map,
    next_collision,
    trace,
)
from .presets import PRESETS, preset

__version__ = "0.1.0"
