"""Analytical half-space temperature fields for a scanning Gaussian beam
with piecewise-constant power, spot size, and speed."""

from .core import (
    BeamPath,
    DimensionlessFrame,
    FieldGrid,
    FieldResult,
    MaterialParams,
    Segment,
    contribution_frame,
    flux_frame,
    load_material,
    load_path,
    temperature_scale,
)
from .errors import (
    AuditError,
    CapacityError,
    DomainError,
    LutBuildError,
    LutFormatError,
    NumericsError,
    PathParseError,
    PbfError,
    ValidationError,
)
from .quadrature import (
    Quadrature,
    QuadratureLUT,
    audit_lut,
    build_lut,
    gauss_legendre,
    integrate,
    load_lut,
    lookup,
    save_lut,
)
from .solver import (
    EvalRequest,
    contribution_term,
    evaluate,
    evaluate_grid_step,
    evaluate_points,
    flux_term,
    green,
    single_line,
)

__version__ = "0.1.0"
