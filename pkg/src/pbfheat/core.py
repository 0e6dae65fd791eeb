"""Domain types, unit conventions, path ingestion, and the transforms into
the dimensionless frame used by every integral.

All quantities are SI (m, s, K, W). Path and material files use the
millimeter-based format documented in `load_path` / `load_material` and are
converted on load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PathParseError, ValidationError

SQRT2 = math.sqrt(2.0)

# Relative tolerance for the length == speed * duration consistency check;
# absorbs file round-off only.
SEGMENT_CONSISTENCY_RTOL = 1e-9


@dataclass(frozen=True)
class MaterialParams:
    """Constant material data. `kappa` is always derived from the others."""

    rho: float     # density, kg/m^3
    cp: float      # specific heat, J/(kg K)
    lam: float     # thermal conductivity, W/(m K)
    kappa: float = field(init=False)  # thermal diffusivity, m^2/s

    def __post_init__(self):
        if not (self.rho > 0 and self.cp > 0 and self.lam > 0):
            raise ValidationError(
                f"material parameters must be positive, got rho={self.rho}, "
                f"cp={self.cp}, lambda={self.lam}"
            )
        object.__setattr__(self, "kappa", self.lam / (self.rho * self.cp))


@dataclass(frozen=True)
class Segment:
    """One straight traverse with a constant (power, spot size, speed) triplet.

    Times are absolute (shared clock with the rest of the path); positions are
    the traverse's endpoints. `alpha` is derived from the endpoints and is 0
    for a stationary beam.
    """

    t_i: float
    t_f: float
    x_i: float
    y_i: float
    x_f: float
    y_f: float
    P: float       # absorbed power, W
    sigma: float   # effective spot size (Gaussian std), m
    v: float       # speed, m/s
    alpha: float = field(init=False)

    def __post_init__(self):
        if not self.t_f > self.t_i:
            raise ValidationError(f"segment must have t_f > t_i, got [{self.t_i}, {self.t_f}]")
        if not self.sigma > 0:
            raise ValidationError(f"spot size must be positive, got {self.sigma}")
        if self.P < 0:
            raise ValidationError(f"power must be nonnegative, got {self.P}")
        if self.v < 0:
            raise ValidationError(f"speed must be nonnegative, got {self.v}")
        length = math.hypot(self.x_f - self.x_i, self.y_f - self.y_i)
        if self.v == 0.0:
            if length != 0.0:
                raise ValidationError(
                    "stationary segment (v = 0) must have coinciding endpoints, "
                    f"got displacement {length:g} m"
                )
            alpha = 0.0
        else:
            expected = self.v * (self.t_f - self.t_i)
            if abs(length - expected) > SEGMENT_CONSISTENCY_RTOL * max(length, expected):
                raise ValidationError(
                    f"segment length {length:g} m inconsistent with "
                    f"v*(t_f-t_i) = {expected:g} m"
                )
            alpha = math.atan2(self.y_f - self.y_i, self.x_f - self.x_i)
        object.__setattr__(self, "alpha", alpha)

    @property
    def v_x(self):
        return self.v * math.cos(self.alpha)

    @property
    def v_y(self):
        return self.v * math.sin(self.alpha)

    @property
    def duration(self):
        return self.t_f - self.t_i


@dataclass(frozen=True)
class BeamPath:
    """Time-contiguous sequence of segments plus the initial temperature."""

    segments: tuple
    u_init: float  # K

    def __post_init__(self):
        segs = tuple(self.segments)
        if len(segs) < 1:
            raise ValidationError("a beam path needs at least one segment")
        for a, b in zip(segs, segs[1:]):
            if a.t_f != b.t_i:
                raise ValidationError(
                    f"segments must be contiguous in time: t_f={a.t_f!r} "
                    f"followed by t_i={b.t_i!r}"
                )
        object.__setattr__(self, "segments", segs)

    @property
    def t_start(self):
        return self.segments[0].t_i

    @property
    def t_end(self):
        return self.segments[-1].t_f


@dataclass(frozen=True)
class DimensionlessFrame:
    """Barred variables for one segment and one evaluation event.

    `convention` records which substitution list produced the frame:
    "flux" measures positions from the segment start advected with the beam;
    "contribution" measures positions from the segment end point.
    Positions may be scalars or arrays (space-vectorized evaluation); the
    time-like members and the speed components are always scalars.
    """

    T: float          # temperature scale, K
    vbar_x: float
    vbar_y: float
    xbar: object      # float or ndarray
    ybar: object
    zbar: object
    tbar: float
    tbar_f: float
    convention: str

    @property
    def vbar(self):
        """Speed magnitude; the LUT key."""
        return math.hypot(self.vbar_x, self.vbar_y)


@dataclass(frozen=True)
class FieldGrid:
    """Evaluation lattice: sorted coordinates (m) and times (s)."""

    xs: np.ndarray
    ys: np.ndarray
    zs: np.ndarray
    ts: np.ndarray

    def __post_init__(self):
        for name in ("xs", "ys", "zs", "ts"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1 or arr.size == 0:
                raise ValidationError(f"{name} must be a non-empty 1-D array")
            if np.any(np.diff(arr) < 0):
                raise ValidationError(f"{name} must be sorted ascending")
            object.__setattr__(self, name, arr)
        if np.any(self.zs > 0):
            raise ValidationError("the domain is the lower half-space: zs <= 0")
        if np.any(self.ts <= 0):
            raise ValidationError("evaluation times must be positive")

    @property
    def shape(self):
        return (self.ts.size, self.xs.size, self.ys.size, self.zs.size)


@dataclass(frozen=True)
class FieldResult:
    """Temperatures over a FieldGrid, indexed (t, x, y, z), plus provenance.

    Provenance is a plain dict (input hashes, LUT ids, tolerance); anything in
    it except `timestamp` ends up in output file headers.
    """

    grid: FieldGrid
    values: np.ndarray
    provenance: dict

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValidationError(
                f"values shape {values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("field values must be finite")
        object.__setattr__(self, "values", values)


def temperature_scale(P, sigma, lam):
    """Kelvin prefactor P / (sqrt(2) pi^(3/2) lambda sigma) of each integral."""
    if P == 0.0:
        return 0.0
    return P / (SQRT2 * math.pi**1.5 * lam * sigma)


def flux_frame(seg: Segment, material: MaterialParams, x, y, z, t) -> DimensionlessFrame:
    """Dimensionless frame of the currently active segment's flux integral.

    Positions are measured from the segment start advected with the beam,
    i.e. from (x_i + v_x (t - t_i), y_i + v_y (t - t_i)).
    """
    if not (seg.t_i < t <= seg.t_f):
        raise DomainError(
            f"flux frame needs t in ({seg.t_i!r}, {seg.t_f!r}], got {t!r}"
        )
    kappa = material.kappa
    rs2sig = 1.0 / (SQRT2 * seg.sigma)
    dt = t - seg.t_i
    return DimensionlessFrame(
        T=temperature_scale(seg.P, seg.sigma, material.lam),
        vbar_x=seg.v_x * seg.sigma / (2.0 * SQRT2 * kappa),
        vbar_y=seg.v_y * seg.sigma / (2.0 * SQRT2 * kappa),
        xbar=(np.asarray(x) - seg.x_i - seg.v_x * dt) * rs2sig,
        ybar=(np.asarray(y) - seg.y_i - seg.v_y * dt) * rs2sig,
        zbar=np.asarray(z) * rs2sig,
        tbar=math.sqrt(2.0 * kappa * dt) / seg.sigma,
        tbar_f=math.sqrt(2.0 * kappa * seg.duration) / seg.sigma,
        convention="flux",
    )


def contribution_frame(seg: Segment, material: MaterialParams, x, y, z, t) -> DimensionlessFrame:
    """Dimensionless frame of a completed segment's inherited-heat integral.

    Positions are measured from the segment end point (x_f, y_f); `tbar`
    is the dimensionless time elapsed since the segment finished.
    """
    if not t > seg.t_f:
        raise DomainError(
            f"contribution frame needs t > {seg.t_f!r}, got {t!r}"
        )
    kappa = material.kappa
    rs2sig = 1.0 / (SQRT2 * seg.sigma)
    return DimensionlessFrame(
        T=temperature_scale(seg.P, seg.sigma, material.lam),
        vbar_x=seg.v_x * seg.sigma / (2.0 * SQRT2 * kappa),
        vbar_y=seg.v_y * seg.sigma / (2.0 * SQRT2 * kappa),
        xbar=(np.asarray(x) - seg.x_f) * rs2sig,
        ybar=(np.asarray(y) - seg.y_f) * rs2sig,
        zbar=np.asarray(z) * rs2sig,
        tbar=math.sqrt(2.0 * kappa * (t - seg.t_f)) / seg.sigma,
        tbar_f=math.sqrt(2.0 * kappa * seg.duration) / seg.sigma,
        convention="contribution",
    )


# --- file ingestion ---------------------------------------------------------

_MM = 1e-3  # path files use millimeters and mm/s


def _records(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def load_material(text):
    """Parse a `pbfmat 1` file; returns (MaterialParams, u_init).

    Format: header line `pbfmat 1`, then one data line
    `rho cp lambda u_init` in SI units and kelvin.
    """
    records = list(_records(text))
    if not records:
        raise PathParseError("empty material file")
    lineno, head = records[0]
    if head != ["pbfmat", "1"]:
        raise PathParseError(f"expected header 'pbfmat 1', got {' '.join(head)!r}", lineno)
    if len(records) != 2:
        raise PathParseError("material file needs exactly one data line after the header")
    lineno, fields = records[1]
    if len(fields) != 4:
        raise PathParseError("expected 'rho cp lambda u_init'", lineno)
    try:
        rho, cp, lam, u_init = (float(f) for f in fields)
    except ValueError:
        raise PathParseError("non-numeric material value", lineno) from None
    return MaterialParams(rho=rho, cp=cp, lam=lam), u_init


def load_path(text, material: MaterialParams, u_init=0.0) -> BeamPath:
    """Parse a `pbfpath 1` file into a BeamPath on a cumulative clock.

    Records (one per line, `#` comments):
      melt x_i y_i x_f y_f P sigma v   (mm, mm, mm, mm, W, mm, mm/s)
      move x_i y_i x_f y_f v           (repositioning; becomes a P = 0 segment)

    Each record's duration is length / v; the first record starts at t = 0.
    Consecutive records may jump in space (instantaneous repositioning).
    `material` is accepted for interface symmetry with the frame builders;
    segment geometry does not depend on it.
    """
    del material
    records = list(_records(text))
    if not records:
        raise ValidationError("empty path file (a path needs at least one segment)")
    lineno, head = records[0]
    if head != ["pbfpath", "1"]:
        raise PathParseError(f"expected header 'pbfpath 1', got {' '.join(head)!r}", lineno)

    segments = []
    t = 0.0
    for lineno, fields in records[1:]:
        kind = fields[0]
        if kind == "melt":
            if len(fields) != 8:
                raise PathParseError("melt record needs 'melt x_i y_i x_f y_f P sigma v'", lineno)
            vals = _floats(fields[1:], lineno)
            x_i, y_i, x_f, y_f = (c * _MM for c in vals[:4])
            P, sigma, v = vals[4], vals[5] * _MM, vals[6] * _MM
        elif kind == "move":
            if len(fields) != 6:
                raise PathParseError("move record needs 'move x_i y_i x_f y_f v'", lineno)
            vals = _floats(fields[1:], lineno)
            x_i, y_i, x_f, y_f = (c * _MM for c in vals[:4])
            P, sigma, v = 0.0, 1e-4, vals[4] * _MM  # nominal sigma; P = 0 anyway
        else:
            raise PathParseError(f"unknown record type {kind!r}", lineno)

        if sigma <= 0:
            raise PathParseError(f"spot size must be positive, got {sigma / _MM:g} mm", lineno)
        length = math.hypot(x_f - x_i, y_f - y_i)
        if v <= 0:
            raise PathParseError(
                "record speed must be positive (stationary segments are only "
                "constructible through the API, which takes explicit times)",
                lineno,
            )
        if length == 0.0:
            raise PathParseError("record endpoints coincide (zero-length traverse)", lineno)
        duration = length / v
        try:
            seg = Segment(t_i=t, t_f=t + duration, x_i=x_i, y_i=y_i,
                          x_f=x_f, y_f=y_f, P=P, sigma=sigma, v=v)
        except ValidationError as exc:
            raise PathParseError(str(exc), lineno) from None
        segments.append(seg)
        t = seg.t_f

    return BeamPath(segments=tuple(segments), u_init=u_init)


def _floats(fields, lineno):
    try:
        return [float(f) for f in fields]
    except ValueError:
        raise PathParseError("non-numeric value", lineno) from None


def melt_segment_count(path: BeamPath):
    """Number of powered (P > 0) segments."""
    return sum(1 for s in path.segments if s.P > 0)
