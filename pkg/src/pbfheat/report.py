"""Output paths: delimited field files, portable-pixmap heatmaps, and
matplotlib figures rendered alongside them.

CSV files are byte-identical for identical inputs: all floats are written
with round-trip precision and provenance timestamps stay in memory only.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .core import FieldGrid, FieldResult
from .errors import PathParseError, ValidationError

_CSV_VERSION = "pbfheat-field 1"


def sha256_id(data: bytes):
    return hashlib.sha256(data).hexdigest()[:12]


def _fmt(v):
    return format(float(v), ".17g")


def write_field_csv(result: FieldResult, fh):
    """Schema: comment header with provenance, then `t,x,y,z,u` rows in SI
    units and kelvin, one row per (t, x, y, z) in C order."""
    fh.write(f"# {_CSV_VERSION}\n")
    for key in sorted(result.provenance):
        if key == "timestamp":
            continue
        fh.write(f"# {key}: {result.provenance[key]}\n")
    fh.write("t,x,y,z,u\n")
    g = result.grid
    vals = result.values
    for it, t in enumerate(g.ts):
        for ix, x in enumerate(g.xs):
            for iy, y in enumerate(g.ys):
                for iz, z in enumerate(g.zs):
                    fh.write(f"{_fmt(t)},{_fmt(x)},{_fmt(y)},{_fmt(z)},"
                             f"{_fmt(vals[it, ix, iy, iz])}\n")


def read_field_csv(fh) -> FieldResult:
    """Inverse of `write_field_csv`; provenance comes back as strings."""
    provenance = {}
    header = None
    rows = []
    for lineno, raw in enumerate(fh, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, _, val = body.partition(":")
                provenance[key.strip()] = val.strip()
            continue
        if header is None:
            if line != "t,x,y,z,u":
                raise PathParseError(f"expected column header 't,x,y,z,u', got {line!r}",
                                     lineno)
            header = line
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise PathParseError("field row needs 5 comma-separated values", lineno)
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise PathParseError("non-numeric field value", lineno) from None
    if not rows:
        raise PathParseError("field file contains no data rows")
    arr = np.asarray(rows)
    ts, xs, ys, zs = (np.unique(arr[:, i]) for i in range(4))
    if ts.size * xs.size * ys.size * zs.size != arr.shape[0]:
        raise ValidationError("field rows do not form a complete grid")
    grid = FieldGrid(xs=xs, ys=ys, zs=zs, ts=ts)
    values = np.full(grid.shape, np.nan)
    it = np.searchsorted(ts, arr[:, 0])
    ix = np.searchsorted(xs, arr[:, 1])
    iy = np.searchsorted(ys, arr[:, 2])
    iz = np.searchsorted(zs, arr[:, 3])
    values[it, ix, iy, iz] = arr[:, 4]
    if np.any(np.isnan(values)):
        raise ValidationError("field rows do not cover the full grid")
    return FieldResult(grid=grid, values=values, provenance=provenance)


# --- heatmaps ----------------------------------------------------------------

@dataclass(frozen=True)
class SliceSpec:
    """Selects the (x, y) plane to render: one z index, and either a single
    time index or the max over all times (`time_index=None`)."""

    z_index: int = -1
    time_index: int | None = None


# linear five-stop ramp from cold to hot
_RAMP_POS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
_RAMP_RGB = np.array([
    (0, 0, 0),
    (80, 0, 140),
    (230, 40, 20),
    (255, 220, 30),
    (255, 255, 255),
], dtype=float)


def field_slice(result: FieldResult, spec: SliceSpec):
    """(nx, ny) plane selected by `spec`."""
    vals = result.values
    nz = result.grid.zs.size
    if not -nz <= spec.z_index < nz:
        raise ValidationError(f"z index {spec.z_index} outside 0..{nz - 1}")
    plane = vals[:, :, :, spec.z_index]
    if spec.time_index is None:
        return plane.max(axis=0)
    nt = result.grid.ts.size
    if not -nt <= spec.time_index < nt:
        raise ValidationError(f"time index {spec.time_index} outside 0..{nt - 1}")
    return plane[spec.time_index]


def emit_heatmap(result: FieldResult, spec: SliceSpec = SliceSpec(),
                 tmin=None, tmax=None) -> bytes:
    """Render the selected plane as a binary portable pixmap (P6).

    Colors ramp linearly between `tmin` and `tmax` (defaulting to the slice
    extremes); values outside clip. Pixel rows run from max y (top) to min y,
    columns from min x to max x. Identical inputs give identical bytes.
    """
    plane = field_slice(result, spec)
    if plane.size == 0:
        raise ValidationError("empty slice")
    lo = float(plane.min()) if tmin is None else float(tmin)
    hi = float(plane.max()) if tmax is None else float(tmax)
    if hi <= lo:
        frac = np.full_like(plane, 0.5)
    else:
        frac = np.clip((plane - lo) / (hi - lo), 0.0, 1.0)
    rgb = np.empty(plane.shape + (3,), dtype=np.uint8)
    for c in range(3):
        rgb[..., c] = np.rint(np.interp(frac, _RAMP_POS, _RAMP_RGB[:, c])).astype(np.uint8)
    # image rows top-to-bottom = y descending; plane is (x, y)
    img = np.transpose(rgb, (1, 0, 2))[::-1]
    h, w = img.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + img.tobytes()


# --- matplotlib figures -------------------------------------------------------

def save_maxfield_figure(result: FieldResult, path, title=None):
    """Max-over-time surface temperature map rendered to an image file."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plane = field_slice(result, SliceSpec(z_index=-1, time_index=None))
    g = result.grid
    fig, ax = plt.subplots(figsize=(9, 2.8))
    im = ax.imshow(plane.T, origin="lower", aspect="equal", cmap="inferno",
                   extent=(g.xs[0] * 1e3, g.xs[-1] * 1e3,
                           g.ys[0] * 1e3, g.ys[-1] * 1e3))
    ax.set_xlabel("x (mm)")
    ax.set_ylabel("y (mm)")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="max temperature (K)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_profiles_figure(xs, curves, path, xlabel="x (mm)", ylabel="temperature (K)",
                         title=None):
    """Overlaid line profiles; `curves` maps legend labels to value arrays."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for label, vals in curves.items():
        ax.plot(np.asarray(xs) * 1e3, vals, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
