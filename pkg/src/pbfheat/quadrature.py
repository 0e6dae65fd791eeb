"""Gauss-Legendre quadrature and the required-order look-up tables.

The two integral families share one dimensionless shape: an integral over a
clock variable q in [0, L] of

    coef(q) * exp(-(xbar + vbar_x q^2)^2 / D(q)) * exp(-ybar^2 / D(q))
            * exp(-zbar^2 / Z(q))

For the flux family (active segment)   L = tbar,   coef = 1/(1+q^2),
D = 1+q^2, Z = q^2. For the contribution family (completed segments)
L = tbar_f, coef = q (q^2+tbar^2)^(-1/2) / (1+q^2+tbar^2),
D = 1+q^2+tbar^2, Z = q^2+tbar^2.

The look-up tables store, per point of a parameter grid, the smallest
quadrature order from a trial schedule whose result deviates from a high
order reference by less than a tolerance, with the deviation maximized
over a probe set of (xbar, ybar, zbar) positions. Because the exponential
factorizes over the three position axes, probe evaluation costs
(nx+ny+nz)*M exponentials plus one small matrix product instead of
nx*ny*nz*M exponentials.
"""

from __future__ import annotations

import math
import struct
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    CapacityError,
    DomainError,
    LutBuildError,
    LutFormatError,
    NumericsError,
    ValidationError,
)

FAMILY_FLUX = "flux"
FAMILY_CONTRIBUTION = "contribution"

ORDER_CAP = 1024
TOL_DEFAULT = 1e-8
REF_ORDER_DEFAULT = 800
LOOKUP_MARGIN = 2

_MAGIC = b"PBFLUT1"
_FAMILY_BYTE = {FAMILY_FLUX: 0, FAMILY_CONTRIBUTION: 1}
_FAMILY_FROM_BYTE = {v: k for k, v in _FAMILY_BYTE.items()}
_AXES_PER_FAMILY = {FAMILY_FLUX: 2, FAMILY_CONTRIBUTION: 3}


@dataclass(frozen=True)
class Quadrature:
    """Gauss-Legendre rule: nodes in (-1, 1), positive weights summing to 2."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray


def _legendre_and_derivative(x, n):
    """P_n(x) and P_n'(x) by the three-term recurrence."""
    p0 = np.ones_like(x)
    p1 = x.copy()
    for m in range(2, n + 1):
        p0, p1 = p1, ((2 * m - 1) * x * p1 - (m - 1) * p0) / m
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


def gauss_legendre(order, cap=ORDER_CAP) -> Quadrature:
    """Nodes (roots of the Legendre polynomial) and weights of the given order.

    Newton iteration on the recurrence from Chebyshev-type initial guesses,
    converged to 1e-15; nodes and weights are symmetrized exactly.
    """
    if order < 1:
        raise ValidationError(f"quadrature order must be >= 1, got {order}")
    if order > cap:
        raise CapacityError(f"quadrature order {order} exceeds the cap {cap}")
    n = int(order)
    if n == 1:
        return Quadrature(1, np.zeros(1), np.full(1, 2.0))

    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(100):
        p, dp = _legendre_and_derivative(x, n)
        dx = p / dp
        x -= dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    else:
        raise NumericsError(f"Legendre root iteration did not converge for order {n}")

    x = np.sort(x)
    x = 0.5 * (x - x[::-1])  # exact symmetry about 0; middle node exactly 0
    _, dp = _legendre_and_derivative(x, n)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    w = 0.5 * (w + w[::-1])
    if abs(w.sum() - 2.0) > 1e-13:
        raise NumericsError(f"weights of order {n} sum to {w.sum()!r}, expected 2")
    return Quadrature(order=n, nodes=x, weights=w)


_QUAD_CACHE: dict = {}


def cached_quadrature(order) -> Quadrature:
    """Process-wide cache of rules by order (append-only)."""
    q = _QUAD_CACHE.get(order)
    if q is None:
        q = gauss_legendre(order)
        _QUAD_CACHE[order] = q
    return q


def integrate(q: Quadrature, f, t):
    """(t/2) sum_j w_j f(t (s_j + 1)/2) for the integral of f over [0, t].

    `f` is called once with the full node array and may return either a
    vector (one value per node) or a (npoints, order) array for
    space-vectorized integrands.
    """
    if t < 0:
        raise DomainError(f"integration limit must be nonnegative, got {t}")
    if t == 0.0:
        return 0.0
    s = 0.5 * t * (q.nodes + 1.0)
    vals = np.asarray(f(s), dtype=float)
    res = 0.5 * t * (vals @ q.weights)
    if not np.all(np.isfinite(np.atleast_1d(res))):
        raise NumericsError("integrand produced a non-finite quadrature result")
    return res


# --- look-up tables ---------------------------------------------------------

@dataclass(frozen=True)
class ProbeSpec:
    """Probe positions over which Algorithm-style order selection maximizes
    the quadrature error. The xbar span follows the beam tail, whose length
    scales with vbar * L^2 (L = the family's integration limit)."""

    n_x: int = 64
    n_y: int = 8
    zbars: tuple = (0.0, 0.5, 2.0)
    span_pad: float = 5.0
    tail_factor: float = 2.0

    def positions(self, vbar, limit):
        xb = np.linspace(-(self.tail_factor * vbar * limit * limit + self.span_pad),
                         self.span_pad, self.n_x)
        yb = np.linspace(0.0, self.span_pad, self.n_y)
        zb = np.asarray(self.zbars, dtype=float)
        return xb, yb, zb


@dataclass(frozen=True, eq=False)
class QuadratureLUT:
    """Required quadrature orders on a parameter grid.

    Axes: (tbar, vbar) for the flux family, (tbar, tbar_f, vbar) for the
    contribution family. `orders` has one uint16 per grid point, indexed in
    the same axis order.
    """

    family: str
    axes: tuple
    orders: np.ndarray
    tol: float
    ref_order: int

    def __post_init__(self):
        if self.family not in _AXES_PER_FAMILY:
            raise ValidationError(f"unknown LUT family {self.family!r}")
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if len(axes) != _AXES_PER_FAMILY[self.family]:
            raise ValidationError(
                f"{self.family} family needs {_AXES_PER_FAMILY[self.family]} axes"
            )
        for a in axes:
            if a.ndim != 1 or a.size == 0 or np.any(np.diff(a) <= 0):
                raise ValidationError("LUT axes must be non-empty and strictly increasing")
        orders = np.asarray(self.orders, dtype=np.uint16)
        if orders.shape != tuple(a.size for a in axes):
            raise ValidationError(
                f"orders shape {orders.shape} does not match axes "
                f"{tuple(a.size for a in axes)}"
            )
        if int(orders.max(initial=0)) > self.ref_order:
            raise ValidationError("stored orders must not exceed the reference order")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "orders", orders)

    def __eq__(self, other):
        if not isinstance(other, QuadratureLUT):
            return NotImplemented
        return (
            self.family == other.family
            and self.tol == other.tol
            and self.ref_order == other.ref_order
            and len(self.axes) == len(other.axes)
            and all(np.array_equal(a, b) for a, b in zip(self.axes, other.axes))
            and np.array_equal(self.orders, other.orders)
        )

    def grid_point(self, flat_index):
        """Parameter values at a flat (C-order) grid index."""
        idx = np.unravel_index(flat_index, self.orders.shape)
        return tuple(a[i] for a, i in zip(self.axes, idx))


def default_order_schedule(ref_order=REF_ORDER_DEFAULT):
    """Even orders 2..48, then geometric steps of 1.25 rounded up to even,
    ending exactly at the reference order."""
    orders = list(range(2, 49, 2))
    m = orders[-1]
    while True:
        m = math.ceil(m * 1.25)
        if m % 2:
            m += 1
        if m >= ref_order:
            break
        orders.append(m)
    orders.append(int(ref_order))
    return tuple(orders)


def default_grids(family):
    tbar = np.logspace(-2, 2, 60)
    vbar = np.linspace(0.0, 50.0, 51)
    if family == FAMILY_FLUX:
        return (tbar, vbar)
    if family == FAMILY_CONTRIBUTION:
        tbar_f = np.logspace(-2, 2, 30)
        return (tbar, tbar_f, vbar)
    raise ValidationError(f"unknown LUT family {family!r}")


def node_tables(family, q: Quadrature, tbar, tbar_f=None):
    """Per-node data (a2, dxy, dz, cw) of one family integral:

        sum_j cw_j * exp(-(xbar + vbar_x a2_j)^2/dxy_j
                         - (ybar + vbar_y a2_j)^2/dxy_j - zbar^2/dz_j)

    cw contains the interval scaling and the non-exponential prefactor.

    Contribution integrals are evaluated in the variable w = sqrt(r^2 + tbar^2)
    (dw absorbs the r (r^2+tbar^2)^(-1/2) prefactor): the r-form integrand has
    a boundary layer of width tbar at r = 0 that no fixed Gauss-Legendre order
    resolves as tbar -> 0+, while the w-form is smooth for every tbar and
    coincides with the flux form at tbar = 0.
    """
    if family == FAMILY_FLUX:
        s = 0.5 * tbar * (q.nodes + 1.0)
        a2 = s * s
        dz = a2
        dxy = 1.0 + a2
        span = tbar
    elif family == FAMILY_CONTRIBUTION:
        span = math.hypot(tbar_f, tbar) - tbar  # w runs over [tbar, hypot]
        x = 0.5 * span * (q.nodes + 1.0)
        w = tbar + x
        a2 = x * (x + 2.0 * tbar)  # w^2 - tbar^2 without cancellation
        dz = w * w
        dxy = 1.0 + dz
    else:
        raise ValidationError(f"unknown LUT family {family!r}")
    return a2, dxy, dz, (0.5 * span) * q.weights / dxy


def _probe_integrals(family, params, vbar, order, probes):
    """Quadrature value of the family integral at every probe position.

    Returns an (n_x, n_y, n_z) array. Built with vbar_x = vbar, vbar_y = 0;
    direction is a rotation of (xbar, ybar) and the probe spans cover it.
    """
    q = cached_quadrature(order)
    if family == FAMILY_FLUX:
        a2, dxy, dz, cw = node_tables(family, q, params[0])
    else:
        a2, dxy, dz, cw = node_tables(family, q, params[0], params[1])
    xb, yb, zb = probes
    ex = np.exp(-((xb[:, None] + vbar * a2[None, :]) ** 2) / dxy)
    ey = np.exp(-(yb[:, None] ** 2) / dxy)
    ez = np.exp(-(zb[:, None] ** 2) / dz)
    inner = (ex * cw)[:, None, :] * ey[None, :, :]
    out = inner.reshape(-1, a2.size) @ ez.T
    return out.reshape(xb.size, yb.size, zb.size)


def _required_order(family, params, vbar, tol, ref_order, schedule, probe_spec):
    """Smallest scheduled order meeting `tol` against the reference, plus the
    deviation it achieved. Raises LutBuildError if none qualifies."""
    limit = params[0] if family == FAMILY_FLUX else params[1]
    probes = probe_spec.positions(vbar, limit)
    ref = _probe_integrals(family, params, vbar, ref_order, probes)
    for order in schedule:
        err = np.max(np.abs(ref - _probe_integrals(family, params, vbar, order, probes)))
        if err < tol:
            return int(order), float(err)
    raise LutBuildError(
        f"no scheduled order (max {max(schedule)}) met tol={tol:g} for the "
        f"{family} family at grid point params={params}, vbar={vbar}"
    )


def _point_params(family, axes, flat_index):
    idx = np.unravel_index(flat_index, tuple(a.size for a in axes))
    vals = tuple(a[i] for a, i in zip(axes, idx))
    if family == FAMILY_FLUX:
        return (vals[0],), vals[1]
    return (vals[0], vals[1]), vals[2]


def _build_chunk(args):
    family, axes, flat_indices, tol, ref_order, schedule, probe_spec = args
    out = np.empty(len(flat_indices), dtype=np.uint16)
    for j, flat in enumerate(flat_indices):
        params, vbar = _point_params(family, axes, flat)
        out[j], _ = _required_order(family, params, vbar, tol, ref_order,
                                    schedule, probe_spec)
    return out


def _audit_chunk(args):
    family, axes, flat_indices, orders_flat, ref_order, probe_spec = args
    devs = np.empty(len(flat_indices))
    for j, flat in enumerate(flat_indices):
        params, vbar = _point_params(family, axes, flat)
        limit = params[0] if family == FAMILY_FLUX else params[1]
        probes = probe_spec.positions(vbar, limit)
        ref = _probe_integrals(family, params, vbar, ref_order, probes)
        approx = _probe_integrals(family, params, vbar, int(orders_flat[flat]), probes)
        devs[j] = np.max(np.abs(ref - approx))
    return devs


def _chunked(n, workers):
    chunk = max(1, math.ceil(n / (workers * 8)))
    return [range(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def _run_chunks(fn, jobs, workers):
    if workers <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def build_lut(family, grids=None, tol=TOL_DEFAULT, ref_order=REF_ORDER_DEFAULT,
              order_schedule=None, probe_spec=ProbeSpec(), workers=1,
              progress=None) -> QuadratureLUT:
    """Generate a required-order table for one integral family.

    For each grid point the trial schedule is walked in increasing order and
    the first order whose probe-set deviation from the reference result is
    below `tol` is stored. `progress`, if given, is called with
    (points_done, points_total) after each chunk.
    """
    if tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    axes = tuple(np.asarray(a, dtype=float) for a in
                 (grids if grids is not None else default_grids(family)))
    schedule = tuple(order_schedule) if order_schedule is not None \
        else default_order_schedule(ref_order)
    if list(schedule) != sorted(set(schedule)):
        raise ValidationError("order schedule must be strictly increasing")
    if schedule[-1] > ref_order:
        raise ValidationError("order schedule must not exceed the reference order")

    shape = tuple(a.size for a in axes)
    n = int(np.prod(shape))
    jobs = [(family, axes, list(idxs), tol, ref_order, schedule, probe_spec)
            for idxs in _chunked(n, max(1, workers))]
    orders = np.empty(n, dtype=np.uint16)
    done = 0
    for job, res in zip(jobs, _run_chunks(_build_chunk, jobs, workers)):
        orders[job[2][0]:job[2][-1] + 1] = res
        done += len(res)
        if progress is not None:
            progress(done, n)
    return QuadratureLUT(family=family, axes=axes, orders=orders.reshape(shape),
                         tol=tol, ref_order=ref_order)


def audit_lut(lut: QuadratureLUT, probe_spec=ProbeSpec(), workers=1, progress=None):
    """Re-verify every stored order against a fresh reference computation.

    Returns (max_deviation, flat_index_of_worst). Soundness holds when
    max_deviation < lut.tol.
    """
    n = lut.orders.size
    orders_flat = lut.orders.reshape(-1)
    jobs = [(lut.family, lut.axes, list(idxs), orders_flat, lut.ref_order, probe_spec)
            for idxs in _chunked(n, max(1, workers))]
    devs = np.empty(n)
    done = 0
    for job, res in zip(jobs, _run_chunks(_audit_chunk, jobs, workers)):
        devs[job[2][0]:job[2][-1] + 1] = res
        done += len(res)
        if progress is not None:
            progress(done, n)
    worst = int(np.argmax(devs))
    return float(devs[worst]), worst


def lookup(lut: QuadratureLUT, tbar, vbar, tbar_f=None, force_ref=False,
           margin=LOOKUP_MARGIN):
    """Nearest-grid-point order plus the safety margin.

    Time axes are log-spaced, so "nearest" is measured in log space for them
    and linearly for vbar. Exact midpoints take the larger of the two
    neighboring orders. Queries outside the grid clamp to the boundary and
    emit a RuntimeWarning.
    """
    if force_ref:
        return lut.ref_order
    if lut.family == FAMILY_FLUX:
        if tbar_f is not None:
            raise ValidationError("tbar_f is only meaningful for the contribution family")
        queries = (tbar, vbar)
        logs = (True, False)
    else:
        if tbar_f is None:
            raise ValidationError("the contribution family requires tbar_f")
        queries = (tbar, tbar_f, vbar)
        logs = (True, True, False)

    candidates = [()]
    for axis, value, is_log in zip(lut.axes, queries, logs):
        if value < axis[0] or value > axis[-1]:
            warnings.warn(
                f"{lut.family} LUT query {value:g} outside grid "
                f"[{axis[0]:g}, {axis[-1]:g}]; clamped to the boundary",
                RuntimeWarning,
                stacklevel=2,
            )
            value = min(max(value, axis[0]), axis[-1])
        coords = np.log(axis) if is_log else axis
        q = math.log(value) if is_log else value
        i = int(np.searchsorted(coords, q))
        near = {max(0, min(i - 1, axis.size - 1)), max(0, min(i, axis.size - 1))}
        dists = {j: abs(coords[j] - q) for j in near}
        dmin = min(dists.values())
        picked = [j for j, d in dists.items() if d <= dmin * (1 + 1e-12) + 1e-300]
        candidates = [c + (j,) for c in candidates for j in picked]

    order = max(int(lut.orders[c]) for c in candidates)
    return min(order + margin, lut.ref_order)


# --- persistence ------------------------------------------------------------

def save_lut(lut: QuadratureLUT) -> bytes:
    """Versioned little-endian binary encoding with a trailing CRC32."""
    body = bytearray()
    body += struct.pack("<B", _FAMILY_BYTE[lut.family])
    body += struct.pack("<d", lut.tol)
    body += struct.pack("<I", lut.ref_order)
    body += struct.pack("<B", len(lut.axes))
    for axis in lut.axes:
        body += struct.pack("<I", axis.size)
        body += axis.astype("<f8").tobytes()
    body += lut.orders.astype("<u2").tobytes()
    return _MAGIC + bytes(body) + struct.pack("<I", zlib.crc32(bytes(body)))


def load_lut(data: bytes) -> QuadratureLUT:
    if len(data) < len(_MAGIC) + 4:
        raise LutFormatError("LUT byte stream is too short")
    if data[: len(_MAGIC)] != _MAGIC:
        raise LutFormatError("bad magic; not a PBFLUT1 stream")
    body, (crc,) = data[len(_MAGIC):-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise LutFormatError("checksum mismatch; LUT stream is corrupted")
    try:
        off = 0
        (family_byte,) = struct.unpack_from("<B", body, off); off += 1
        family = _FAMILY_FROM_BYTE.get(family_byte)
        if family is None:
            raise LutFormatError(f"unknown family byte {family_byte}")
        (tol,) = struct.unpack_from("<d", body, off); off += 8
        (ref_order,) = struct.unpack_from("<I", body, off); off += 4
        (n_axes,) = struct.unpack_from("<B", body, off); off += 1
        if n_axes != _AXES_PER_FAMILY[family]:
            raise LutFormatError(f"{family} family must have {_AXES_PER_FAMILY[family]} axes")
        axes = []
        for _ in range(n_axes):
            (n,) = struct.unpack_from("<I", body, off); off += 4
            axes.append(np.frombuffer(body, dtype="<f8", count=n, offset=off).copy())
            off += 8 * n
        count = int(np.prod([a.size for a in axes]))
        orders = np.frombuffer(body, dtype="<u2", count=count, offset=off).copy()
        off += 2 * count
        if off != len(body):
            raise LutFormatError("trailing bytes after the orders block")
    except struct.error as exc:
        raise LutFormatError(f"truncated LUT stream: {exc}") from None
    except ValueError as exc:  # np.frombuffer beyond the end
        raise LutFormatError(f"truncated LUT stream: {exc}") from None
    try:
        return QuadratureLUT(family=family, axes=tuple(axes),
                             orders=orders.reshape([a.size for a in axes]),
                             tol=tol, ref_order=ref_order)
    except ValidationError as exc:
        raise LutFormatError(f"decoded LUT violates invariants: {exc}") from None
