"""The analytical solution: integrand kernels, the flux term of the active
segment, the inherited-heat terms of completed segments, and their assembly
into the temperature field.

All terms are dimensionless integrals scaled by the kelvin prefactor of
their segment; the full solution is

    u(x, t) = u_init + sum over completed segments of the inherited term
                     + flux term of the segment containing t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BeamPath,
    DimensionlessFrame,
    MaterialParams,
    Segment,
    contribution_frame,
    flux_frame,
)
from .errors import DomainError
from .errors import NumericsError
from .quadrature import (
    FAMILY_CONTRIBUTION,
    FAMILY_FLUX,
    REF_ORDER_DEFAULT,
    Quadrature,
    QuadratureLUT,
    cached_quadrature,
    lookup,
    node_tables,
)

# Exponent floor: arguments below this produce exactly 0 instead of exp().
EXP_FLOOR = -700.0


def green(x, y, z, t, kappa):
    """Free-space diffusion kernel (4 pi kappa t)^(-3/2) exp(-|x|^2/(4 kappa t))."""
    if t <= 0:
        raise DomainError(f"the Green's function needs t > 0, got {t}")
    x, y, z = np.asarray(x), np.asarray(y), np.asarray(z)
    r2 = x * x + y * y + z * z
    return (4.0 * math.pi * kappa * t) ** -1.5 * np.exp(-r2 / (4.0 * kappa * t))


def _guarded_exp(arg):
    arg = np.asarray(arg)
    return np.where(arg < EXP_FLOOR, 0.0, np.exp(np.maximum(arg, EXP_FLOOR)))


def _column(v):
    """Append a node axis to array-valued frame positions."""
    v = np.asarray(v, dtype=float)
    return v[..., None] if v.ndim else v


def flux_integrand(frame: DimensionlessFrame, sbar):
    """Integrand of the active segment's flux integral at clock value(s) sbar.

    Total on its domain: exponent arguments below -700 return exactly 0, so
    the zbar^2/sbar^2 spike near sbar = 0 underflows cleanly.
    """
    sbar = np.asarray(sbar, dtype=float)
    s2 = sbar * sbar
    den = 1.0 + s2
    xb, yb, zb = _column(frame.xbar), _column(frame.ybar), _column(frame.zbar)
    arg = (
        -((xb + frame.vbar_x * s2) ** 2 + (yb + frame.vbar_y * s2) ** 2) / den
        - zb * zb / s2
    )
    return _guarded_exp(arg) / den


def contribution_integrand(frame: DimensionlessFrame, rbar):
    """Integrand of a completed segment's inherited-heat integral.

    At frame.tbar == 0 this degenerates to the flux integrand (the elapsed
    clock vanishes), which is the correct one-sided limit.
    """
    rbar = np.asarray(rbar, dtype=float)
    r2 = rbar * rbar
    t2 = frame.tbar * frame.tbar
    dz = r2 + t2
    den = 1.0 + dz
    xb, yb, zb = _column(frame.xbar), _column(frame.ybar), _column(frame.zbar)
    arg = (
        -((xb + frame.vbar_x * r2) ** 2 + (yb + frame.vbar_y * r2) ** 2) / den
        - zb * zb / dz
    )
    return rbar / np.sqrt(dz) * _guarded_exp(arg) / den


def _zeros_like_frame(frame):
    shape = np.broadcast(np.asarray(frame.xbar), np.asarray(frame.ybar),
                         np.asarray(frame.zbar)).shape
    return 0.0 if shape == () else np.zeros(shape)


def _term_value(frame: DimensionlessFrame, family, q: Quadrature):
    """Dimensionless quadrature value of one term for the frame's positions.

    Contribution terms integrate in w = sqrt(r^2 + tbar^2), the form that
    stays smooth down to tbar = 0 (see quadrature.node_tables); the flux form
    is the plain one. Algebraically identical to integrating the public
    kernels over their stated limits with the same rule.
    """
    a2, dxy, dz, cw = node_tables(family, q, frame.tbar, frame.tbar_f)
    xb, yb, zb = _column(frame.xbar), _column(frame.ybar), _column(frame.zbar)
    arg = (
        -((xb + frame.vbar_x * a2) ** 2 + (yb + frame.vbar_y * a2) ** 2) / dxy
        - zb * zb / dz
    )
    res = _guarded_exp(arg) @ cw
    if not np.all(np.isfinite(np.atleast_1d(res))):
        raise NumericsError("term integrand produced a non-finite quadrature result")
    return res


def flux_term(seg: Segment, material: MaterialParams, point, time, quadrature: Quadrature):
    """Temperature above baseline contributed by the active segment, in K."""
    x, y, z = point
    frame = flux_frame(seg, material, x, y, z, time)
    if frame.T == 0.0 or frame.tbar == 0.0:
        return _zeros_like_frame(frame)
    return frame.T * _term_value(frame, FAMILY_FLUX, quadrature)


def contribution_term(seg: Segment, material: MaterialParams, point, time,
                      quadrature: Quadrature):
    """Temperature above baseline inherited from a completed segment, in K."""
    x, y, z = point
    frame = contribution_frame(seg, material, x, y, z, time)
    if frame.T == 0.0:
        return _zeros_like_frame(frame)
    return frame.T * _term_value(frame, FAMILY_CONTRIBUTION, quadrature)


def single_line(P, sigma, v, material: MaterialParams, u_init, point, time,
                quadrature: Quadrature):
    """Constant-parameter single-line solution: one segment starting at the
    origin at t = 0 and moving along +x. Shares the flux-term code path."""
    if time <= 0:
        raise DomainError(f"single_line needs time > 0, got {time}")
    seg = Segment(t_i=0.0, t_f=time, x_i=0.0, y_i=0.0,
                  x_f=v * time, y_f=0.0, P=P, sigma=sigma, v=v)
    return u_init + flux_term(seg, material, point, time, quadrature)


# --- assembly ---------------------------------------------------------------

@dataclass(frozen=True)
class EvalRequest:
    """One evaluation event plus the quadrature-order policy."""

    path: BeamPath
    material: MaterialParams
    point: tuple
    time: float
    flux_lut: QuadratureLUT | None = None
    contribution_lut: QuadratureLUT | None = None
    force_ref: bool = False
    ref_order: int = REF_ORDER_DEFAULT


def segment_index_at(path: BeamPath, t):
    """Index n with t in (t_n_i, t_n_f]; half-open per the partition rules."""
    if not (path.t_start < t <= path.t_end):
        raise DomainError(
            f"time {t!r} outside the path span ({path.t_start!r}, {path.t_end!r}]"
        )
    ends = [s.t_f for s in path.segments]
    lo, hi = 0, len(ends) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if ends[mid] < t:
            lo = mid + 1
        else:
            hi = mid
    return lo


def _term_order(family, frame, flux_lut, contribution_lut, force_ref, ref_order):
    if family == FAMILY_FLUX:
        if force_ref or flux_lut is None:
            return ref_order
        return lookup(flux_lut, frame.tbar, frame.vbar, force_ref=False)
    if force_ref or contribution_lut is None:
        return ref_order
    return lookup(contribution_lut, frame.tbar, frame.vbar, tbar_f=frame.tbar_f,
                  force_ref=False)


def evaluate_points(path: BeamPath, material: MaterialParams, x, y, z, t,
                    flux_lut=None, contribution_lut=None, force_ref=False,
                    ref_order=REF_ORDER_DEFAULT):
    """Temperature at time t for scattered points (arrays broadcast together).

    Zero-power segments contribute nothing and are skipped. Quadrature orders
    come from the LUTs when provided (keyed on the dimensionless clock and
    speed magnitude of each term) and default to the reference order.
    """
    n = segment_index_at(path, t)
    x, y, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float),
                                  np.asarray(z, float))
    u = np.full(x.shape, float(path.u_init))
    for k in range(n + 1):
        seg = path.segments[k]
        if seg.P == 0.0:
            continue
        if k == n:
            frame = flux_frame(seg, material, x, y, z, t)
            family, limit = FAMILY_FLUX, frame.tbar
        else:
            frame = contribution_frame(seg, material, x, y, z, t)
            family, limit = FAMILY_CONTRIBUTION, frame.tbar_f
        if limit == 0.0:
            continue
        order = _term_order(family, frame, flux_lut, contribution_lut,
                            force_ref, ref_order)
        u = u + frame.T * _term_value(frame, family, cached_quadrature(order))
    return u


def evaluate(req: EvalRequest):
    """Temperature (K) at one space-time point per the assembled solution."""
    x, y, z = req.point
    u = evaluate_points(req.path, req.material, x, y, z, req.time,
                        flux_lut=req.flux_lut, contribution_lut=req.contribution_lut,
                        force_ref=req.force_ref, ref_order=req.ref_order)
    return float(u)


def evaluate_grid_step(path: BeamPath, material: MaterialParams, xs, ys, zs, t,
                       flux_lut=None, contribution_lut=None, force_ref=False,
                       ref_order=REF_ORDER_DEFAULT):
    """Temperature over the product grid xs x ys x zs at one time, as an
    (nx, ny, nz) array.

    The exponential factorizes over the grid axes, so each term costs
    (nx+ny+nz)*M exponentials and nz small matrix products; per-term orders
    are space independent, which makes this exactly the vectorized sum of
    `evaluate_points` up to floating-point summation order.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    zs = np.asarray(zs, dtype=float)
    n = segment_index_at(path, t)
    out = np.full((xs.size, ys.size, zs.size), float(path.u_init))
    for k in range(n + 1):
        seg = path.segments[k]
        if seg.P == 0.0:
            continue
        if k == n:
            frame = flux_frame(seg, material, xs, ys, zs, t)
            family, limit = FAMILY_FLUX, frame.tbar
        else:
            frame = contribution_frame(seg, material, xs, ys, zs, t)
            family, limit = FAMILY_CONTRIBUTION, frame.tbar_f
        if limit == 0.0:
            continue
        order = _term_order(family, frame, flux_lut, contribution_lut,
                            force_ref, ref_order)
        q = cached_quadrature(order)
        a2, dxy, dz, cw = node_tables(family, q, frame.tbar, frame.tbar_f)
        ex = np.exp(-((frame.xbar[:, None] + frame.vbar_x * a2) ** 2) / dxy)
        ey = np.exp(-((frame.ybar[:, None] + frame.vbar_y * a2) ** 2) / dxy)
        ez = np.exp(-(frame.zbar[:, None] ** 2) / dz)
        for kz in range(zs.size):
            out[:, :, kz] += frame.T * ((ex * (cw * ez[kz])) @ ey.T)
    return out
