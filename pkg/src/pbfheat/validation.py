"""Independent oracles for the analytical solution.

Nothing here shares math with the solver beyond the Green's function: the
finite-difference solver discretizes the boundary-value problem directly,
the convolution audit performs the inherited-heat convolution by brute
force, and the semigroup audit checks the Gaussian variance-addition
identity that the per-segment decomposition rests on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import BeamPath, FieldGrid, FieldResult, MaterialParams, Segment
from .errors import AuditError, ValidationError
from .quadrature import cached_quadrature
from .solver import contribution_term, evaluate_grid_step, green


@dataclass(frozen=True)
class FdConfig:
    """Explicit finite-difference run on a truncated box.

    The surface z = 0 carries the Gaussian flux; all other faces are
    insulated, which approximates the half-space while the box stays cold
    near its boundary. The explicit stability bound
    kappa*dt*(1/dx^2 + 1/dy^2 + 1/dz^2) <= 1/2 is enforced here.
    """

    material: MaterialParams
    u_init: float
    x_extent: tuple  # (x0, x1), m
    y_extent: tuple
    depth: float     # box depth; z spans [-depth, 0]
    nx: int
    ny: int
    nz: int
    dt: float
    t_end: float
    P: float
    sigma: float
    beam_start: tuple = (0.0, 0.0)
    beam_velocity: tuple = (0.0, 0.0)
    dx: float = field(init=False)
    dy: float = field(init=False)
    dz: float = field(init=False)

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 3:
            raise ValidationError("FD grid needs at least 3 nodes per axis")
        if self.depth <= 0 or self.t_end <= 0 or self.dt <= 0 or self.sigma <= 0:
            raise ValidationError("FD extents, times, and spot size must be positive")
        dx = (self.x_extent[1] - self.x_extent[0]) / (self.nx - 1)
        dy = (self.y_extent[1] - self.y_extent[0]) / (self.ny - 1)
        dz = self.depth / (self.nz - 1)
        if min(dx, dy, dz) <= 0:
            raise ValidationError("FD extents must be increasing")
        stab = self.material.kappa * self.dt * (1 / dx**2 + 1 / dy**2 + 1 / dz**2)
        if stab > 0.5:
            raise ValidationError(
                f"explicit scheme unstable: kappa*dt*sum(1/h^2) = {stab:.3f} > 0.5"
            )
        for name, val in (("dx", dx), ("dy", dy), ("dz", dz)):
            object.__setattr__(self, name, val)

    def stable_dt(self, safety=0.9):
        dx = (self.x_extent[1] - self.x_extent[0]) / (self.nx - 1)
        dy = (self.y_extent[1] - self.y_extent[0]) / (self.ny - 1)
        dz = self.depth / (self.nz - 1)
        return safety * 0.5 / (self.material.kappa * (1 / dx**2 + 1 / dy**2 + 1 / dz**2))


def _trapezoid_weights(n):
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def fd_solve(cfg: FdConfig, check_boundary=True, boundary_tol=1e-3) -> FieldResult:
    """March the explicit scheme to t_end; returns the final snapshot.

    Insulated faces are realized by reflecting ghost nodes; the surface flux
    enters as a source on the top layer (equivalent to the flux ghost node).
    Updates are vectorized over grid slabs. Provenance carries the enthalpy
    balance `energy_ratio` (enthalpy increase over nominal P*t, trapezoid
    mass weights) and the largest boundary deviation from u_init.
    """
    m = cfg.material
    xs = np.linspace(cfg.x_extent[0], cfg.x_extent[1], cfg.nx)
    ys = np.linspace(cfg.y_extent[0], cfg.y_extent[1], cfg.ny)
    zs = np.linspace(-cfg.depth, 0.0, cfg.nz)
    nsteps = int(math.ceil(cfg.t_end / cfg.dt))
    dt = cfg.t_end / nsteps

    u = np.full((cfg.nx, cfg.ny, cfg.nz), float(cfg.u_init))
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    cx = m.kappa * dt / cfg.dx**2
    cy = m.kappa * dt / cfg.dy**2
    cz = m.kappa * dt / cfg.dz**2
    src_scale = dt * 2.0 / (m.rho * m.cp * cfg.dz)
    amp = cfg.P / (2.0 * math.pi * cfg.sigma**2)

    lap = np.empty_like(u)
    for it in range(nsteps):
        t = it * dt
        bx = cfg.beam_start[0] + cfg.beam_velocity[0] * t
        by = cfg.beam_start[1] + cfg.beam_velocity[1] * t
        flux = amp * np.exp(-((X - bx) ** 2 + (Y - by) ** 2) / (2.0 * cfg.sigma**2))

        lap[1:-1, :, :] = cx * (u[2:, :, :] + u[:-2, :, :] - 2 * u[1:-1, :, :])
        lap[0, :, :] = cx * 2 * (u[1, :, :] - u[0, :, :])
        lap[-1, :, :] = cx * 2 * (u[-2, :, :] - u[-1, :, :])
        lap[:, 1:-1, :] += cy * (u[:, 2:, :] + u[:, :-2, :] - 2 * u[:, 1:-1, :])
        lap[:, 0, :] += cy * 2 * (u[:, 1, :] - u[:, 0, :])
        lap[:, -1, :] += cy * 2 * (u[:, -2, :] - u[:, -1, :])
        lap[:, :, 1:-1] += cz * (u[:, :, 2:] + u[:, :, :-2] - 2 * u[:, :, 1:-1])
        lap[:, :, 0] += cz * 2 * (u[:, :, 1] - u[:, :, 0])
        lap[:, :, -1] += cz * 2 * (u[:, :, -2] - u[:, :, -1])
        u += lap
        u[:, :, -1] += src_scale * flux

    wx = _trapezoid_weights(cfg.nx)[:, None, None]
    wy = _trapezoid_weights(cfg.ny)[None, :, None]
    wz = _trapezoid_weights(cfg.nz)[None, None, :]
    enthalpy = m.rho * m.cp * cfg.dx * cfg.dy * cfg.dz * float(
        ((u - cfg.u_init) * wx * wy * wz).sum()
    )
    energy_ratio = enthalpy / (cfg.P * cfg.t_end) if cfg.P > 0 else 1.0

    boundary_dev = max(
        float(np.max(np.abs(u[0, :, :] - cfg.u_init))),
        float(np.max(np.abs(u[-1, :, :] - cfg.u_init))),
        float(np.max(np.abs(u[:, 0, :] - cfg.u_init))),
        float(np.max(np.abs(u[:, -1, :] - cfg.u_init))),
        float(np.max(np.abs(u[:, :, 0] - cfg.u_init))),
    )
    if check_boundary and boundary_dev > boundary_tol:
        raise AuditError(
            f"FD box too small: boundary deviates {boundary_dev:.3e} K from "
            f"u_init (allowed {boundary_tol:g} K)"
        )

    grid = FieldGrid(xs=xs, ys=ys, zs=zs, ts=np.array([cfg.t_end]))
    return FieldResult(
        grid=grid,
        values=u[None, :, :, :],
        provenance={
            "kind": "fd",
            "steps": nsteps,
            "dt": dt,
            "energy_ratio": energy_ratio,
            "boundary_dev": boundary_dev,
        },
    )


def convolution_audit(seg: Segment, material: MaterialParams, time,
                      spacing=None, n_z=160, z_grade=3.0, pad_stds=8.0,
                      order=400, probes=None):
    """Brute-force check of one completed segment's inherited-heat term.

    Convolves the free-space Green's function (with the mirror image in z,
    since the end-of-segment field extends evenly across the surface) against
    the segment's flux field at its final time, on a truncated trapezoid
    grid, and compares with `contribution_term` at the probe points.
    Returns the maximum deviation relative to the largest analytic value.

    The end-of-segment field has a |z| cusp and a thin boundary layer at the
    surface, so the z axis is graded toward z = 0 (node density ~ z_grade).
    """
    if time <= seg.t_f:
        raise ValidationError("convolution audit needs time > segment end")
    kappa = material.kappa
    if spacing is None:
        spacing = seg.sigma / 3.0
    reach = pad_stds * math.sqrt(2.0 * kappa * (time - seg.t_i)) + pad_stds * seg.sigma

    def axis(lo, hi):
        n = int(math.ceil((hi - lo) / spacing)) + 1
        return np.linspace(lo, hi, n)

    xs = axis(min(seg.x_i, seg.x_f) - reach, max(seg.x_i, seg.x_f) + reach)
    ys = axis(min(seg.y_i, seg.y_f) - reach, max(seg.y_i, seg.y_f) + reach)
    zs = -reach * (np.linspace(1.0, 0.0, n_z) ** z_grade)

    path = BeamPath((seg,), 0.0)
    fld = evaluate_grid_step(path, material, xs, ys, zs, seg.t_f,
                             force_ref=True, ref_order=order)
    if seg.P == 0.0:
        fmax = 0.0
    else:
        fmax = float(fld.max())
        edge = max(
            float(np.abs(fld[0]).max()), float(np.abs(fld[-1]).max()),
            float(np.abs(fld[:, 0]).max()), float(np.abs(fld[:, -1]).max()),
            float(np.abs(fld[:, :, 0]).max()),
        )
        if edge > 1e-10 * fmax:
            raise AuditError(
                f"convolution grid does not capture the field tails: edge "
                f"value {edge:.3e} vs peak {fmax:.3e}"
            )

    if probes is None:
        track_x = np.linspace(min(seg.x_i, seg.x_f), max(seg.x_i, seg.x_f), 5)
        probes = [(px, seg.y_f + dy, pz)
                  for px in track_x
                  for dy in (0.0, 2.0 * seg.sigma)
                  for pz in (0.0, -seg.sigma)]

    def tw(a):
        w = np.zeros(a.size)
        d = np.diff(a)
        w[:-1] += d / 2
        w[1:] += d / 2
        return w

    weighted = fld * (tw(xs)[:, None, None] * tw(ys)[None, :, None]
                      * tw(zs)[None, None, :])
    tau = time - seg.t_f

    q = cached_quadrature(order)
    analytic = np.array([contribution_term(seg, material, p, time, q) for p in probes])
    conv = np.empty(len(probes))
    for i, (px, py, pz) in enumerate(probes):
        kern = green(px - xs[:, None, None], py - ys[None, :, None],
                     pz - zs[None, None, :], tau, kappa)
        kern = kern + green(px - xs[:, None, None], py - ys[None, :, None],
                            pz + zs[None, None, :], tau, kappa)
        conv[i] = float((weighted * kern).sum())

    scale = float(np.max(np.abs(analytic)))
    if scale == 0.0:
        return float(np.max(np.abs(conv)))
    return float(np.max(np.abs(conv - analytic)) / scale)


def semigroup_audit(kappa, t_p, t_q, t, n_grid=4001, n_probe=81):
    """Check G(., t-t_q) * G(., t_q-t_p) = G(., t-t_p) per axis.

    The two factors are univariate zero-mean Gaussians; their numerical
    convolution on a line is compared against the closed form with summed
    variance. Returns the maximum absolute deviation over the probe line.
    """
    if not (t_p < t_q < t):
        raise ValidationError("semigroup audit needs t_p < t_q < t")
    var1 = 2.0 * kappa * (t - t_q)
    var2 = 2.0 * kappa * (t_q - t_p)
    var = var1 + var2

    def gauss(x, v):
        return np.exp(-x * x / (2.0 * v)) / math.sqrt(2.0 * math.pi * v)

    L = 10.0 * math.sqrt(var)
    xi = np.linspace(-L, L, n_grid)
    h = xi[1] - xi[0]
    w = _trapezoid_weights(n_grid) * h
    probe = np.linspace(-4.0 * math.sqrt(var), 4.0 * math.sqrt(var), n_probe)
    conv = (gauss(xi[None, :], var1) * w) @ gauss(probe[:, None] - xi[None, :], var2).T
    closed = gauss(probe, var)
    return float(np.max(np.abs(conv - closed)))
