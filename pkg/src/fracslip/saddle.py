"""Stokes / Navier-Stokes saddle-point engine on masked MAC grids.

Discretization
--------------
Uniform MAC staggered grid, periodic in x (see :mod:`fracslip.geometry` for
the layout).  The viscous block is assembled as the Gram matrix of a discrete
gradient: every momentum row equals ``h^2`` times the physical momentum
equation, and the quadratic form ``u^T A u`` equals ``mu * ||grad u||^2``
with the same edge set the ``norms`` routine integrates.  That makes the
discrete energy identities exact to solver precision, which the dual-identity
checks rely on.

Edge conventions:

* interior edges: centered difference over ``h``, weight ``h^2``;
* tangential velocity at a no-slip domain wall: one-sided difference over
  ``h/2`` (wall value 0), weight ``h^2/2`` -- equivalent to a mirror ghost;
* faces touching stair-cased solid cells are frozen to zero and enter their
  neighbors' edges as plain zero values (full ``h`` edge).

The stress-free top (slab truncation) simply omits the wall edge: zero
tangential stress is the natural condition of the energy form, and v = 0 on
the top line is imposed strongly.

Pressure coupling uses the exact MAC div/grad adjoint pair, so the assembled
system is symmetric for Stokes.  A tangential-stress jump of size
``sigma_jump = [du1/dy]`` (value above minus below) across an interior grid
line enters as the weak line integral ``-mu*sigma_jump * integral(phi_1)``,
split evenly between the two adjacent u-rows.  Convection is divergence-form
with centered fluxes, linearized at the previous iterate for Picard.

The pressure gauge is a Lagrange multiplier: either zero mean over a cell
mask or a single-cell pin.  Both keep the continuity rows conservative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (
    MaxIterExceeded,
    NonConvergence,
    PicardDiverged,
    SingularSystem,
    UnknownRegion,
)
from .geometry import StaggeredGrid

_REL_RESIDUAL_LIMIT = 1e-10


# ---------------------------------------------------------------------------
# fields and problems
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class StaggeredField:
    """Velocity/pressure triple on a staggered grid (zeros at frozen faces)."""

    grid: StaggeredGrid
    u: np.ndarray  # (ny, nx)
    v: np.ndarray  # (ny+1, nx)
    p: np.ndarray  # (ny, nx)

    @classmethod
    def zeros(cls, grid: StaggeredGrid) -> "StaggeredField":
        return cls(
            grid,
            np.zeros((grid.ny, grid.nx)),
            np.zeros((grid.ny + 1, grid.nx)),
            np.zeros((grid.ny, grid.nx)),
        )

    def copy(self) -> "StaggeredField":
        return StaggeredField(self.grid, self.u.copy(), self.v.copy(), self.p.copy())

    def axpy(self, alpha: float, other: "StaggeredField") -> "StaggeredField":
        """self + alpha * other, as a new field."""
        return StaggeredField(
            self.grid,
            self.u + alpha * other.u,
            self.v + alpha * other.v,
            self.p + alpha * other.p,
        )

    def scaled(self, alpha: float) -> "StaggeredField":
        return StaggeredField(self.grid, alpha * self.u, alpha * self.v, alpha * self.p)


@dataclass(eq=False)
class SaddleProblem:
    """One Stokes/Navier-Stokes solve on a masked grid.

    ``sigma_jump`` is the strong tangential-derivative jump ``[du1/dy]``
    (above minus below) imposed across the horizontal grid line ``jump_row``;
    the corresponding weak datum is ``-viscosity*sigma_jump``.
    """

    grid: StaggeredGrid
    viscosity: float = 1.0
    forcing_u: np.ndarray | None = None  # (ny, nx) volumetric force, x-component
    forcing_v: np.ndarray | None = None  # (ny+1, nx)
    jump_row: int | None = None
    sigma_jump: float = 0.0
    convective: bool = False
    gauge: tuple = ("pin", None)  # ("pin", (j,i) or None) | ("cell_mean", mask)

    def __post_init__(self):
        if self.viscosity <= 0.0:
            raise ValueError("viscosity must be positive")
        if self.jump_row is not None and not (0 < self.jump_row < self.grid.ny):
            raise ValueError("jump_row must be an interior grid line")


@dataclass
class SolveStats:
    linear_residual: float
    divergence_max: float
    picard_iterations: int = 0
    picard_history: tuple = ()


# ---------------------------------------------------------------------------
# per-grid discretization data (cached on the grid instance)
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class _Edges:
    a: np.ndarray      # flat indices into the component array
    b: np.ndarray      # flat partner indices, -1 for the wall zero
    coef: np.ndarray   # w/l^2 relative to an interior edge (1.0 or 2.0)
    y_mid: np.ndarray  # edge midpoint height, for region splits


@dataclass(eq=False)
class _Disc:
    u_ids: np.ndarray
    v_ids: np.ndarray
    p_ids: np.ndarray
    nu: int
    nv: int
    npr: int
    u_edges: _Edges
    v_edges: _Edges


def _component_ids(active: np.ndarray, offset: int) -> tuple[np.ndarray, int]:
    ids = -np.ones(active.size, dtype=np.int64)
    n = int(active.sum())
    ids[active.ravel()] = offset + np.arange(n)
    return ids, n


def _build_edges_u(grid: StaggeredGrid) -> _Edges:
    ny, nx = grid.ny, grid.nx
    uid = np.arange(ny * nx).reshape(ny, nx)
    act = grid.u_active
    fluid = grid.fluid
    a_list, b_list, c_list, y_list = [], [], [], []

    # du/dx edges: one per fluid cell, between its left and right faces
    jj, ii = np.nonzero(fluid)
    a = uid[jj, ii]
    b = uid[jj, (ii + 1) % nx]
    keep = act[jj, ii] | act[jj, (ii + 1) % nx]
    a_list.append(a[keep])
    b_list.append(b[keep])
    c_list.append(np.ones(keep.sum()))
    y_list.append(grid.y_cell(jj[keep]))

    # du/dy edges between vertically adjacent faces
    act_lo = act[:-1, :]
    act_hi = act[1:, :]
    keep = act_lo | act_hi
    jj, ii = np.nonzero(keep)
    a_list.append(uid[jj, ii])
    b_list.append(uid[jj + 1, ii])
    c_list.append(np.ones(jj.size))
    y_list.append(grid.y_line(jj + 1))

    # wall half-edges for the tangential component
    jw, iw = np.nonzero(act[0, :][None, :])
    a_list.append(uid[0, iw])
    b_list.append(-np.ones(iw.size, dtype=np.int64))
    c_list.append(np.full(iw.size, 2.0))
    y_list.append(np.full(iw.size, grid.y0))
    if grid.top_bc == "noslip":
        jw, iw = np.nonzero(act[ny - 1, :][None, :])
        a_list.append(uid[ny - 1, iw])
        b_list.append(-np.ones(iw.size, dtype=np.int64))
        c_list.append(np.full(iw.size, 2.0))
        y_list.append(np.full(iw.size, grid.y_top))

    return _Edges(
        np.concatenate(a_list),
        np.concatenate(b_list),
        np.concatenate(c_list),
        np.concatenate(y_list),
    )


def _build_edges_v(grid: StaggeredGrid) -> _Edges:
    ny, nx = grid.ny, grid.nx
    vid = np.arange((ny + 1) * nx).reshape(ny + 1, nx)
    act = grid.v_active
    fluid = grid.fluid
    a_list, b_list, c_list, y_list = [], [], [], []

    # dv/dy edges: one per fluid cell, between its bottom and top faces.
    # Wall faces are frozen zeros; the full-h edge to them is the natural
    # one-sided difference because v lives on the wall line itself.
    jj, ii = np.nonzero(fluid)
    keep = act[jj, ii] | act[jj + 1, ii]
    jj, ii = jj[keep], ii[keep]
    a_list.append(vid[jj, ii])
    b_list.append(vid[jj + 1, ii])
    c_list.append(np.ones(jj.size))
    y_list.append(grid.y_cell(jj))

    # dv/dx edges along interior v-rows
    for j in range(1, ny):
        row_act = act[j, :]
        nxt = np.roll(row_act, -1)
        keep = row_act | nxt
        ii = np.nonzero(keep)[0]
        a_list.append(vid[j, ii])
        b_list.append(vid[j, (ii + 1) % nx])
        c_list.append(np.ones(ii.size))
        y_list.append(np.full(ii.size, grid.y_line(j)))

    return _Edges(
        np.concatenate(a_list),
        np.concatenate(b_list),
        np.concatenate(c_list),
        np.concatenate(y_list),
    )


def _disc(grid: StaggeredGrid) -> _Disc:
    cached = grid.__dict__.get("_saddle_disc")
    if cached is not None:
        return cached
    u_ids, nu = _component_ids(grid.u_active, 0)
    v_ids, nv = _component_ids(grid.v_active, 0)
    p_ids, npr = _component_ids(grid.fluid, 0)
    disc = _Disc(
        u_ids=u_ids,
        v_ids=v_ids,
        p_ids=p_ids,
        nu=nu,
        nv=nv,
        npr=npr,
        u_edges=_build_edges_u(grid),
        v_edges=_build_edges_v(grid),
    )
    grid.__dict__["_saddle_disc"] = disc
    return disc


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _laplace_block(edges: _Edges, ids: np.ndarray, n: int, mu: float) -> sp.coo_matrix:
    """mu * (Gram matrix of the gradient edges), on active DOFs."""
    ia = ids[edges.a]
    ib = np.where(edges.b >= 0, ids[edges.b], -1)
    c = mu * edges.coef

    rows, cols, vals = [], [], []
    both = (ia >= 0) & (ib >= 0)
    rows += [ia[both], ib[both], ia[both], ib[both]]
    cols += [ia[both], ib[both], ib[both], ia[both]]
    vals += [c[both], c[both], -c[both], -c[both]]
    only_a = (ia >= 0) & (ib < 0)
    rows.append(ia[only_a])
    cols.append(ia[only_a])
    vals.append(c[only_a])
    only_b = (ia < 0) & (ib >= 0)
    rows.append(ib[only_b])
    cols.append(ib[only_b])
    vals.append(c[only_b])

    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )


def _pressure_gradient_split(grid: StaggeredGrid, disc: _Disc):
    """(Mu, Mv) with (M p) = h^2 * grad p at active faces; continuity is M^T."""
    ny, nx = grid.ny, grid.nx
    h = grid.h
    pid = disc.p_ids.reshape(ny, nx)

    jj, ii = np.nonzero(grid.u_active)
    r = disc.u_ids.reshape(ny, nx)[jj, ii]
    Mu = sp.coo_matrix(
        (
            np.concatenate([np.full(r.size, h), np.full(r.size, -h)]),
            (
                np.concatenate([r, r]),
                np.concatenate([pid[jj, ii], pid[jj, (ii - 1) % nx]]),
            ),
        ),
        shape=(disc.nu, disc.npr),
    ).tocsr()

    jj, ii = np.nonzero(grid.v_active)
    r = disc.v_ids.reshape(ny + 1, nx)[jj, ii]
    Mv = sp.coo_matrix(
        (
            np.concatenate([np.full(r.size, h), np.full(r.size, -h)]),
            (
                np.concatenate([r, r]),
                np.concatenate([pid[jj, ii], pid[jj - 1, ii]]),
            ),
        ),
        shape=(disc.nv, disc.npr),
    ).tocsr()
    return Mu, Mv


def _pressure_gradient(grid: StaggeredGrid, disc: _Disc) -> sp.coo_matrix:
    """Stacked (nu+nv) x np pressure-gradient block."""
    Mu, Mv = _pressure_gradient_split(grid, disc)
    return sp.vstack([Mu, Mv]).tocoo()


def _convection_matrix(grid: StaggeredGrid, disc: _Disc, w: StaggeredField) -> sp.coo_matrix:
    """Divergence-form convection linearized at advecting field w (h^2-scaled)."""
    ny, nx = grid.ny, grid.nx
    h = grid.h
    wu, wv = w.u, w.v
    rows, cols, vals = [], [], []

    def add(r, c, v):
        keep = (r >= 0) & (c >= 0)
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(v[keep])

    uid = disc.u_ids.reshape(ny, nx)
    vid = disc.v_ids.reshape(ny + 1, nx)

    # --- u rows ---
    jj, ii = np.nonzero(grid.u_active)
    r = uid[jj, ii]
    ip1 = (ii + 1) % nx
    im1 = (ii - 1) % nx
    # w1 at cell centers east/west of the face
    w1e = 0.5 * (wu[jj, ii] + wu[jj, ip1])
    w1w = 0.5 * (wu[jj, im1] + wu[jj, ii])
    # w2 at the CV corners below/above (wall rows of wv are zero)
    w2s = 0.5 * (wv[jj, im1] + wv[jj, ii])
    w2n = 0.5 * (wv[jj + 1, im1] + wv[jj + 1, ii])

    half_h = 0.5 * h
    add(r, uid[jj, ip1], half_h * w1e)
    add(r, uid[jj, im1], -half_h * w1w)
    add(r, r, half_h * (w1e - w1w) + half_h * (w2n - w2s))
    up = np.where(jj + 1 <= ny - 1, uid[(jj + 1) % ny, ii], -1)
    dn = np.where(jj - 1 >= 0, uid[jj - 1, ii], -1)
    add(r, up, half_h * w2n)
    add(r, dn, -half_h * w2s)

    # --- v rows ---
    jj, ii = np.nonzero(grid.v_active)
    r = disc.nu + vid[jj, ii]
    ip1 = (ii + 1) % nx
    im1 = (ii - 1) % nx
    w2n_c = 0.5 * (wv[jj, ii] + wv[jj + 1, ii])
    w2s_c = 0.5 * (wv[jj - 1, ii] + wv[jj, ii])
    w1e_c = 0.5 * (wu[jj - 1, ip1] + wu[jj, ip1])
    w1w_c = 0.5 * (wu[jj - 1, ii] + wu[jj, ii])

    add(r, disc.nu + vid[jj + 1, ii], half_h * w2n_c)
    add(r, disc.nu + vid[jj - 1, ii], -half_h * w2s_c)
    add(r, r, half_h * (w2n_c - w2s_c) + half_h * (w1e_c - w1w_c))
    add(r, disc.nu + vid[jj, ip1], half_h * w1e_c)
    add(r, disc.nu + vid[jj, im1], -half_h * w1w_c)

    n = disc.nu + disc.nv
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )


def _gauge_vector(prob: SaddleProblem, disc: _Disc) -> np.ndarray:
    grid = prob.grid
    kind, arg = prob.gauge
    g = np.zeros(disc.npr)
    pid = disc.p_ids.reshape(grid.ny, grid.nx)
    if kind == "pin":
        if arg is None:
            jj, ii = np.nonzero(grid.fluid)
            j, i = int(jj[0]), int(ii[0])
        else:
            j, i = arg
        if not grid.fluid[j, i]:
            raise SingularSystem("pressure pin lies in a solid cell")
        g[pid[j, i]] = 1.0
    elif kind == "cell_mean":
        mask = np.asarray(arg, dtype=bool) & grid.fluid
        if not mask.any():
            raise SingularSystem("gauge mask contains no fluid cells")
        g[pid[mask]] = grid.h**2
    else:
        raise SingularSystem(f"unknown gauge {kind!r}")
    return g


def _rhs_vector(prob: SaddleProblem, disc: _Disc) -> np.ndarray:
    grid = prob.grid
    h = grid.h
    b = np.zeros(disc.nu + disc.nv + disc.npr + 1)
    if prob.forcing_u is not None:
        bu = (h * h) * prob.forcing_u[grid.u_active]
        b[: disc.nu] = bu
    if prob.forcing_v is not None:
        bv = (h * h) * prob.forcing_v[grid.v_active]
        b[disc.nu : disc.nu + disc.nv] = bv
    if prob.jump_row is not None and prob.sigma_jump != 0.0:
        # weak datum g = -mu*sigma, split over the two adjacent u-rows
        g = -prob.viscosity * prob.sigma_jump
        uid = disc.u_ids.reshape(grid.ny, grid.nx)
        for j in (prob.jump_row - 1, prob.jump_row):
            ids = uid[j, grid.u_active[j, :]]
            b[ids] += 0.5 * g * h
    return b


def assemble_system(prob: SaddleProblem, w: StaggeredField | None = None):
    """Assemble the gauged saddle system; returns (K csc, b, disc)."""
    grid = prob.grid
    disc = _disc(grid)
    if disc.nu + disc.nv == 0 or disc.npr == 0:
        raise SingularSystem("no fluid degrees of freedom")

    mu = prob.viscosity
    A = sp.block_diag(
        (
            _laplace_block(disc.u_edges, disc.u_ids, disc.nu, mu),
            _laplace_block(disc.v_edges, disc.v_ids, disc.nv, mu),
        )
    ).tocoo()
    if w is not None:
        A = (A + _convection_matrix(grid, disc, w)).tocoo()
    M = _pressure_gradient(grid, disc)
    G = _gauge_vector(prob, disc)
    Gcol = sp.coo_matrix(
        (G, (np.arange(disc.npr), np.zeros(disc.npr, dtype=np.int64))),
        shape=(disc.npr, 1),
    )
    K = sp.bmat(
        [
            [A, M, None],
            [M.T, None, Gcol],
            [None, Gcol.T, None],
        ],
        format="csc",
    )
    b = _rhs_vector(prob, disc)
    return K, b, disc


def _unpack(x: np.ndarray, grid: StaggeredGrid, disc: _Disc) -> StaggeredField:
    fld = StaggeredField.zeros(grid)
    fld.u[grid.u_active] = x[: disc.nu]
    fld.v[grid.v_active] = x[disc.nu : disc.nu + disc.nv]
    fld.p[grid.fluid] = x[disc.nu + disc.nv : disc.nu + disc.nv + disc.npr]
    return fld


def _pack(fld: StaggeredField, disc: _Disc) -> np.ndarray:
    grid = fld.grid
    x = np.zeros(disc.nu + disc.nv + disc.npr + 1)
    x[: disc.nu] = fld.u[grid.u_active]
    x[disc.nu : disc.nu + disc.nv] = fld.v[grid.v_active]
    x[disc.nu + disc.nv : -1] = fld.p[grid.fluid]
    return x


# ---------------------------------------------------------------------------
# operator application (matrix-free, mirrors the assembly exactly)
# ---------------------------------------------------------------------------

def _apply_laplace(edges: _Edges, vals_flat: np.ndarray, mu: float) -> np.ndarray:
    """mu * (Gram-matrix action) on a full component array (flattened)."""
    out = np.zeros_like(vals_flat)
    va = vals_flat[edges.a]
    vb = np.where(edges.b >= 0, vals_flat[np.maximum(edges.b, 0)], 0.0)
    d = mu * edges.coef * (va - vb)
    np.add.at(out, edges.a, d)
    has_b = edges.b >= 0
    np.add.at(out, edges.b[has_b], -d[has_b])
    return out


def _apply_convection(grid: StaggeredGrid, w: StaggeredField, f: StaggeredField):
    """h^2-scaled divergence-form convection of f by w, as full arrays."""
    h = grid.h
    wu, wv, fu, fv = w.u, w.v, f.u, f.v

    # u component
    w1c = 0.5 * (wu + np.roll(wu, -1, axis=1))          # at cell centers
    f1c = 0.5 * (fu + np.roll(fu, -1, axis=1))
    flux_x = w1c * f1c                                   # (ny, nx) at centers
    w2cor = 0.5 * (np.roll(wv, 1, axis=1) + wv)          # at corners (ny+1, nx)
    fcor = np.zeros_like(wv)
    fcor[1:-1, :] = 0.5 * (fu[:-1, :] + fu[1:, :])       # u at interior corners
    flux_y = w2cor * fcor                                # wall rows stay zero
    conv_u = h * (flux_x - np.roll(flux_x, 1, axis=1)) + h * (flux_y[1:, :] - flux_y[:-1, :])

    # v component
    w2c = 0.5 * (wv[:-1, :] + wv[1:, :])                 # at cell centers
    f2c = 0.5 * (fv[:-1, :] + fv[1:, :])
    flux_yv = w2c * f2c                                  # (ny, nx)
    w1cor = np.zeros_like(wv)
    w1cor[1:-1, :] = 0.5 * (wu[:-1, :] + wu[1:, :])      # at corners
    fvcor = 0.5 * (np.roll(fv, 1, axis=1) + fv)
    flux_xv = w1cor * fvcor                              # (ny+1, nx)
    conv_v = np.zeros_like(fv)
    conv_v[1:-1, :] = h * (flux_yv[1:, :] - flux_yv[:-1, :]) + h * (
        np.roll(flux_xv, -1, axis=1)[1:-1, :] - flux_xv[1:-1, :]
    )

    conv_u = np.where(grid.u_active, conv_u, 0.0)
    conv_v = np.where(grid.v_active, conv_v, 0.0)
    return conv_u, conv_v


def momentum_residual(prob: SaddleProblem, fld: StaggeredField) -> tuple:
    """Nonlinear momentum/continuity residual arrays (h^2-scaled rows).

    Returns (ru, rv, rc, rhs_norm): residual on active u/v faces, continuity
    residual per fluid cell (h^2 * div), and the 2-norm of the assembled RHS
    for relative scaling.
    """
    grid = prob.grid
    disc = _disc(grid)
    h = grid.h
    mu = prob.viscosity

    ru = _apply_laplace(disc.u_edges, fld.u.ravel(), mu).reshape(grid.ny, grid.nx)
    rv = _apply_laplace(disc.v_edges, fld.v.ravel(), mu).reshape(grid.ny + 1, grid.nx)
    if prob.convective:
        cu, cv = _apply_convection(grid, fld, fld)
        ru += cu
        rv += cv
    # pressure gradient, h^2-scaled
    ru += h * (fld.p - np.roll(fld.p, 1, axis=1))
    gp = np.zeros_like(rv)
    gp[1:-1, :] = h * (fld.p[1:, :] - fld.p[:-1, :])
    rv += gp

    b = _rhs_vector(prob, disc)
    bu = np.zeros_like(ru)
    bu[grid.u_active] = b[: disc.nu]
    bv = np.zeros_like(rv)
    bv[grid.v_active] = b[disc.nu : disc.nu + disc.nv]
    ru = np.where(grid.u_active, ru - bu, 0.0)
    rv = np.where(grid.v_active, rv - bv, 0.0)

    div = discrete_divergence(fld)
    rc = (h * h) * div
    rhs_norm = float(np.linalg.norm(b))
    return ru, rv, rc, rhs_norm


def nonlinear_residual_norm(prob: SaddleProblem, fld: StaggeredField) -> float:
    """Relative 2-norm of the full residual (absolute when the RHS is zero)."""
    ru, rv, rc, rhs_norm = momentum_residual(prob, fld)
    r = math.sqrt(
        float(np.sum(ru**2)) + float(np.sum(rv**2)) + float(np.sum(rc**2))
    )
    return r / rhs_norm if rhs_norm > 0.0 else r


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

class _BlockSolver:
    """Pressure-Schur solve of one linearized saddle system.

    The velocity block is component-diagonal (the Laplacian never couples u
    and v, and Picard convection advects each component separately), so both
    blocks get their own sparse LU.  The pressure solves the Schur system
    ``M^T A^{-1} M p = M^T A^{-1} b - b_c`` by a Krylov iteration; on the MAC
    grid that operator is spectrally equivalent to a mass matrix, so the
    iteration count is grid-independent.  ``M 1 = 0`` on these domains (x
    periodic, impermeable walls), so the constant-pressure kernel never
    enters: right-hand sides are automatically compatible and the gauge is
    applied as a final shift.
    """

    def __init__(self, prob: SaddleProblem, w: StaggeredField | None = None):
        grid = prob.grid
        disc = _disc(grid)
        if disc.nu + disc.nv == 0 or disc.npr == 0:
            raise SingularSystem("no fluid degrees of freedom")
        self.grid = grid
        self.disc = disc
        mu = prob.viscosity
        Auu = _laplace_block(disc.u_edges, disc.u_ids, disc.nu, mu).tocsc()
        Avv = _laplace_block(disc.v_edges, disc.v_ids, disc.nv, mu).tocsc()
        if w is not None:
            N = _convection_matrix(grid, disc, w).tocsr()
            Auu = (Auu + N[: disc.nu, : disc.nu]).tocsc()
            Avv = (Avv + N[disc.nu :, disc.nu :]).tocsc()
        self.Auu, self.Avv = Auu, Avv
        try:
            self.lu_u = splu(Auu)
            self.lu_v = splu(Avv)
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
        self.Mu, self.Mv = _pressure_gradient_split(grid, disc)
        # pressure-Poisson preconditioner M^T diag(A)^{-1} M: spectrally
        # matches the Schur complement's troublesome long-channel modes,
        # which a mass-matrix preconditioner misses on thin domains.  The
        # constant null vector is pinned; that only perturbs the
        # preconditioner, not the system.
        inv_diag = np.concatenate(
            [1.0 / Auu.diagonal(), 1.0 / Avv.diagonal()]
        )
        M_all = sp.vstack([self.Mu, self.Mv]).tocsr()
        P = (M_all.T @ sp.diags(inv_diag) @ M_all).tolil()
        P[0, 0] += P.diagonal().max()
        try:
            self._lu_p = splu(P.tocsc())
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc

    def _schur_matvec(self, p: np.ndarray) -> np.ndarray:
        return self.Mu.T @ self.lu_u.solve(self.Mu @ p) + self.Mv.T @ self.lu_v.solve(
            self.Mv @ p
        )

    def solve(self, bu, bv, bc, rtol: float = 1e-11, maxiter: int = 50, p0=None):
        """Solve A x + M p = (bu, bv), M^T x = bc; returns (xu, xv, p).

        A stalled Krylov iteration returns its best iterate; the refinement
        loop judges convergence on the full saddle residual.
        """
        rhs = self.Mu.T @ self.lu_u.solve(bu) + self.Mv.T @ self.lu_v.solve(bv) - bc
        rhs_scale = float(np.linalg.norm(rhs))
        if rhs_scale == 0.0:
            p = np.zeros(self.disc.npr)
        else:
            S = sp.linalg.LinearOperator(
                (self.disc.npr, self.disc.npr), matvec=self._schur_matvec
            )
            M = sp.linalg.LinearOperator(
                (self.disc.npr, self.disc.npr), matvec=self._lu_p.solve
            )
            p, _ = sp.linalg.lgmres(
                S, rhs, M=M, x0=p0, rtol=rtol, atol=0.0, maxiter=maxiter, inner_m=30
            )
            if not np.all(np.isfinite(p)):
                raise NonConvergence("Schur iteration produced non-finite values")
        xu = self.lu_u.solve(bu - self.Mu @ p)
        xv = self.lu_v.solve(bv - self.Mv @ p)
        return xu, xv, p

    def solve_refined(
        self, b: np.ndarray, target: float = 1e-12, rounds: int = 5, p0=None
    ):
        """Solve with iterative refinement on the full saddle residual.

        Each round only asks the Schur iteration for the reduction still
        missing (driving a tiny correction to a tight relative tolerance is
        both wasteful and floor-limited).  ``p0`` warm-starts the pressure
        (Picard steps change the system only by the convection update, so
        the previous pressure is an excellent initial guess).
        """
        disc = self.disc
        bu = b[: disc.nu]
        bv = b[disc.nu : disc.nu + disc.nv]
        bc = b[disc.nu + disc.nv : disc.nu + disc.nv + disc.npr]
        bnorm = float(np.linalg.norm(b))
        scale = bnorm if bnorm > 0 else 1.0

        xu = np.zeros(disc.nu)
        xv = np.zeros(disc.nv)
        p = np.zeros(disc.npr)
        guess = p0
        rel = math.inf
        for _ in range(rounds):
            ru = bu - (self.Auu @ xu + self.Mu @ p)
            rv = bv - (self.Avv @ xv + self.Mv @ p)
            rc = bc - (self.Mu.T @ xu + self.Mv.T @ xv)
            new_rel = math.sqrt(
                float(np.sum(ru**2) + np.sum(rv**2) + np.sum(rc**2))
            ) / scale
            if not np.isfinite(new_rel):
                raise NonConvergence("linear solve produced non-finite values")
            if new_rel <= target or new_rel >= 0.5 * rel:
                rel = min(rel, new_rel)
                break
            rel = new_rel
            rtol = min(max(0.1 * target / rel, 1e-11), 1e-2)
            du, dv, dp = self.solve(ru, rv, rc, rtol=rtol, p0=guess)
            guess = None  # warm start only makes sense in the first round
            xu += du
            xv += dv
            p += dp
        ru = bu - (self.Auu @ xu + self.Mu @ p)
        rv = bv - (self.Avv @ xv + self.Mv @ p)
        rc = bc - (self.Mu.T @ xu + self.Mv.T @ xv)
        rel = math.sqrt(float(np.sum(ru**2) + np.sum(rv**2) + np.sum(rc**2))) / scale
        return xu, xv, p, rel


def _apply_gauge(fld: StaggeredField, gauge: tuple) -> None:
    """Shift the pressure so the gauge holds exactly (kernel is constants)."""
    grid = fld.grid
    kind, arg = gauge
    if kind == "pin":
        if arg is None:
            jj, ii = np.nonzero(grid.fluid)
            j, i = int(jj[0]), int(ii[0])
        else:
            j, i = arg
        if not grid.fluid[j, i]:
            raise SingularSystem("pressure pin lies in a solid cell")
        shift = fld.p[j, i]
    elif kind == "cell_mean":
        mask = np.asarray(arg, dtype=bool) & grid.fluid
        if not mask.any():
            raise SingularSystem("gauge mask contains no fluid cells")
        shift = float(fld.p[mask].mean())
    else:
        raise SingularSystem(f"unknown gauge {kind!r}")
    fld.p[grid.fluid] -= shift


def _solve_full_direct(prob: SaddleProblem, w: StaggeredField | None):
    """Fallback: factor the whole gauged saddle matrix directly."""
    K, b, disc = assemble_system(prob, w=w)
    try:
        lu = splu(K, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    x = lu.solve(b)
    x += lu.solve(b - K @ x)
    r = b - K @ x
    bnorm = float(np.linalg.norm(b))
    rel = float(np.linalg.norm(r)) / bnorm if bnorm > 0 else float(np.linalg.norm(r))
    return _unpack(x, prob.grid, disc), rel


def _solve_linearized(
    prob: SaddleProblem,
    w: StaggeredField | None,
    warm: StaggeredField | None = None,
) -> tuple[StaggeredField, float]:
    grid = prob.grid
    disc = _disc(grid)
    b = _rhs_vector(prob, disc)
    p0 = warm.p[grid.fluid] if warm is not None else None
    try:
        solver = _BlockSolver(prob, w=w)
        xu, xv, p, rel = solver.solve_refined(b[:-1], p0=p0)
        if rel > _REL_RESIDUAL_LIMIT:
            raise NonConvergence(f"refined residual {rel:.2e}")
        fld = StaggeredField.zeros(grid)
        fld.u[grid.u_active] = xu
        fld.v[grid.v_active] = xv
        fld.p[grid.fluid] = p
    except NonConvergence:
        # the dense fallback is only economic on small systems
        if len(b) > 80_000:
            raise
        fld, rel = _solve_full_direct(prob, w)
    _apply_gauge(fld, prob.gauge)
    return fld, rel


def solve_stokes(prob: SaddleProblem) -> tuple[StaggeredField, SolveStats]:
    """Solve the Stokes saddle system (block LU + pressure Schur iteration)."""
    fld, rel = _solve_linearized(prob, w=None)
    div_max = float(np.max(np.abs(discrete_divergence(fld))))
    if rel > _REL_RESIDUAL_LIMIT:
        raise NonConvergence(f"linear residual {rel:.3e} above {_REL_RESIDUAL_LIMIT}")
    return fld, SolveStats(linear_residual=rel, divergence_max=div_max)


def solve_navier_stokes(
    prob: SaddleProblem,
    tol: float = 1e-10,
    max_iter: int = 200,
    damping: float = 1.0,
) -> tuple[StaggeredField, SolveStats]:
    """Picard iteration for the stationary Navier-Stokes problem.

    The Stokes solution of the same data is the initial iterate; each step
    solves the saddle system with convection frozen at the previous iterate.
    Damping starts at ``damping`` and halves whenever the residual grows.
    """
    if not (0.0 < damping <= 1.0):
        raise ValueError("damping must be in (0, 1]")
    stokes_prob = replace(prob, convective=False)
    fld, stats0 = solve_stokes(stokes_prob)
    prob = replace(prob, convective=True)

    res = nonlinear_residual_norm(prob, fld)
    history = [res]
    if res <= tol:
        return fld, SolveStats(
            linear_residual=stats0.linear_residual,
            divergence_max=stats0.divergence_max,
            picard_iterations=1,
            picard_history=tuple(history),
        )

    theta = damping
    growth_streak = 0
    lin_res = stats0.linear_residual
    for iteration in range(1, max_iter + 1):
        new_fld, lin_res = _solve_linearized(prob, w=fld, warm=fld)
        if theta < 1.0:
            new_fld = fld.axpy(theta, new_fld.axpy(-1.0, fld))
        new_res = nonlinear_residual_norm(prob, new_fld)
        history.append(new_res)
        if new_res > res:
            growth_streak += 1
            theta = max(theta / 2.0, 1.0 / 64.0)
            if growth_streak >= 5:
                raise PicardDiverged(
                    f"residual grew {growth_streak} consecutive iterations "
                    f"(last {new_res:.3e})"
                )
        else:
            growth_streak = 0
        fld, res = new_fld, new_res
        if res <= tol:
            div_max = float(np.max(np.abs(discrete_divergence(fld))))
            return fld, SolveStats(
                linear_residual=lin_res,
                divergence_max=div_max,
                picard_iterations=iteration + 1,
                picard_history=tuple(history),
            )
    raise MaxIterExceeded(
        f"Picard did not reach {tol:.1e} in {max_iter} iterations "
        f"(residual {res:.3e})"
    )


# ---------------------------------------------------------------------------
# derived quantities
# ---------------------------------------------------------------------------

def discrete_divergence(fld: StaggeredField) -> np.ndarray:
    """Cell-centered discrete divergence (zero reported at solid cells)."""
    grid = fld.grid
    h = grid.h
    div = (np.roll(fld.u, -1, axis=1) - fld.u) / h + (fld.v[1:, :] - fld.v[:-1, :]) / h
    return np.where(grid.fluid, div, 0.0)


@dataclass
class Norms:
    velocity: float
    gradient: float
    trace: float


def _region_cell_mask(grid: StaggeredGrid, region: str) -> np.ndarray:
    if region == "omega":
        return grid.fluid
    yc = grid.y_cell(np.arange(grid.ny))[:, None]
    if region == "omega1":
        return grid.fluid & (yc > 0.0)
    if region == "omega2":
        return grid.fluid & (yc < 0.0)
    raise UnknownRegion(f"unknown region {region!r}")


def trace_values(fld: StaggeredField, line_row: int) -> tuple[np.ndarray, np.ndarray]:
    """(u, v) sampled on the horizontal grid line ``line_row`` (midpoint u)."""
    u_line = 0.5 * (fld.u[line_row - 1, :] + fld.u[line_row, :])
    return u_line, fld.v[line_row, :].copy()


def norms(fld: StaggeredField, region: str) -> Norms:
    """Midpoint-quadrature L2 norms over a region plus the interface trace.

    Gradients use the assembly's edge set: centered differences interior,
    one-sided half-edges at no-slip walls, zero values at frozen faces.
    Edges with midpoint exactly on y = 0 count toward the porous side.
    """
    grid = fld.grid
    h = grid.h
    if region == "sigma":
        j0 = grid.interface_row
        if j0 is None:
            raise UnknownRegion("grid has no interface line y = 0")
        u_line, v_line = trace_values(fld, j0)
        tr = math.sqrt(h * float(np.sum(u_line**2 + v_line**2)))
        return Norms(velocity=tr, gradient=0.0, trace=tr)

    mask = _region_cell_mask(grid, region)
    uc = 0.5 * (fld.u + np.roll(fld.u, -1, axis=1))
    vc = 0.5 * (fld.v[:-1, :] + fld.v[1:, :])
    vel = math.sqrt(h * h * float(np.sum((uc**2 + vc**2)[mask])))

    disc = _disc(grid)
    grad2 = 0.0
    for edges, arr in ((disc.u_edges, fld.u), (disc.v_edges, fld.v)):
        flat = arr.ravel()
        va = flat[edges.a]
        vb = np.where(edges.b >= 0, flat[np.maximum(edges.b, 0)], 0.0)
        e2 = edges.coef * (va - vb) ** 2
        if region == "omega1":
            e2 = e2[edges.y_mid > 0.0]
        elif region == "omega2":
            e2 = e2[edges.y_mid <= 0.0]
        grad2 += float(np.sum(e2))
    grad = math.sqrt(grad2)

    tr = 0.0
    if grid.interface_row is not None:
        u_line, v_line = trace_values(fld, grid.interface_row)
        tr = math.sqrt(h * float(np.sum(u_line**2 + v_line**2)))
    return Norms(velocity=vel, gradient=grad, trace=tr)


def one_sided_slip(fld: StaggeredField, line_row: int) -> np.ndarray:
    """u on the line, extrapolated quadratically from the three rows above.

    Exact for quadratic profiles, so a discrete Poiseuille trace returns a
    clean zero at the interface.
    """
    u1 = fld.u[line_row, :]
    u2 = fld.u[line_row + 1, :]
    u3 = fld.u[line_row + 2, :]
    return (15.0 * u1 - 10.0 * u2 + 3.0 * u3) / 8.0


def one_sided_shear(fld: StaggeredField, line_row: int) -> np.ndarray:
    """du/dy on the line from the three rows above (2nd order, exact quadratics)."""
    h = fld.grid.h
    u1 = fld.u[line_row, :]
    u2 = fld.u[line_row + 1, :]
    u3 = fld.u[line_row + 2, :]
    return (-2.0 * u1 + 3.0 * u2 - u3) / h
