"""Periodic porous geometry and staggered grids.

Builds the three discrete domains the solvers run on:

* the unit cell ``(0,1)^2`` with a solid inclusion strictly inside,
* the resolved domain ``(0,1) x (-1, H)`` where ``H`` is the fracture height
  ``epsilon**delta`` snapped to the grid, with epsilon-periodic inclusion
  copies below the interface line ``y = 0``,
* the truncated boundary-layer slab ``(0,1) x (-rows_below, height_above)``
  with one inclusion copy per unit row below the interface.

All grids are uniform MAC staggered grids, periodic in x:

    p[j, i]  cell centers      x=(i+0.5)h, y=y0+(j+0.5)h   shape (ny, nx)
    u[j, i]  vertical faces    x=i*h,      y=y0+(j+0.5)h   shape (ny, nx)
    v[j, i]  horizontal faces  x=(i+0.5)h, y=y0+j*h        shape (ny+1, nx)

u has nx columns because column 0 is the periodic image of column nx.  The
solid geometry is stair-cased: a cell is solid iff its center lies inside the
inclusion level set.  Velocity faces touching a solid cell are frozen to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import (
    DisconnectedFluid,
    GridMismatch,
    ShapeTouchesBoundary,
    UnderResolvedFracture,
)

#: minimum clearance between the inclusion and the unit-cell boundary
MIN_MARGIN = 0.02
#: minimum cells across the fracture strip
MIN_FRACTURE_CELLS = 8
#: minimum cells per pore period for the resolved domain
MIN_DOMAIN_CELLS_PER_PERIOD = 16
#: minimum cells per unit period for the boundary-layer slab
MIN_SLAB_CELLS_PER_PERIOD = 32


# ---------------------------------------------------------------------------
# unit cell
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnitCell:
    """Solid inclusion centered at (0.5, 0.5) of the unit cell.

    ``disc``: level set ``(x-.5)^2 + (y-.5)^2 <= radius^2``.
    ``superellipse``: ``|x'|/a ** p + |y'|/b ** p <= 1`` with ``p >= 2``,
    where (x', y') are the centered coordinates rotated by ``-angle``.  A
    nonzero angle removes the vertical mirror symmetry of the pore geometry;
    mirror-symmetric inclusions make every period-averaged second-layer
    quantity vanish and with it the quadratic term of the slip law.
    """

    kind: str = "disc"
    radius: float = 0.25
    half_width: float = 0.25
    half_height: float = 0.25
    exponent: float = 2.0
    angle: float = 0.0

    def contains(self, x, y):
        """True where (x, y) in cell coordinates lies inside the solid."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "disc":
            return (x - 0.5) ** 2 + (y - 0.5) ** 2 <= self.radius**2
        ca, sa = math.cos(self.angle), math.sin(self.angle)
        xr = ca * (x - 0.5) + sa * (y - 0.5)
        yr = -sa * (x - 0.5) + ca * (y - 0.5)
        p = self.exponent
        return (np.abs(xr) / self.half_width) ** p + (
            np.abs(yr) / self.half_height
        ) ** p <= 1.0

    def margin(self) -> float:
        """Clearance between the inclusion boundary and the cell boundary."""
        if self.kind == "disc":
            return 0.5 - self.radius
        # max boundary radius over a dense, deterministic angle sample
        phi = np.linspace(0.0, 2.0 * math.pi, 4096, endpoint=False)
        p = self.exponent
        r = (
            (np.abs(np.cos(phi)) / self.half_width) ** p
            + (np.abs(np.sin(phi)) / self.half_height) ** p
        ) ** (-1.0 / p)
        return 0.5 - float(r.max())

    def fluid_area_fraction(self) -> float:
        """Analytic fluid fraction of the unit cell."""
        if self.kind == "disc":
            return 1.0 - math.pi * self.radius**2
        p = self.exponent
        area = (
            4.0
            * self.half_width
            * self.half_height
            * math.gamma(1.0 + 1.0 / p) ** 2
            / math.gamma(1.0 + 2.0 / p)
        )
        return 1.0 - area

    def solid_mask(self, cells_per_period: int) -> np.ndarray:
        """Stair-case mask (c, c): True where the cell center is solid."""
        c = int(cells_per_period)
        centers = (np.arange(c) + 0.5) / c
        xg, yg = np.meshgrid(centers, centers, indexing="xy")
        return self.contains(xg, yg)  # [j, i] rows = y


def build_unit_cell(
    kind: str = "disc",
    radius: float = 0.25,
    half_width: float | None = None,
    half_height: float | None = None,
    exponent: float = 2.0,
    angle: float = 0.0,
    check_resolution: int = 64,
) -> UnitCell:
    """Validate and build a unit cell.

    Raises ShapeTouchesBoundary when the inclusion is degenerate or leaves a
    margin below MIN_MARGIN, and DisconnectedFluid when the fluid part of the
    stair-cased cell is not connected at ``check_resolution``.
    """
    if kind not in ("disc", "superellipse"):
        raise ValueError(f"unknown inclusion kind {kind!r}")
    if kind == "superellipse":
        if half_width is None or half_height is None:
            raise ValueError("superellipse needs half_width and half_height")
        if exponent < 2.0:
            raise ValueError("superellipse exponent must be >= 2")
        cell = UnitCell("superellipse", 0.0, half_width, half_height, exponent, angle)
        if min(half_width, half_height) <= 0.0:
            raise ShapeTouchesBoundary("degenerate inclusion: no solid part")
    else:
        cell = UnitCell("disc", radius)
        if radius <= 0.0:
            raise ShapeTouchesBoundary("degenerate inclusion: no solid part")
    if cell.margin() < MIN_MARGIN:
        raise ShapeTouchesBoundary(
            f"inclusion margin {cell.margin():.4f} below minimum {MIN_MARGIN}"
        )
    mask = cell.solid_mask(check_resolution)
    if not mask.any():
        raise ShapeTouchesBoundary(
            f"inclusion contains no cell center at resolution {check_resolution}"
        )
    if not _fluid_connected(~mask, periodic_x=True, periodic_y=True):
        raise DisconnectedFluid(
            f"fluid part disconnected at resolution {check_resolution}"
        )
    return cell


def _fluid_connected(fluid: np.ndarray, periodic_x: bool, periodic_y: bool = False) -> bool:
    """Flood-fill connectivity of True cells under 4-neighbor adjacency."""
    ny, nx = fluid.shape
    n_fluid = int(fluid.sum())
    if n_fluid == 0:
        return False
    ids = -np.ones((ny, nx), dtype=np.int64)
    ids[fluid] = np.arange(n_fluid)

    rows = []
    cols = []

    def link(a_mask, ida, idb):
        rows.append(ida[a_mask])
        cols.append(idb[a_mask])

    # horizontal neighbors
    a = fluid[:, :-1] & fluid[:, 1:]
    link(a, ids[:, :-1], ids[:, 1:])
    if periodic_x:
        a = fluid[:, -1] & fluid[:, 0]
        link(a, ids[:, -1], ids[:, 0])
    # vertical neighbors
    a = fluid[:-1, :] & fluid[1:, :]
    link(a, ids[:-1, :], ids[1:, :])
    if periodic_y:
        a = fluid[-1, :] & fluid[0, :]
        link(a, ids[-1, :], ids[0, :])

    if rows:
        r = np.concatenate([x.ravel() for x in rows])
        c = np.concatenate([x.ravel() for x in cols])
    else:
        r = np.empty(0, dtype=np.int64)
        c = np.empty(0, dtype=np.int64)
    graph = sp.coo_matrix(
        (np.ones(len(r)), (r, c)), shape=(n_fluid, n_fluid)
    )
    n_comp, _ = connected_components(graph, directed=False)
    return n_comp == 1


# ---------------------------------------------------------------------------
# staggered grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StaggeredGrid:
    """Uniform MAC grid on ``(0, nx*h) x (y0, y0 + ny*h)``, periodic in x."""

    nx: int
    ny: int
    h: float
    y0: float
    solid: np.ndarray  # (ny, nx) bool, True = solid cell
    top_bc: str = "noslip"  # "noslip" | "stress_free"

    def __post_init__(self):
        if self.solid.shape != (self.ny, self.nx):
            raise GridMismatch(
                f"solid mask shape {self.solid.shape} != {(self.ny, self.nx)}"
            )
        if self.top_bc not in ("noslip", "stress_free"):
            raise ValueError(f"unknown top_bc {self.top_bc!r}")
        self.solid.setflags(write=False)

    @cached_property
    def fluid(self) -> np.ndarray:
        return ~self.solid

    @cached_property
    def u_active(self) -> np.ndarray:
        """u face is a DOF iff both adjacent cells (periodic in x) are fluid."""
        return self.fluid & np.roll(self.fluid, 1, axis=1)

    @cached_property
    def v_active(self) -> np.ndarray:
        """v face is a DOF iff both adjacent cells are fluid; wall rows are frozen."""
        act = np.zeros((self.ny + 1, self.nx), dtype=bool)
        act[1:-1, :] = self.fluid[:-1, :] & self.fluid[1:, :]
        return act

    @property
    def width(self) -> float:
        return self.nx * self.h

    @property
    def height(self) -> float:
        return self.ny * self.h

    @property
    def y_top(self) -> float:
        return self.y0 + self.ny * self.h

    def y_cell(self, j):
        """y of cell/u rows (cell centers)."""
        return self.y0 + (np.asarray(j) + 0.5) * self.h

    def y_line(self, j):
        """y of v rows (grid lines)."""
        return self.y0 + np.asarray(j) * self.h

    @cached_property
    def interface_row(self) -> int | None:
        """v-row index of the line y = 0, when it is a grid line."""
        j = round(-self.y0 / self.h)
        if 0 <= j <= self.ny and abs(self.y0 + j * self.h) < 1e-12 * max(1.0, self.h):
            return j
        return None

    def cell_region(self) -> np.ndarray:
        """Per-cell region code: 1 = fracture (y>0), 2 = porous (y<0)."""
        yc = self.y_cell(np.arange(self.ny))
        return np.where(yc > 0.0, 1, 2)[:, None] * np.ones(self.nx, dtype=int)


# ---------------------------------------------------------------------------
# resolved domain
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridDomain:
    """Resolved epsilon-periodic domain ``(0,1) x (-1, H_snap)``."""

    cell: UnitCell
    n_periods: int  # 1/epsilon
    delta: float
    cells_per_period: int
    grid: StaggeredGrid = field(repr=False)
    fracture_height: float  # snapped to a grid multiple
    fracture_height_exact: float
    fracture_rows: int

    @property
    def epsilon(self) -> float:
        return 1.0 / self.n_periods

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def interface_row(self) -> int:
        return self.n_periods * self.cells_per_period


def _epsilon_periods(epsilon) -> int:
    """1/epsilon as an exact positive integer, else GridMismatch."""
    if isinstance(epsilon, Fraction):
        if epsilon.numerator != 1:
            raise GridMismatch(f"1/epsilon = {1 / epsilon} is not an integer")
        return epsilon.denominator
    n = 1.0 / float(epsilon)
    if abs(n - round(n)) > 1e-9 or round(n) < 1:
        raise GridMismatch(f"1/epsilon = {n} is not an integer")
    return int(round(n))


def build_grid_domain(
    cell: UnitCell,
    epsilon,
    delta: float,
    cells_per_period: int,
) -> GridDomain:
    """Build the resolved domain with the fracture height snapped to the grid."""
    n = _epsilon_periods(epsilon)
    c = int(cells_per_period)
    if c < MIN_DOMAIN_CELLS_PER_PERIOD:
        raise ValueError(
            f"cells_per_period {c} below minimum {MIN_DOMAIN_CELLS_PER_PERIOD}"
        )
    if not (0.0 < delta):
        raise ValueError("delta must be positive")
    h = 1.0 / (n * c)
    h_exact = (1.0 / n) ** delta
    rows_fracture = int(round(h_exact / h))
    if rows_fracture < MIN_FRACTURE_CELLS:
        raise UnderResolvedFracture(
            f"{rows_fracture} cells across the fracture, need >= {MIN_FRACTURE_CELLS}"
        )
    h_snap = rows_fracture * h

    ny_porous = n * c
    ny = ny_porous + rows_fracture
    nx = n * c
    solid = np.zeros((ny, nx), dtype=bool)
    # porous block: epsilon-periodic copies of the scaled inclusion.  Every
    # epsilon-cell of (0,1) x (-1,0) carries a copy: the inclusion is strictly
    # interior to its cell, so all copies are strictly inside the porous part.
    unit = cell.solid_mask(c)
    solid[:ny_porous, :] = np.tile(unit, (n, n))

    grid = StaggeredGrid(nx=nx, ny=ny, h=h, y0=-1.0, solid=solid, top_bc="noslip")
    if not _fluid_connected(grid.fluid, periodic_x=True):
        raise DisconnectedFluid("resolved domain fluid part is disconnected")
    return GridDomain(
        cell=cell,
        n_periods=n,
        delta=float(delta),
        cells_per_period=c,
        grid=grid,
        fracture_height=h_snap,
        fracture_height_exact=h_exact,
        fracture_rows=rows_fracture,
    )


def strip_domain(dom: GridDomain) -> GridDomain:
    """One epsilon-period column of ``dom`` (same rows, nx = cells_per_period).

    The data and geometry of the resolved problem are epsilon-periodic in x,
    so its solution is the periodic tiling of the strip solution; run_dns
    verifies that a posteriori on the full grid.
    """
    c = dom.cells_per_period
    g = dom.grid
    strip = StaggeredGrid(
        nx=c, ny=g.ny, h=g.h, y0=g.y0, solid=g.solid[:, :c].copy(), top_bc=g.top_bc
    )
    return GridDomain(
        cell=dom.cell,
        n_periods=dom.n_periods,
        delta=dom.delta,
        cells_per_period=c,
        grid=strip,
        fracture_height=dom.fracture_height,
        fracture_height_exact=dom.fracture_height_exact,
        fracture_rows=dom.fracture_rows,
    )


# ---------------------------------------------------------------------------
# boundary-layer slab
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BLSlab:
    """Truncated slab ``(0,1) x (-rows_below, height_above)``.

    Inclusion copies sit at rows k = 1..rows_below below the interface line
    y = 0.  The bottom is closed with no-slip after rows_below rows; the top
    with zero tangential stress and zero normal velocity.  Exponential
    stabilization of the layer solutions makes both truncations benign, which
    the truncation-independence checks confirm.
    """

    cell: UnitCell
    rows_below: int
    height_above: float  # snapped to a grid multiple
    cells_per_period: int
    grid: StaggeredGrid = field(repr=False)

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def interface_row(self) -> int:
        return self.rows_below * self.cells_per_period


def build_bl_slab(
    cell: UnitCell,
    rows_below: int = 5,
    height_above: float = 3.0,
    cells_per_period: int = 64,
) -> BLSlab:
    """Build the truncated boundary-layer slab."""
    if rows_below < 3:
        raise ValueError(f"rows_below {rows_below} below minimum 3")
    if height_above < 1.0:
        raise ValueError(f"height_above {height_above} below minimum 1")
    c = int(cells_per_period)
    if c < MIN_SLAB_CELLS_PER_PERIOD:
        raise ValueError(
            f"cells_per_period {c} below slab minimum {MIN_SLAB_CELLS_PER_PERIOD}"
        )
    rows_above = int(round(height_above * c))
    ny = rows_below * c + rows_above
    solid = np.zeros((ny, c), dtype=bool)
    unit = cell.solid_mask(c)
    solid[: rows_below * c, :] = np.tile(unit, (rows_below, 1))
    grid = StaggeredGrid(
        nx=c,
        ny=ny,
        h=1.0 / c,
        y0=-float(rows_below),
        solid=solid,
        top_bc="stress_free",
    )
    if not _fluid_connected(grid.fluid, periodic_x=True):
        raise DisconnectedFluid("slab fluid part is disconnected")
    return BLSlab(
        cell=cell,
        rows_below=int(rows_below),
        height_above=rows_above / c,
        cells_per_period=c,
        grid=grid,
    )


def geometry_key(cell: UnitCell) -> dict:
    """Canonical dict describing the inclusion, for hashing and sidecars."""
    if cell.kind == "disc":
        return {"kind": "disc", "radius": cell.radius}
    return {
        "kind": "superellipse",
        "half_width": cell.half_width,
        "half_height": cell.half_height,
        "exponent": cell.exponent,
        "angle": cell.angle,
    }


def cell_from_key(key: dict) -> UnitCell:
    """Rebuild a validated unit cell from its geometry_key dict."""
    kw = dict(key)
    kind = kw.pop("kind")
    return build_unit_cell(kind, **kw)
