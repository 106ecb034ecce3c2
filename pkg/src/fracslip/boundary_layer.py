"""Interface boundary layers on the truncated slab.

First layer: Stokes flow driven by a unit tangential-stress jump across the
interface line, no-slip on the inclusion copies, periodic in y1.  Its
velocity stabilizes exponentially to ``(C1, 0)`` above the interface (C1 < 0)
and to zero below; the pressure stabilizes to constants on both sides and is
normalized to vanish below.

Second layer: Stokes flow forced by the convective self-interaction
``(beta . grad) beta`` of the first layer, no jump.  Its far-field constant
``C11`` and interface averages feed the quadratic term of the slip law.

Discrete structure exploited here (exact on the MAC grid, not just
asymptotic): period averages of the horizontal velocity are constant in
height above the interface, period averages of the vertical velocity vanish
at every height, and the two-row interface mean of the first layer equals
``-||grad beta||^2`` by the energy identity of the jump forcing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDecayWindow, TruncationSuspect
from .geometry import BLSlab, build_bl_slab
from .saddle import (
    SaddleProblem,
    SolveStats,
    StaggeredField,
    _apply_convection,
    norms,
    one_sided_shear,
    one_sided_slip,
    solve_stokes,
    trace_values,
)

#: relative shift allowed in extracted constants when the truncation doubles
TRUNCATION_RTOL = 1e-5

#: decay-fit window margins (in units of the unit period), measured from the
#: interface and from the domain ends
_FIT_ABOVE_LO = 1.0
_FIT_ABOVE_HI_MARGIN = 0.25
_FIT_BELOW_LO = 0.5
_FIT_BELOW_HI_MARGIN = 0.5


@dataclass(frozen=True)
class DecayFit:
    rate: float
    fit_residual: float
    n_heights: int
    window: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "fit_residual": self.fit_residual,
            "n_heights": self.n_heights,
            "window": list(self.window),
        }


@dataclass(eq=False)
class BoundaryLayerResult:
    """One solved layer with its extracted constants and diagnostics."""

    slab: BLSlab
    layer: int  # 1 or 2
    field: StaggeredField
    c1: float              # far-field velocity constant (C1, or C11 for layer 2)
    c_omega: float         # far-field pressure constant (C_omega, or C_pi1)
    dual_trace: float      # two-row interface mean, pairs with the jump forcing
    grad_energy: float     # squared L2 norm of the velocity gradient
    slip_avg: float        # one-sided interface average of beta_1
    shear_avg: float       # one-sided interface average of d(beta_1)/dy2
    beta2_row_max: float   # max |period mean of beta_2| over heights
    decay_above: DecayFit
    decay_below: DecayFit
    decay_above_pressure: DecayFit
    stats: SolveStats
    truncation_shift: float | None = None

    @property
    def c11(self) -> float:
        return self.c1

    @property
    def c_pi1(self) -> float:
        return self.c_omega

    def constants_dict(self) -> dict:
        key = "c1" if self.layer == 1 else "c11"
        pkey = "c_omega" if self.layer == 1 else "c_pi1"
        return {
            key: self.c1,
            pkey: self.c_omega,
            "dual_trace": self.dual_trace,
            "grad_energy": self.grad_energy,
            "interface_slip_avg": self.slip_avg,
            "interface_shear_avg": self.shear_avg,
            "beta2_row_mean_max": self.beta2_row_max,
            "decay_above": self.decay_above.to_dict(),
            "decay_below": self.decay_below.to_dict(),
            "decay_above_pressure": self.decay_above_pressure.to_dict(),
        }


def _extraction_row(slab: BLSlab) -> int:
    """u-row closest to half a period below the top truncation."""
    g = slab.grid
    target = g.y_top - 0.5
    j = int(round((target - g.y0) / g.h - 0.5))
    return min(max(j, 0), g.ny - 1)


def _normalize_pressure(fld: StaggeredField, slab: BLSlab) -> None:
    """Shift the pressure so its deep-porous fluid mean is zero."""
    g = fld.grid
    yc = g.y_cell(np.arange(g.ny))
    deep = (yc < -(slab.rows_below - 1.0))[:, None] & g.fluid
    fld.p[g.fluid] -= float(fld.p[deep].mean())


def _interface_pair_mean(fld: StaggeredField, j0: int) -> float:
    return 0.5 * (float(fld.u[j0 - 1, :].mean()) + float(fld.u[j0, :].mean()))


def _layer_result(
    slab: BLSlab,
    layer: int,
    fld: StaggeredField,
    stats: SolveStats,
) -> BoundaryLayerResult:
    g = slab.grid
    j0 = slab.interface_row
    _normalize_pressure(fld, slab)

    jex = _extraction_row(slab)
    c_vel = float(fld.u[jex, :].mean())
    # pressure rows: use the cell row holding the extraction height
    c_pres = float(fld.p[jex, :].mean())

    result = BoundaryLayerResult(
        slab=slab,
        layer=layer,
        field=fld,
        c1=c_vel,
        c_omega=c_pres,
        dual_trace=_interface_pair_mean(fld, j0),
        grad_energy=norms(fld, "omega").gradient ** 2,
        slip_avg=float(one_sided_slip(fld, j0).mean()),
        shear_avg=float(one_sided_shear(fld, j0).mean()),
        beta2_row_max=float(np.abs(fld.v.mean(axis=1)).max()),
        decay_above=fit_decay_field(fld, slab, "above", c_vel, "velocity"),
        decay_below=fit_decay_field(fld, slab, "below", 0.0, "velocity"),
        decay_above_pressure=fit_decay_field(fld, slab, "above", c_pres, "pressure"),
        stats=stats,
    )
    return result


def solve_first_layer(slab: BLSlab, verify_truncation: bool = False) -> BoundaryLayerResult:
    """Solve the first interface layer (unit tangential-stress jump)."""
    prob = SaddleProblem(
        grid=slab.grid,
        viscosity=1.0,
        jump_row=slab.interface_row,
        sigma_jump=1.0,
        gauge=("pin", None),
    )
    fld, stats = solve_stokes(prob)
    result = _layer_result(slab, 1, fld, stats)
    if verify_truncation:
        taller = build_bl_slab(
            slab.cell, slab.rows_below, 2.0 * slab.height_above, slab.cells_per_period
        )
        ref = solve_first_layer(taller)
        shift = abs(ref.c1 - result.c1) / max(abs(ref.c1), 1e-30)
        result.truncation_shift = shift
        if shift > TRUNCATION_RTOL:
            raise TruncationSuspect(
                f"C1 moved {shift:.2e} relative when the top truncation doubled"
            )
    return result


def second_layer_forcing(first: BoundaryLayerResult) -> tuple[np.ndarray, np.ndarray]:
    """(beta . grad) beta per unit volume on the slab grid (staggered)."""
    g = first.slab.grid
    conv_u, conv_v = _apply_convection(g, first.field, first.field)
    h2 = g.h * g.h
    return conv_u / h2, conv_v / h2


def solve_second_layer(
    slab: BLSlab,
    first: BoundaryLayerResult,
    verify_truncation: bool = False,
) -> BoundaryLayerResult:
    """Solve the second layer, forced by the first layer's self-advection."""
    if first.slab is not slab and first.slab.grid.ny != slab.grid.ny:
        raise ValueError("first layer was solved on a different slab")
    fu, fv = second_layer_forcing(first)
    prob = SaddleProblem(
        grid=slab.grid,
        viscosity=1.0,
        forcing_u=fu,
        forcing_v=fv,
        gauge=("pin", None),
    )
    fld, stats = solve_stokes(prob)
    result = _layer_result(slab, 2, fld, stats)
    if verify_truncation:
        taller = build_bl_slab(
            slab.cell, slab.rows_below, 2.0 * slab.height_above, slab.cells_per_period
        )
        first_tall = solve_first_layer(taller)
        ref = solve_second_layer(taller, first_tall)
        shift = abs(ref.c1 - result.c1) / max(abs(ref.c1), 1e-30)
        result.truncation_shift = shift
        if shift > TRUNCATION_RTOL:
            raise TruncationSuspect(
                f"C11 moved {shift:.2e} relative when the top truncation doubled"
            )
    return result


# ---------------------------------------------------------------------------
# decay fits
# ---------------------------------------------------------------------------

def fit_decay_field(
    fld: StaggeredField,
    slab: BLSlab,
    side: str,
    constant: float,
    quantity: str = "velocity",
    window: tuple[float, float] | None = None,
) -> DecayFit:
    """Least-squares exponential decay rate of the deviation from ``constant``.

    The deviation is the period-RMS of the field minus its stabilization
    value, sampled at horizontal grid lines (velocity) or cell rows
    (pressure).  The window keeps clear of the interface transient and the
    artificial truncation; heights at the solver noise floor are dropped.
    """
    g = fld.grid
    j0 = slab.interface_row
    heights = []
    devs = []

    if quantity == "velocity":
        if side == "above":
            lo, hi = window or (_FIT_ABOVE_LO, slab.height_above - _FIT_ABOVE_HI_MARGIN)
            rows = range(j0 + 1, g.ny)
        elif side == "below":
            lo, hi = window or (_FIT_BELOW_LO, slab.rows_below - _FIT_BELOW_HI_MARGIN)
            rows = range(1, j0)
        else:
            raise ValueError(f"unknown side {side!r}")
        for j in rows:
            y = g.y_line(j)
            dist = y if side == "above" else -y
            if dist < lo or dist > hi:
                continue
            valid = g.u_active[j - 1, :] & g.u_active[j, :] & g.v_active[j, :]
            if not valid.any():
                continue
            u_line, v_line = trace_values(fld, j)
            d2 = (u_line[valid] - constant) ** 2 + v_line[valid] ** 2
            heights.append(dist)
            devs.append(math.sqrt(float(np.mean(d2))))
    elif quantity == "pressure":
        if side != "above":
            raise ValueError("pressure decay is fitted above the interface only")
        lo, hi = window or (_FIT_ABOVE_LO, slab.height_above - _FIT_ABOVE_HI_MARGIN)
        for j in range(j0, g.ny):
            y = float(g.y_cell(j))
            if y < lo or y > hi:
                continue
            heights.append(y)
            devs.append(math.sqrt(float(np.mean((fld.p[j, :] - constant) ** 2))))
    else:
        raise ValueError(f"unknown quantity {quantity!r}")

    heights = np.asarray(heights)
    devs = np.asarray(devs)
    floor = max(1e-15, 1e-9 * float(devs.max(initial=0.0)))
    keep = devs > floor
    if keep.sum() < 10:
        raise InsufficientDecayWindow(
            f"only {int(keep.sum())} usable heights on side {side!r} "
            f"(window [{lo}, {hi}], floor {floor:.1e})"
        )
    x = heights[keep]
    logd = np.log(devs[keep])
    A = np.vstack([x, np.ones(x.size)]).T
    coef, res, _, _ = np.linalg.lstsq(A, logd, rcond=None)
    fit_residual = math.sqrt(float(res[0]) / x.size) if res.size else 0.0
    return DecayFit(
        rate=float(-coef[0]),
        fit_residual=fit_residual,
        n_heights=int(keep.sum()),
        window=(float(x.min()), float(x.max())),
    )


def fit_decay(result: BoundaryLayerResult, side: str, quantity: str = "velocity") -> DecayFit:
    """Re-fit a decay rate of a solved layer (see fit_decay_field)."""
    constant = 0.0
    if side == "above":
        constant = result.c1 if quantity == "velocity" else result.c_omega
    return fit_decay_field(result.field, result.slab, side, constant, quantity)


def constants_payload(bl1: BoundaryLayerResult, bl2: BoundaryLayerResult | None) -> dict:
    """JSON-ready constants block for the cell-problem output file."""
    slab = bl1.slab
    payload = {
        "grid": {
            "cells_per_period": slab.cells_per_period,
            "rows_below": slab.rows_below,
            "height_above": slab.height_above,
        },
        "first_layer": bl1.constants_dict(),
    }
    if bl2 is not None:
        payload["second_layer"] = bl2.constants_dict()
    return payload
