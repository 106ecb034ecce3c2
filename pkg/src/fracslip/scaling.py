"""Scaling parameters, exponent hypotheses, and analytic/corrector fields.

The flow regime is parameterized by the pore scale ``epsilon``, the
fracture-width exponent ``delta`` (fracture height ``epsilon**delta``), the
inverse-Reynolds exponent ``gamma`` (viscosity ``epsilon**gamma``), and the
constant forcing ``F`` acting in the fracture only.  The admissible regime is

    (H1)  2*gamma < 3*delta
    (H2)  0 < delta < 1  and  0 < gamma < 3/2
    (H3)  4*delta < 2*gamma + 1

and the one-parameter family ``delta = 1 - 7*eta/12``, ``gamma = 3/2 - eta``
with ``0 < eta < 3/2`` satisfies all three.

The approximation hierarchy composed here, written with the interface shear
``S0 = F*H/(2*mu)`` of the no-slip Poiseuille flow (``H`` the snapped
fracture height, ``mu`` the viscosity):

    order 0:  v0  - eps*S0 * beta(x/eps)      + eps*S0 * C1 * (x2+/H) e1
    order 1:  ... + the same pair again with amplitude eps*T1,
              where T1 = eps*S0*C1/H is the counterflow shear left at the
              interface by the order-0 pair
    order 2:  ... - Q * beta1(x/eps) + Q * C11 * (x2+/H) e1,
              with Q = eps^3 * S0^2 / mu, cancelling the quadratic
              self-advection of the first-layer term

Counterflow terms use the positive part ``x2+`` so every corrector vanishes
in the porous bulk; boundary-layer fields are extended by zero below their
slab truncation and by their stabilization constants above it.

Sign note: the order-1 pair enters with amplitude ``+eps*T1``.  The sign is
fixed by the Green identity for the counterflow's interface stress jump and
is confirmed numerically by the error-decay hierarchy (the opposite sign
makes the order-1 error larger than order 0 instead of smaller).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, MissingSecondLayer
from .geometry import GridDomain
from .saddle import StaggeredField

_H1_SLACK = 0.0


@dataclass(frozen=True)
class ScalingParams:
    """Exponent set and forcing for one flow regime."""

    epsilon: float
    delta: float
    gamma: float
    forcing: float = 1.0
    eta: float | None = None

    def __post_init__(self):
        if not (self.epsilon > 0.0):
            raise ValueError("epsilon must be positive")
        if not math.isfinite(self.forcing):
            raise ValueError("forcing must be finite")
        if not (self.delta > 0.0):
            raise ValueError("delta must be positive")
        if self.gamma < 0.0:
            raise ValueError("gamma must be nonnegative")

    @classmethod
    def from_eta(cls, eta: float, epsilon: float, forcing: float = 1.0) -> "ScalingParams":
        """The one-parameter family delta = 1 - 7*eta/12, gamma = 3/2 - eta."""
        return cls(
            epsilon=float(epsilon),
            delta=1.0 - 7.0 * eta / 12.0,
            gamma=1.5 - eta,
            forcing=float(forcing),
            eta=float(eta),
        )

    @property
    def viscosity(self) -> float:
        return self.epsilon**self.gamma

    @property
    def fracture_height_exact(self) -> float:
        return self.epsilon**self.delta

    def with_forcing(self, forcing: float) -> "ScalingParams":
        return ScalingParams(self.epsilon, self.delta, self.gamma, float(forcing), self.eta)


def theoretical_rates(p: ScalingParams) -> dict[str, float]:
    """Decay exponents of the weighted error norms, per level."""
    d, g = p.delta, p.gamma
    return {
        "apriori": d - g + 1.0,
        "order0": 2.5 - g,
        "order1": 2.5 + 3.0 * d - 3.0 * g,
        "order2": 3.5 - d - g,
    }


@dataclass(frozen=True)
class HypothesisReport:
    h1: bool
    h2: bool
    h3: bool
    margins: dict
    rates: dict

    @property
    def passed(self) -> bool:
        return self.h1 and self.h2 and self.h3

    def to_dict(self) -> dict:
        return {
            "h1": self.h1,
            "h2": self.h2,
            "h3": self.h3,
            "passed": self.passed,
            "margins": dict(self.margins),
            "rates": dict(self.rates),
        }


def validate_hypotheses(p: ScalingParams) -> HypothesisReport:
    """Check (H1)-(H3); failures are reported, never raised."""
    d, g = p.delta, p.gamma
    margins = {
        "h1": 3.0 * d - 2.0 * g,          # > 0 required
        "h2_delta_low": d,                 # > 0
        "h2_delta_high": 1.0 - d,          # > 0
        "h2_gamma_low": g,                 # > 0
        "h2_gamma_high": 1.5 - g,          # > 0
        "h3": 2.0 * g + 1.0 - 4.0 * d,     # > 0
    }
    h1 = margins["h1"] > _H1_SLACK
    h2 = d > 0.0 and d < 1.0 and g > 0.0 and g < 1.5
    h3 = margins["h3"] > 0.0
    return HypothesisReport(h1=h1, h2=h2, h3=h3, margins=margins, rates=theoretical_rates(p))


# ---------------------------------------------------------------------------
# closed-form fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoiseuilleField:
    """No-slip Poiseuille flow in the fracture strip, zero-extended below.

    u1(x2) = (F / (2 mu)) * x2 * (H - x2) on 0 <= x2 <= H, so u1 >= 0 for
    F > 0, u1(0) = u1(H) = 0, and mu * u1'' = -F exactly.
    """

    forcing: float
    viscosity: float
    height: float  # snapped fracture height

    def u1(self, x2):
        x2 = np.asarray(x2, dtype=float)
        prof = (self.forcing / (2.0 * self.viscosity)) * x2 * (self.height - x2)
        return np.where((x2 >= 0.0) & (x2 <= self.height), prof, 0.0)

    @property
    def interface_shear(self) -> float:
        """du1/dx2 at x2 = 0 (the fracture-side shear S0)."""
        return self.forcing * self.height / (2.0 * self.viscosity)

    @property
    def mean_velocity(self) -> float:
        """Average of u1 over the fracture: eps^(2 delta - gamma) F/12 for exact H."""
        return (self.forcing / (2.0 * self.viscosity)) * self.height**2 / 6.0

    def on_grid(self, dom: GridDomain) -> StaggeredField:
        grid = dom.grid
        fld = StaggeredField.zeros(grid)
        yc = grid.y_cell(np.arange(grid.ny))
        fld.u[:, :] = self.u1(yc)[:, None]
        fld.u[~grid.u_active] = 0.0
        return fld


def poiseuille(p: ScalingParams, height: float | None = None) -> PoiseuilleField:
    """Poiseuille approximation; pass the snapped height for grid runs."""
    H = p.fracture_height_exact if height is None else float(height)
    return PoiseuilleField(forcing=p.forcing, viscosity=p.viscosity, height=H)


def interface_shear(p: ScalingParams, height: float | None = None) -> float:
    """Interface shear of the Poiseuille flow: (F/2) eps^(delta-gamma) for exact H."""
    return poiseuille(p, height).interface_shear


# ---------------------------------------------------------------------------
# boundary-layer sampling onto a resolved grid
# ---------------------------------------------------------------------------

def sample_slab_field(
    bl_field: StaggeredField,
    slab,
    dom: GridDomain,
    above: tuple[float, float, float],
    below: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> StaggeredField:
    """Sample a slab field at y = x/eps on the resolved grid.

    Requires matched stair-casing (slab.cells_per_period equal to the
    domain's), which makes the map exact: every staggered position of the
    resolved grid lands on the matching staggered position of the slab.
    Rows above the slab top take the ``above`` constants (stabilized values),
    rows below its bottom take ``below``.
    """
    c = dom.cells_per_period
    if slab.cells_per_period != c:
        raise GridMismatch(
            f"slab has {slab.cells_per_period} cells/period, domain has {c}; "
            "boundary-layer sampling requires matched resolutions"
        )
    g = dom.grid
    sg = slab.grid
    # resolved row j maps to slab row j - offset (both counted from their
    # own bottoms); derived from y/eps = -n + (j+1/2)/c = -K + (jb+1/2)/c
    offset = (dom.n_periods - slab.rows_below) * c

    out = StaggeredField.zeros(g)
    cols = np.arange(g.nx) % c

    jb_cells = np.arange(g.ny) - offset
    inside = (jb_cells >= 0) & (jb_cells < sg.ny)
    out.u[inside, :] = bl_field.u[jb_cells[inside], :][:, cols]
    out.u[jb_cells >= sg.ny, :] = above[0]
    out.u[jb_cells < 0, :] = below[0]
    out.p[inside, :] = bl_field.p[jb_cells[inside], :][:, cols]
    out.p[jb_cells >= sg.ny, :] = above[2]
    out.p[jb_cells < 0, :] = below[2]

    jb_lines = np.arange(g.ny + 1) - offset
    inside_l = (jb_lines >= 0) & (jb_lines <= sg.ny)
    out.v[inside_l, :] = bl_field.v[jb_lines[inside_l], :][:, cols]
    out.v[jb_lines > sg.ny, :] = above[1]
    out.v[jb_lines < 0, :] = below[1]

    out.u[~g.u_active] = 0.0
    out.v[~g.v_active] = 0.0
    out.p[~g.fluid] = 0.0
    return out


def _counterflow(dom: GridDomain, coef: float) -> StaggeredField:
    """Couette counterflow coef * (x2+/H) e1, vanishing in the porous bulk."""
    g = dom.grid
    fld = StaggeredField.zeros(g)
    yc = g.y_cell(np.arange(g.ny))
    prof = coef * np.maximum(yc, 0.0) / dom.fracture_height
    fld.u[:, :] = prof[:, None]
    fld.u[~g.u_active] = 0.0
    return fld


# ---------------------------------------------------------------------------
# composed approximation
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ComposedApproximation:
    """Velocity approximation whose subtraction from the resolved solution
    yields the order-0/1/2 error fields."""

    params: ScalingParams
    bl1: object  # BoundaryLayerResult (first layer)
    bl2: object | None
    order: int

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        if self.order == 2 and self.bl2 is None:
            raise MissingSecondLayer("order 2 requested without a second layer")

    def amplitudes(self, dom: GridDomain, forcing: float | None = None) -> dict:
        """Term amplitudes built from the snapped fracture height."""
        p = self.params
        F = p.forcing if forcing is None else float(forcing)
        H = dom.fracture_height
        mu = p.viscosity
        S0 = F * H / (2.0 * mu)
        amp0 = p.epsilon * S0
        T1 = amp0 * self.bl1.c1 / H
        amp1 = p.epsilon * T1
        Q = p.epsilon**3 * S0**2 / mu
        return {"S0": S0, "amp0": amp0, "amp1": amp1, "Q": Q}

    def on_grid(
        self,
        dom: GridDomain,
        forcing: float | None = None,
        order: int | None = None,
    ) -> StaggeredField:
        p = self.params
        F = p.forcing if forcing is None else float(forcing)
        order = self.order if order is None else int(order)
        if order == 2 and self.bl2 is None:
            raise MissingSecondLayer("order 2 requested without a second layer")
        amps = self.amplitudes(dom, F)

        fld = poiseuille(p.with_forcing(F), dom.fracture_height).on_grid(dom)
        fld = _add_pair(fld, dom, self.bl1, amps["amp0"])
        if order >= 1:
            fld = _add_pair(fld, dom, self.bl1, amps["amp1"])
        if order >= 2:
            fld = _add_pair(fld, dom, self.bl2, amps["Q"])
        return fld

    def field_parts(self, dom: GridDomain, order: int | None = None):
        """(linear, quadratic) fields with v(F) = F*linear + F^2*quadratic."""
        order = self.order if order is None else int(order)
        lin = self.on_grid(dom, forcing=1.0, order=min(order, 1))
        if order < 2:
            return lin, StaggeredField.zeros(dom.grid)
        full = self.on_grid(dom, forcing=1.0, order=2)
        return lin, full.axpy(-1.0, lin)


def _add_pair(fld, dom, layer, amplitude: float):
    """Add -amplitude*beta(x/eps) + amplitude*C*(x2+/H) e1 to the field.

    The far-field constant of the layer rides the sampled term above the
    slab truncation, so the pair cancels exactly at the top wall.
    """
    beta = sample_slab_field(
        layer.field,
        layer.slab,
        dom,
        above=(layer.c1, 0.0, 0.0),
    )
    out = fld.axpy(-amplitude, beta)
    return out.axpy(1.0, _counterflow(dom, amplitude * layer.c1))


def compose_approximation(
    p: ScalingParams,
    bl1,
    bl2=None,
    order: int = 0,
) -> ComposedApproximation:
    """Approximation of the resolved velocity at the requested corrector order."""
    return ComposedApproximation(params=p, bl1=bl1, bl2=bl2, order=order)


@dataclass(eq=False)
class PressureApproximation:
    """Interface-layer pressure approximation -(F*H/2) * (omega(x/eps) - C_omega).

    The layer pressure is normalized to vanish deep in the porous part, so
    this approximation tends to zero high in the fracture.
    """

    params: ScalingParams
    bl1: object

    def coefficient(self, dom: GridDomain) -> float:
        return -self.params.forcing * dom.fracture_height / 2.0

    def on_grid(self, dom: GridDomain) -> np.ndarray:
        omega = sample_slab_field(
            self.bl1.field,
            self.bl1.slab,
            dom,
            above=(0.0, 0.0, self.bl1.c_omega),
        ).p
        out = self.coefficient(dom) * (omega - self.bl1.c_omega)
        out[~dom.grid.fluid] = 0.0
        return out


def pressure_approximation(p: ScalingParams, bl1) -> PressureApproximation:
    return PressureApproximation(params=p, bl1=bl1)
