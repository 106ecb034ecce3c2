"""Pipeline stages behind the CLI: cell problems, the sweep, and reports.

The sweep runs two geometries:

* the configured ``geometry`` (rate geometry) drives the error-rate study:
  resolved solves at the rate forcing over the epsilon list for every eta,
  composed against the matched-resolution boundary layers;
* the configured ``slip_geometry`` drives the slip-law study: resolved
  solves over the forcing list at one (eta, epsilon) point, the closed-loop
  regression, and the Saffman-degradation tables.

Everything deterministic lands in the error/slip CSVs and the summary JSON;
timings and progress go to the logger only, so identical configs reproduce
identical bytes.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import error_analysis as ea
from .boundary_layer import (
    BoundaryLayerResult,
    constants_payload,
    solve_first_layer,
    solve_second_layer,
)
from .config import RunConfig
from .dns import interface_trace, run_dns
from .errors import HypothesisFailure, MissingArtifacts
from .geometry import (
    GridDomain,
    UnitCell,
    build_bl_slab,
    build_grid_domain,
    cell_from_key,
    geometry_key,
    strip_domain,
)
from .scaling import (
    ScalingParams,
    compose_approximation,
    poiseuille,
    validate_hypotheses,
)

logger = logging.getLogger(__name__)

_ORDER_LABEL = {"apriori": "apriori", "order0": "0", "order1": "1", "order2": "2"}


# ---------------------------------------------------------------------------
# cell stage
# ---------------------------------------------------------------------------

def _solve_layers(cell: UnitCell, cfg: RunConfig, cells_per_period: int):
    slab = build_bl_slab(
        cell,
        rows_below=int(cfg.geometry["rows_below"]),
        height_above=float(cfg.geometry["height_above"]),
        cells_per_period=cells_per_period,
    )
    bl1 = solve_first_layer(slab)
    bl2 = solve_second_layer(slab, bl1)
    return slab, bl1, bl2


def _dual_identity_rel(bl1: BoundaryLayerResult) -> float:
    return abs(bl1.dual_trace + bl1.grad_energy) / max(bl1.grad_energy, 1e-300)


def cell_stage(cfg: RunConfig, refine_check: bool | None = None) -> dict:
    """Solve both layers at the configured resolution; write the constants file."""
    if refine_check is None:
        refine_check = bool(cfg.flags["refine_check"])
    cell = cfg.cell()
    c = int(cfg.geometry["cells_per_period"])
    logger.info("cell stage: %s at %d cells/period", geometry_key(cell), c)
    slab, bl1, bl2 = _solve_layers(cell, cfg, c)

    payload = {
        "config_hash": cfg.config_hash(),
        "geometry": geometry_key(cell),
        "constants": constants_payload(bl1, bl2),
        "checks": {
            "dual_identity_rel": _dual_identity_rel(bl1),
            "c1_negative": bl1.c1 < 0.0,
            "beta2_row_mean_max": bl1.beta2_row_max,
        },
    }
    if refine_check:
        _, bl1f, bl2f = _solve_layers(cell, cfg, 2 * c)
        # stair-case masking is first order: Richardson with q = 1
        payload["refine"] = {
            "cells_per_period": 2 * c,
            "c1": bl1f.c1,
            "c11": bl2f.c1,
            "c_omega": bl1f.c_omega,
            "c1_richardson": 2.0 * bl1f.c1 - bl1.c1,
            "c1_delta": bl1f.c1 - bl1.c1,
            "c11_delta": bl2f.c1 - bl2.c1,
        }

    path = cfg.output["constants_json"]
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    _write_json(path, payload)
    cache_dir = cfg.output["cache_dir"]
    os.makedirs(cache_dir, exist_ok=True)
    key = _constants_key(cell, c, cfg)
    _write_json(os.path.join(cache_dir, f"cell-{key}.json"), payload)
    return payload


def _constants_key(cell: UnitCell, cells: int, cfg: RunConfig) -> str:
    import hashlib

    blob = json.dumps(
        {
            "geometry": geometry_key(cell),
            "cells": cells,
            "rows_below": cfg.geometry["rows_below"],
            "height_above": cfg.geometry["height_above"],
        },
        sort_keys=True,
    ).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# sweep stage
# ---------------------------------------------------------------------------

def _group_params(cfg: RunConfig) -> list[tuple[str, dict]]:
    """Parameter groups for the rate sweep: eta values plus extra points."""
    groups = []
    for eta in cfg.parameters["eta"]:
        groups.append(
            (f"eta={eta}", {"eta": float(eta)})
        )
    for pt in cfg.parameters["extra_points"]:
        groups.append(
            (
                f"delta={pt['delta']},gamma={pt['gamma']}",
                {"delta": float(pt["delta"]), "gamma": float(pt["gamma"])},
            )
        )
    return groups


def _make_params(spec: dict, epsilon: float, forcing: float) -> ScalingParams:
    if "eta" in spec:
        return ScalingParams.from_eta(spec["eta"], epsilon, forcing)
    return ScalingParams(
        epsilon=epsilon, delta=spec["delta"], gamma=spec["gamma"], forcing=forcing
    )


def _dns_task(task: dict):
    """Worker for one resolved solve; results land in the cache directory."""
    cell = cell_from_key(task["geometry"])
    p = _make_params(task["spec"], 1.0 / task["n"], task["forcing"])
    dom = build_grid_domain(cell, 1.0 / task["n"], p.delta, task["cells"])
    run_dns(
        p,
        dom,
        tol=task["tol"],
        max_iter=task["max_iter"],
        damping=task["damping"],
        cache_dir=task["cache_dir"],
        allow_out_of_hypothesis=task["allow"],
    )
    return task["label"]


def _enumerate_dns_tasks(cfg: RunConfig, allow: bool) -> list[dict]:
    tasks = []
    common = {
        "cells": cfg.dns_cells,
        "tol": float(cfg.solver["picard_tol"]),
        "max_iter": int(cfg.solver["picard_max_iter"]),
        "damping": float(cfg.solver["damping"]),
        "cache_dir": cfg.output["cache_dir"],
        "allow": allow,
    }
    rate_key = geometry_key(cfg.cell())
    rate_f = float(cfg.parameters["rate_forcing"])
    for label, spec in _group_params(cfg):
        for n in cfg.epsilon_periods():
            p = _make_params(spec, 1.0 / n, rate_f)
            if not validate_hypotheses(p).passed and not allow:
                continue
            tasks.append(
                dict(common, geometry=rate_key, spec=spec, n=n, forcing=rate_f,
                     label=f"{label} eps=1/{n}")
            )
    slip_key = geometry_key(cfg.slip_cell())
    slip_spec = {"eta": float(cfg.parameters["slip_eta"])}
    n_slip = cfg.slip_epsilon_periods()
    for F in cfg.parameters["forcing"]:
        tasks.append(
            dict(common, geometry=slip_key, spec=slip_spec, n=n_slip,
                 forcing=float(F), label=f"slip F={F}")
        )
    return tasks


def run_dns_points(cfg: RunConfig, jobs: int | None = None, allow: bool | None = None) -> list[str]:
    """Populate the cache with every resolved solve the sweep needs."""
    if allow is None:
        allow = bool(cfg.flags["allow_out_of_hypothesis"])
    if jobs is None:
        jobs = int(cfg.flags["jobs"])
    tasks = _enumerate_dns_tasks(cfg, allow)
    os.makedirs(cfg.output["cache_dir"], exist_ok=True)
    labels = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for label in pool.map(_dns_task, tasks):
                logger.info("dns point done: %s", label)
                labels.append(label)
    else:
        for task in tasks:
            labels.append(_dns_task(task))
            logger.info("dns point done: %s", labels[-1])
    return sorted(labels)


def sweep_stage(
    cfg: RunConfig,
    skip_dns: bool | None = None,
    jobs: int | None = None,
    allow: bool | None = None,
) -> dict:
    """Full verification sweep; writes the CSVs and the summary JSON."""
    if skip_dns is None:
        skip_dns = bool(cfg.flags["skip_dns"])
    if allow is None:
        allow = bool(cfg.flags["allow_out_of_hypothesis"])
    if not skip_dns:
        run_dns_points(cfg, jobs=jobs, allow=allow)

    cache_dir = cfg.output["cache_dir"]
    solver = cfg.solver
    tol = float(solver["picard_tol"])
    dns_kwargs = dict(
        tol=tol,
        max_iter=int(solver["picard_max_iter"]),
        damping=float(solver["damping"]),
        cache_dir=cache_dir,
        cache_only=True,
        allow_out_of_hypothesis=True,  # gating happened when points were enumerated
    )

    cells = cfg.dns_cells
    rate_cell = cfg.cell()
    slip_cell = cfg.slip_cell()
    _, bl1r, bl2r = _solve_layers(rate_cell, cfg, cells)
    _, bl1s, bl2s = _solve_layers(slip_cell, cfg, cells)

    summary = {
        "config": cfg.raw,
        "config_hash": cfg.config_hash(),
        "rate_geometry": geometry_key(rate_cell),
        "slip_geometry": geometry_key(slip_cell),
        "constants": {
            "rate": constants_payload(bl1r, bl2r),
            "slip": constants_payload(bl1s, bl2s),
        },
        "groups": {},
        "slip": {},
        "saffman": {},
        "skipped": [],
    }
    error_rows = []

    rate_f = float(cfg.parameters["rate_forcing"])
    for label, spec in _group_params(cfg):
        group_rows, fits, skipped = _rate_group(
            cfg, label, spec, rate_cell, bl1r, bl2r, rate_f, dns_kwargs, allow
        )
        error_rows.extend(group_rows)
        if skipped is not None:
            summary["skipped"].append(skipped)
            continue
        summary["groups"][label] = {
            "eta": spec.get("eta"),
            "delta": spec.get("delta"),
            "gamma": spec.get("gamma"),
            "fits": {k: v.to_dict() for k, v in fits.items()},
            "ordering_strict": ea.ordering_strict(fits),
            "rows": group_rows,
        }

    summary["slip"] = _slip_block(cfg, slip_cell, bl1s, bl2s, dns_kwargs)
    summary["saffman"] = _saffman_block(cfg, slip_cell, bl1s, bl2s)
    summary["acceptance"] = _acceptance_block(cfg, summary)

    _write_outputs(cfg, summary, error_rows)
    return summary


def _rate_group(cfg, label, spec, cell, bl1, bl2, forcing, dns_kwargs, allow):
    """Error rows and rate fits for one parameter group over the eps list."""
    p_probe = _make_params(spec, 1.0 / max(cfg.epsilon_periods()), forcing)
    report = validate_hypotheses(p_probe)
    if not report.passed and not allow:
        return [], None, {"group": label, "reason": "hypothesis_fail",
                          "hypotheses": report.to_dict()}

    rows = []
    sweep_points = {level: [] for level in ea.LEVELS}
    for n in cfg.epsilon_periods():
        p = _make_params(spec, 1.0 / n, forcing)
        dom = build_grid_domain(cell, 1.0 / n, p.delta, cfg.dns_cells)
        sol = run_dns(p, dom, **dns_kwargs)
        pois = poiseuille(p, dom.fracture_height)
        comp = compose_approximation(p, bl1, bl2, order=2)
        fields = {
            "apriori": ea.apriori_error_field(sol, pois),
            "order0": ea.error_field(sol, comp, 0),
            "order1": ea.error_field(sol, comp, 1),
            "order2": ea.error_field(sol, comp, 2),
        }
        for level, err in fields.items():
            wn = ea.weighted_norm(err, level, p)
            sweep_points[level].append((p.epsilon, wn.total))
            rows.append(
                {
                    "order": _ORDER_LABEL[level],
                    "epsilon": p.epsilon,
                    "eta": spec.get("eta", ""),
                    "F": forcing,
                    "norm_grad": wn.grad,
                    "norm_omega2": wn.omega2,
                    "norm_sigma": wn.sigma,
                    "norm_omega1": wn.omega1,
                    "norm_total": wn.total,
                }
            )
        logger.info("rate point %s eps=1/%d done", label, n)
    fits = ea.fit_rates(sweep_points, p_probe)
    for row in rows:
        level = {v: k for k, v in _ORDER_LABEL.items()}[row["order"]]
        row["theoretical_rate"] = fits[level].theoretical
        row["observed_rate"] = fits[level].observed
    return rows, fits, None


def _slip_block(cfg, cell, bl1, bl2, dns_kwargs):
    """DNS regression, closed-loop regression, and predictions at one point."""
    eta = float(cfg.parameters["slip_eta"])
    n = cfg.slip_epsilon_periods()
    forcings = [float(F) for F in cfg.parameters["forcing"]]
    p0 = ScalingParams.from_eta(eta, 1.0 / n, forcings[-1])
    dom = build_grid_domain(cell, 1.0 / n, p0.delta, cfg.dns_cells)

    samples = []
    for F in forcings:
        p = ScalingParams.from_eta(eta, 1.0 / n, F)
        sol = run_dns(p, dom, **dns_kwargs)
        tr = interface_trace(sol)
        samples.append(
            ea.SlipSample(forcing=F, epsilon=p.epsilon, eta=eta,
                          v_eff=tr.slip_avg, shear_eff=tr.shear_avg)
        )
    dns_fit = ea.slip_regression(samples)

    pred = ea.predicted_slip(p0, bl1, bl2, dom)
    comp = compose_approximation(p0, bl1, bl2, order=2)
    sdom = strip_domain(dom)
    cl_samples = ea.closed_loop_samples(comp, sdom, forcings)
    cl_fit = ea.slip_regression(cl_samples)
    oracle = ea.trace_coefficients(comp, sdom)

    def rel(a, b):
        return abs(a - b) / max(abs(b), 1e-300)

    return {
        "eta": eta,
        "epsilon": 1.0 / n,
        "forcings": forcings,
        "samples": [vars(s) for s in samples],
        "closed_loop_samples": [vars(s) for s in cl_samples],
        "dns_fit": dns_fit.to_dict(),
        "closed_loop_fit": cl_fit.to_dict(),
        "oracle": {
            "a_lin": oracle.a_lin,
            "a_quad": oracle.a_quad,
            "d1": oracle.d1,
            "d2": oracle.d2,
            "c1": oracle.c1,
            "c2": oracle.c2,
        },
        "prediction": pred.to_dict(),
        "closed_loop_a_lin_rel_err": rel(cl_fit.a_lin, oracle.a_lin),
        "closed_loop_a_quad_rel_err": rel(cl_fit.a_quad, oracle.a_quad),
        "dns_a_lin_vs_saffman_rel": rel(dns_fit.a_lin, pred.a_lin_saffman),
        "dns_a_lin_vs_exact_rel": rel(dns_fit.a_lin, pred.a_lin),
        "dns_a_quad_sign_match_exact": float(
            np.sign(dns_fit.a_quad) == np.sign(pred.a_quad)
        ),
        "dns_a_quad_sign_match_leading": float(
            np.sign(dns_fit.a_quad) == np.sign(pred.a_quad_leading)
        ),
    }


def _saffman_block(cfg, cell, bl1, bl2):
    """Linear-law degradation across eta, and its eps-decay exponent."""
    forcings = [float(F) for F in cfg.parameters["forcing"]]
    n_slip = cfg.slip_epsilon_periods()
    residual_by_eta = {}
    table = {}
    for eta in [float(e) for e in cfg.parameters["eta"]]:
        p = ScalingParams.from_eta(eta, 1.0 / n_slip, forcings[-1])
        dom = strip_domain(build_grid_domain(cell, 1.0 / n_slip, p.delta, cfg.dns_cells))
        comp = compose_approximation(p, bl1, bl2, order=2)
        samples = ea.closed_loop_samples(comp, dom, forcings)
        a, resid = ea.linear_only_residual(samples)
        residual_by_eta[eta] = resid
        table[f"eta={eta}"] = {"a_lin_only": a, "relative_residual": resid}
    monotone, rows = ea.saffman_eta_degradation(residual_by_eta)

    eta0 = float(cfg.parameters["slip_eta"])
    F0 = float(cfg.parameters["rate_forcing"])
    samples_by_eps = {}
    for n in cfg.epsilon_periods():
        p = ScalingParams.from_eta(eta0, 1.0 / n, F0)
        dom = strip_domain(build_grid_domain(cell, 1.0 / n, p.delta, cfg.dns_cells))
        comp = compose_approximation(p, bl1, bl2, order=2)
        samples_by_eps[p.epsilon] = ea.closed_loop_samples(comp, dom, [F0])[0]
    gamma = 1.5 - eta0
    decay = ea.saffman_check(samples_by_eps, bl1.c1, gamma)

    return {
        "eta_table": table,
        "monotone_in_eta": monotone,
        "rows": [[e, r] for e, r in rows],
        "epsilon_decay": decay.to_dict(),
    }


def _acceptance_block(cfg, summary) -> dict:
    """Sweep-level acceptance verdicts (criteria driven by this pipeline)."""
    out = {}
    slip_eta = float(cfg.parameters["slip_eta"])
    apriori = None
    for label, group in summary["groups"].items():
        if group.get("eta") == slip_eta:
            apriori = group["fits"]["apriori"]
    if apriori is not None:
        out["apriori_rate"] = {
            "observed": apriori["observed"],
            "threshold": apriori["theoretical"] - ea.RATE_SLACK,
            "pass": apriori["passes_slack"],
        }
    orders_ok = True
    ordering_ok = True
    per_group = {}
    for label, group in summary["groups"].items():
        slack = all(
            group["fits"][lvl]["passes_slack"]
            for lvl in ("order0", "order1", "order2")
        )
        per_group[label] = {
            "slack_pass": slack,
            "ordering_strict": group["ordering_strict"],
            "observed": [group["fits"][lvl]["observed"] for lvl in ("order0", "order1", "order2")],
        }
        orders_ok &= slack
        ordering_ok &= group["ordering_strict"]
    out["corrector_hierarchy"] = {
        "per_group": per_group,
        "slack_pass": orders_ok,
        "ordering_pass": ordering_ok,
        "pass": orders_ok and ordering_ok,
    }
    slip = summary["slip"]
    out["slip_law"] = {
        "closed_loop_pass": slip["closed_loop_a_lin_rel_err"] <= 1e-3
        and slip["closed_loop_a_quad_rel_err"] <= 1e-3,
        "a_lin_pass": slip["dns_a_lin_vs_saffman_rel"] <= 0.20,
        "a_quad_sign_pass": bool(slip["dns_a_quad_sign_match_exact"]),
        "a_quad_sign_match_leading_form": bool(slip["dns_a_quad_sign_match_leading"]),
    }
    out["slip_law"]["pass"] = (
        out["slip_law"]["closed_loop_pass"]
        and out["slip_law"]["a_lin_pass"]
        and out["slip_law"]["a_quad_sign_pass"]
    )
    out["saffman_degradation"] = {"pass": summary["saffman"]["monotone_in_eta"]}
    return out


def _write_outputs(cfg, summary, error_rows):
    for path in (
        cfg.output["error_csv"],
        cfg.output["slip_csv"],
        cfg.output["summary_json"],
    ):
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)

    def row_key(r):
        return (str(r["eta"]), r["order"], -r["epsilon"], r["F"])

    ea.write_csv(
        cfg.output["error_csv"], ea.ERROR_CSV_COLUMNS, sorted(error_rows, key=row_key)
    )
    slip_rows = [
        {
            "epsilon": s["epsilon"],
            "eta": s["eta"],
            "F": s["forcing"],
            "v1_eff": s["v_eff"],
            "shear_eff": s["shear_eff"],
            "a_lin_pred": summary["slip"]["prediction"]["a_lin"],
            "a_quad_pred": summary["slip"]["prediction"]["a_quad"],
        }
        for s in summary["slip"]["samples"]
    ]
    ea.write_csv(cfg.output["slip_csv"], ea.SLIP_CSV_COLUMNS, slip_rows)
    _write_json(cfg.output["summary_json"], summary)


def _write_json(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# report stage
# ---------------------------------------------------------------------------

def report_stage(cfg: RunConfig) -> str:
    """Human-readable tables and gnuplot-ready data from the summary JSON."""
    path = cfg.output["summary_json"]
    if not os.path.exists(path):
        raise MissingArtifacts(f"summary not found at {path}; run the sweep first")
    with open(path, encoding="utf-8") as fh:
        summary = json.load(fh)

    lines = []
    lines.append("fracslip sweep report")
    lines.append(f"config hash: {summary['config_hash']}")
    lines.append("")
    lines.append("convergence rates (observed vs theoretical, slack 0.3)")
    header = f"{'group':>22s} {'level':>8s} {'observed':>10s} {'theory':>8s} {'margin':>8s} {'R^2':>8s}"
    lines.append(header)
    for label in sorted(summary["groups"]):
        group = summary["groups"][label]
        for level in ("apriori", "order0", "order1", "order2"):
            fit = group["fits"][level]
            lines.append(
                f"{label:>22s} {level:>8s} {fit['observed']:10.4f} "
                f"{fit['theoretical']:8.4f} {fit['margin']:8.4f} {fit['r_squared']:8.5f}"
            )
        lines.append(
            f"{label:>22s} ordering strict (0<1<2): {group['ordering_strict']}"
        )
    lines.append("")
    slip = summary["slip"]
    lines.append(
        f"slip law at eta={slip['eta']}, eps={slip['epsilon']}: "
    )
    lines.append(
        f"  dns fit        a_lin {slip['dns_fit']['a_lin']:+.6e}  a_quad {slip['dns_fit']['a_quad']:+.6e}"
    )
    lines.append(
        f"  closed loop    a_lin {slip['closed_loop_fit']['a_lin']:+.6e}  a_quad {slip['closed_loop_fit']['a_quad']:+.6e}"
    )
    lines.append(
        f"  oracle         a_lin {slip['oracle']['a_lin']:+.6e}  a_quad {slip['oracle']['a_quad']:+.6e}"
    )
    pred = slip["prediction"]
    lines.append(
        f"  predictions    saffman {pred['a_lin_saffman']:+.6e}  exact {pred['a_lin']:+.6e}  "
        f"paper-form {pred['a_lin_paper_form']:+.6e}"
    )
    lines.append(
        f"  quad           exact {pred['a_quad']:+.6e}  leading-form {pred['a_quad_leading']:+.6e}"
    )
    lines.append(
        f"  closed-loop recovery: a_lin rel {slip['closed_loop_a_lin_rel_err']:.2e}, "
        f"a_quad rel {slip['closed_loop_a_quad_rel_err']:.2e}"
    )
    lines.append("")
    lines.append("saffman linear-law degradation (relative residual per eta)")
    for eta, resid in summary["saffman"]["rows"]:
        lines.append(f"  eta={eta:<6g} residual {resid:.6e}")
    lines.append(
        f"  monotone increase as eta decreases: {summary['saffman']['monotone_in_eta']}"
    )
    dec = summary["saffman"]["epsilon_decay"]
    lines.append(
        f"  fixed-coefficient residual decay: exponent {dec['exponent']:.4f} "
        f"(reference 2-gamma = {dec['reference']:.4f})"
    )
    lines.append("")
    lines.append("acceptance verdicts")
    for key, val in sorted(summary["acceptance"].items()):
        status = val.get("pass")
        lines.append(f"  {key}: {'PASS' if status else 'FAIL'}")
    text = "\n".join(lines) + "\n"

    report_dir = cfg.output["report_dir"]
    os.makedirs(report_dir, exist_ok=True)
    with open(os.path.join(report_dir, "report.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)

    for label in sorted(summary["groups"]):
        group = summary["groups"][label]
        per_eps = {}
        for row in group["rows"]:
            per_eps.setdefault(row["epsilon"], {})[row["order"]] = row["norm_total"]
        name = label.replace("=", "").replace(",", "_").replace(".", "p")
        dat = ["# epsilon apriori order0 order1 order2"]
        for eps in sorted(per_eps, reverse=True):
            vals = per_eps[eps]
            dat.append(
                " ".join(
                    ea.fmt(x)
                    for x in (eps, vals.get("apriori"), vals.get("0"), vals.get("1"), vals.get("2"))
                )
            )
        with open(os.path.join(report_dir, f"rates_{name}.dat"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(dat) + "\n")

    dat = ["# shear_eff v1_eff source"]
    for s in summary["slip"]["samples"]:
        dat.append(f"{ea.fmt(s['shear_eff'])} {ea.fmt(s['v_eff'])} dns")
    for s in summary["slip"]["closed_loop_samples"]:
        dat.append(f"{ea.fmt(s['shear_eff'])} {ea.fmt(s['v_eff'])} closed_loop")
    with open(os.path.join(report_dir, "slip_samples.dat"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(dat) + "\n")
    return text
