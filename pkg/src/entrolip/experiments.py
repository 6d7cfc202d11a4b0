"""Config-driven experiments: build measures, solve, verify, and emit reports."""

import csv
import io
import json
import logging
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import ValidationError, extreme_eigenvalues, spd_inverse
from .bounds import verify_commuting_bound, verify_hessian_bounds, verify_pointwise_inequalities, commuting_bound
from .config import ConfigError
from .cov_inequalities import (
    brascamp_lieb_check,
    covariance_of,
    cramer_rao_check,
    score_identity_residual,
)
from .entropic_maps import entropic_map, hessians_at
from .gaussian_oracle import entropic_gaussian_hessian, gelbrich_hessian, quantile_map_1d
from .measures import (
    CertificationError,
    certify_bounds,
    certify_matrix_bound,
    discretize,
    make_gaussian_potential,
    make_perturbed_potential,
    make_quartic_potential,
    make_separable_perturbed_potential,
)
from .sinkhorn import SinkhornNonConvergence, solve

logger = logging.getLogger(__name__)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2, 3

SPECTRAL_COLUMNS = ("lambda_min", "lambda_max", "lower_bound", "upper_bound",
                    "upper_margin", "lower_margin")
IDENTITY_TOL = 1e-6
_CERT_RESOLUTION = {1: 2001, 2: 201}


def build_potential(spec):
    """Instantiate a :class:`Potential` from a config ``PotentialSpec``."""
    p = spec.params
    try:
        if spec.family == "gaussian":
            cov = np.atleast_2d(np.asarray(p["covariance"], dtype=float))
            mean = p.get("mean", [0.0] * cov.shape[0])
            return make_gaussian_potential(mean, cov)
        if spec.family == "perturbed":
            return make_perturbed_potential(p["base_curvature"], p["amplitude"], p["frequency"])
        if spec.family == "separable-perturbed":
            return make_separable_perturbed_potential(
                p["base_curvatures"], p["amplitudes"], p["frequencies"])
        if spec.family == "quartic":
            return make_quartic_potential(int(p.get("dim", 1)))
    except ValidationError as exc:
        raise ConfigError(str(exc), field=spec.family) from None
    raise ConfigError(f"unknown family {spec.family}")


def interior_queries(duals, fraction=0.8, stride=1):
    """Source nodes inside the inner ``fraction`` of the source box whose map image
    also lies inside the inner ``fraction`` of the target box.

    Keeps sup estimates away from truncation edges on both sides.
    """
    pts = duals.source.points[::stride]
    keep = _inside(pts, duals.source.bounding_box(), fraction)
    images = entropic_map(duals, pts[keep])
    if images.ndim == 1:
        images = images[None]
    mask = _inside(images, duals.target.bounding_box(), fraction)
    return pts[keep][mask]


def _inside(pts, box, fraction):
    center = 0.5 * (box[:, 0] + box[:, 1])
    half = 0.5 * (box[:, 1] - box[:, 0]) * fraction
    return np.all(np.abs(pts - center) <= half * (1 + 1e-12), axis=1)


def _query_points(config, duals, rng):
    qs = config.queries
    if qs.mode == "interior":
        return interior_queries(duals, qs.fraction, qs.stride)
    box = np.asarray(qs.box, dtype=float)
    if box.shape[0] != duals.dim:
        raise ConfigError(f"query box has {box.shape[0]} axes, problem has {duals.dim}",
                          field="queries.box")
    if qs.mode == "grid":
        axes = [np.linspace(lo, hi, qs.count) for lo, hi in box]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    return rng.uniform(box[:, 0], box[:, 1], size=(qs.count, duals.dim))


def _measures(config, source_pot, target_pot):
    src = discretize(source_pot, config.resolution, box=config.box_override.get("source"))
    tgt = None
    if target_pot is not None:
        tgt = discretize(target_pot, config.resolution, box=config.box_override.get("target"))
    return src, tgt


def _certify(pot, name):
    res = _CERT_RESOLUTION.get(pot.dim, 21)
    lo, hi = certify_bounds(pot, res)
    return {"name": pot.name, "params": pot.params, "alpha": pot.alpha,
            "beta": pot.beta if np.isfinite(pot.beta) else "inf",
            "observed_alpha": lo, "observed_beta": hi}


def _solve_all(config, src, tgt, runs):
    tol = config.tolerances
    duals_by_eps = []
    previous = None
    for eps in sorted(config.epsilon_list, reverse=True):
        duals = solve(src, tgt, eps, tol=tol["marginal"], max_iter=int(tol["max_iter"]), init=previous)
        runs.append({"epsilon": eps, "iterations": duals.iterations,
                     "final_marginal_error": duals.final_marginal_error})
        duals_by_eps.append(duals)
        previous = duals
    return duals_by_eps


def _spectral_rows(report):
    rows = []
    for k, q in enumerate(report.queries):
        lo, hi = report.lambda_min[k], report.lambda_max[k]
        rows.append([report.epsilon, *q.tolist(), lo, hi, report.lower_bound, report.upper_bound,
                     report.upper_bound - hi, lo - report.lower_bound])
    return rows


def _spectral_header(dim):
    return ["epsilon", *[f"x{i}" for i in range(dim)], *SPECTRAL_COLUMNS]


def _bound_check(report):
    return {
        "name": f"hessian-bounds eps={report.epsilon:g}",
        "passed": bool(report.passed),
        "upper_bound": report.upper_bound,
        "lower_bound": report.lower_bound if np.isfinite(report.lower_bound) else None,
        "max_lambda_max": float(report.lambda_max.max()),
        "min_lambda_min": float(report.lambda_min.min()),
        "worst_upper_margin": report.worst_upper_margin,
        "worst_lower_margin": report.worst_lower_margin if np.isfinite(report.worst_lower_margin) else None,
        "queries": int(report.queries.shape[0]),
        "queries_outside_box": int(np.count_nonzero(report.outside_box)),
    }


def _run_verify_bounds(config, ctx):
    checks, rows = [], []
    for duals in ctx["duals"]:
        queries = _query_points(config, duals, ctx["rng"])
        report = verify_hessian_bounds(duals, queries, slack=config.tolerances["slack"])
        checks.append(_bound_check(report))
        rows.extend(_spectral_rows(report))
    return checks, _spectral_header(ctx["dim"]), rows


def _gaussian_covariances(config):
    for spec in (config.source, config.target):
        if spec is None or spec.family != "gaussian":
            raise ConfigError("this experiment needs Gaussian source and target", field="source")
    return (np.atleast_2d(np.asarray(config.source.params["covariance"], dtype=float)),
            np.atleast_2d(np.asarray(config.target.params["covariance"], dtype=float)))


def _run_gaussian_sharpness(config, ctx):
    a, b = _gaussian_covariances(config)
    checks, rows = [], []
    for duals in ctx["duals"]:
        queries = _query_points(config, duals, ctx["rng"])
        report = verify_hessian_bounds(duals, queries, slack=config.tolerances["slack"])
        rows.extend(_spectral_rows(report))
        expected = float(np.linalg.eigvalsh(entropic_gaussian_hessian(a, b, duals.epsilon))[-1])
        measured = float(report.lambda_max.max())
        rel = abs(measured - expected) / expected
        checks.append({
            "name": f"sharpness eps={duals.epsilon:g}",
            "passed": bool(rel <= config.tolerances["sharpness"]),
            "closed_form_lambda_max": expected,
            "measured_sup_lambda_max": measured,
            "relative_error": rel,
        })
        checks.append(_bound_check(report))
    return checks, _spectral_header(ctx["dim"]), rows


def convergence_study(config, ctx=None):
    """Sup errors of entropic maps and Hessians against a Brenier oracle, per epsilon.

    The oracle map is the 1D quantile map (or the linear Gaussian map in higher
    dimension); the oracle Hessian is the Gelbrich matrix for Gaussian pairs and
    the density ratio ``p(x) / q(T(x))`` for other 1D pairs. Rows follow the
    (strictly decreasing) ``epsilon_list``.
    """
    if ctx is None:
        ctx = _context(config)
    src, tgt = ctx["source"], ctx["target"]
    v_pot, w_pot = ctx["source_potential"], ctx["target_potential"]
    gaussian = config.source.family == "gaussian" and config.target.family == "gaussian"
    dim = src.dim
    if dim > 1 and not gaussian:
        raise ConfigError("convergence needs a 1D problem or a Gaussian pair (no Brenier oracle "
                          "is available otherwise)", field="source")

    if gaussian:
        a, b = _gaussian_covariances(config)
        hess_oracle = gelbrich_hessian(a, b)
        m_p = np.asarray(config.source.params.get("mean", [0.0] * dim), dtype=float)
        m_q = np.asarray(config.target.params.get("mean", [0.0] * dim), dtype=float)

    rows = []
    for duals in ctx["duals"]:
        queries = _query_points(config, duals, ctx["rng"])
        if dim == 1:
            oracle_map = quantile_map_1d(src, tgt, queries[:, 0])[:, None]
        else:
            oracle_map = (queries - m_p) @ hess_oracle + m_q
        if gaussian:
            oracle_hess = np.broadcast_to(hess_oracle, (queries.shape[0], dim, dim))
        else:
            z_p = np.sum(np.exp(-v_pot.value(src.points))) * src.cell_volume
            z_q = np.sum(np.exp(-w_pot.value(tgt.points))) * tgt.cell_volume
            dens_p = np.exp(-v_pot.value(queries)) / z_p
            dens_q = np.exp(-w_pot.value(oracle_map)) / z_q
            oracle_hess = (dens_p / dens_q)[:, None, None]
        maps = entropic_map(duals, queries)
        if maps.ndim == 1:
            maps = maps[None]
        hess = hessians_at(duals, queries)
        map_err = float(np.max(np.linalg.norm(maps - oracle_map, axis=1)))
        hess_err = float(np.max(np.linalg.norm(hess - oracle_hess, ord=2, axis=(1, 2))))
        rows.append([duals.epsilon, map_err, hess_err, int(queries.shape[0])])
    return rows


def _run_convergence(config, ctx):
    rows = convergence_study(config, ctx)
    map_errors = [r[1] for r in rows]
    decreasing = all(b < a for a, b in zip(map_errors, map_errors[1:]))
    checks = [{"name": "map error strictly decreasing", "passed": bool(decreasing),
               "map_sup_errors": map_errors}]
    rate = config.tolerances.get("convergence_rate")
    if rate is not None:
        within = [r[1] <= rate * r[0] for r in rows]
        checks.append({"name": f"map error <= {rate:g} * epsilon", "passed": bool(all(within)),
                       "per_epsilon": within})
    return checks, ["epsilon", "map_sup_error", "hessian_sup_error", "queries"], rows


def _cov_rows(pot, resolution, slack, box):
    m = discretize(pot, resolution, box=box)
    hess = pot.hessian(m.points)
    cov = covariance_of(m)
    mean_inv = m.expectation(spd_inverse(hess))
    inv_mean = spd_inverse(m.expectation(hess))
    bl = brascamp_lieb_check(pot, resolution, slack=slack, box=box)
    cr = cramer_rao_check(pot, resolution, slack=slack, box=box)
    jensen = float(extreme_eigenvalues(mean_inv - inv_mean)[0])
    residual = score_identity_residual(pot, resolution, box=box)
    return [
        (pot.name, "brascamp-lieb", bl.margin, bl.passed),
        (pot.name, "cramer-rao", cr.margin, cr.passed),
        (pot.name, "sandwich", min(bl.margin, cr.margin), bl.passed and cr.passed),
        (pot.name, "jensen", jensen, jensen >= -slack),
        (pot.name, "score-identity-residual", residual, residual <= IDENTITY_TOL),
        (pot.name, "covariance-trace", float(np.trace(cov)), True),
    ]


def _run_cov_ineq(config, ctx):
    slack = config.tolerances["cov_slack"]
    rows = _cov_rows(ctx["source_potential"], config.resolution, slack,
                     config.box_override.get("source"))
    if ctx["target_potential"] is not None:
        rows += _cov_rows(ctx["target_potential"], config.resolution, slack,
                          config.box_override.get("target"))
    checks = [{"name": f"{r[0]} {r[1]}", "passed": bool(r[3]), "value": r[2]} for r in rows]
    return checks, ["measure", "check", "value", "passed"], [list(r) for r in rows]


def _run_pointwise(config, ctx):
    checks, rows = [], []
    slack = config.tolerances["pointwise_slack"]
    for duals in ctx["duals"]:
        qx = _query_points(config, duals, ctx["rng"])
        qy = entropic_map(duals, qx)
        if qy.ndim == 1:
            qy = qy[None]
        rep = verify_pointwise_inequalities(duals, ctx["source_potential"], ctx["target_potential"], qx, qy,
                            slack=slack)
        checks.append({"name": f"pointwise inequalities eps={duals.epsilon:g}",
                       "passed": bool(rep.passed), "worst_margin": rep.worst_margin,
                       "notes": rep.notes})
        for side, pts, margins in (("x", rep.queries_x, rep.margins_x),
                                   ("y", rep.queries_y, rep.margins_y)):
            for q, mgn in zip(pts, margins):
                rows.append([duals.epsilon, side, *q.tolist(), float(mgn)])
    header = ["epsilon", "side", *[f"q{i}" for i in range(ctx["dim"])], "margin"]
    return checks, header, rows


def _run_commuting(config, ctx):
    if config.commuting is not None:
        a = np.asarray(config.commuting["A"], dtype=float)
        b = np.asarray(config.commuting["B"], dtype=float)
    else:
        a, b = _gaussian_covariances(config)
    try:
        bound = commuting_bound(a, b)
    except ValidationError as exc:
        raise ConfigError(str(exc), field="commuting") from None
    gel = gelbrich_hessian(a, b)
    gap = float(np.max(np.abs(gel - bound)))
    checks = [{"name": "gelbrich equals commuting bound", "passed": gap <= 1e-10,
               "max_abs_difference": gap, "bound": bound.tolist()}]
    rows = []
    dim = a.shape[0]
    if ctx["duals"]:
        src_res = _CERT_RESOLUTION.get(dim, 21)
        certify_matrix_bound(ctx["source_potential"], src_res, upper=np.linalg.inv(a))
        certify_matrix_bound(ctx["target_potential"], src_res, lower=np.linalg.inv(b))
        deficits = []
        slack = config.tolerances["commuting_slack"]
        for duals in ctx["duals"]:
            queries = _query_points(config, duals, ctx["rng"])
            rep = verify_commuting_bound(duals, a, b, queries, slack=slack)
            deficits.append(max(0.0, -rep.worst_margin))
            checks.append({"name": f"commuting bound eps={duals.epsilon:g}",
                           "passed": bool(rep.passed), "worst_margin": rep.worst_margin,
                           "tolerance": rep.tolerance})
            for q, mgn in zip(rep.queries, rep.margins):
                rows.append([duals.epsilon, *q.tolist(), float(mgn)])
        order = np.argsort([-d.epsilon for d in ctx["duals"]])
        trend = [deficits[i] for i in order]
        checks.append({"name": "bound deficit nonincreasing as epsilon decreases",
                       "passed": all(y <= x for x, y in zip(trend, trend[1:])),
                       "deficits": trend})
    header = ["epsilon", *[f"x{i}" for i in range(dim)], "margin"]
    return checks, header, rows


_RUNNERS = {
    "verify-bounds": _run_verify_bounds,
    "gaussian-sharpness": _run_gaussian_sharpness,
    "convergence": _run_convergence,
    "cov-ineq": _run_cov_ineq,
    "pointwise": _run_pointwise,
    "commuting": _run_commuting,
}


def _context(config, runs=None):
    runs = [] if runs is None else runs
    v_pot = build_potential(config.source)
    w_pot = build_potential(config.target) if config.target is not None else None
    if w_pot is not None and w_pot.dim != v_pot.dim:
        raise ConfigError("source and target dimensions differ", field="target")
    certificates = {"source": _certify(v_pot, "source")}
    if w_pot is not None:
        certificates["target"] = _certify(w_pot, "target")
    needs_solver = config.experiment != "cov-ineq" and w_pot is not None and config.epsilon_list
    src, tgt = (None, None)
    duals = []
    if needs_solver:
        src, tgt = _measures(config, v_pot, w_pot)
        duals = _solve_all(config, src, tgt, runs)
    return {
        "source_potential": v_pot, "target_potential": w_pot, "source": src, "target": tgt,
        "duals": duals, "dim": v_pot.dim, "certificates": certificates,
        "rng": np.random.default_rng(config.seed),
    }


def _format(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return str(value)


def table_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if np.isfinite(val) else str(val)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_experiment(config):
    """Run one configured experiment.

    Returns ``(exit_code, report, table)`` where ``report`` is a JSON-ready dict
    and ``table`` the CSV text. Files named in ``config.output`` are written.
    Exit codes: 0 pass, 1 check or certification failure, 2 configuration
    error, 3 solver non-convergence.
    """
    runs = []
    report = {
        "entrolip_version": __version__,
        "experiment": config.experiment,
        "config": config.raw,
        "resolution": config.resolution,
        "seed": config.seed,
    }
    header, rows = [], []
    try:
        ctx = _context(config, runs)
        report["measures"] = ctx["certificates"]
        if ctx["source"] is not None:
            report["measures"]["source"]["box"] = ctx["source"].bounding_box()
            report["measures"]["target"]["box"] = ctx["target"].bounding_box()
        checks, header, rows = _RUNNERS[config.experiment](config, ctx)
        report["checks"] = checks
        code = EXIT_PASS if all(c["passed"] for c in checks) else EXIT_FAIL
    except SinkhornNonConvergence as exc:
        report["error"] = {"kind": "non-convergence", "message": str(exc),
                           "epsilon": exc.duals.epsilon, "error_trace": list(exc.error_trace)}
        code = EXIT_NONCONVERGENCE
    except CertificationError as exc:
        report["error"] = {"kind": "certification", "message": str(exc)}
        code = EXIT_FAIL
    except (ConfigError, ValidationError) as exc:
        report["error"] = {"kind": "config", "message": str(exc)}
        code = EXIT_CONFIG
    report["solver_runs"] = runs
    report["status"] = {EXIT_PASS: "pass", EXIT_FAIL: "fail", EXIT_CONFIG: "config-error",
                        EXIT_NONCONVERGENCE: "non-convergence"}[code]
    report["exit_code"] = code
    report = _jsonable(report)
    table = table_text(header, rows) if header else ""

    if "report" in config.output:
        Path(config.output["report"]).write_text(json.dumps(report, indent=2) + "\n")
    if "table" in config.output:
        Path(config.output["table"]).write_text(table)
    return code, report, table
