"""Volume sweeps: optimize an obstacle per ``eps`` and tabulate the asymptotic quantities."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ..capacity import stability_ratio
from ..errors import NumericError, ParameterError, UndefinedRatioError
from ..geometry.domains import faber_krahn_threshold
from ..geometry.hausdorff import directed_hausdorff
from ..mesh import refine, triangulate
from ..optimize import ObstacleProblem, greedy_freeform, parametric_search
from ..spectral import J01, boundary_gradient, disk_reference, free_boundary_gradient

log = logging.getLogger(__name__)


@dataclass
class SweepRecord:
    eps: float
    lam0: float
    lam: float = math.nan
    dlam: float = math.nan
    cap: float = math.nan
    ratio: float = math.nan
    cap_over_eps: float = math.nan
    dlam_over_eps: float = math.nan
    sqrt_Lambda: float = math.nan
    Lambda_iqr: float = math.nan
    Lambda_min: float = math.nan
    Lambda_max: float = math.nan
    boundary_integral: float = math.nan
    h1_diff_D: float = math.nan
    h1_diff_omega: float = math.nan
    l2_diff_D: float = math.nan
    l2_diff_omega: float = math.nan
    hausdorff: float = math.nan
    mass_fraction: float = math.nan
    anchor: float = math.nan
    width: float = math.nan
    volume: float = math.nan
    zero_area: float = math.nan
    seconds: float = math.nan
    error: str = ""


COLUMNS = [f.name for f in fields(SweepRecord)]


@dataclass(frozen=True)
class SlopeEstimate:
    slope: float
    intercept: float
    residual: float
    method: str
    richardson: float


def estimate_slope(points) -> SlopeEstimate:
    """Least-squares line through the smallest half of the ``eps`` values.

    ``richardson`` is the two-point extrapolation of ``value / eps`` to
    ``eps = 0`` from the two smallest ``eps``, assuming a linear correction.
    """
    pts = sorted((float(e), float(v)) for e, v in points)
    if len(pts) < 3:
        raise ParameterError("need at least 3 points")
    if len({e for e, _ in pts}) != len(pts):
        raise ParameterError("eps values must be distinct")
    k = max(2, math.ceil(len(pts) / 2))
    x = np.array([e for e, _ in pts[:k]])
    y = np.array([v for _, v in pts[:k]])
    A = np.stack([x, np.ones_like(x)], 1)
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ [a, b] - y) ** 2)))
    (e1, v1), (e2, v2) = pts[0], pts[1]
    q1, q2 = v1 / e1, v2 / e2
    rich = (e2 * q1 - e1 * q2) / (e2 - e1)
    return SlopeEstimate(float(a), float(b), resid, f"lsq-smallest-{k}", float(rich))


def build_problem(cfg):
    mesh = triangulate(cfg.domain, cfg.h, cfg.layer)
    for _ in range(cfg.refinements):
        mesh = refine(mesh)
    return ObstacleProblem(mesh, tol=cfg.tol)


def argmin_points(profile, domain, flat_tol=0.03):
    """Sample points of the argmin set of the boundary-gradient profile.

    A profile flat within ``flat_tol`` counts as minimal everywhere.
    """
    if profile.is_flat(flat_tol):
        s = profile.s
    else:
        s = profile.minima()
    return domain.curve(domain.param_of_arc(np.asarray(s)))[0].reshape(-1, 2), profile.is_flat(flat_tol)


def mass_within(region, points, delta):
    from scipy.spatial import cKDTree

    x, w = region.quadrature()
    d, _ = cKDTree(points).query(x)
    return float(w[d <= delta].sum() / w.sum())


def _split_norms(problem, cand, diff):
    mesh = problem.mesh
    support = ~cand.classification.constrained[mesh.triangles].all(1)
    from ..fem import cell_gradients

    g2 = np.sum(cell_gradients(mesh, diff) ** 2, axis=1) * mesh.areas
    vals = diff[mesh.triangles]
    # exact P1 mass on each cell: |T|/12 (sum u_i^2 + (sum u_i)^2)
    m2 = mesh.areas / 12 * (np.sum(vals**2, 1) + np.sum(vals, 1) ** 2)
    return float(g2.sum()), float(g2[support].sum()), float(m2.sum()), float(m2[support].sum())


def boundary_integral(mesh, zero_cells, phi0):
    """Trapezoid integral of ``phi0`` over the boundary of a union of cells (mask or indices).

    Edges on the outer boundary carry ``phi0 = 0`` and drop out, so the
    result is the integral over the part of the boundary inside ``D``.
    """
    cells = np.asarray(zero_cells)
    cells = np.flatnonzero(cells) if cells.dtype == bool else cells.astype(np.int64)
    tri = mesh.triangles[cells]
    if len(tri) == 0:
        return 0.0
    e = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    uniq, count = np.unique(e, axis=0, return_counts=True)
    e = uniq[count == 1]
    length = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    return float(np.sum(length * 0.5 * (phi0[e[:, 0]] + phi0[e[:, 1]])))


def evaluate_eps(problem, cfg, eps, argmin, start=None):
    """Optimize at one ``eps`` and fill a :class:`SweepRecord`."""
    t0 = time.perf_counter()
    rec = SweepRecord(eps=eps, lam0=problem.lam0)
    if cfg.optimizer == "greedy":
        res = greedy_freeform(problem, eps, rounds=cfg.rounds, resolve_every=cfg.resolve_every)
    else:
        res = parametric_search(problem, eps, cfg.width_for(eps), grid=cfg.anchor_grid,
                                profile=cfg.profile, offset=cfg.anchor_offset)
        rec.anchor = res.best.provenance["s0"]
        rec.width = cfg.width_for(eps)
    cand = res.best
    mesh = problem.mesh
    rec.lam = cand.eigenvalue
    rec.dlam = rec.lam - rec.lam0
    rec.cap = cand.capacity
    rec.volume = cand.region.volume
    zero = cand.classification.constrained[mesh.triangles].all(1)
    rec.zero_area = float(mesh.areas[zero].sum())
    # experimental: tends to min |grad phi0| but the ragged edge set is not a surface measure
    rec.boundary_integral = boundary_integral(mesh, zero, problem.base.field) / eps
    try:
        rec.ratio = stability_ratio(rec.lam, rec.lam0, rec.cap)
    except UndefinedRatioError:
        pass
    rec.cap_over_eps = rec.cap / eps
    rec.dlam_over_eps = rec.dlam / eps
    try:
        fb = free_boundary_gradient(cand.pair, mesh, cand.classification)
        rec.sqrt_Lambda, rec.Lambda_iqr = fb.median, fb.iqr
        rec.Lambda_min, rec.Lambda_max = fb.min, fb.max
    except ParameterError as exc:
        log.info("no free-boundary estimate at eps=%g: %s", eps, exc)
    diff = cand.pair.field - problem.base.field
    rec.h1_diff_D, rec.h1_diff_omega, rec.l2_diff_D, rec.l2_diff_omega = _split_norms(problem, cand, diff)
    pts, _ = argmin
    rec.hausdorff = directed_hausdorff(cand.region.boundary_samples(512), pts)
    rec.mass_fraction = mass_within(cand.region, pts, cfg.delta_for(eps))
    rec.seconds = time.perf_counter() - t0
    return rec, res


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class SweepReport:
    records: list
    lam0: float
    profile: object
    summary: dict
    results: list


def target_constant(cfg, profile):
    """``min |grad phi0|^2``: the Bessel oracle on disks, the FEM profile otherwise."""
    if cfg.domain.kind == "disk":
        return disk_reference(cfg.domain.radius).boundary_gradient ** 2
    return profile.min_value**2


def _monotone_toward(seq, target):
    seq = [q for q in seq if np.isfinite(q)]
    if len(seq) < 2:
        return False
    d = np.diff(seq)
    mono = bool(np.all(d <= 0) or np.all(d >= 0))
    return mono and abs(seq[-1] - target) < abs(seq[0] - target)


def _decreasing(seq):
    seq = np.asarray(seq, dtype=float)
    return bool(len(seq) >= 2 and np.all(np.isfinite(seq)) and np.all(np.diff(seq) < 0))


def summarize(cfg, records, lam0, profile, argmin_flat):
    """Slopes, limits and the pass/fail flags of the configured checks."""
    ok = [r for r in records if not r.error]
    target = target_constant(cfg, profile)
    out = {
        "domain": cfg.domain.params(),
        "h": cfg.h,
        "n_records": len(records),
        "lam0": lam0,
        "min_grad": float(math.sqrt(target)),
        "min_grad_sq": float(target),
        "profile_min": profile.min_value,
        "profile_flat": argmin_flat,
        "argmin_s": [float(s) for s in profile.minima()] if not argmin_flat else [],
    }
    checks = {}
    if len(ok) >= 3:
        est = estimate_slope([(r.eps, r.dlam) for r in ok])
        cap_est = estimate_slope([(r.eps, r.cap) for r in ok])
        out["slope"] = asdict(est)
        out["cap_slope"] = asdict(cap_est)
        checks["slope"] = abs(est.slope / target - 1) <= cfg.slope_rtol
    if ok:
        last = ok[-1]
        q = [r.cap_over_eps for r in ok]
        checks["capacity"] = abs(last.cap_over_eps / target - 1) <= cfg.capacity_rtol and _monotone_toward(q, target)
        lo, hi = cfg.ratio_range
        checks["ratio"] = bool(lo <= last.ratio <= hi)
        checks["l2"] = _decreasing([r.l2_diff_D / r.cap if r.cap > 0 else math.nan for r in ok])
        g = math.sqrt(target)
        checks["free_boundary"] = bool(
            abs(last.sqrt_Lambda / g - 1) <= cfg.free_boundary_rtol and _decreasing([r.Lambda_iqr for r in ok])
        )
        if cfg.optimizer == "parametric" and not argmin_flat:
            L = cfg.domain.boundary_length
            cen = np.asarray(out["argmin_s"])
            dist = [float(np.min(np.abs((r.anchor - cen + L / 2) % L - L / 2))) for r in ok]
            out["anchor_distance"] = dist
            checks["anchor"] = bool(len(cen) > 0 and max(dist) <= cfg.anchor_tol * L)
        checks["concentration"] = bool(
            last.mass_fraction >= cfg.mass_fraction and _decreasing([r.hausdorff for r in ok])
        )
        eps0 = faber_krahn_threshold(cfg.domain)
        fk = [r for r in ok if r.eps >= eps0]
        if fk:
            area = cfg.domain.area
            rel = [r.lam / (J01**2 * math.pi / (area - r.eps)) - 1 for r in fk]
            out["faber_krahn_rel"] = rel
            checks["faber_krahn"] = bool(max(abs(x) for x in rel) <= cfg.lambda_rtol)
        out["smallest"] = asdict(last)
    checks = {k: bool(v) for k, v in checks.items()}
    out["checks"] = checks
    if cfg.checks:
        out["passed"] = all(checks.get(c, False) for c in cfg.checks) and len(ok) == len(records)
    else:
        out["passed"] = len(ok) == len(records)
    return out


def run_sweep(cfg, out_dir=None, problem=None) -> SweepReport:
    """Run every ``eps`` of ``cfg`` in order, appending rows to ``sweep.csv`` as they finish."""
    t0 = time.perf_counter()
    problem = build_problem(cfg) if problem is None else problem
    profile = boundary_gradient(problem.base, problem.mesh)
    argmin = argmin_points(profile, cfg.domain)
    out_dir = Path(out_dir) if out_dir is not None else None
    writer = None
    fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "profile.csv").write_text(profile.to_csv())
        fh = open(out_dir / "sweep.csv", "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        fh.flush()
    records, results = [], []
    try:
        for eps in cfg.eps:
            try:
                rec, res = evaluate_eps(problem, cfg, eps, argmin)
                results.append(res)
            except (ParameterError, NumericError, ArithmeticError, RuntimeError) as exc:
                log.warning("eps=%g failed: %s", eps, exc)
                rec = SweepRecord(eps=eps, lam0=problem.lam0, error=f"{type(exc).__name__}: {exc}")
                results.append(None)
            records.append(rec)
            if writer is not None:
                writer.writerow([_fmt(getattr(rec, c)) for c in COLUMNS])
                fh.flush()
    finally:
        if fh is not None:
            fh.close()
    summary = summarize(cfg, records, problem.lam0, profile, argmin[1])
    summary["wall_time"] = time.perf_counter() - t0
    if out_dir is not None:
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, default=float))
    return SweepReport(records, problem.lam0, profile, summary, results)


def concentration_report(records, argmin_points_, delta, regions=None):
    """Per-``eps`` Hausdorff distance and mass fraction near the argmin set.

    ``regions`` (optional) supplies the obstacle of each record; otherwise
    the values stored on the records are returned.
    """
    if not records:
        raise ParameterError("no records")
    rows = []
    for i, rec in enumerate(records):
        if regions is not None:
            reg = regions[i]
            hd = directed_hausdorff(reg.boundary_samples(512), argmin_points_)
            mf = mass_within(reg, argmin_points_, delta)
        else:
            hd, mf = rec.hausdorff, rec.mass_fraction
        rows.append({"eps": rec.eps, "hausdorff": hd, "mass_fraction": mf})
    hs = [r["hausdorff"] for r in rows]
    ms = [r["mass_fraction"] for r in rows]
    return {
        "rows": rows,
        "hausdorff_decreasing": _decreasing(hs),
        "mass_fraction_nondecreasing": bool(np.all(np.diff(ms) >= -1e-12)),
    }
