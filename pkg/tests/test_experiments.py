import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from spectral_obstacles.errors import ConfigError, ParameterError
from spectral_obstacles.experiments import (
    argmin_points,
    boundary_integral,
    concentration_report,
    estimate_slope,
    load_config,
    parse_config,
    run_sweep,
)
from spectral_obstacles.experiments.cli import main
from spectral_obstacles.experiments.sweep import COLUMNS, SweepRecord, summarize
from spectral_obstacles.geometry import CellRegion, DomainSpec
from spectral_obstacles.mesh import triangulate
from spectral_obstacles.optimize import ObstacleProblem
from spectral_obstacles.spectral import boundary_gradient

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = """
[domain]
kind = disk

[mesh]
h = 0.1

[sweep]
eps = 0.02, 0.01, 0.005
"""


# ---------------------------------------------------------------- slope


def test_slope_of_exact_linear_data():
    est = estimate_slope([(e, 1.84 * e) for e in (0.004, 0.002, 0.001, 0.0005)])
    assert est.slope == pytest.approx(1.84, rel=1e-12)
    assert est.residual == pytest.approx(0, abs=1e-15)
    assert est.richardson == pytest.approx(1.84, rel=1e-12)


def test_slope_with_quadratic_contamination():
    eps = np.array([0.004, 0.002, 0.001, 0.0005])
    est = estimate_slope(zip(eps, 1.84 * eps + 5 * eps**2))
    assert est.slope == pytest.approx(1.84, rel=0.02)
    # the two-point extrapolation removes the linear correction exactly
    assert est.richardson == pytest.approx(1.84, rel=1e-10)


def test_slope_of_constant_data():
    assert estimate_slope([(e, 3.0) for e in (0.3, 0.2, 0.1)]).slope == pytest.approx(0, abs=1e-12)


def test_slope_needs_three_distinct_points():
    with pytest.raises(ParameterError):
        estimate_slope([(0.1, 1.0), (0.2, 2.0)])
    with pytest.raises(ParameterError):
        estimate_slope([(0.1, 1.0), (0.1, 1.0), (0.2, 2.0)])


# ---------------------------------------------------------------- config


def test_parse_minimal_config():
    cfg = parse_config(BASE)
    assert cfg.domain.kind == "disk"
    assert cfg.eps == [0.02, 0.01, 0.005]
    assert cfg.layer is None
    assert cfg.delta_for(0.01) == pytest.approx(4 * cfg.width)


def test_width_exponent_scaling():
    cfg = parse_config(BASE + "[obstacle]\nwidth = 0.3\nwidth_exponent = 0.5\n")
    assert cfg.width_for(0.02) == pytest.approx(0.3)
    assert cfg.width_for(0.005) == pytest.approx(0.15)


@pytest.mark.parametrize("name", ["disk_sweep.ini", "ellipse_sweep.ini", "square_fk.ini", "quick.ini"])
def test_shipped_configs_parse(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.eps


def test_missing_eps_names_the_field():
    text = BASE.replace("eps = 0.02, 0.01, 0.005", "")
    with pytest.raises(ConfigError, match="sweep.eps"):
        parse_config(text, "cfg.ini")


def test_bad_value_reports_line_number():
    text = BASE.replace("h = 0.1", "h = fine")
    with pytest.raises(ConfigError, match=r"cfg.ini:6: field 'mesh.h'"):
        parse_config(text, "cfg.ini")


@pytest.mark.parametrize(
    "old, new, field",
    [
        ("kind = disk", "kind = torus", "domain.kind"),
        ("h = 0.1", "h = 2.0", "mesh.h"),
        ("eps = 0.02, 0.01, 0.005", "eps = 0.01, 0.02", "sweep.eps"),
        ("eps = 0.02, 0.01, 0.005", "eps = 0.01, -0.02", "sweep.eps"),
    ],
)
def test_invalid_fields(old, new, field):
    with pytest.raises(ConfigError, match=field):
        parse_config(BASE.replace(old, new), "cfg.ini")


def test_unknown_check_rejected():
    with pytest.raises(ConfigError, match="check.checks"):
        parse_config(BASE + "[check]\nchecks = slope, magic\n")


# ---------------------------------------------------------------- cli


def _write(tmp_path, text):
    p = tmp_path / "cfg.ini"
    p.write_text(text)
    return str(p)


def test_cli_missing_eps_exits_2(tmp_path, capsys):
    path = _write(tmp_path, BASE.replace("eps = 0.02, 0.01, 0.005", ""))
    assert main(["sweep", path, "--out", str(tmp_path / "o")]) == 2
    assert "sweep.eps" in capsys.readouterr().err


def test_cli_unreadable_config_exits_2(tmp_path):
    assert main(["solve", str(tmp_path / "nope.ini")]) == 2


def test_cli_solve_writes_profile(tmp_path):
    path = _write(tmp_path, BASE)
    out = tmp_path / "o"
    assert main(["solve", path, "--out", str(out), "--check"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["profile_flat"]
    assert abs(summary["rel_error"]) < 0.05
    assert (out / "profile.csv").read_text().startswith("s,grad_estimate")


def test_cli_failed_check_exits_1(tmp_path):
    path = _write(tmp_path, BASE + "[check]\noracle_rtol = 1e-9\n")
    assert main(["solve", path, "--out", str(tmp_path / "o"), "--check"]) == 1
    assert main(["solve", path, "--out", str(tmp_path / "o")]) == 0


def test_cli_capacity(tmp_path):
    path = _write(tmp_path, BASE.replace("h = 0.1", "h = 0.05") + "[obstacle]\nwidth = 0.45\n")
    out = tmp_path / "o"
    assert main(["capacity", path, "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "capacity.csv")))
    assert float(rows[0]["cap"]) > 0


def test_cli_validate_meets_oracles(tmp_path):
    out = tmp_path / "v"
    assert main(["validate", "--out", str(out), "--check"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert all(summary["checks"].values())


# ---------------------------------------------------------------- sweep


@pytest.fixture(scope="module")
def quick(tmp_path_factory):
    out = tmp_path_factory.mktemp("quick")
    cfg = load_config(CONFIGS / "quick.ini")
    return cfg, run_sweep(cfg, out), out


def test_sweep_writes_contract_files(quick):
    cfg, rep, out = quick
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert list(rows[0]) == COLUMNS
    assert [float(r["eps"]) for r in rows] == cfg.eps
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["checks"]) >= {"ratio", "l2", "free_boundary"}
    assert (out / "profile.csv").exists()


def test_derived_columns_recompute(quick):
    _, _, out = quick
    for r in csv.DictReader(open(out / "sweep.csv")):
        v = {k: float(x) for k, x in r.items() if k != "error"}
        assert v["dlam"] == pytest.approx(v["lam"] - v["lam0"], abs=1e-12)
        assert v["ratio"] == pytest.approx(v["dlam"] / v["cap"], abs=1e-12)
        assert v["cap_over_eps"] == pytest.approx(v["cap"] / v["eps"], abs=1e-12)
        assert v["dlam_over_eps"] == pytest.approx(v["dlam"] / v["eps"], abs=1e-12)


def test_sweep_records_are_consistent(quick):
    _, rep, _ = quick
    lams = [r.lam for r in rep.records]
    assert all(not r.error for r in rep.records)
    assert all(lam >= rep.lam0 for lam in lams)
    # smaller obstacles perturb the eigenvalue less
    assert lams[0] > lams[-1]
    for r in rep.records:
        assert r.h1_diff_D >= r.h1_diff_omega >= 0
        assert r.l2_diff_D >= r.l2_diff_omega >= 0
        assert r.volume == pytest.approx(r.eps, rel=1e-3)
        assert r.boundary_integral > 0


def test_disk_argmin_is_whole_boundary(quick):
    _, rep, _ = quick
    pts, flat = argmin_points(rep.profile, DomainSpec.disk())
    assert flat
    assert len(pts) == len(rep.profile.s)


def test_failed_eps_is_recorded_not_fatal(tmp_path):
    cfg = parse_config(BASE.replace("h = 0.1", "h = 0.05") + "[obstacle]\nwidth = 0.45\nanchor_grid = 1\n")
    cfg.eps = [0.5, 0.01, 0.005]
    rep = run_sweep(cfg, tmp_path)
    assert rep.records[0].error
    assert not rep.records[1].error
    assert not rep.summary["passed"]


def test_summarize_flags_on_synthetic_records():
    cfg = parse_config(BASE + "[check]\nchecks = slope, capacity, ratio, l2\n")
    target = 2.404825557695773**2 / math.pi
    recs = []
    for e in (0.004, 0.002, 0.001, 0.0005):
        cap = target * e * (1 + 10 * e)
        dl = cap * (1 + e)
        recs.append(SweepRecord(eps=e, lam0=5.78, lam=5.78 + dl, dlam=dl, cap=cap, ratio=dl / cap,
                                cap_over_eps=cap / e, dlam_over_eps=dl / e, l2_diff_D=cap * e, hausdorff=0.0,
                                mass_fraction=1.0))
    prof = boundary_gradient.__globals__["BoundaryGradientProfile"](
        np.linspace(0, 2 * math.pi, 8, endpoint=False), np.full(8, 1.35), np.arange(8), 2 * math.pi)
    out = summarize(cfg, recs, 5.78, prof, True)
    assert out["checks"]["slope"] and out["checks"]["capacity"] and out["checks"]["ratio"] and out["checks"]["l2"]
    assert out["passed"]
    recs[-1].ratio = 1.2
    assert not summarize(cfg, recs, 5.78, prof, True)["passed"]


# ---------------------------------------------------------------- concentration


def test_concentration_report_with_regions():
    m = triangulate(DomainSpec.disk(), 0.05)
    pts = np.array([[1.0, 0.0]])
    c = m.vertices[m.triangles].mean(1)
    d = np.hypot(*(c - pts[0]).T)
    regions = [CellRegion(m, np.flatnonzero(d < r)) for r in (0.4, 0.2, 0.1)]
    recs = [SweepRecord(eps=reg.volume, lam0=0.0) for reg in regions]
    rep = concentration_report(recs, pts, 0.2, regions)
    assert rep["hausdorff_decreasing"]
    assert rep["mass_fraction_nondecreasing"]
    assert rep["rows"][-1]["mass_fraction"] == 1.0
    # a set of diameter d around the point stays within distance d of it
    assert all(r["hausdorff"] <= 2 * rad + 0.05 for r, rad in zip(rep["rows"], (0.4, 0.2, 0.1)))


def test_boundary_integral_over_cell_union():
    m = triangulate(DomainSpec.square(), 0.25)
    phi = np.ones(m.n_vertices)
    # integral of 1 over the boundary of the whole square is its perimeter
    assert boundary_integral(m, np.arange(m.n_triangles), phi) == pytest.approx(4.0)
    # the outer edges drop out once phi vanishes there
    x, y = m.vertices.T
    phi = x * (1 - x) * y * (1 - y)
    assert boundary_integral(m, np.arange(m.n_triangles), phi) == pytest.approx(0.0, abs=1e-15)
    assert boundary_integral(m, [], phi) == 0.0


def test_problem_reuse_in_sweep(tmp_path):
    cfg = load_config(CONFIGS / "quick.ini")
    cfg.eps = [0.02, 0.01, 0.005]
    prob = ObstacleProblem(triangulate(cfg.domain, cfg.h, cfg.layer), tol=cfg.tol)
    rep = run_sweep(cfg, None, prob)
    assert rep.lam0 == prob.lam0
