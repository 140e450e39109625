"""INI experiment configuration with line-numbered diagnostics."""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError, ParameterError
from ..geometry.domains import DomainSpec, inradius
from ..mesh import BoundaryLayer

OPTIMIZERS = ("parametric", "greedy")
CHECKS = ("slope", "capacity", "ratio", "l2", "free_boundary", "anchor", "concentration", "faber_krahn")


@dataclass
class ExperimentConfig:
    domain: DomainSpec
    h: float
    refinements: int = 0
    layer: BoundaryLayer | None = None
    eps: list = field(default_factory=list)
    optimizer: str = "parametric"
    width: float = 0.4
    width_exponent: float = 0.0
    profile: str = "cos2"
    anchor_grid: int = 16
    anchor_offset: float = 0.5
    anchor: float = 0.0
    rounds: int = 20
    resolve_every: int = 10
    tol: float = 1e-7
    delta: float | None = None
    output: Path = Path("out")
    checks: tuple = ()
    slope_rtol: float = 0.10
    capacity_rtol: float = 0.10
    ratio_range: tuple = (0.90, 1.10)
    free_boundary_rtol: float = 0.15
    anchor_tol: float = 0.05
    mass_fraction: float = 0.9
    lambda_rtol: float = 0.02
    oracle_rtol: float = 0.005
    source: str | None = None

    def width_for(self, eps):
        """Bump width at ``eps``: ``width * (eps / eps_max) ** width_exponent``."""
        if not self.width_exponent or not self.eps:
            return self.width
        return self.width * (eps / max(self.eps)) ** self.width_exponent

    def delta_for(self, eps):
        return self.delta if self.delta is not None else 4 * self.width_for(eps)


class _Reader:
    def __init__(self, parser, lines, source):
        self.p = parser
        self.lines = lines
        self.source = source

    def where(self, section, key):
        sec = None
        for i, line in enumerate(self.lines, 1):
            m = re.match(r"\s*\[([^\]]+)\]", line)
            if m:
                sec = m.group(1).strip()
                continue
            if sec == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
                return f"{self.source}:{i}"
        return f"{self.source}: [{section}]"

    def fail(self, section, key, msg):
        raise ConfigError(f"{self.where(section, key)}: field '{section}.{key}': {msg}")

    def has(self, section, key):
        return self.p.has_option(section, key)

    def raw(self, section, key, default=None, required=False):
        if self.p.has_option(section, key):
            return self.p.get(section, key).strip()
        if required:
            raise ConfigError(f"{self.source}: missing required field '{section}.{key}'")
        return default

    def num(self, section, key, default=None, required=False, kind=float, positive=False):
        v = self.raw(section, key, None, required)
        if v is None:
            return default
        try:
            x = kind(v)
        except ValueError:
            self.fail(section, key, f"expected a {kind.__name__}, got {v!r}")
        if positive and not x > 0:
            self.fail(section, key, f"must be positive, got {v}")
        return x

    def floats(self, section, key, required=False):
        v = self.raw(section, key, None, required)
        if v is None:
            return []
        try:
            return [float(t) for t in re.split(r"[,\s]+", v) if t]
        except ValueError:
            self.fail(section, key, f"expected a comma-separated list of numbers, got {v!r}")


def _domain(rd):
    kind = rd.raw("domain", "kind", required=True)
    try:
        if kind == "disk":
            return DomainSpec.disk(rd.num("domain", "radius", 1.0, positive=True))
        if kind == "ellipse":
            return DomainSpec.ellipse(rd.num("domain", "a", required=True, positive=True),
                                      rd.num("domain", "b", required=True, positive=True))
        if kind == "square":
            return DomainSpec.square(rd.num("domain", "side", 1.0, positive=True))
        if kind == "polar":
            vals = rd.floats("domain", "modes", required=True)
            if len(vals) % 3:
                rd.fail("domain", "modes", "expected triples k, c_k, d_k")
            modes = [(int(vals[i]), vals[i + 1], vals[i + 2]) for i in range(0, len(vals), 3)]
            return DomainSpec.polar(rd.num("domain", "radius", 1.0, positive=True), modes)
    except ParameterError as exc:
        rd.fail("domain", "kind", str(exc))
    rd.fail("domain", "kind", f"unknown kind {kind!r}; choose disk, ellipse, square or polar")


def parse_config(text, source="<config>", need_eps=True) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    rd = _Reader(parser, text.splitlines(), source)
    domain = _domain(rd)
    h = rd.num("mesh", "h", required=True, positive=True)
    if not h < inradius(domain):
        rd.fail("mesh", "h", f"must be below the inradius {inradius(domain):.6g}")
    layer = None
    if rd.has("mesh", "layer_spacing"):
        try:
            layer = BoundaryLayer(
                depth=rd.num("mesh", "layer_depth", 0.02, positive=True),
                spacing=rd.num("mesh", "layer_spacing", positive=True),
                growth=rd.num("mesh", "layer_growth", 1.08),
                uniform_depth=rd.num("mesh", "layer_uniform_depth", 0.0),
            )
        except ParameterError as exc:
            rd.fail("mesh", "layer_spacing", str(exc))
    eps = rd.floats("sweep", "eps", required=need_eps)
    if eps:
        if any(e <= 0 for e in eps):
            rd.fail("sweep", "eps", "entries must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            rd.fail("sweep", "eps", "list must be strictly decreasing")
    optimizer = rd.raw("sweep", "optimizer", "parametric")
    if optimizer not in OPTIMIZERS:
        rd.fail("sweep", "optimizer", f"choose one of {', '.join(OPTIMIZERS)}")
    checks = tuple(c.strip() for c in (rd.raw("check", "checks", "") or "").split(",") if c.strip())
    for c in checks:
        if c not in CHECKS:
            rd.fail("check", "checks", f"unknown check {c!r}")
    ratio = rd.floats("check", "ratio_range") or [0.90, 1.10]
    if len(ratio) != 2 or ratio[0] >= ratio[1]:
        rd.fail("check", "ratio_range", "expected 'low, high'")
    cfg = ExperimentConfig(
        domain=domain,
        h=h,
        refinements=rd.num("mesh", "refinements", 0, kind=int),
        layer=layer,
        eps=eps,
        optimizer=optimizer,
        width=rd.num("obstacle", "width", 0.4, positive=True),
        width_exponent=rd.num("obstacle", "width_exponent", 0.0),
        profile=rd.raw("obstacle", "profile", "cos2"),
        anchor_grid=rd.num("obstacle", "anchor_grid", 16, kind=int, positive=True),
        anchor_offset=rd.num("obstacle", "anchor_offset", 0.5),
        anchor=rd.num("obstacle", "anchor", 0.0),
        rounds=rd.num("greedy", "rounds", 20, kind=int),
        resolve_every=rd.num("greedy", "resolve_every", 10, kind=int, positive=True),
        tol=rd.num("solver", "tol", 1e-7, positive=True),
        delta=rd.num("sweep", "delta", None, positive=True),
        output=Path(rd.raw("output", "directory", "out")),
        checks=checks,
        slope_rtol=rd.num("check", "slope_rtol", 0.10, positive=True),
        capacity_rtol=rd.num("check", "capacity_rtol", 0.10, positive=True),
        ratio_range=tuple(ratio),
        free_boundary_rtol=rd.num("check", "free_boundary_rtol", 0.15, positive=True),
        anchor_tol=rd.num("check", "anchor_tol", 0.05, positive=True),
        mass_fraction=rd.num("check", "mass_fraction", 0.9, positive=True),
        lambda_rtol=rd.num("check", "lambda_rtol", 0.02, positive=True),
        oracle_rtol=rd.num("check", "oracle_rtol", 0.005, positive=True),
        source=source,
    )
    if cfg.profile not in ("cos2", "quartic"):
        rd.fail("obstacle", "profile", "choose cos2 or quartic")
    if not 0 < cfg.tol < 1:
        rd.fail("solver", "tol", "must lie in (0, 1)")
    return cfg


def load_config(path, need_eps=True) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path), need_eps=need_eps)
