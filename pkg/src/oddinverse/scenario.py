"""Scenario files (YAML or JSON) describing a system, its data and a run.

Component and amplitude indices in scenario files are 1-based. Example::

    name: kdv_twin
    system: {preset: airy}
    grid: {R: 1, T: 1, Nx: 256, Nt: 512}
    manufactured:
      u: ["0"]
      F: {1: ["sin(t)"]}
      controls: {1: ["1"]}
      weights: {1: ["x**2*(1-x)"]}
    run: {method: march}
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .exceptions import ValidationRefused
from .expressions import ExprField, ExpressionError, parse
from .manufactured import ManufactureError, generate_manufactured
from .model import Coefficient, Grid, NonlinearitySpec, Overdetermination, ProblemData, SystemSpec, Weight
from .presets import PRESETS, preset


class ScenarioError(ValidationRefused):
    """Malformed scenario; the message names the offending key."""


RUN_DEFAULTS = {
    "mode": "inverse",
    "method": "march",
    "tol_picard": 1e-10,
    "max_iter": 50,
    "tol_outer": 1e-8,
    "max_outer": 50,
    "gamma0": None,
    "tol_compat": None,
    "tol_overdet": None,
    "exponent_mode": "nonstrict",
    "forward_mode": "global",
    "seed": 0,
    "levels": None,
    "error_threshold": None,
}


@dataclass
class Scenario:
    name: str
    spec: SystemSpec
    grid: Grid
    data: ProblemData
    run: dict = field(default_factory=dict)
    case: object = None
    output: str = "out"
    source: str = ""

    @property
    def manufactured(self):
        return self.case is not None

    def with_grid(self, Nx, Nt):
        return Scenario(self.name, self.spec, Grid(self.grid.R, self.grid.T, Nx, Nt), self.data, self.run, self.case, self.output, self.source)


def load_scenario(path):
    """Read a scenario file; parse failures carry the key or line."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError("cannot read scenario %s: %s" % (path, exc)) from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("%s: line %d: %s" % (path, exc.lineno, exc.msg)) from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = " line %d" % (mark.line + 1) if mark is not None else ""
        raise ScenarioError("%s:%s %s" % (path, where, exc)) from exc
    if not isinstance(raw, dict):
        raise ScenarioError("%s: top level must be a mapping" % path)
    return build_scenario(raw, base=path.parent, source=str(path))


def _at(key):
    """Decorate errors raised while reading ``key``."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, typ, exc, tb):
            if exc is None or isinstance(exc, ScenarioError):
                return False
            if isinstance(exc, (KeyError, ValueError, TypeError, ExpressionError, ManufactureError, IndexError)):
                raise ScenarioError("scenario key '%s': %s" % (key, exc)) from exc
            return False

    return _Ctx()


def build_scenario(raw, base=".", source=""):
    base = Path(base)
    name = str(raw.get("name", "scenario"))
    with _at("run"):
        run = dict(RUN_DEFAULTS)
        unknown = set(raw.get("run", {}) or {}) - set(RUN_DEFAULTS)
        if unknown:
            raise KeyError("unknown run option(s) %s" % sorted(unknown))
        run.update(raw.get("run", {}) or {})
    params = raw.get("params", {}) or {}
    with _at("system"):
        spec = _build_system(raw.get("system"), params)
    with _at("grid"):
        g = raw.get("grid") or {}
        grid = Grid(float(g.get("R", 1.0)), float(g.get("T", 1.0)), int(g["Nx"]), int(g["Nt"]))
    case = None
    if "manufactured" in raw:
        with _at("manufactured"):
            m = raw["manufactured"]
            case = generate_manufactured(
                spec,
                m["u"],
                F=_one_based(m.get("F")),
                controls=_one_based(m.get("controls")),
                weights=_one_based(m.get("weights")),
                R=grid.R,
                params=params,
            )
            data = case.problem(known_F=run["mode"] == "forward", analytic_dphi=m.get("analytic_dphi", True))
    else:
        with _at("data"):
            data = _build_data(raw.get("data") or {}, spec, grid, params, base, int(run["seed"]))
    with _at("grid"):
        grid.check_stencil(spec.l)
    return Scenario(name, spec, grid, data, run, case, str(raw.get("output", "out")), source)


def _one_based(mapping):
    if not mapping:
        return {}
    out = {}
    for key, val in mapping.items():
        i = int(key)
        if i < 1:
            raise ValueError("component indices are 1-based, got %d" % i)
        out[i - 1] = val if isinstance(val, list) else [val]
    return out


def _build_system(cfg, params):
    if cfg is None:
        raise KeyError("missing 'system'")
    if isinstance(cfg, str):
        cfg = {"preset": cfg}
    if "preset" in cfg:
        if cfg["preset"] not in PRESETS:
            raise KeyError("unknown preset %r" % cfg["preset"])
        return preset(cfg["preset"], **(cfg.get("params") or {}))
    l, n = int(cfg["l"]), int(cfg["n"])
    lower = {}
    for j, mat in (cfg.get("lower") or {}).items():
        rows = mat if isinstance(mat, list) else [[mat]]
        lower[int(j)] = Coefficient.from_exprs(rows, params)
    nl = None
    if cfg.get("nonlinearity"):
        c = cfg["nonlinearity"]
        exps = {}
        for item in c.get("exponents", []):
            j, k, m, b1, b2 = item
            exps[(int(j), int(k), int(m))] = (float(b1), float(b2))
        nl = NonlinearitySpec.from_exprs(l, n, {int(j): v for j, v in c["terms"].items()}, exps, params)
    return SystemSpec(l, n, tuple(cfg["a_top"]), tuple(cfg.get("a_sub", [0.0] * n)), lower, nl, cfg.get("name", "inline"))


def _item(value, kind, params, base, grid, rng=None):
    """A scalar data item: number, expression string, file reference or random field."""
    if value is None or isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        variables = {"x": ("x",), "t": ("t",), "tx": ("t", "x")}[kind]
        f = ExprField(parse(value, params), variables)
        return lambda *args: f(*args)
    if isinstance(value, dict) and "file" in value:
        return _from_file(value, kind, base, grid)
    if isinstance(value, dict) and "random_modes" in value:
        if kind != "x":
            raise ValueError("random fields are only available for initial data")
        return _random_modes(value["random_modes"], grid, rng)
    if isinstance(value, list):
        return np.asarray(value, dtype=float)
    raise TypeError("cannot interpret data item %r" % (value,))


def _from_file(spec, kind, base, grid):
    path = base / spec["file"]
    if path.suffix == ".npy":
        return np.load(path)
    table = np.genfromtxt(path, delimiter=",", names=True)
    return np.asarray(table[spec["column"]], dtype=float)


def _random_modes(cfg, grid, rng):
    """Sum of sine modes times an ``(x (R - x))**p`` envelope, for small random data.

    Returned as a function of ``x`` so the same draw can be sampled on any grid.
    """
    modes = int(cfg.get("modes", 5))
    amp = float(cfg.get("amplitude", 1e-2))
    power = int(cfg.get("envelope_power", 1))
    c = rng.standard_normal(modes) * amp
    R = grid.R

    def u0(x):
        s = np.asarray(x, dtype=float) / R
        return sum(ck * np.sin((k + 1) * np.pi * s) for k, ck in enumerate(c)) * (s * (1 - s)) ** power

    return u0


def _vector(values, n, kind, params, base, grid, rng=None):
    if values is None:
        return None
    if not isinstance(values, list) or (n == 1 and len(values) != 1):
        values = [values]
    if len(values) != n:
        raise ValueError("expected %d components, got %d" % (n, len(values)))
    return [_item(v, kind, params, base, grid, rng) for v in values]


def _build_data(cfg, spec, grid, params, base, seed):
    n, l = spec.n, spec.l
    rng = np.random.default_rng(seed)
    mu = [_vector(v, n, "t", params, base, grid) for v in (cfg.get("mu") or [])]
    nu = [_vector(v, n, "t", params, base, grid) for v in (cfg.get("nu") or [])]
    controls, overdet = {}, {}
    for i, profiles in _one_based(cfg.get("controls")).items():
        controls[i] = [_item(h, "tx", params, base, grid) for h in profiles]
    for i, conds in _one_based(cfg.get("overdet")).items():
        overdet[i] = []
        for c in conds:
            w = c["weight"]
            weight = (
                Weight.from_samples(grid.x, _item(w, "x", params, base, grid))
                if isinstance(w, dict)
                else Weight.from_expr(w, grid.R, params)
            )
            overdet[i].append(
                Overdetermination(weight, _item(c.get("phi", 0.0), "t", params, base, grid), _item(c.get("dphi"), "t", params, base, grid))
            )
    known = None
    if cfg.get("known_F"):
        known = {i: [_item(f, "t", params, base, grid) for f in fs] for i, fs in _one_based(cfg["known_F"]).items()}
    return ProblemData(
        n=n,
        l=l,
        u0=_vector(cfg.get("u0"), n, "x", params, base, grid, rng),
        mu=tuple(mu),
        nu=tuple(nu),
        h0=_vector(cfg.get("h0"), n, "tx", params, base, grid),
        controls=controls,
        overdet=overdet,
        known_F=known,
    )
