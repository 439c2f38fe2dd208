"""Experiment configuration.

A configuration is a TOML file with the sections ``geometry``, ``physics``,
``solver``, ``forward``, ``measurement`` and ``inversion`` plus a top-level
``seed``. Every key is optional; missing keys take the values of
:data:`REFERENCE`. Coefficient fields (``rho``, ``q``, ``gamma``, profiles) are
either expression strings in ``x`` or inline tables of nodal values.

Expressions accept numbers, ``x``, ``pi``, ``+ - * / ^`` (``^`` is a power,
``**`` works too), parentheses, and the functions ``exp``, ``sin``, ``cos`` and
``abs``. The positive part ``(f)_+`` is written ``(f + abs(f)) / 2``.
"""

from __future__ import annotations

import ast
import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .errors import BetaInadmissible, ConfigError, GeometryError

__all__ = [
    "REFERENCE",
    "ExperimentConfig",
    "Expression",
    "load_config",
    "parse_config",
    "dump_config",
    "config_hash",
]

REFERENCE: dict = {
    "seed": 20240611,
    "geometry": {
        "R": 4.0,
        "n_nodes": 129,
        "omega": [-1.0, 1.0],
        "W1": [[-3.0, -1.25], [1.25, 3.0]],
        "W2": [[-3.75, -2.0], [2.0, 3.75]],
    },
    "physics": {
        "m": 2.0,
        "s": 0.5,
        "kernel": "conductivity",
        "gamma": "1 + 0.5*exp(-4*x^2)",
        "rho": "1 + 0.3*x^2",
        "q": "0.25*(1 - x^2 + abs(1 - x^2))",
    },
    "solver": {
        "n_steps": 128,
        "T": 1.0,
        "eps_k_min": 3,
        "eps_k_max": 12,
        "newton_target": 1e-12,
        "newton_accept": 1e-9,
        "newton_max_iter": 50,
    },
    "forward": {
        "profile": "(1 - 4*(abs(x) - 2.125)^2 + abs(1 - 4*(abs(x) - 2.125)^2))^2 / 4",
        "amplitude": 1.0,
        "power": 1.0,
        "variable": "u",
    },
    "measurement": {
        "h_list": [1e2, 3.1622776601683795e2, 1e3, 3.1622776601683795e3, 1e4, 3.1622776601683795e4, 1e5],
        "T0": 4.0,
        "beta": 2.5,
        "n_steps": 256,
        "eps_min": 2.0**-12,
        "profiles": [
            "(1 - (x + 2.475)^2/0.275625 + abs(1 - (x + 2.475)^2/0.275625))^2 / 4",
            "(1 - (x + 1.775)^2/0.275625 + abs(1 - (x + 1.775)^2/0.275625))^2 / 4",
            "(1 - (x - 1.775)^2/0.275625 + abs(1 - (x - 1.775)^2/0.275625))^2 / 4",
            "(1 - (x - 2.475)^2/0.275625 + abs(1 - (x - 2.475)^2/0.275625))^2 / 4",
        ],
        "tests": "hats",
    },
    "inversion": {
        "family": "bump",
        "theta_prior": [1.0, 1.0, 1.0, 0.0],
        "stage1_alphas": [-12.0, -3.0, 10],
        "stage1_tests": [-3.5625, -2.1875, 2.1875, 3.5625],
        "stage2_alphas": [-10.0, 2.0, 25],
        "stage2_order": 3,
        "stage2_prior_weight": 0.0,
        "rho_floor": 0.05,
        "n_terms": 4,
        "rule": "quasi",
    },
}

_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "abs": np.abs}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class Expression:
    """A closed-form field ``f(x)`` parsed into a restricted AST."""

    def __init__(self, text: str):
        self.text = str(text)
        try:
            tree = ast.parse(self.text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {self.text!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or len(node.args) != 1 or node.keywords:
                raise ConfigError(f"unsupported call in {self.text!r}; allowed: exp, sin, cos, abs with one argument")
            self._check(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id not in ("x", "pi"):
                raise ConfigError(f"unknown name {node.id!r} in {self.text!r}")
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ConfigError(f"non-numeric constant in {self.text!r}")
        else:
            raise ConfigError(f"unsupported syntax {type(node).__name__} in {self.text!r}")

    def _eval(self, node, x):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, x), self._eval(node.right, x))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, x)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](self._eval(node.args[0], x))
        if isinstance(node, ast.Name):
            return x if node.id == "x" else math.pi
        return float(node.value)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(self._eval(self._tree, x), dtype=float), x.shape).copy()
        return out

    def __repr__(self):
        return f"Expression({self.text!r})"


def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"{where}: unknown key")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where}: expected a section")
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(d, key, path, lo=None, hi=None, integer=False, strict_lo=False):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{path}.{key}: expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{path}.{key}: must be finite")
    if lo is not None and (v <= lo if strict_lo else v < lo):
        raise ConfigError(f"{path}.{key}: must be {'>' if strict_lo else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{path}.{key}: must be <= {hi}, got {v}")
    return int(v) if integer else float(v)


def _field(value, path, n_nodes):
    """An expression string or a nodal table of length ``n_nodes``."""
    if isinstance(value, str):
        return Expression(value)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Expression(repr(float(value)))
    if isinstance(value, list):
        arr = np.asarray(value, dtype=float)
        if arr.shape != (n_nodes,):
            raise ConfigError(f"{path}: nodal table needs {n_nodes} values, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"{path}: nodal table has non-finite entries")
        return arr
    raise ConfigError(f"{path}: expected an expression string or a list of nodal values")


def _intervals(value, path):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ConfigError(f"{path}: expected [a, b] or a list of [a, b] intervals")
    return [tuple(map(float, r)) for r in arr]


@dataclass
class ExperimentConfig:
    """Validated configuration. ``raw`` keeps the merged dictionary for serialization."""

    raw: dict

    def __post_init__(self):
        self._validate()

    # ------------------------------------------------------------ views
    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def geometry(self) -> dict:
        return self.raw["geometry"]

    @property
    def physics(self) -> dict:
        return self.raw["physics"]

    @property
    def solver(self) -> dict:
        return self.raw["solver"]

    @property
    def forward(self) -> dict:
        return self.raw["forward"]

    @property
    def measurement(self) -> dict:
        return self.raw["measurement"]

    @property
    def inversion(self) -> dict:
        return self.raw["inversion"]

    # ------------------------------------------------------------ validation
    def _validate(self):
        r = self.raw
        seed = r["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError(f"seed: expected an unsigned 64-bit integer, got {seed!r}")

        g = r["geometry"]
        R = _num(g, "R", "geometry", lo=1.0, strict_lo=True)
        n = _num(g, "n_nodes", "geometry", lo=9, hi=257, integer=True)
        om = _intervals(g["omega"], "geometry.omega")
        if len(om) != 1:
            raise ConfigError("geometry.omega: expected a single interval")
        self.W1 = _intervals(g["W1"], "geometry.W1")
        self.W2 = _intervals(g["W2"], "geometry.W2")
        self.omega = om[0]

        p = r["physics"]
        m = _num(p, "m", "physics", lo=1.0, strict_lo=True)
        s = _num(p, "s", "physics", lo=0.0, hi=1.0, strict_lo=True)
        if s >= 1.0:
            raise ConfigError("physics.s: must lie in (0, 1)")
        if p["kernel"] not in ("fractional_laplacian", "conductivity"):
            raise ConfigError(f"physics.kernel: expected 'fractional_laplacian' or 'conductivity', got {p['kernel']!r}")
        self.rho_field = _field(p["rho"], "physics.rho", n)
        self.q_field = _field(p["q"], "physics.q", n)
        self.gamma_field = _field(p["gamma"], "physics.gamma", n)
        x = np.linspace(-R, R, n)
        rho = self._values(self.rho_field, x)
        q = self._values(self.q_field, x)
        gam = self._values(self.gamma_field, x)
        if not np.all(np.isfinite(rho)) or rho.min() <= 0:
            raise ConfigError(f"physics.rho: must be finite and strictly positive on the grid (min {np.nanmin(rho):g})")
        if not np.all(np.isfinite(q)) or q.min() < 0:
            raise ConfigError(f"physics.q: must be finite and nonnegative on the grid (min {np.nanmin(q):g})")
        if not np.all(np.isfinite(gam)) or gam.min() <= 0:
            raise ConfigError("physics.gamma: must be finite and strictly positive (kernel ellipticity)")

        sv = r["solver"]
        _num(sv, "n_steps", "solver", lo=8, hi=256, integer=True)
        _num(sv, "T", "solver", lo=0.0, strict_lo=True)
        kmin = _num(sv, "eps_k_min", "solver", lo=1, integer=True)
        kmax = _num(sv, "eps_k_max", "solver", lo=1, hi=40, integer=True)
        if kmax < kmin + 3:
            raise ConfigError("solver.eps_k_max: the epsilon ladder needs at least four levels (eps_k_max >= eps_k_min + 3)")
        tgt = _num(sv, "newton_target", "solver", lo=0.0, strict_lo=True)
        acc = _num(sv, "newton_accept", "solver", lo=0.0, strict_lo=True)
        if not tgt <= acc < 1:
            raise ConfigError("solver.newton_target: need newton_target <= newton_accept < 1")
        _num(sv, "newton_max_iter", "solver", lo=1, integer=True)

        f = r["forward"]
        self.forward_profile = _field(f["profile"], "forward.profile", n)
        _num(f, "amplitude", "forward", lo=0.0)
        _num(f, "power", "forward", lo=0.0, strict_lo=True)
        if f["variable"] not in ("u", "v"):
            raise ConfigError("forward.variable: expected 'u' or 'v'")

        ms = r["measurement"]
        hl = ms["h_list"]
        if not isinstance(hl, list) or len(hl) < 3 or any(isinstance(h, bool) or not isinstance(h, (int, float)) or not h > 1 for h in hl):
            raise ConfigError("measurement.h_list: need at least three amplitudes, each > 1")
        if len(set(hl)) != len(hl):
            raise ConfigError("measurement.h_list: amplitudes must be distinct")
        _num(ms, "T0", "measurement", lo=0.0, strict_lo=True)
        beta = _num(ms, "beta", "measurement")
        _num(ms, "n_steps", "measurement", lo=8, hi=256, integer=True)
        if ms["n_steps"] % 2:
            raise ConfigError("measurement.n_steps: must be even so that T0/2 lies on the time grid")
        _num(ms, "eps_min", "measurement", lo=0.0, hi=0.5, strict_lo=True)
        from .dn_map import check_beta

        try:
            check_beta(beta, m)
        except BetaInadmissible as exc:
            raise BetaInadmissible(f"measurement.beta: {exc}") from None
        if not isinstance(ms["profiles"], list) or not ms["profiles"]:
            raise ConfigError("measurement.profiles: need at least one exterior profile")
        self.profile_fields = [_field(v, f"measurement.profiles[{k}]", n) for k, v in enumerate(ms["profiles"])]
        tests = ms["tests"]
        if not (tests == "hats" or (isinstance(tests, list) and tests and all(isinstance(v, (int, float)) for v in tests))):
            raise ConfigError("measurement.tests: expected 'hats' or a list of W2 node coordinates")

        inv = r["inversion"]
        if inv["family"] not in ("bump", "constant"):
            raise ConfigError("inversion.family: expected 'bump' or 'constant'")
        prior = inv["theta_prior"]
        want = 4 if inv["family"] == "bump" else 1
        if not isinstance(prior, list) or len(prior) != want:
            raise ConfigError(f"inversion.theta_prior: family {inv['family']!r} needs {want} values")
        for key in ("stage1_alphas", "stage2_alphas"):
            a = inv[key]
            if not isinstance(a, list) or len(a) != 3 or int(a[2]) != a[2] or a[2] < 1 or a[0] > a[1]:
                raise ConfigError(f"inversion.{key}: expected [log10 min, log10 max, count]")
        if not isinstance(inv["stage1_tests"], list) or not inv["stage1_tests"]:
            raise ConfigError("inversion.stage1_tests: need at least one W2 node coordinate")
        _num(inv, "stage2_order", "inversion", lo=1, hi=4, integer=True)
        _num(inv, "stage2_prior_weight", "inversion", lo=0.0)
        _num(inv, "rho_floor", "inversion", lo=0.0, strict_lo=True)
        _num(inv, "n_terms", "inversion", lo=2, hi=5, integer=True)
        if inv["rule"] not in ("quasi", "lcurve"):
            raise ConfigError("inversion.rule: expected 'quasi' or 'lcurve'")

        # geometry-level constraints come from the builder itself
        try:
            self.build_geometry()
        except GeometryError as exc:
            raise type(exc)(f"geometry: {exc}") from None

    @staticmethod
    def _values(fieldspec, x):
        return fieldspec(x) if isinstance(fieldspec, Expression) else np.asarray(fieldspec, dtype=float)

    # ------------------------------------------------------------ builders
    def build_geometry(self):
        from .discretization import build_geometry

        g = self.geometry
        return build_geometry(R=float(g["R"]), n_nodes=int(g["n_nodes"]), omega=self.omega, W1=self.W1, W2=self.W2)

    def kernel(self):
        from .kernels import FractionalConductivity, FractionalLaplacian

        s = float(self.physics["s"])
        if self.physics["kernel"] == "fractional_laplacian":
            return FractionalLaplacian(s)
        gf = self.gamma_field
        if isinstance(gf, Expression):
            return FractionalConductivity(s, gf, label=gf.text)
        geom = self.build_geometry()
        return FractionalConductivity(s, lambda x: np.interp(x, geom.x, gf), label="table")

    def law(self):
        from .nonlinearity import PowerLaw

        return PowerLaw(float(self.physics["m"]))

    def coefficients(self, geom):
        from .forward import CoefficientFields

        return CoefficientFields(self._values(self.rho_field, geom.x), self._values(self.q_field, geom.x))

    def newton(self):
        from .forward import NewtonSettings

        sv = self.solver
        return NewtonSettings(float(sv["newton_target"]), float(sv["newton_accept"]), int(sv["newton_max_iter"]))

    def window_profile(self, fieldspec, geom):
        """Nodal profile zeroed off the ``W1`` nodes and clipped at zero."""
        vals = np.maximum(self._values(fieldspec, geom.x), 0.0)
        out = np.zeros(geom.n_nodes)
        out[geom.w1] = vals[geom.w1]
        return out

    def forward_datum(self, geom):
        from .forward import ExteriorDatum

        f = self.forward
        return ExteriorDatum(self.window_profile(self.forward_profile, geom), float(f["amplitude"]), float(f["power"]), f["variable"])

    def measurement_profiles(self, geom):
        return np.array([self.window_profile(p, geom) for p in self.profile_fields])

    def test_catalog(self, geom, nodes=None):
        from .dn_map import TestFunctionCatalog

        ms = self.measurement
        if nodes is None and ms["tests"] != "hats":
            nodes = ms["tests"]
        if nodes is not None:
            nodes = _coords_to_nodes(geom, nodes, "W2", geom.w2)
        return TestFunctionCatalog.hats(geom, float(ms["beta"]), nodes)

    def stage1_catalog(self, geom):
        return self.test_catalog(geom, self.inversion["stage1_tests"])

    def alphas(self, key):
        lo, hi, k = self.inversion[key]
        return np.logspace(float(lo), float(hi), int(k))

    # ------------------------------------------------------------ serialization
    def to_toml(self) -> str:
        return dump_config(self.raw)

    def hash(self) -> str:
        return config_hash(self.raw)


def _coords_to_nodes(geom, coords, name, allowed):
    idx = []
    for c in coords:
        k = int(np.argmin(np.abs(geom.x - float(c))))
        if abs(geom.x[k] - float(c)) > 1e-9 * max(1.0, abs(float(c))) + 1e-12:
            raise ConfigError(f"test coordinate {c} is not a grid node (dx = {geom.dx})")
        if k not in set(allowed.tolist()):
            raise ConfigError(f"test coordinate {c} is not a {name} node")
        idx.append(k)
    return np.array(idx, dtype=int)


def parse_config(text: str = "") -> ExperimentConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    return ExperimentConfig(_merge(REFERENCE, data))


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Load a configuration file; ``None`` gives the reference configuration."""
    if path is None:
        return ExperimentConfig(copy.deepcopy(REFERENCE))
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def dump_config(raw: dict) -> str:
    return tomli_w.dumps(raw)


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]
