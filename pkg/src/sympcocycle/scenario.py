"""Declarative experiment configs (TOML) and their translation into objects."""
from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cocycle import CocycleContext, IsotopySpec
from .errors import ConfigurationError, DomainError
from .geometry import EuclideanPlane, HyperbolicDisk
from .hamiltonian import FlowSettings, TimeProfile, bump_hamiltonian, quadratic_hamiltonian, rotation_hamiltonian
from .symplectomap import (
    AffineBaseDiffeo,
    AffineSymplectic,
    CompactBump,
    CotangentLift,
    HamiltonianFlowMap,
    Identity,
    MoebiusIsometry,
    SineShearDiffeo,
    Word,
    linear_symplectic,
    translation,
)

SUITES = ("verify", "table", "kahler", "distortion", "hamiltonian")
MAP_KINDS = ("identity", "translation", "affine", "moebius", "flow", "bump", "lift", "word")
HAMILTONIAN_PRESETS = ("bump", "gaussian", "polynomial", "rotation")
DEFAULT_TOLERANCES = {
    "identity": 1e-6,
    "closed_form": 1e-8,
    "area": 1e-5,
    "hamiltonian": 1e-5,
    "linearity": 1e-4,
    "quadrature": 1e-9,
}

_TOP_KEYS = {"scenario", "model", "tolerances", "hamiltonians", "maps", *SUITES}


@dataclass
class Scenario:
    name: str
    suite: str
    seed: int = 0
    model: dict = field(default_factory=lambda: {"kind": "plane"})
    tolerances: dict = field(default_factory=dict)
    hamiltonians: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)
    suites: dict = field(default_factory=dict)  # per-suite parameter tables

    def __post_init__(self):
        validate(self)

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def to_dict(self) -> dict:
        out = {"scenario": {"name": self.name, "suite": self.suite, "seed": self.seed}, "model": copy.deepcopy(self.model)}
        for key in ("tolerances", "hamiltonians", "maps"):
            if getattr(self, key):
                out[key] = copy.deepcopy(getattr(self, key))
        for key, params in self.suites.items():
            out[key] = copy.deepcopy(params)
        return out

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ConfigurationError(f"unknown top-level table(s): {', '.join(sorted(unknown))}")
        head = data.get("scenario")
        if not isinstance(head, dict):
            raise ConfigurationError("missing [scenario] table")
        for key in head:
            if key not in ("name", "suite", "seed"):
                raise ConfigurationError(f"scenario.{key}: unknown field")
        return cls(
            name=str(head.get("name", "scenario")),
            suite=head.get("suite", ""),
            seed=head.get("seed", 0),
            model=copy.deepcopy(data.get("model", {"kind": "plane"})),
            tolerances=copy.deepcopy(data.get("tolerances", {})),
            hamiltonians=copy.deepcopy(data.get("hamiltonians", {})),
            maps=copy.deepcopy(data.get("maps", {})),
            suites={k: copy.deepcopy(data[k]) for k in SUITES if k in data},
        )

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"parse error: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path, "rb") as fh:
            raw = fh.read()
        try:
            return cls.loads(raw.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise ConfigurationError(f"parse error: {exc}") from exc


# ---------------------------------------------------------------------------
# validation


def _require(cond, where, msg):
    if not cond:
        raise ConfigurationError(f"{where}: {msg}")


def _vector(value, where, dim=None):
    _require(isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value),
             where, "expected a list of numbers")
    _require(all(math.isfinite(v) for v in value), where, "non-finite number")
    if dim is not None:
        _require(len(value) == dim, where, f"expected {dim} numbers, got {len(value)}")
    return np.asarray(value, dtype=float)


def _number(value, where):
    _require(isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value), where, "expected a finite number")
    return float(value)


def _allowed(table, keys, where):
    extra = set(table) - set(keys)
    _require(not extra, where, f"unknown field(s) {', '.join(sorted(extra))}")


def split_ref(ref: str):
    """``"name"`` or ``"name^-1"`` -> (name, inverted)."""
    if not isinstance(ref, str):
        raise ConfigurationError(f"map reference must be a string, got {ref!r}")
    if ref.endswith("^-1"):
        return ref[:-3], True
    return ref, False


def _model_dim(model):
    return 2 if model.get("kind") == "disk" else 2 * int(model.get("n", 1))


def _check_point(model, p, where):
    v = _vector(p, where, _model_dim(model))
    if model.get("kind") == "disk":
        _require(float(np.hypot(*v)) < 1.0 - 1e-9, where, "point outside the unit disk")
    return v


def validate(sc: Scenario):
    _require(sc.suite in SUITES, "scenario.suite", f"must be one of {', '.join(SUITES)}")
    _require(isinstance(sc.seed, int) and not isinstance(sc.seed, bool), "scenario.seed", "expected an integer")
    m = sc.model
    _require(isinstance(m, dict), "model", "expected a table")
    _allowed(m, ("kind", "n", "primitive", "basepoint"), "model")
    _require(m.get("kind", "plane") in ("plane", "disk"), "model.kind", "must be 'plane' or 'disk'")
    if m.get("kind", "plane") == "plane":
        n = m.get("n", 1)
        _require(isinstance(n, int) and n >= 1, "model.n", "expected a positive integer")
        _require(m.get("primitive", "radial") in ("radial", "liouville"), "model.primitive", "must be 'radial' or 'liouville'")
    else:
        _require(m.get("primitive", "radial") == "radial", "model.primitive", "the disk carries the radial primitive only")
    if "basepoint" in m:
        _check_point(m, m["basepoint"], "model.basepoint")
    for k, v in sc.tolerances.items():
        _require(k in DEFAULT_TOLERANCES, f"tolerances.{k}", "unknown tolerance")
        _require(_number(v, f"tolerances.{k}") > 0, f"tolerances.{k}", "must be positive")
    for name, spec in sc.hamiltonians.items():
        _validate_hamiltonian(sc, name, spec)
    for name, spec in sc.maps.items():
        _validate_map(sc, name, spec)
    for name, spec in sc.maps.items():
        if spec.get("kind") == "word":
            _check_acyclic(sc, name, [])
    for suite, params in sc.suites.items():
        _require(isinstance(params, dict), suite, "expected a table")
        _validate_suite(sc, suite, params)
    _require(sc.suite in sc.suites or sc.suite in ("kahler",), sc.suite, f"missing [{sc.suite}] table")


def _validate_hamiltonian(sc, name, spec):
    where = f"hamiltonians.{name}"
    _require(isinstance(spec, dict), where, "expected a table")
    preset = spec.get("preset")
    _require(preset in HAMILTONIAN_PRESETS, f"{where}.preset", f"must be one of {', '.join(HAMILTONIAN_PRESETS)}")
    dim = _model_dim(sc.model)
    _require(spec.get("profile", "constant") in ("constant", "double_then_freeze", "linear"), f"{where}.profile", "unknown time profile")
    if preset in ("bump", "gaussian"):
        _allowed(spec, ("preset", "center", "radius", "amplitude", "profile"), where)
        _vector(spec.get("center"), f"{where}.center", dim)
        _require(_number(spec.get("radius"), f"{where}.radius") > 0, f"{where}.radius", "must be positive")
        _number(spec.get("amplitude"), f"{where}.amplitude")
    elif preset == "polynomial":
        _allowed(spec, ("preset", "matrix", "linear", "constant", "profile"), where)
        Q = spec.get("matrix")
        _require(isinstance(Q, list) and len(Q) == dim, f"{where}.matrix", f"expected a {dim}x{dim} matrix")
        for i, row in enumerate(Q):
            _vector(row, f"{where}.matrix[{i}]", dim)
        if "linear" in spec:
            _vector(spec["linear"], f"{where}.linear", dim)
        if "constant" in spec:
            _number(spec["constant"], f"{where}.constant")
    else:
        _allowed(spec, ("preset", "center", "rate", "profile"), where)
        _vector(spec.get("center"), f"{where}.center", dim)
        _number(spec.get("rate"), f"{where}.rate")


def _validate_map(sc, name, spec):
    where = f"maps.{name}"
    _require(isinstance(spec, dict), where, "expected a table")
    _require("^" not in name, where, "map names may not contain '^'")
    kind = spec.get("kind")
    _require(kind in MAP_KINDS, f"{where}.kind", f"must be one of {', '.join(MAP_KINDS)}")
    dim = _model_dim(sc.model)
    disk = sc.model.get("kind") == "disk"
    if kind == "identity":
        _allowed(spec, ("kind",), where)
    elif kind == "translation":
        _allowed(spec, ("kind", "vector"), where)
        _require(not disk, where, "translations act on the plane model only")
        _vector(spec.get("vector"), f"{where}.vector", dim)
    elif kind == "affine":
        _allowed(spec, ("kind", "generator", "vector"), where)
        _require(not disk, where, "affine maps act on the plane model only")
        S = spec.get("generator")
        _require(isinstance(S, list) and len(S) == dim, f"{where}.generator", f"expected a symmetric {dim}x{dim} matrix")
        for i, row in enumerate(S):
            _vector(row, f"{where}.generator[{i}]", dim)
        _vector(spec.get("vector", [0.0] * dim), f"{where}.vector", dim)
    elif kind == "moebius":
        _allowed(spec, ("kind", "shift", "phase_a", "phase_b", "rotation"), where)
        _require(disk, where, "Moebius isometries act on the disk model only")
        if "rotation" in spec:
            _number(spec["rotation"], f"{where}.rotation")
        else:
            for k in ("shift", "phase_a", "phase_b"):
                _number(spec.get(k, 0.0), f"{where}.{k}")
    elif kind in ("flow", "bump"):
        _allowed(spec, ("kind", "hamiltonian", "time", "method", "step", "tol"), where)
        h = spec.get("hamiltonian")
        _require(h in sc.hamiltonians, f"{where}.hamiltonian", f"undefined Hamiltonian {h!r}")
        _number(spec.get("time", 1.0), f"{where}.time")
        _require(spec.get("method", "rk4") in ("rk4", "exact"), f"{where}.method", "must be 'rk4' or 'exact'")
        if spec.get("method") == "exact":
            centre = sc.hamiltonians[h].get("center", [1.0])
            _require(not disk or not any(centre), f"{where}.method",
                     "closed-form disk flows need a bump centred at the origin")
        if kind == "bump":
            _require(sc.hamiltonians[h]["preset"] in ("bump", "gaussian"), f"{where}.hamiltonian", "needs a compactly supported preset")
        for k in ("step", "tol"):
            if k in spec:
                _require(_number(spec[k], f"{where}.{k}") > 0, f"{where}.{k}", "must be positive")
    elif kind == "lift":
        _allowed(spec, ("kind", "base", "a", "b", "eps", "k"), where)
        _require(not disk and dim == 2, where, "cotangent lifts act on the plane model with n = 1")
        _require(spec.get("base") in ("affine", "sine"), f"{where}.base", "must be 'affine' or 'sine'")
        for k in ("a", "b", "eps", "k"):
            if k in spec:
                _number(spec[k], f"{where}.{k}")
        _require(abs(spec.get("a", 1.0)) > 0, f"{where}.a", "must be nonzero")
        if spec["base"] == "sine":
            _require(abs(spec.get("eps", 0.0) * spec.get("k", 1.0)) < abs(spec.get("a", 1.0)), where,
                     "sine shear is not a diffeomorphism: need |eps*k| < |a|")
    else:
        _allowed(spec, ("kind", "factors"), where)
        factors = spec.get("factors")
        _require(isinstance(factors, list) and factors, f"{where}.factors", "expected a nonempty list of map names")
        for ref in factors:
            _check_ref(sc, ref, f"{where}.factors")


def _check_ref(sc, ref, where):
    name, _ = split_ref(ref)
    _require(name in sc.maps, where, f"undefined map {name!r}")
    return name


def _check_acyclic(sc, name, stack):
    _require(name not in stack, f"maps.{name}", "word definitions are cyclic")
    spec = sc.maps[name]
    if spec.get("kind") == "word":
        for ref in spec["factors"]:
            _check_acyclic(sc, split_ref(ref)[0], stack + [name])


def _refs(sc, value, where, arity=None):
    _require(isinstance(value, list), where, "expected a list")
    for i, item in enumerate(value):
        if arity is None:
            _check_ref(sc, item, f"{where}[{i}]")
        else:
            _require(isinstance(item, list) and len(item) == arity, f"{where}[{i}]", f"expected {arity} map names")
            for ref in item:
                _check_ref(sc, ref, f"{where}[{i}]")


def _validate_suite(sc, suite, p):
    where = suite
    if suite == "verify":
        _allowed(p, ("pairs", "triples", "expect", "alt_basepoint", "primitive_change"), where)
        _refs(sc, p.get("pairs", []), f"{where}.pairs", 2)
        _refs(sc, p.get("triples", []), f"{where}.triples", 3)
        for i, e in enumerate(p.get("expect", [])):
            _require(isinstance(e, dict), f"{where}.expect[{i}]", "expected a table")
            _allowed(e, ("pair", "value", "primitive"), f"{where}.expect[{i}]")
            _refs(sc, [e.get("pair")], f"{where}.expect[{i}].pair", 2)
            _number(e.get("value"), f"{where}.expect[{i}].value")
            _require(e.get("primitive", "model") in ("model", "radial", "liouville"), f"{where}.expect[{i}].primitive", "unknown primitive")
        if "alt_basepoint" in p:
            _check_point(sc.model, p["alt_basepoint"], f"{where}.alt_basepoint")
        if p.get("primitive_change"):
            _require(sc.model.get("kind", "plane") == "plane", f"{where}.primitive_change", "plane model only")
    elif suite == "table":
        _allowed(p, ("rows", "cols"), where)
        _refs(sc, p.get("rows"), f"{where}.rows")
        _refs(sc, p.get("cols"), f"{where}.cols")
    elif suite == "kahler":
        _allowed(p, ("pairs", "random_pairs", "max_shift"), where)
        _require(sc.model.get("kind") == "disk", "model.kind", "the kahler suite needs the disk model")
        _refs(sc, p.get("pairs", []), f"{where}.pairs", 2)
        n = p.get("random_pairs", 0)
        _require(isinstance(n, int) and n >= 0, f"{where}.random_pairs", "expected a nonnegative integer")
        _require(0 < _number(p.get("max_shift", 1.0), f"{where}.max_shift") <= 3.0, f"{where}.max_shift", "must lie in (0, 3]")
    elif suite == "distortion":
        _allowed(p, ("isotopy", "h", "generators", "sample", "n_max", "lipschitz_length", "expected_action"), where)
        _require(p.get("isotopy") in sc.hamiltonians, f"{where}.isotopy", f"undefined Hamiltonian {p.get('isotopy')!r}")
        _refs(sc, [p.get("h")], f"{where}.h")
        _refs(sc, p.get("generators", []), f"{where}.generators")
        _refs(sc, p.get("sample", []), f"{where}.sample")
        n = p.get("n_max", 16)
        _require(isinstance(n, int) and n >= 1, f"{where}.n_max", "expected a positive integer")
        L = p.get("lipschitz_length", 0)
        _require(isinstance(L, int) and 0 <= L <= 10, f"{where}.lipschitz_length", "expected an integer in [0, 10]")
        if L:
            _require(p.get("generators") and p.get("sample"), where, "the Lipschitz check needs generators and a sample")
        if "expected_action" in p:
            _number(p["expected_action"], f"{where}.expected_action")
    elif suite == "hamiltonian":
        _allowed(p, ("isotopy", "points", "random_points", "rest_points", "reparametrize"), where)
        _require(p.get("isotopy") in sc.hamiltonians, f"{where}.isotopy", f"undefined Hamiltonian {p.get('isotopy')!r}")
        for i, q in enumerate(p.get("points", [])):
            _check_point(sc.model, q, f"{where}.points[{i}]")
        for i, q in enumerate(p.get("rest_points", [])):
            _check_point(sc.model, q, f"{where}.rest_points[{i}]")
        n = p.get("random_points", 0)
        _require(isinstance(n, int) and n >= 0, f"{where}.random_points", "expected a nonnegative integer")
        _require(p.get("reparametrize", "double_then_freeze") in ("double_then_freeze", "linear"),
                 f"{where}.reparametrize", "must be 'double_then_freeze' or 'linear'")


# ---------------------------------------------------------------------------
# building objects


@dataclass
class Workspace:
    scenario: Scenario
    model: object
    ctx: CocycleContext
    hamiltonians: dict
    maps: dict

    def map(self, ref):
        name, inv = split_ref(ref)
        g = self.maps[name]
        return g.inverse() if inv else g

    def isotopy(self, name, settings=None) -> IsotopySpec:
        return IsotopySpec(self.hamiltonians[name], name, settings or FlowSettings())


def build_model(spec: dict):
    if spec.get("kind", "plane") == "disk":
        return HyperbolicDisk(tuple(spec.get("basepoint", (0.0, 0.0))))
    return EuclideanPlane(int(spec.get("n", 1)), spec.get("primitive", "radial"),
                          tuple(spec["basepoint"]) if "basepoint" in spec else None)


def _build_hamiltonian(spec):
    profile = TimeProfile(spec.get("profile", "constant"))
    preset = spec["preset"]
    if preset in ("bump", "gaussian"):
        return bump_hamiltonian(spec["center"], spec["radius"], spec["amplitude"], profile)
    if preset == "polynomial":
        return quadratic_hamiltonian(spec["matrix"], spec.get("linear"), spec.get("constant", 0.0), profile)
    return rotation_hamiltonian(spec["center"], spec["rate"], profile)


def build(sc: Scenario) -> Workspace:
    try:
        model = build_model(sc.model)
    except DomainError as exc:
        raise ConfigurationError(f"model: {exc}") from exc
    ctx = CocycleContext(model, tol=sc.tol("quadrature"))
    hams = {name: _build_hamiltonian(spec) for name, spec in sc.hamiltonians.items()}
    maps = {}

    def make(name):
        if name in maps:
            return maps[name]
        spec = sc.maps[name]
        kind = spec["kind"]
        dim = model.dim
        if kind == "identity":
            g = Identity(dim)
        elif kind == "translation":
            g = translation(spec["vector"])
        elif kind == "affine":
            try:
                g = AffineSymplectic(linear_symplectic(spec["generator"]), spec.get("vector", [0.0] * dim))
            except ValueError as exc:
                raise ConfigurationError(f"maps.{name}: {exc}") from exc
        elif kind == "moebius":
            if "rotation" in spec:
                g = MoebiusIsometry.rotation(spec["rotation"])
            else:
                g = MoebiusIsometry.from_parameters(spec.get("shift", 0.0), spec.get("phase_a", 0.0), spec.get("phase_b", 0.0))
        elif kind in ("flow", "bump"):
            base = FlowSettings()
            settings = FlowSettings(step=spec.get("step", base.step), tol=spec.get("tol", base.tol), method=spec.get("method", "rk4"))
            cls = CompactBump if kind == "bump" else HamiltonianFlowMap
            g = cls(hams[spec["hamiltonian"]], spec.get("time", 1.0), model, settings)
        elif kind == "lift":
            if spec["base"] == "affine":
                g = CotangentLift(AffineBaseDiffeo([[spec.get("a", 1.0)]], [spec.get("b", 0.0)]))
            else:
                g = CotangentLift(SineShearDiffeo(spec.get("a", 1.0), spec.get("b", 0.0), spec.get("eps", 0.0), spec.get("k", 1.0)))
        else:
            factors = []
            for ref in spec["factors"]:
                fname, inv = split_ref(ref)
                f = make(fname)
                factors.append(f.inverse() if inv else f)
            g = Word(tuple(factors))
        maps[name] = g
        return g

    for name in sc.maps:
        make(name)
    return Workspace(sc, model, ctx, hams, maps)
