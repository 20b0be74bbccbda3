"""Command-line front end: run scenario suites and write JSON-lines reports.

Exit status: 0 all checks pass, 1 some check failed, 2 config parse or
validation error, 3 numerical non-convergence (partial report kept).
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import platform
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .cocycle import (
    G,
    action_functional,
    action_increment_residual,
    basepoint_change_residual,
    coboundary2_residual,
    isotopy_independence_residual,
    kahler_cocycle,
    primitive_change_residual,
    trilateral_identity,
)
from .errors import ConfigurationError, ConvergenceError, DomainError, DomainEscapeError
from .geometry import check_dlambda, triangle_area_gauss_bonnet
from .groups import (
    POLTEROVICH_CAVEAT,
    GeneratingSet,
    lemma_two_check,
    lipschitz_check,
    polterovich_report,
    semibounded_norm_estimate,
    semibounded_upper_bound,
)
from .hamiltonian import TimeProfile
from .scenario import DEFAULT_TOLERANCES, SUITES, Scenario, build
from .symplectomap import MoebiusIsometry

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass
class Record:
    check_id: str
    anchor: str
    inputs: dict
    value: object
    residual: float | None
    tol: float | None
    passed: bool

    def to_json(self) -> dict:
        blob = json.dumps(self.inputs, sort_keys=True, separators=(",", ":"))
        return {
            "check_id": self.check_id,
            "anchor": self.anchor,
            "inputs": hashlib.sha256(blob.encode()).hexdigest()[:16],
            "value": _clean(self.value),
            "residual": _clean(self.residual),
            "tol": self.tol,
            "pass": bool(self.passed),
        }


def _clean(v):
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if v is None or isinstance(v, str):
        return v
    v = float(v)
    return v if math.isfinite(v) else repr(v)


class Recorder:
    def __init__(self):
        self.records: list[Record] = []

    def check(self, check_id, anchor, inputs, value, residual, tol):
        ok = residual is not None and residual <= tol
        self.records.append(Record(check_id, anchor, inputs, value, residual, tol, ok))

    def flag(self, check_id, anchor, inputs, value, ok, tol=None, residual=None):
        self.records.append(Record(check_id, anchor, inputs, value, residual, tol, bool(ok)))


# ---------------------------------------------------------------------------
# suites


def _pair_id(pair):
    return ",".join(pair)


def suite_verify(ws, rec: Recorder):
    sc = ws.scenario
    p = sc.suites.get("verify", {})
    ctx = ws.ctx
    tol_id = sc.tol("identity")
    rec.check("geometry/dlambda", "primitive of the symplectic form", {"x": list(ctx.basepoint)},
              None, check_dlambda(ws.model, ctx.x), tol_id)
    for pair in p.get("pairs", []):
        g, h = ws.map(pair[0]), ws.map(pair[1])
        val = G(ctx, g, h)
        rec.flag(f"G/{_pair_id(pair)}", "cocycle value", {"pair": pair}, val, math.isfinite(val))
        lhs, rhs, res = trilateral_identity(ctx, g, h)
        rec.check(f"trilateral/{_pair_id(pair)}", "trilateral identity", {"pair": pair}, [lhs, rhs], res, sc.tol("area"))
        if "alt_basepoint" in p:
            res = basepoint_change_residual(ctx, p["alt_basepoint"], g, h)
            rec.check(f"basepoint/{_pair_id(pair)}", "basepoint change is a coboundary",
                      {"pair": pair, "alt": p["alt_basepoint"]}, None, res, tol_id)
        if p.get("primitive_change"):
            res = primitive_change_residual(ctx, g, h)
            rec.check(f"primitive/{_pair_id(pair)}", "primitive change is a coboundary", {"pair": pair}, None, res,
                      sc.tol("closed_form"))
    for triple in p.get("triples", []):
        g, h, k = (ws.map(r) for r in triple)
        res = coboundary2_residual(ctx, g, h, k)
        rec.check(f"cocycle/{_pair_id(triple)}", "two-cocycle identity", {"triple": triple}, None, res, tol_id)
    for i, e in enumerate(p.get("expect", [])):
        pair = e["pair"]
        prim = e.get("primitive", "model")
        c = ctx if prim == "model" else ctx.with_model(ws.model.with_primitive(prim))
        val = G(c, ws.map(pair[0]), ws.map(pair[1]))
        rec.check(f"expect/{i:02d}/{_pair_id(pair)}/{prim}", "closed-form cocycle value",
                  {"pair": pair, "value": e["value"], "primitive": prim}, val, abs(val - e["value"]), sc.tol("closed_form"))


def suite_table(ws, rec: Recorder, out=None):
    p = ws.scenario.suites["table"]
    rows, cols = p["rows"], p["cols"]
    buf = io.StringIO()
    buf.write("g\\h," + ",".join(cols) + "\n")
    for r in rows:
        vals = [G(ws.ctx, ws.map(r), ws.map(c)) for c in cols]
        for c, v in zip(cols, vals):
            rec.flag(f"table/{r},{c}", "cocycle value", {"pair": [r, c]}, v, math.isfinite(v))
        buf.write(r + "," + ",".join(repr(float(v)) for v in vals) + "\n")
    return buf.getvalue()


def _kahler_pairs(ws):
    p = ws.scenario.suites.get("kahler", {})
    pairs = [(_pair_id(pr), ws.map(pr[0]), ws.map(pr[1]), {"pair": pr}) for pr in p.get("pairs", [])]
    rng = np.random.default_rng(ws.scenario.seed)
    shift = p.get("max_shift", 1.0)
    for i in range(p.get("random_pairs", 0 if pairs else 10)):
        g = MoebiusIsometry.random(rng, shift, hyperbolic=True)
        h = MoebiusIsometry.random(rng, shift, hyperbolic=True)
        pairs.append((f"random{i:03d}", g, h, {"random": i, "seed": ws.scenario.seed, "max_shift": shift}))
    return pairs


def suite_kahler(ws, rec: Recorder):
    sc = ws.scenario
    ctx = ws.ctx
    tol = sc.tol("area")
    for pid, g, h, inputs in _kahler_pairs(ws):
        Gv = G(ctx, g, h)
        Kv = kahler_cocycle(ctx, g, h)
        rec.check(f"kahler/{pid}/equality", "cocycle equals Kahler area cocycle", inputs, [Gv, Kv], abs(Gv - Kv), tol)
        rec.flag(f"kahler/{pid}/bounded", "Kahler cocycle bounded by pi", inputs, Kv, abs(Kv) < math.pi)
        lhs, rhs, res = trilateral_identity(ctx, g, h)
        rec.check(f"kahler/{pid}/trilateral", "trilateral identity", inputs, [lhs, rhs], res, tol)
        x = ctx.x
        area = triangle_area_gauss_bonnet(ws.model, x, g.apply(x), g.apply(h.apply(x)))
        rec.check(f"kahler/{pid}/trilateral_area", "trilateral loop integral equals geodesic triangle area", inputs,
                  [rhs, area], abs(rhs - area), tol)


def suite_hamiltonian(ws, rec: Recorder):
    sc = ws.scenario
    p = sc.suites["hamiltonian"]
    ctx = ws.ctx
    name = p["isotopy"]
    iso = ws.isotopy(name)
    h = iso.h
    tol = sc.tol("hamiltonian")
    for i, q in enumerate(p.get("rest_points", [])):
        q = np.asarray(q, float)
        F = action_functional(ctx, iso, q)
        W = h.profile.integral(0.0, 1.0)
        expected = W * float(h.value(q[None, :])[0])
        rec.check(f"hamiltonian/rest/{i:02d}", "action at a rest point", {"point": q.tolist(), "H": name}, F,
                  abs(F - expected), sc.tol("identity"))
    pts = [np.asarray(q, float) for q in p.get("points", [])]
    n_rand = p.get("random_points", 0)
    if n_rand:
        rng = np.random.default_rng(sc.seed)
        c = h.support_center if h.support is not None else ctx.x
        R = h.support_radius if h.support is not None else 1.0
        for _ in range(n_rand):
            v = rng.standard_normal(ws.model.dim)
            pts.append(c + R * rng.uniform(0.0, 1.0) * v / np.linalg.norm(v))
    prof = TimeProfile(p.get("reparametrize", "double_then_freeze"))
    iso2 = replace(iso, h=h.with_profile(prof), tag=f"{name}/{prof.kind}")
    base = ctx.x
    for i, q in enumerate(pts):
        res = action_increment_residual(ctx, iso, base, q)
        rec.check(f"hamiltonian/increment/{i:02d}", "action increment equals K increment",
                  {"point": q.tolist(), "H": name}, None, res, tol)
        res = isotopy_independence_residual(ctx, iso, iso2, q)
        rec.check(f"hamiltonian/reparam/{i:02d}", "action independent of the isotopy",
                  {"point": q.tolist(), "H": name, "profile": prof.kind}, None, res, tol)


def suite_distortion(ws, rec: Recorder):
    sc = ws.scenario
    p = sc.suites["distortion"]
    ctx = ws.ctx
    iso = ws.isotopy(p["isotopy"])
    h = ws.map(p["h"])
    gens = p.get("generators", [])
    sample = [ws.map(r) for r in p.get("sample", [])]
    S = GeneratingSet({r: ws.map(r) for r in gens}) if gens else None
    n_max = p.get("n_max", 16)
    rep = polterovich_report(ctx, iso, h, S, n_max, sample or None)
    tol = sc.tol("hamiltonian")
    rec.check("distortion/action_cross_check", "cocycle value equals action difference",
              {"isotopy": p["isotopy"], "h": p["h"]}, [rep.G_gh, rep.action_diff], rep.cross_check_residual, tol)
    if "expected_action" in p:
        rec.check("distortion/expected_action", "action difference of the bump", {"value": p["expected_action"]},
                  rep.G_gh, abs(abs(rep.G_gh) - abs(p["expected_action"])), tol)
    rec.check("distortion/linearity", "linear growth along powers", {"n_max": n_max},
              [r[1] for r in rep.linearity], rep.max_relative_deviation, sc.tol("linearity"))
    rec.flag("distortion/unbounded", "cocycle unbounded along powers", {"n_max": n_max},
             [abs(r[1]) for r in rep.linearity], rep.monotone_growth)
    if S is not None and sample:
        rec.flag("distortion/translation_bound", f"translation length bound ({POLTEROVICH_CAVEAT})",
                 {"generators": gens}, rep.translation_lower_bound, True)
        for name, g in S.generators.items():
            lo = semibounded_norm_estimate(ctx, g, sample)
            try:
                hi = semibounded_upper_bound(ctx, g)
            except ConfigurationError:
                continue
            rec.flag(f"semibounded/{name}", "sampled norm below analytic bound", {"generator": name}, [lo, hi], lo <= hi)
        names = list(S.generators)
        worst = -math.inf
        for a in names:
            for b in names:
                worst = max(worst, lemma_two_check(ctx, S.generators[a], S.generators[b], sample))
        rec.check("norm_inequality/generators", "pointwise norm inequality", {"generators": gens}, None, max(worst, 0.0), tol)
        L = p.get("lipschitz_length", 0)
        if L:
            lip = lipschitz_check(ctx, S, sample, L)
            rec.check("lipschitz/words", "norm Lipschitz in word length", {"max_length": L, "words": lip.n_words},
                      [lip.slope, lip.max_quadrature_error], max(lip.worst_margin, 0.0), tol)


# ---------------------------------------------------------------------------
# report


def environment_record(sc: Scenario) -> dict:
    import scipy

    return {
        "record": "environment",
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scenario": sc.name,
        "suite": sc.suite,
        "seed": sc.seed,
    }


def render_report(sc, records, status) -> str:
    lines = [json.dumps(environment_record(sc), sort_keys=True)]
    for r in sorted(records, key=lambda r: r.check_id):
        lines.append(json.dumps(r.to_json(), sort_keys=True))
    failed = sum(not r.passed for r in records)
    lines.append(json.dumps({"record": "summary", "checks": len(records), "failed": failed, "status": status}, sort_keys=True))
    return "\n".join(lines) + "\n"


SUITE_RUNNERS = {
    "verify": suite_verify,
    "kahler": suite_kahler,
    "hamiltonian": suite_hamiltonian,
    "distortion": suite_distortion,
}


def run_scenario(config, out=None, suite=None, tol=None, seed=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        sc = Scenario.load(config)
        if suite is not None:
            sc.suite = suite
        if seed is not None:
            sc.seed = int(seed)
        if tol is not None:
            sc.tolerances = {k: float(tol) for k in DEFAULT_TOLERANCES if k != "quadrature"} | {
                k: v for k, v in sc.tolerances.items() if k == "quadrature"}
        sc = Scenario.from_dict(sc.to_dict())  # revalidate after overrides
        ws = build(sc)
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    rec = Recorder()
    status = EXIT_OK
    table_csv = None
    try:
        if sc.suite == "table":
            table_csv = suite_table(ws, rec)
        else:
            SUITE_RUNNERS[sc.suite](ws, rec)
    except (ConvergenceError, DomainEscapeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        status = EXIT_NUMERIC
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if status == EXIT_OK and not all(r.passed for r in rec.records):
        status = EXIT_FAIL

    for r in sorted(rec.records, key=lambda r: r.check_id):
        res = "" if r.residual is None else f" residual={r.residual:.3e}"
        print(f"{'PASS' if r.passed else 'FAIL'} {r.check_id}{res}", file=stdout)
    failed = sum(not r.passed for r in rec.records)
    print(f"{sc.name}: {len(rec.records)} checks, {failed} failed, status {status}", file=stdout)

    if out is not None:
        text = table_csv if table_csv is not None and status != EXIT_NUMERIC else render_report(sc, rec.records, status)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    elif table_csv is not None:
        stdout.write(table_csv)
    return status


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sympcocycle", description="Run cocycle experiment scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="scenario file (TOML)")
        sp.add_argument("--out", help="report path (JSON lines; CSV for the table suite)")
        sp.add_argument("--tol", type=float, help="override every acceptance tolerance")
        sp.add_argument("--seed", type=int, help="override the scenario seed")

    run = sub.add_parser("run", help="run the suite named in the scenario (or --suite)")
    common(run)
    run.add_argument("--suite", choices=SUITES)
    for name in SUITES:
        common(sub.add_parser(name, help=f"run the {name} suite"))
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    suite = args.suite if args.command == "run" else args.command
    return run_scenario(args.config, args.out, suite, args.tol, args.seed)


if __name__ == "__main__":
    sys.exit(main())
