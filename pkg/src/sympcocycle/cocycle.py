"""The two-cocycle G_{x,lambda} and its companion chains.

Notation used throughout: ``alpha_g = g^* lambda - lambda`` (a closed one-form),
``K(g)(y) = int_{x -> y} alpha_g``, ``k(g) = int_{x -> g(x)} lambda`` and the
inhomogeneous coboundary ``(delta c)(g, h) = c(g) - c(gh) + c(h)``.  Every line
integral runs along the model geodesic between its endpoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, FixedPointError
from .geometry import ImagePath, Ray, triangle_area_gauss_bonnet
from .hamiltonian import FlowSettings, HamiltonianSpec, flow
from .quadrature import DEFAULT_TOL, flow_trajectory, integrate_one_form
from .symplectomap import HamiltonianFlowMap, Identity, SympMap, Word, pullback_form

FIXED_POINT_TOL = 1e-8


@dataclass(frozen=True)
class CocycleContext:
    model: object
    basepoint: tuple | None = None
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        bp = self.model.x0 if self.basepoint is None else self.basepoint
        bp = tuple(float(c) for c in np.asarray(bp, dtype=float).ravel())
        self.model.check(bp)
        object.__setattr__(self, "basepoint", bp)

    @property
    def x(self) -> np.ndarray:
        return np.array(self.basepoint)

    def at(self, basepoint) -> "CocycleContext":
        return CocycleContext(self.model, basepoint, self.tol)

    def with_model(self, model) -> "CocycleContext":
        return CocycleContext(model, self.basepoint, self.tol)


@dataclass(frozen=True)
class IsotopySpec:
    h: HamiltonianSpec
    tag: str = ""
    settings: FlowSettings = field(default_factory=FlowSettings)

    def time_one_map(self, model) -> HamiltonianFlowMap:
        return HamiltonianFlowMap(self.h, 1.0, model, self.settings)


def _line(ctx, form, a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        return 0.0
    return integrate_one_form(form, ctx.model.geodesic(a, b), ctx.tol).value


def _is_identity(g) -> bool:
    return isinstance(g, Identity)


def compose(g: SympMap, h: SympMap) -> SympMap:
    """``g o h`` (identities dropped)."""
    if _is_identity(g):
        return h
    if _is_identity(h):
        return g
    return Word((g, h))


def K_tilde(ctx: CocycleContext, g: SympMap, y) -> float:
    if _is_identity(g):
        return 0.0
    return _line(ctx, pullback_form(g, ctx.model), ctx.x, y)


def G(ctx: CocycleContext, g: SympMap, h: SympMap) -> float:
    """``int_{x}^{h(x)} g^* lambda - lambda``."""
    if _is_identity(g) or _is_identity(h):
        return 0.0
    return K_tilde(ctx, g, h.apply(ctx.x))


def coboundary2_residual(ctx, g, h, k) -> float:
    return abs(G(ctx, g, h) - G(ctx, g, compose(h, k)) + G(ctx, compose(g, h), k) - G(ctx, h, k))


def coboundary(c, g, h) -> float:
    """``c(g) - c(gh) + c(h)`` for a one-chain ``c``."""
    return c(g) - c(compose(g, h)) + c(h)


def k_chain(ctx, g) -> float:
    if _is_identity(g):
        return 0.0
    return _line(ctx, ctx.model.lambda_, ctx.x, g.apply(ctx.x))


def trilateral_identity(ctx, g, h):
    """``(G + delta k)(g, h)`` against the loop integral of lambda over the
    sides ``x -> gx``, ``g(x -> hx)`` and ``ghx -> x``.

    Returns ``(lhs, rhs, |lhs - rhs|)``.
    """
    x = ctx.x
    lam = ctx.model.lambda_
    lhs = G(ctx, g, h) + coboundary(lambda f: k_chain(ctx, f), g, h)
    hx = h.apply(x)
    gx = g.apply(x)
    ghx = g.apply(hx)
    middle = 0.0
    if not np.array_equal(x, hx):
        middle = integrate_one_form(lam, ImagePath(g, ctx.model.geodesic(x, hx)), ctx.tol).value
    rhs = _line(ctx, lam, x, gx) + middle - _line(ctx, lam, x, ghx)
    return lhs, rhs, abs(lhs - rhs)


def kahler_cocycle(ctx, g, h) -> float:
    """Signed hyperbolic area of the geodesic triangle ``(x, gx, ghx)``."""
    if ctx.model.kind != "disk":
        raise ConfigurationError("the Kahler cocycle is defined on the disk model only")
    x = ctx.x
    gx = g.apply(x)
    return triangle_area_gauss_bonnet(ctx.model, x, gx, g.apply(h.apply(x)))


def default_ray(ctx, g, direction=None) -> Ray:
    """Ray from the basepoint that leaves every support ball of ``g`` (plus one unit)."""
    balls = g.support()
    if balls is None:
        raise ConfigurationError("map has no support descriptor")
    d = ctx.model.dim
    direction = np.eye(d)[0] if direction is None else np.asarray(direction, float)
    x = ctx.x
    reach = max((ctx.model.distance(x, c) + r for c, r in balls), default=0.0)
    return Ray(ctx.model, x, direction, reach + 1.0)


def _ray_exits_support(ctx, ray, balls) -> bool:
    end = ray.end
    return all(ctx.model.distance(end, c) > r for c, r in balls)


def b_chain(ctx, g, ray=None) -> float:
    """``int_ray alpha_g`` for compactly supported ``g``; beyond the support the
    integrand vanishes, so the ray is truncated just past it."""
    if _is_identity(g):
        return 0.0
    balls = g.support()
    if balls is None:
        raise ConfigurationError("b-chain needs a compactly supported map")
    if ray is None:
        ray = default_ray(ctx, g)
    if not np.allclose(ray.start, ctx.x, atol=1e-12):
        raise ConfigurationError("ray must start at the basepoint")
    if not _ray_exits_support(ctx, ray, balls):
        raise ConfigurationError("ray does not leave the support of the map")
    return integrate_one_form(pullback_form(g, ctx.model), ray, ctx.tol).value


def compact_coboundary_residual(ctx, g, h, direction=None) -> float:
    """``|G(g, h) - (delta b)(g, h)|`` with a common ray direction."""
    b = lambda f: b_chain(ctx, f, default_ray(ctx, f, direction) if not _is_identity(f) else None)
    return abs(G(ctx, g, h) - coboundary(b, g, h))


def _require_fixed(g, p, what, tol=FIXED_POINT_TOL):
    moved = float(np.linalg.norm(g.apply(p) - np.asarray(p, float)))
    if moved > tol:
        raise FixedPointError(f"{what} is moved by {moved:.3e} (> {tol:g})")


def hom_Gxh(ctx, h, g, tol=FIXED_POINT_TOL) -> float:
    """``G(g, h)`` for ``g`` fixing both ``x`` and ``h(x)``; additive in ``g``."""
    if _is_identity(g):
        return 0.0
    _require_fixed(g, ctx.x, "basepoint")
    _require_fixed(g, h.apply(ctx.x), "h(basepoint)")
    return G(ctx, g, h)


def action_functional(ctx, iso: IsotopySpec, p) -> float:
    """``F_1(p) = int_0^1 (lambda(X_s) + H_s)(f_s(p)) ds``."""
    return flow_trajectory(iso.h, ctx.model, p, 0.0, 1.0, iso.settings).time_integral()


def isotopy_independence_residual(ctx, iso1, iso2, p, endpoint_tol=1e-6) -> float:
    p = np.asarray(p, float)
    e1 = flow(iso1.h, ctx.model, p, settings=iso1.settings, jacobian=False).points[0]
    e2 = flow(iso2.h, ctx.model, p, settings=iso2.settings, jacobian=False).points[0]
    if np.linalg.norm(e1 - e2) > endpoint_tol:
        raise ConfigurationError("isotopies do not share the time-one image of the point")
    return abs(action_functional(ctx, iso1, p) - action_functional(ctx, iso2, p))


def action_difference(ctx, iso, p, q, tol=FIXED_POINT_TOL) -> float:
    """``F_1(q) - F_1(p)`` for fixed points ``p, q`` of the time-one map."""
    g = iso.time_one_map(ctx.model)
    _require_fixed(g, p, "p", tol)
    _require_fixed(g, q, "q", tol)
    if np.array_equal(np.asarray(p, float), np.asarray(q, float)):
        return 0.0
    return action_functional(ctx, iso, q) - action_functional(ctx, iso, p)


def action_increment_residual(ctx, iso, p, y) -> float:
    """``|(F_1(y) - F_1(p)) - (K(g)(y) - K(g)(p))|`` for the time-one map ``g``."""
    g = iso.time_one_map(ctx.model)
    dF = action_functional(ctx, iso, y) - action_functional(ctx, iso, p)
    dK = K_tilde(ctx, g, y) - K_tilde(ctx, g, p)
    return abs(dF - dK)


def basepoint_change_residual(ctx, other_basepoint, g, h) -> float:
    """``|G_x - G_x' - delta c|`` with ``c(f) = int_{x -> x'} alpha_f``."""
    other = ctx.at(other_basepoint)
    c = lambda f: 0.0 if _is_identity(f) else _line(ctx, pullback_form(f, ctx.model), ctx.x, other.x)
    return abs(G(ctx, g, h) - G(other, g, h) - coboundary(c, g, h))


def _plane_F(P):
    P = np.atleast_2d(P)
    return 0.5 * np.sum(P[:, 0::2] * P[:, 1::2], axis=1)


def primitive_change_residual(ctx, g, h) -> float:
    """Radial vs liouville primitive on the plane: ``|G_rad - G_liou - delta e|``
    with ``e(f) = F(f x) - F(x)`` and ``F = 1/2 sum x_i y_i``."""
    if ctx.model.kind != "plane":
        raise ConfigurationError("primitive change is tested on the plane model")
    rad = ctx.with_model(ctx.model.with_primitive("radial"))
    lio = ctx.with_model(ctx.model.with_primitive("liouville"))
    x = ctx.x
    e = lambda f: float(_plane_F(f.apply(x))[0] - _plane_F(x)[0])
    return abs(G(rad, g, h) - G(lio, g, h) - coboundary(e, g, h))
