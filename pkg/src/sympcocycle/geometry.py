"""Exact symplectic manifold models, paths, and area oracles.

Two models are provided, both contractible:

* ``EuclideanPlane(n, primitive)`` -- R^{2n} with chart coordinates ordered
  in pairs ``(x1, y1, x2, y2, ...)``, symplectic form ``sum dx_i ^ dy_i`` and
  primitive either ``radial`` (``1/2 sum x_i dy_i - y_i dx_i``) or
  ``liouville`` (``sum x_i dy_i``).
* ``HyperbolicDisk(basepoint)`` -- the Poincare disk of curvature -1, whose
  symplectic form is the hyperbolic area form ``4 du dv / (1 - |z|^2)^2`` and
  whose primitive is ``(cosh r - 1) dtheta`` in geodesic polar coordinates
  about ``basepoint``.

All model methods are vectorised: points are ``(N, d)`` arrays.  The module
level functions accept a single point or a batch.

Orientation convention: counterclockwise in the chart is positive, so signed
areas agree with integrals of the symplectic form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

DISK_MARGIN = 1e-9
BASEPOINT_RADIUS_TOL = 1e-12


def as_points(p, dim: int) -> tuple[np.ndarray, bool]:
    """Return ``(P, single)`` with ``P`` of shape (N, dim)."""
    P = np.asarray(p, dtype=float)
    single = P.ndim == 1
    P = np.atleast_2d(P)
    if P.ndim != 2 or P.shape[1] != dim:
        raise DomainError(f"expected points of dimension {dim}, got shape {np.shape(p)}")
    if not np.all(np.isfinite(P)):
        raise DomainError("point coordinates must be finite")
    return P, single


def _unbatch(X, single):
    return X[0] if single else X


def standard_omega(dim: int) -> np.ndarray:
    """Chart matrix of ``sum dx_i ^ dy_i`` in pair ordering: omega(a, b) = a @ W @ b."""
    W = np.zeros((dim, dim))
    for i in range(0, dim, 2):
        W[i, i + 1] = 1.0
        W[i + 1, i] = -1.0
    return W


def apply_omega(V: np.ndarray) -> np.ndarray:
    """Multiply the last axis of ``V`` by the standard symplectic matrix."""
    out = np.empty_like(V)
    out[..., 0::2] = V[..., 1::2]
    out[..., 1::2] = -V[..., 0::2]
    return out


def _to_complex(P):
    return P[:, 0] + 1j * P[:, 1]


def _to_real(Z):
    Z = np.asarray(Z, dtype=complex)
    return np.stack([Z.real, Z.imag], axis=-1)


def _complex_jacobian(dz):
    """Real 2x2 Jacobians of holomorphic maps with complex derivatives ``dz``."""
    dz = np.asarray(dz, dtype=complex)
    J = np.empty(dz.shape + (2, 2))
    J[..., 0, 0] = dz.real
    J[..., 0, 1] = -dz.imag
    J[..., 1, 0] = dz.imag
    J[..., 1, 1] = dz.real
    return J


def to_origin(b: complex, z):
    """Disk isometry moving ``b`` to 0, and its complex derivative."""
    den = 1.0 - np.conj(b) * z
    return (z - b) / den, (1.0 - abs(b) ** 2) / den**2


def from_origin(b: complex, w):
    """Inverse of :func:`to_origin`."""
    den = 1.0 + np.conj(b) * w
    return (w + b) / den, (1.0 - abs(b) ** 2) / den**2


def klein(z):
    """Poincare to Klein model; geodesics become chords."""
    return 2.0 * z / (1.0 + np.abs(z) ** 2)


# ---------------------------------------------------------------------------
# paths


class PathSpec:
    """A curve on ``[0, 1]`` with vectorised position and velocity."""

    breakpoints: tuple = ()

    def point(self, t) -> np.ndarray:
        raise NotImplementedError

    def velocity(self, t) -> np.ndarray:
        raise NotImplementedError

    @property
    def start(self) -> np.ndarray:
        return self.point(np.array([0.0]))[0]

    @property
    def end(self) -> np.ndarray:
        return self.point(np.array([1.0]))[0]

    def reversed(self) -> "PathSpec":
        return ReversedPath(self)


@dataclass(frozen=True, eq=False)
class Segment(PathSpec):
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))

    def point(self, t):
        t = np.asarray(t, dtype=float)[:, None]
        return self.a + t * (self.b - self.a)

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self.b - self.a, (t.size, self.a.size)).copy()


@dataclass(frozen=True, eq=False)
class DiskGeodesic(PathSpec):
    """Constant-speed hyperbolic geodesic between two disk points."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = complex(*np.asarray(self.a, dtype=float))
        b = complex(*np.asarray(self.b, dtype=float))
        w, _ = to_origin(a, b)
        object.__setattr__(self, "_a", a)
        object.__setattr__(self, "_length", 2.0 * math.atanh(min(abs(w), 1.0 - 1e-16)))
        object.__setattr__(self, "_dir", complex(np.exp(1j * np.angle(w))) if w != 0 else 1.0 + 0j)

    @property
    def length(self) -> float:
        return self._length

    def point(self, t):
        t = np.asarray(t, dtype=float)
        zeta = np.tanh(0.5 * t * self._length) * self._dir
        z, _ = from_origin(self._a, zeta)
        return _to_real(z)

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        half = 0.5 * self._length
        zeta = np.tanh(half * t) * self._dir
        dzeta = half / np.cosh(half * t) ** 2 * self._dir
        _, dz = from_origin(self._a, zeta)
        return _to_real(dz * dzeta)


@dataclass(frozen=True, eq=False)
class Polyline(PathSpec):
    """Chart-straight pieces through ``points``, piece k on [k/m, (k+1)/m]."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if len(pts) < 2:
            raise ValueError("a polyline needs at least two points")
        object.__setattr__(self, "points", pts)
        m = len(pts) - 1
        object.__setattr__(self, "breakpoints", tuple(k / m for k in range(1, m)))

    def _piece(self, t):
        m = len(self.points) - 1
        s = np.clip(np.asarray(t, dtype=float), 0.0, 1.0) * m
        k = np.minimum(np.floor(s).astype(int), m - 1)
        return k, s - k, m

    def point(self, t):
        k, u, _ = self._piece(t)
        p0, p1 = self.points[k], self.points[k + 1]
        return p0 + u[:, None] * (p1 - p0)

    def velocity(self, t):
        k, _, m = self._piece(t)
        return m * (self.points[k + 1] - self.points[k])


@dataclass(frozen=True, eq=False)
class Parametrized(PathSpec):
    """User curve; velocity by central differences when not supplied."""

    curve: object
    derivative: object = None
    breakpoints: tuple = ()
    fd_step: float = 1e-6

    def point(self, t):
        return np.atleast_2d(np.asarray(self.curve(np.asarray(t, dtype=float)), dtype=float))

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        if self.derivative is not None:
            return np.atleast_2d(np.asarray(self.derivative(t), dtype=float))
        h = self.fd_step
        return (self.point(t + h) - self.point(t - h)) / (2 * h)


@dataclass(frozen=True, eq=False)
class ReversedPath(PathSpec):
    path: PathSpec

    @property
    def breakpoints(self):
        return tuple(sorted(1.0 - b for b in self.path.breakpoints))

    def point(self, t):
        return self.path.point(1.0 - np.asarray(t, dtype=float))

    def velocity(self, t):
        return -self.path.velocity(1.0 - np.asarray(t, dtype=float))

    def reversed(self):
        return self.path


@dataclass(frozen=True, eq=False)
class ImagePath(PathSpec):
    """``t -> g(path(t))`` for any map exposing ``evaluate(P) -> (images, jacobians)``."""

    g: object
    path: PathSpec

    @property
    def breakpoints(self):
        return self.path.breakpoints

    def point(self, t):
        Q, _ = self.g.evaluate(self.path.point(t), jacobian=False)
        return Q

    def velocity(self, t):
        _, J = self.g.evaluate(self.path.point(t))
        return np.einsum("nij,nj->ni", J, self.path.velocity(t))


@dataclass(frozen=True, eq=False)
class Ray(PathSpec):
    """Geodesic ray from ``origin`` along ``direction``, truncated at ``length``."""

    model: object
    origin: np.ndarray
    direction: np.ndarray
    length: float

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        d = np.asarray(self.direction, dtype=float)
        nrm = np.linalg.norm(d)
        if nrm == 0:
            raise ValueError("ray direction must be nonzero")
        object.__setattr__(self, "direction", d / nrm)
        object.__setattr__(self, "_path", self.model.ray_path(self.origin, self.direction, self.length))

    def point(self, t):
        return self._path.point(t)

    def velocity(self, t):
        return self._path.velocity(t)


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class EuclideanPlane:
    n: int = 1
    primitive: str = "radial"
    basepoint: tuple | None = None

    kind = "plane"

    def __post_init__(self):
        if self.primitive not in ("radial", "liouville"):
            raise ValueError(f"unknown plane primitive {self.primitive!r}")
        if self.n < 1:
            raise ValueError("n must be positive")
        bp = (0.0,) * (2 * self.n) if self.basepoint is None else tuple(float(c) for c in self.basepoint)
        if len(bp) != 2 * self.n:
            raise DomainError("basepoint has wrong dimension")
        object.__setattr__(self, "basepoint", bp)

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def x0(self) -> np.ndarray:
        return np.array(self.basepoint)

    def with_primitive(self, primitive: str) -> "EuclideanPlane":
        return EuclideanPlane(self.n, primitive, self.basepoint)

    def check(self, P) -> np.ndarray:
        return as_points(P, self.dim)[0]

    def lambda_(self, P) -> np.ndarray:
        P = self.check(P)
        L = np.zeros_like(P)
        x, y = P[:, 0::2], P[:, 1::2]
        if self.primitive == "radial":
            L[:, 0::2] = -0.5 * y
            L[:, 1::2] = 0.5 * x
        else:
            L[:, 1::2] = x
        return L

    def omega(self, P) -> np.ndarray:
        P = self.check(P)
        return np.broadcast_to(standard_omega(self.dim), (len(P), self.dim, self.dim)).copy()

    def metric_factor(self, P) -> np.ndarray:
        return np.ones(len(self.check(P)))

    def distance(self, a, b) -> float:
        return float(np.linalg.norm(np.asarray(b, float) - np.asarray(a, float)))

    def geodesic(self, a, b) -> PathSpec:
        return Segment(self.check(a)[0], self.check(b)[0])

    def ray_path(self, origin, direction, length) -> PathSpec:
        return Segment(origin, origin + length * direction)

    def hamiltonian_field(self, P, dH, d2H=None):
        """Vector field X with ``i_X omega = dH`` and, if ``d2H`` is given, its Jacobian."""
        X = apply_omega(dH)
        DX = None if d2H is None else np.einsum("ij,njk->nik", standard_omega(self.dim), d2H)
        return X, DX

    def primitive_bound(self, center, radius) -> float:
        """Sup of the metric norm of the primitive over a closed ball."""
        c = np.asarray(center, float)
        if self.primitive == "radial":
            return 0.5 * (np.linalg.norm(c) + radius)
        return float(np.sqrt(np.sum(np.abs(c[0::2]) ** 2)) + radius)

    def sample(self, rng, size, scale=2.0) -> np.ndarray:
        return rng.uniform(-scale, scale, size=(size, self.dim))


@dataclass(frozen=True)
class HyperbolicDisk:
    basepoint: tuple = (0.0, 0.0)

    kind = "disk"
    dim = 2
    n = 1
    primitive = "radial"

    def __post_init__(self):
        bp = tuple(float(c) for c in self.basepoint)
        if len(bp) != 2:
            raise DomainError("disk basepoint must have two coordinates")
        object.__setattr__(self, "basepoint", bp)
        self.check(bp)

    @property
    def x0(self) -> np.ndarray:
        return np.array(self.basepoint)

    @property
    def _b(self) -> complex:
        return complex(*self.basepoint)

    def check(self, P) -> np.ndarray:
        P, _ = as_points(P, 2)
        if np.any(np.hypot(P[:, 0], P[:, 1]) > 1.0 - DISK_MARGIN):
            raise DomainError("point outside the Poincare disk chart")
        return P

    def lambda_(self, P) -> np.ndarray:
        # pullback of 2 Im(conj(w) dw) / (1 - |w|^2) along w = T(z), T moving the basepoint to 0
        z = _to_complex(self.check(P))
        w, dw = to_origin(self._b, z)
        c = np.conj(w) * dw
        den = 1.0 - np.abs(w) ** 2
        return np.stack([2.0 * c.imag / den, 2.0 * c.real / den], axis=-1)

    def metric_factor(self, P) -> np.ndarray:
        P = self.check(P)
        return 4.0 / (1.0 - np.sum(P**2, axis=1)) ** 2

    def omega(self, P) -> np.ndarray:
        f = self.metric_factor(P)
        return f[:, None, None] * standard_omega(2)

    def distance(self, a, b) -> float:
        a = complex(*self.check(a)[0])
        b = complex(*self.check(b)[0])
        return 2.0 * math.atanh(min(abs(a - b) / abs(1.0 - np.conj(a) * b), 1.0))

    def radius(self, P) -> np.ndarray:
        """Hyperbolic distance of each point from the basepoint."""
        w, _ = to_origin(self._b, _to_complex(self.check(P)))
        return 2.0 * np.arctanh(np.abs(w))

    def potential(self, P) -> np.ndarray:
        """Radial Kahler potential ``log(cosh r + 1)``; ``lambda = -J dphi``."""
        return np.log(np.cosh(self.radius(P)) + 1.0)

    def geodesic(self, a, b) -> PathSpec:
        return DiskGeodesic(self.check(a)[0], self.check(b)[0])

    def ray_path(self, origin, direction, length) -> PathSpec:
        o = complex(*origin)
        # to_origin has positive real derivative at o, so directions are preserved
        w = math.tanh(0.5 * length) * complex(*direction)
        end, _ = from_origin(o, w)
        return DiskGeodesic(np.asarray(origin, float), np.array([end.real, end.imag]))

    def hamiltonian_field(self, P, dH, d2H=None):
        P = self.check(P)
        s = 1.0 - np.sum(P**2, axis=1)
        f = 0.25 * s**2
        X = f[:, None] * apply_omega(dH)
        if d2H is None:
            return X, None
        grad_f = -s[:, None] * P
        inner = f[:, None, None] * d2H + dH[:, :, None] * grad_f[:, None, :]
        return X, np.einsum("ij,njk->nik", standard_omega(2), inner)

    def primitive_bound(self, center=None, radius=None) -> float:
        # |lambda| = tanh(r/2) < 1 everywhere
        return 1.0

    def sample(self, rng, size, max_radius=2.5) -> np.ndarray:
        r = rng.uniform(0.0, max_radius, size)
        th = rng.uniform(0.0, 2 * math.pi, size)
        w = np.tanh(0.5 * r) * np.exp(1j * th)
        z, _ = from_origin(self._b, w)
        return _to_real(z)


ManifoldModel = EuclideanPlane | HyperbolicDisk


# ---------------------------------------------------------------------------
# module-level operations


def lambda_at(model, p) -> np.ndarray:
    P, single = as_points(p, model.dim)
    return _unbatch(model.lambda_(P), single)


def geodesic(model, a, b) -> PathSpec:
    return model.geodesic(a, b)


def distance(model, a, b) -> float:
    return model.distance(a, b)


def covector_norm(model, p, covector) -> np.ndarray:
    """Metric norm of covectors at points; conformal models only."""
    P, single = as_points(p, model.dim)
    C = np.atleast_2d(np.asarray(covector, float))
    nrm = np.linalg.norm(C, axis=1) / np.sqrt(model.metric_factor(P))
    return nrm[0] if single else nrm


DEGENERATE_SIDE = 1e-9


def _vertex_angle(v, p, q) -> float:
    wp, _ = to_origin(v, p)
    wq, _ = to_origin(v, q)
    # below this side length the angle is roundoff while the area is ~ side * diameter
    if abs(wp) < DEGENERATE_SIDE or abs(wq) < DEGENERATE_SIDE:
        return math.nan
    return abs(float(np.angle(wq * np.conj(wp))))


def triangle_orientation(a, b, c) -> int:
    """Orientation sign of the geodesic triangle, computed in the Klein model."""
    ka, kb, kc = (klein(complex(*np.asarray(v, float))) for v in (a, b, c))
    u, v = kb - ka, kc - ka
    cross = u.real * v.imag - u.imag * v.real
    return int(np.sign(cross))


def triangle_area_gauss_bonnet(model, a, b, c) -> float:
    """Signed hyperbolic area ``sign * (pi - alpha - beta - gamma)``."""
    if model.kind != "disk":
        raise TypeError("Gauss-Bonnet area is defined for the hyperbolic disk only")
    pts = [complex(*model.check(v)[0]) for v in (a, b, c)]
    angles = [
        _vertex_angle(pts[0], pts[1], pts[2]),
        _vertex_angle(pts[1], pts[2], pts[0]),
        _vertex_angle(pts[2], pts[0], pts[1]),
    ]
    if any(math.isnan(x) for x in angles):
        return 0.0
    sign = triangle_orientation(a, b, c)
    if sign == 0:
        return 0.0
    return sign * (math.pi - math.fsum(sorted(angles)))


def check_dlambda(model, p, h_step: float = 1e-5) -> float:
    """Max-norm residual between the finite-difference exterior derivative of the
    primitive and the model's symplectic form at ``p``."""
    P = model.check(p)[0]
    d = model.dim
    E = np.eye(d) * h_step
    L_plus = model.lambda_(P + E)
    L_minus = model.lambda_(P - E)
    D = (L_plus - L_minus) / (2.0 * h_step)  # D[i, j] = d_i lambda_j
    dlam = D - D.T
    return float(np.max(np.abs(dlam - model.omega(P)[0])))


def boundary_integral_area(model, a, b, c, tol: float = 1e-10) -> float:
    """Signed area of the geodesic triangle via Stokes: the integral of the
    primitive around its boundary."""
    from .quadrature import integrate_one_form

    total = 0.0
    for p, q in ((a, b), (b, c), (c, a)):
        total += integrate_one_form(model.lambda_, model.geodesic(p, q), tol).value
    return total
