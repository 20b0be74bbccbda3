"""Symplectic diffeomorphisms with exact point action and differentials.

Every map exposes ``evaluate(P, jacobian=True) -> (images, jacobians)`` on
point batches of shape (N, d); the module functions :func:`apply`,
:func:`differential`, :func:`pullback_delta_lambda`, :func:`inverse` and
:func:`verify_symplectic` are thin wrappers that also accept single points.

A :class:`Word` ``[f1, f2, ..., fk]`` is the composite ``f1 o f2 o ... o fk``,
so ``fk`` acts first.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from .errors import DomainError
from .geometry import (
    DISK_MARGIN,
    EuclideanPlane,
    _complex_jacobian,
    _to_complex,
    _to_real,
    as_points,
    standard_omega,
)
from .hamiltonian import FlowSettings, HamiltonianSpec, flow

SYMPLECTIC_TOL = 1e-10
FD_STEP = 1e-6


def _round_key(a, digits=9):
    a = np.round(np.asarray(a), digits) + 0.0  # +0.0 folds -0.0 into 0.0
    return a.tobytes()


class SympMap:
    dim: int = 2

    def evaluate(self, P, jacobian=True):
        raise NotImplementedError

    def apply(self, p):
        P, single = as_points(p, self.dim)
        Q, _ = self.evaluate(P, jacobian=False)
        return Q[0] if single else Q

    def differential(self, p):
        P, single = as_points(p, self.dim)
        _, J = self.evaluate(P)
        return J[0] if single else J

    def inverse(self) -> "SympMap":
        raise NotImplementedError

    def support(self):
        """Balls ``[(center, radius), ...]`` containing the support, or None if
        the map is not known to be compactly supported."""
        return None

    def key(self):
        return ("map", id(self))

    def __matmul__(self, other: "SympMap") -> "Word":
        return Word((self, other))


@dataclass(frozen=True, eq=False)
class Identity(SympMap):
    dim: int = 2

    def evaluate(self, P, jacobian=True):
        P, _ = as_points(P, self.dim)
        J = np.broadcast_to(np.eye(self.dim), (len(P), self.dim, self.dim)).copy() if jacobian else None
        return P.copy(), J

    def inverse(self):
        return self

    def support(self):
        return []

    def key(self):
        return ("id", self.dim)


@dataclass(frozen=True, eq=False)
class AffineSymplectic(SympMap):
    """``p -> A p + t`` with ``A^T W A = W``."""

    A: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        t = np.array(self.t, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2 or t.shape != (A.shape[0],):
            raise ValueError("affine map needs a square even-dimensional matrix and matching translation")
        W = standard_omega(A.shape[0])
        if np.max(np.abs(A.T @ W @ A - W)) > SYMPLECTIC_TOL * max(1.0, np.max(np.abs(A)) ** 2):
            raise ValueError("matrix is not symplectic")
        A.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "t", t)

    @property
    def dim(self):
        return self.A.shape[0]

    def evaluate(self, P, jacobian=True):
        P, _ = as_points(P, self.dim)
        J = np.broadcast_to(self.A, (len(P), self.dim, self.dim)).copy() if jacobian else None
        return P @ self.A.T + self.t, J

    def inverse(self):
        Ainv = np.linalg.inv(self.A)
        return AffineSymplectic(Ainv, -Ainv @ self.t)

    def key(self):
        return ("affine", _round_key(self.A), _round_key(self.t))


def translation(u) -> AffineSymplectic:
    u = np.asarray(u, dtype=float)
    return AffineSymplectic(np.eye(u.size), u)


def linear_symplectic(S) -> np.ndarray:
    """``expm(W S)`` for symmetric ``S``: a symplectic matrix."""
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + S.T)
    return expm(standard_omega(S.shape[0]) @ S)


@dataclass(frozen=True, eq=False)
class MoebiusIsometry(SympMap):
    """Orientation-preserving isometry ``z -> (a z + b) / (c z + d)`` of the disk."""

    m: np.ndarray
    dim = 2

    def __post_init__(self):
        m = np.array(self.m, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError("Moebius matrix must be 2x2")
        det = np.linalg.det(m)
        if abs(det) < 1e-14:
            raise ValueError("singular Moebius matrix")
        m = m / np.sqrt(det)
        # SU(1,1) up to sign: d = conj(a), c = conj(b)
        if max(abs(m[1, 1] - np.conj(m[0, 0])), abs(m[1, 0] - np.conj(m[0, 1]))) > 1e-9:
            m = -m if max(abs(m[1, 1] + np.conj(m[0, 0])), abs(m[1, 0] + np.conj(m[0, 1]))) <= 1e-9 else m
            m = m * 1j if max(abs(m[1, 1] - np.conj(m[0, 0])), abs(m[1, 0] - np.conj(m[0, 1]))) > 1e-9 else m
            if max(abs(m[1, 1] - np.conj(m[0, 0])), abs(m[1, 0] - np.conj(m[0, 1]))) > 1e-9:
                raise ValueError("matrix does not preserve the unit disk")
        if m[0, 0].real < 0 or (m[0, 0].real == 0 and m[0, 0].imag < 0):
            m = -m
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def rotation(cls, theta: float) -> "MoebiusIsometry":
        return cls(np.diag([np.exp(0.5j * theta), np.exp(-0.5j * theta)]))

    @classmethod
    def moving_origin_to(cls, b) -> "MoebiusIsometry":
        b = complex(*b) if np.ndim(b) else complex(b)
        return cls(np.array([[1.0, b], [np.conj(b), 1.0]]) / math.sqrt(1.0 - abs(b) ** 2))

    @classmethod
    def from_parameters(cls, shift: float, phase_a: float, phase_b: float) -> "MoebiusIsometry":
        """SU(1,1) element with ``a = cosh(shift) e^{i phase_a}``, ``b = sinh(shift) e^{i phase_b}``."""
        a = math.cosh(shift) * np.exp(1j * phase_a)
        b = math.sinh(shift) * np.exp(1j * phase_b)
        return cls(np.array([[a, b], [np.conj(b), np.conj(a)]]))

    @classmethod
    def random(cls, rng, max_shift=1.0, hyperbolic=False) -> "MoebiusIsometry":
        while True:
            g = cls.from_parameters(rng.uniform(0.05, max_shift), rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi))
            if not hyperbolic or abs(np.trace(g.m).real) > 2.0 + 1e-6:
                return g

    def _check(self, P):
        P, _ = as_points(P, 2)
        if np.any(np.hypot(P[:, 0], P[:, 1]) > 1.0 - DISK_MARGIN):
            raise DomainError("point outside the Poincare disk chart")
        return P

    def evaluate(self, P, jacobian=True):
        z = _to_complex(self._check(P))
        (a, b), (c, d) = self.m
        den = c * z + d
        w = (a * z + b) / den
        return _to_real(w), (_complex_jacobian(1.0 / den**2) if jacobian else None)

    def inverse(self):
        (a, b), (c, d) = self.m
        return MoebiusIsometry(np.array([[d, -b], [-c, a]]))

    def key(self):
        return ("moebius", _round_key(self.m))


@dataclass(frozen=True, eq=False)
class HamiltonianFlowMap(SympMap):
    """Time-``time`` map of the flow of ``h`` (or its inverse when ``inverted``)."""

    h: HamiltonianSpec
    time: float = 1.0
    model: object = field(default_factory=EuclideanPlane)
    settings: FlowSettings = field(default_factory=FlowSettings)
    inverted: bool = False
    _grid: dict = field(init=False, default_factory=dict, repr=False)

    @property
    def dim(self):
        return self.model.dim

    def _probe_points(self):
        # rings over the support ball in every coordinate pair, so that the
        # step validated once covers every point the flow can move
        c, R = self.h.support_center, self.h.support_radius
        d = c.size
        pts = [c]
        for rad in (0.2, 0.4, 0.6, 0.75, 0.9):
            for th in np.linspace(0.0, 2 * math.pi, 8, endpoint=False):
                for k in range(0, d, 2):
                    p = c.copy()
                    p[k] += rad * R * math.cos(th)
                    p[k + 1] += rad * R * math.sin(th)
                    pts.append(p)
        P = np.array(pts)
        if self.model.kind == "disk":
            P = P[np.hypot(P[:, 0], P[:, 1]) < 1.0 - 1e-3]
        return P

    def _flow(self, gen, P, jacobian):
        """Flow with step control; compactly supported flows validate their grid
        once (on the first batch plus probe points covering the support) and
        replay it afterwards."""
        if self.settings.method == "exact" or self.h.support is None:
            return flow(gen, self.model, P, 0.0, self.time, self.settings, jacobian=jacobian).points_jac
        k = self._grid.get("halvings")
        if k is None:
            probe = self._probe_points()
            res = flow(gen, self.model, np.concatenate([P, probe]), 0.0, self.time, self.settings, jacobian=True)
            self._grid["halvings"] = res.halvings
            n = len(P)
            return res.points[:n], (res.jacobians[:n] if jacobian else None)
        return flow(gen, self.model, P, 0.0, self.time, self.settings, jacobian=jacobian, halvings=k).points_jac

    @property
    def generator(self) -> HamiltonianSpec:
        return self.h.reversed(self.time) if self.inverted else self.h

    def evaluate(self, P, jacobian=True):
        P = self.model.check(P)
        gen = self.generator
        if jacobian and gen.hessian is None and self.settings.method == "rk4":
            return self._evaluate_fd(P, gen)
        return self._flow(gen, P, jacobian)

    def _evaluate_fd(self, P, gen):
        # Richardson-extrapolated central differences of the flow map, one batched flow call
        N, d = P.shape
        offsets = []
        for hstep in (FD_STEP, 0.5 * FD_STEP):
            for i in range(d):
                e = np.zeros(d)
                e[i] = hstep
                offsets.extend([e, -e])
        stacked = np.concatenate([P] + [P + e for e in offsets])
        Q, _ = self._flow(gen, stacked, False)
        base, rest = Q[:N], Q[N:].reshape(2, d, 2, N, d)
        D = np.empty((2, N, d, d))
        for k, hstep in enumerate((FD_STEP, 0.5 * FD_STEP)):
            for i in range(d):
                D[k, :, :, i] = (rest[k, i, 0] - rest[k, i, 1]) / (2 * hstep)
        return base, (4.0 * D[1] - D[0]) / 3.0

    def inverse(self):
        return replace(self, inverted=not self.inverted)

    def support(self):
        if self.h.support is None:
            return None
        return [(self.h.support_center, self.h.support_radius)]

    def key(self):
        return ("flow", id(self.h), self.time, self.inverted, id(self.model))


@dataclass(frozen=True, eq=False)
class CompactBump(HamiltonianFlowMap):
    """Flow of a compactly supported Hamiltonian; identity outside radius ``radius``."""

    radius: float | None = None

    def __post_init__(self):
        if self.h.support is None:
            raise ValueError("CompactBump needs a Hamiltonian with a support descriptor")
        if self.radius is None:
            object.__setattr__(self, "radius", self.h.support_radius)
        if self.radius < self.h.support_radius:
            raise ValueError("declared support radius is smaller than the Hamiltonian's support")

    def support(self):
        return [(self.h.support_center, float(self.radius))]


# ---------------------------------------------------------------------------
# cotangent lifts on T*R^n, chart pairs (x_i, y_i) = (p_i, q_i) so that the
# liouville primitive sum x_i dy_i is the canonical form sum p_i dq_i


@dataclass(frozen=True, eq=False)
class AffineBaseDiffeo:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.atleast_2d(np.asarray(self.A, dtype=float)))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))
        if abs(np.linalg.det(self.A)) < 1e-12:
            raise ValueError("base map must be invertible")

    @property
    def n(self):
        return self.A.shape[0]

    def map(self, Q):
        return Q @ self.A.T + self.b

    def jacobian(self, Q):
        return np.broadcast_to(self.A, (len(Q), self.n, self.n))

    def dual_derivative(self, Q, Pf):
        """d/dq of ``Dphi(q)^{-T} p``."""
        return np.zeros((len(Q), self.n, self.n))

    def inverse(self):
        Ainv = np.linalg.inv(self.A)
        return AffineBaseDiffeo(Ainv, -Ainv @ self.b)


@dataclass(frozen=True, eq=False)
class SineShearDiffeo:
    """``q -> a q + b + eps sin(k q)`` on R, a diffeomorphism when ``|eps k| < |a|``."""

    a: float = 1.0
    b: float = 0.0
    eps: float = 0.0
    k: float = 1.0
    inverted: bool = False
    n = 1

    def __post_init__(self):
        if abs(self.eps * self.k) >= abs(self.a):
            raise ValueError("sine shear is not a diffeomorphism: need |eps*k| < |a|")

    def _phi(self, q):
        return self.a * q + self.b + self.eps * np.sin(self.k * q)

    def _dphi(self, q):
        return self.a + self.eps * self.k * np.cos(self.k * q)

    def _d2phi(self, q):
        return -self.eps * self.k**2 * np.sin(self.k * q)

    def _solve(self, y):
        # Newton from the linear guess; phi is strictly monotone
        q = (y - self.b) / self.a
        for _ in range(60):
            step = (self._phi(q) - y) / self._dphi(q)
            q = q - step
            if np.max(np.abs(step), initial=0.0) < 1e-15 * (1 + np.max(np.abs(q), initial=0.0)):
                break
        return q

    def map(self, Q):
        return self._solve(Q) if self.inverted else self._phi(Q)

    def jacobian(self, Q):
        if self.inverted:
            return (1.0 / self._dphi(self._solve(Q)))[:, :, None]
        return self._dphi(Q)[:, :, None]

    def dual_derivative(self, Q, Pf):
        if self.inverted:
            q = self._solve(Q)
            # psi = phi^{-1}: d/dq (p / psi'(q)) = -p psi'' / psi'^2 = p phi''(q~) / phi'(q~)
            return (Pf * self._d2phi(q) / self._dphi(q))[:, :, None]
        return (-Pf * self._d2phi(Q) / self._dphi(Q) ** 2)[:, :, None]

    def inverse(self):
        return replace(self, inverted=not self.inverted)


@dataclass(frozen=True, eq=False)
class CotangentLift(SympMap):
    """``(p, q) -> (Dphi(q)^{-T} p, phi(q))`` for a diffeomorphism ``phi`` of R^n."""

    base: object

    @property
    def dim(self):
        return 2 * self.base.n

    def evaluate(self, P, jacobian=True):
        P, _ = as_points(P, self.dim)
        n = self.base.n
        Pf, Qb = P[:, 0::2], P[:, 1::2]
        Dphi = self.base.jacobian(Qb)
        DinvT = np.linalg.inv(Dphi).transpose(0, 2, 1)
        out = np.empty_like(P)
        out[:, 0::2] = np.einsum("nij,nj->ni", DinvT, Pf)
        out[:, 1::2] = self.base.map(Qb)
        if not jacobian:
            return out, None
        J = np.zeros((len(P), 2 * n, 2 * n))
        J[:, 0::2, 0::2] = DinvT
        J[:, 0::2, 1::2] = self.base.dual_derivative(Qb, Pf)
        J[:, 1::2, 1::2] = Dphi
        return out, J

    def inverse(self):
        return CotangentLift(self.base.inverse())

    def key(self):
        b = self.base
        if isinstance(b, SineShearDiffeo):
            return ("lift-sine", b.a, b.b, b.eps, b.k, b.inverted)
        return ("lift-affine", _round_key(b.A), _round_key(b.b))


@dataclass(frozen=True, eq=False)
class Word(SympMap):
    factors: tuple = ()

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("a word needs at least one factor (use Identity)")
        dims = {f.dim for f in factors}
        if len(dims) != 1:
            raise ValueError("all factors of a word must act on the same dimension")
        object.__setattr__(self, "factors", factors)

    @property
    def dim(self):
        return self.factors[0].dim

    def evaluate(self, P, jacobian=True):
        Q, _ = as_points(P, self.dim)
        J = np.broadcast_to(np.eye(self.dim), (len(Q), self.dim, self.dim)).copy() if jacobian else None
        for f in reversed(self.factors):
            Q, Jf = f.evaluate(Q, jacobian)
            if jacobian:
                J = Jf @ J
        return Q, J

    def inverse(self):
        return Word(tuple(f.inverse() for f in reversed(self.factors)))

    def support(self):
        balls = []
        for f in self.factors:
            s = f.support()
            if s is None:
                return None
            balls.extend(s)
        return balls

    def key(self):
        return ("word",) + tuple(f.key() for f in self.factors)

    def free_reduce(self) -> SympMap:
        """Cancel adjacent ``f, f^-1`` pairs (recognised through ``key``)."""
        stack = []
        for f in self.factors:
            if stack and stack[-1].key() == f.inverse().key():
                stack.pop()
            else:
                stack.append(f)
        return Word(tuple(stack)) if stack else Identity(self.dim)


def compose(*maps: SympMap) -> SympMap:
    return maps[0] if len(maps) == 1 else Word(tuple(maps))


def power(g: SympMap, n: int) -> SympMap:
    if n == 0:
        return Identity(g.dim)
    f = g if n > 0 else g.inverse()
    return f if abs(n) == 1 else Word((f,) * abs(n))


# ---------------------------------------------------------------------------
# module-level operations


def apply(g: SympMap, p):
    return g.apply(p)


def differential(g: SympMap, p):
    return g.differential(p)


def inverse(g: SympMap) -> SympMap:
    return g.inverse()


def pullback_delta_lambda(g: SympMap, model, p):
    """``(g^* lambda - lambda)_p = lambda_{g(p)} o Dg_p - lambda_p``."""
    P, single = as_points(p, model.dim)
    P = model.check(P)
    if isinstance(g, Identity):
        out = np.zeros_like(P)
    else:
        Q, J = g.evaluate(P)
        out = np.einsum("ni,nij->nj", model.lambda_(Q), J) - model.lambda_(P)
    return out[0] if single else out


def pullback_form(g: SympMap, model):
    """The closed one-form ``g^* lambda - lambda`` as a callable on point batches."""
    return lambda P: pullback_delta_lambda(g, model, P)


def verify_symplectic(g: SympMap, model, p) -> float:
    """Max-norm of ``Dg^T Omega(g(p)) Dg - Omega(p)`` over the given points."""
    P = model.check(p)
    Q, J = g.evaluate(P)
    lhs = np.einsum("nji,njk,nkl->nil", J, model.omega(Q), J)
    return float(np.max(np.abs(lhs - model.omega(P))))


def fixed_point_defect(g: SympMap, p) -> float:
    p = np.asarray(p, dtype=float)
    return float(np.linalg.norm(g.apply(p) - p))
