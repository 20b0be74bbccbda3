"""Hamiltonians and their flows.

Sign convention (frozen): the Hamiltonian vector field satisfies
``i_X omega = dH`` with ``omega(a, b) = a @ W @ b``.  On the plane this is
``dx/dt = dH/dy, dy/dt = -dH/dx`` in every coordinate pair, and it is the
convention under which ``f_t^* lambda - lambda = d F_t`` holds for the action
integral ``F_t = int_0^t (lambda(X_s) + H_s) o f_s ds``
(``tests/test_cocycle.py::test_action_increment_matches_K_tilde`` pins it).

Flows are integrated with classical RK4 on a fixed grid together with the
variational equation ``dJ/dt = DX(f_t) J``.  Step control halves the step
until two successive refinements agree within ``FlowSettings.tol``.

Hamiltonians built by :func:`bump_hamiltonian` or :func:`quadratic_hamiltonian`
on the plane run through a compiled kernel; arbitrary callables (and any
Hamiltonian on the disk) use the vectorised numpy integrator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numba import njit
from scipy.linalg import expm

from .errors import ConvergenceError, DomainError, DomainEscapeError
from .geometry import apply_omega, standard_omega

# bump profile psi(s) = exp(1 - 1/(1 - s)) is truncated where it is below 1e-43
BUMP_CUTOFF = 0.99

PROFILE_CODES = {"constant": 0, "double_then_freeze": 1, "linear": 2}
KIND_BUMP = 0
KIND_QUADRATIC = 1


@dataclass(frozen=True)
class TimeProfile:
    """Time weight ``w(t) = scale * base(a*t + b)``.

    ``base`` is one of ``constant`` (1), ``double_then_freeze`` (2 on s < 1/2,
    then 0) or ``linear`` (2 s).  The last two are the speed factors of the
    reparametrisations ``s(t) = min(2t, 1)`` and ``s(t) = t^2``.
    """

    kind: str = "constant"
    scale: float = 1.0
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in PROFILE_CODES:
            raise ValueError(f"unknown time profile {self.kind!r}")

    @property
    def code(self) -> int:
        return PROFILE_CODES[self.kind]

    def weight(self, t, t_mid=None):
        t = np.asarray(t, dtype=float)
        s = self.a * t + self.b
        if self.kind == "constant":
            return self.scale * np.ones_like(s)
        if self.kind == "linear":
            return 2.0 * self.scale * s
        sm = s if t_mid is None else self.a * np.asarray(t_mid, dtype=float) + self.b
        return np.where(sm < 0.5, 2.0 * self.scale, 0.0) * np.ones_like(s)

    def breakpoints(self, t0, t1) -> list[float]:
        if self.kind != "double_then_freeze":
            return []
        tb = (0.5 - self.b) / self.a
        return [tb] if t0 < tb < t1 else []

    def integral(self, t0, t1) -> float:
        a, b = self.a, self.b
        if self.kind == "constant":
            return self.scale * (t1 - t0)
        if self.kind == "linear":
            return self.scale * (a * (t1**2 - t0**2) + 2.0 * b * (t1 - t0))
        tb = (0.5 - b) / a
        lo, hi = (t0, min(t1, tb)) if a > 0 else (max(t0, tb), t1)
        return 2.0 * self.scale * max(hi - lo, 0.0)

    def reversed(self, T) -> "TimeProfile":
        """Profile of ``-H_{T - t}``, which generates the inverse flow on [0, T]."""
        return TimeProfile(self.kind, -self.scale, -self.a, self.a * T + self.b)


def _bump_profile(s):
    """psi, psi', psi'' of the bump profile as functions of s = |p - c|^2 / R^2."""
    inside = s < BUMP_CUTOFF
    q = 1.0 / (1.0 - np.where(inside, s, 0.0))
    psi = np.where(inside, np.exp(1.0 - q), 0.0)
    dpsi = -(q**2) * psi
    d2psi = (q**4 - 2.0 * q**3) * psi
    return psi, dpsi, d2psi


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """A Hamiltonian ``H(t, p)``.

    With a ``profile`` the callables are spatial (``f(P)``) and
    ``H(t, p) = w(t) * value(p)``; otherwise they take ``(t, P)`` with scalar
    ``t``.  Callables are vectorised over points ``P`` of shape (N, d).
    ``gradient``/``hessian`` may be omitted, in which case central differences
    are used.
    """

    value: Callable
    gradient: Callable | None = None
    hessian: Callable | None = None
    profile: TimeProfile | None = None
    support: tuple | None = None
    preset: tuple | None = None
    name: str = "H"
    fd_step: float = 1e-5

    @property
    def autonomous(self) -> bool:
        return self.profile is not None and self.profile.kind == "constant"

    @property
    def support_center(self):
        return None if self.support is None else np.asarray(self.support[0], float)

    @property
    def support_radius(self):
        return None if self.support is None else float(self.support[1])

    def _spatial(self, fn, t, P, t_mid):
        if self.profile is None:
            return fn(float(t), P)
        w = self.profile.weight(t, t_mid)
        out = fn(P)
        return w * out if np.ndim(w) == 0 else w.reshape((-1,) + (1,) * (out.ndim - 1)) * out

    def H(self, t, P, t_mid=None):
        return self._spatial(self.value, t, np.atleast_2d(P), t_mid)

    def dH(self, t, P, t_mid=None):
        P = np.atleast_2d(np.asarray(P, float))
        if self.gradient is not None:
            return self._spatial(self.gradient, t, P, t_mid)
        h = self.fd_step
        cols = []
        for i in range(P.shape[1]):
            e = np.zeros(P.shape[1])
            e[i] = h
            cols.append((self.H(t, P + e, t_mid) - self.H(t, P - e, t_mid)) / (2 * h))
        return np.stack(cols, axis=-1)

    def d2H(self, t, P, t_mid=None):
        P = np.atleast_2d(np.asarray(P, float))
        if self.hessian is not None:
            return self._spatial(self.hessian, t, P, t_mid)
        h = self.fd_step
        cols = []
        for i in range(P.shape[1]):
            e = np.zeros(P.shape[1])
            e[i] = h
            cols.append((self.dH(t, P + e, t_mid) - self.dH(t, P - e, t_mid)) / (2 * h))
        return np.stack(cols, axis=-1)

    def breakpoints(self, t0, t1) -> list[float]:
        return [] if self.profile is None else self.profile.breakpoints(t0, t1)

    def reversed(self, T: float) -> "HamiltonianSpec":
        """Hamiltonian ``-H(T - t, .)``; its time-T flow inverts that of ``self``."""
        if self.profile is not None:
            return replace(self, profile=self.profile.reversed(T), name=f"{self.name}~")

        def neg(fn):
            return None if fn is None else (lambda t, P: -fn(T - t, P))

        return replace(
            self,
            value=neg(self.value),
            gradient=neg(self.gradient),
            hessian=neg(self.hessian),
            name=f"{self.name}~",
        )

    def with_profile(self, profile: TimeProfile) -> "HamiltonianSpec":
        if self.profile is None:
            raise ValueError("only profile-based Hamiltonians can be reparametrised")
        return replace(self, profile=profile)

    def check_gradient(self, P, t=0.0, h=1e-5) -> float:
        """Max deviation between the gradient and central differences of the value."""
        P = np.atleast_2d(np.asarray(P, float))
        G = self.dH(t, P)
        worst = 0.0
        for i in range(P.shape[1]):
            e = np.zeros(P.shape[1])
            e[i] = h
            fd = (self.H(t, P + e) - self.H(t, P - e)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(fd - G[:, i]))))
        return worst

    def check_support(self, P, t=0.0) -> float:
        """Max |H| over sample points lying outside the declared support."""
        if self.support is None:
            raise ValueError("Hamiltonian has no support descriptor")
        P = np.atleast_2d(np.asarray(P, float))
        outside = np.linalg.norm(P - self.support_center, axis=1) >= self.support_radius
        if not np.any(outside):
            return 0.0
        return float(np.max(np.abs(self.H(t, P[outside]))))

    def max_abs_value(self) -> float:
        """Upper bound for sup |H| over space and t in [0, 1] (presets only)."""
        if self.preset is None or self.preset[0] != KIND_BUMP:
            raise ValueError("analytic sup |H| is only available for bump Hamiltonians")
        amp = abs(self.preset[1][-1])
        w = np.abs(self.profile.weight(np.linspace(0, 1, 201), np.linspace(0, 1, 201)))
        return amp * float(np.max(w))

    def max_speed(self, model) -> float:
        """Upper estimate of sup |X_t| (metric norm) over the support, t in [0, 1]."""
        if self.preset is None or self.preset[0] != KIND_BUMP:
            raise ValueError("speed bound is only available for bump Hamiltonians")
        R = self.support_radius
        # radial profile: |grad H| depends on the distance to the centre only
        rho = np.linspace(0.0, R, 4001)
        amp = abs(self.preset[1][-1])
        _, dpsi, _ = _bump_profile((rho / R) ** 2)
        grad = amp * np.abs(dpsi) * 2.0 * rho / R**2
        w = np.abs(self.profile.weight(np.linspace(0, 1, 201), np.linspace(0, 1, 201)))
        bound = float(np.max(grad)) * float(np.max(w)) * 1.01
        if model.kind == "disk":
            # metric norm of X is |grad H| (1 - |z|^2) / 2 <= |grad H| / 2
            bound *= 0.5
        return bound


def bump_hamiltonian(center, radius, amplitude, profile=None, name="bump") -> HamiltonianSpec:
    """Smooth compactly supported radial bump ``A * psi(|p - c|^2 / R^2)``.

    ``psi(s) = exp(1 - 1/(1 - s))`` on ``s < 1`` and 0 outside, so the maximum
    ``A`` is attained at the centre and ``H`` vanishes for ``|p - c| >= R``.
    """
    c = np.asarray(center, dtype=float)
    R = float(radius)
    A = float(amplitude)
    if R <= 0:
        raise ValueError("bump radius must be positive")

    def value(P):
        D = P - c
        psi, _, _ = _bump_profile(np.sum(D * D, axis=1) / R**2)
        return A * psi

    def gradient(P):
        D = P - c
        _, dpsi, _ = _bump_profile(np.sum(D * D, axis=1) / R**2)
        return (2.0 * A / R**2) * dpsi[:, None] * D

    def hessian(P):
        D = P - c
        _, dpsi, d2psi = _bump_profile(np.sum(D * D, axis=1) / R**2)
        outer = np.einsum("ni,nj->nij", D, D)
        eye = np.eye(P.shape[1])
        return A * ((4.0 / R**4) * d2psi[:, None, None] * outer + (2.0 / R**2) * dpsi[:, None, None] * eye)

    params = np.concatenate([c, [R, A]])
    return HamiltonianSpec(
        value=value,
        gradient=gradient,
        hessian=hessian,
        profile=profile or TimeProfile(),
        support=(tuple(c.tolist()), R),
        preset=(KIND_BUMP, params),
        name=name,
    )


def quadratic_hamiltonian(Q, b=None, c0=0.0, profile=None, name="quadratic") -> HamiltonianSpec:
    """``H(p) = 1/2 p.Q.p + b.p + c0`` with symmetric ``Q``."""
    Q = np.asarray(Q, dtype=float)
    Q = 0.5 * (Q + Q.T)
    d = Q.shape[0]
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float)
    c0 = float(c0)

    def value(P):
        return 0.5 * np.einsum("ni,ij,nj->n", P, Q, P) + P @ b + c0

    def gradient(P):
        return P @ Q + b

    def hessian(P):
        return np.broadcast_to(Q, (len(P), d, d)).copy()

    params = np.concatenate([Q.ravel(), b, [c0]])
    return HamiltonianSpec(
        value=value,
        gradient=gradient,
        hessian=hessian,
        profile=profile or TimeProfile(),
        preset=(KIND_QUADRATIC, params),
        name=name,
    )


def rotation_hamiltonian(center, rate, profile=None, name="rotation") -> HamiltonianSpec:
    """``rate/2 |p - c|^2``; its flow rotates every coordinate pair about ``c``."""
    c = np.asarray(center, dtype=float)
    d = c.size
    return quadratic_hamiltonian(rate * np.eye(d), -rate * c, 0.5 * rate * c @ c, profile, name)


# ---------------------------------------------------------------------------
# compiled kernel for preset Hamiltonians on the plane


@njit(cache=True, inline="always")
def _profile_weight(pk, pscale, pa, pb, t, tmid):
    if pk == 0:
        return pscale
    if pk == 1:
        if pa * tmid + pb < 0.5:
            return 2.0 * pscale
        return 0.0
    return 2.0 * pscale * (pa * t + pb)


@njit(cache=True, inline="always")
def _preset_field(kind, params, p, w, want_jac, g, Hs, X, DX):
    d = p.shape[0]
    if kind == 0:
        R = params[d]
        A = params[d + 1]
        inv_r2 = 1.0 / (R * R)
        s = 0.0
        for i in range(d):
            s += (p[i] - params[i]) * (p[i] - params[i])
        s *= inv_r2
        if s < 0.99:
            q = 1.0 / (1.0 - s)
            psi = math.exp(1.0 - q)
            q2 = q * q
            dpsi = -q2 * psi
            c1 = 2.0 * A * dpsi * inv_r2
            for i in range(d):
                g[i] = c1 * (p[i] - params[i])
            if want_jac:
                c2 = 4.0 * A * (q2 * q2 - 2.0 * q2 * q) * psi * inv_r2 * inv_r2
                for i in range(d):
                    for j in range(d):
                        v = c2 * (p[i] - params[i]) * (p[j] - params[j])
                        if i == j:
                            v += c1
                        Hs[i, j] = v
        else:
            for i in range(d):
                g[i] = 0.0
                for j in range(d):
                    Hs[i, j] = 0.0
    else:
        for i in range(d):
            acc = params[d * d + i]
            for j in range(d):
                acc += params[i * d + j] * p[j]
            g[i] = acc
            for j in range(d):
                Hs[i, j] = params[i * d + j]
    for k in range(0, d, 2):
        X[k] = w * g[k + 1]
        X[k + 1] = -w * g[k]
        if want_jac:
            for j in range(d):
                DX[k, j] = w * Hs[k + 1, j]
                DX[k + 1, j] = -w * Hs[k, j]


@njit(cache=True)
def _rk4_preset(kind, params, pk, pscale, pa, pb, P0, want_jac, seg_t0, seg_t1, seg_n, record):
    N, d = P0.shape
    total = 0
    for k in range(seg_n.shape[0]):
        total += seg_n[k]
    Pout = np.empty((N, d))
    Jout = np.empty((N, d, d))
    if record:
        traj = np.empty((total + 1, N, d))
    else:
        traj = np.empty((1, N, d))
    g = np.empty(d)
    Hs = np.zeros((d, d))
    p = np.empty(d)
    J = np.empty((d, d))
    ps = np.empty(d)
    Js = np.empty((d, d))
    kp = np.empty((4, d))
    kJ = np.empty((4, d, d))
    X = np.empty(d)
    DX = np.zeros((d, d))
    coef = (0.0, 0.5, 0.5, 1.0)
    for n in range(N):
        for i in range(d):
            p[i] = P0[n, i]
            for j in range(d):
                J[i, j] = 1.0 if i == j else 0.0
        if record:
            for i in range(d):
                traj[0, n, i] = p[i]
        if kind == 0 and not record:
            # radial bumps vanish identically past the cutoff and preserve |p - c|
            s = 0.0
            for i in range(d):
                s += (p[i] - params[i]) ** 2
            if s >= 0.99 * params[d] * params[d]:
                for i in range(d):
                    Pout[n, i] = p[i]
                    for j in range(d):
                        Jout[n, i, j] = J[i, j]
                continue
        idx = 0
        for k in range(seg_n.shape[0]):
            h = (seg_t1[k] - seg_t0[k]) / seg_n[k]
            for step in range(seg_n[k]):
                t = seg_t0[k] + step * h
                tm = t + 0.5 * h
                for st in range(4):
                    c = coef[st]
                    if st == 0:
                        for i in range(d):
                            ps[i] = p[i]
                    else:
                        for i in range(d):
                            ps[i] = p[i] + c * h * kp[st - 1, i]
                        if want_jac:
                            for i in range(d):
                                for j in range(d):
                                    Js[i, j] = J[i, j] + c * h * kJ[st - 1, i, j]
                    if st == 0 and want_jac:
                        for i in range(d):
                            for j in range(d):
                                Js[i, j] = J[i, j]
                    w = _profile_weight(pk, pscale, pa, pb, t + c * h, tm)
                    _preset_field(kind, params, ps, w, want_jac, g, Hs, X, DX)
                    for i in range(d):
                        kp[st, i] = X[i]
                    if want_jac:
                        for i in range(d):
                            for j in range(d):
                                acc = 0.0
                                for m in range(d):
                                    acc += DX[i, m] * Js[m, j]
                                kJ[st, i, j] = acc
                for i in range(d):
                    p[i] += h / 6.0 * (kp[0, i] + 2.0 * kp[1, i] + 2.0 * kp[2, i] + kp[3, i])
                if want_jac:
                    for i in range(d):
                        for j in range(d):
                            J[i, j] += h / 6.0 * (kJ[0, i, j] + 2.0 * kJ[1, i, j] + 2.0 * kJ[2, i, j] + kJ[3, i, j])
                idx += 1
                if record:
                    for i in range(d):
                        traj[idx, n, i] = p[i]
        for i in range(d):
            Pout[n, i] = p[i]
            for j in range(d):
                Jout[n, i, j] = J[i, j]
    return Pout, Jout, traj


@njit(cache=True, inline="always")
def _bump2_stage(x, y, cx, cy, ir2, A, w, want_jac):
    # field X = w (H_y, -H_x) of a planar radial bump and its Jacobian entries
    dx = x - cx
    dy = y - cy
    s = (dx * dx + dy * dy) * ir2
    if s >= 0.99:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    q = 1.0 / (1.0 - s)
    psi = math.exp(1.0 - q)
    q2 = q * q
    c1 = -2.0 * A * q2 * psi * ir2 * w
    X0 = c1 * dy
    X1 = -c1 * dx
    if not want_jac:
        return X0, X1, 0.0, 0.0, 0.0, 0.0
    c2 = 4.0 * A * (q2 * q2 - 2.0 * q2 * q) * psi * ir2 * ir2 * w
    hxx = c2 * dx * dx + c1
    hxy = c2 * dx * dy
    hyy = c2 * dy * dy + c1
    return X0, X1, hxy, hyy, -hxx, -hxy


@njit(cache=True)
def _rk4_bump2(params, pk, pscale, pa, pb, P0, want_jac, seg_t0, seg_t1, seg_n, record):
    """Specialisation of ``_rk4_preset`` to radial bumps on R^2 (scalar state)."""
    N = P0.shape[0]
    cx = params[0]
    cy = params[1]
    R = params[2]
    A = params[3]
    ir2 = 1.0 / (R * R)
    total = 0
    for k in range(seg_n.shape[0]):
        total += seg_n[k]
    Pout = np.empty((N, 2))
    Jout = np.empty((N, 2, 2))
    traj = np.empty((total + 1 if record else 1, N, 2))
    for n in range(N):
        x = P0[n, 0]
        y = P0[n, 1]
        a00 = 1.0
        a01 = 0.0
        a10 = 0.0
        a11 = 1.0
        if record:
            traj[0, n, 0] = x
            traj[0, n, 1] = y
        moving = record or ((x - cx) * (x - cx) + (y - cy) * (y - cy)) * ir2 < 0.99
        idx = 0
        for k in range(seg_n.shape[0]):
            if not moving:
                break
            h = (seg_t1[k] - seg_t0[k]) / seg_n[k]
            for step in range(seg_n[k]):
                t = seg_t0[k] + step * h
                tm = t + 0.5 * h
                w1 = _profile_weight(pk, pscale, pa, pb, t, tm)
                w2 = _profile_weight(pk, pscale, pa, pb, t + 0.5 * h, tm)
                w4 = _profile_weight(pk, pscale, pa, pb, t + h, tm)
                # stage 1
                u0, u1, d00, d01, d10, d11 = _bump2_stage(x, y, cx, cy, ir2, A, w1, want_jac)
                m00 = d00 * a00 + d01 * a10
                m01 = d00 * a01 + d01 * a11
                m10 = d10 * a00 + d11 * a10
                m11 = d10 * a01 + d11 * a11
                sx, sy = u0, u1
                s00, s01, s10, s11 = m00, m01, m10, m11
                # stage 2
                hh = 0.5 * h
                u0, u1, d00, d01, d10, d11 = _bump2_stage(x + hh * u0, y + hh * u1, cx, cy, ir2, A, w2, want_jac)
                b00 = a00 + hh * m00
                b01 = a01 + hh * m01
                b10 = a10 + hh * m10
                b11 = a11 + hh * m11
                m00 = d00 * b00 + d01 * b10
                m01 = d00 * b01 + d01 * b11
                m10 = d10 * b00 + d11 * b10
                m11 = d10 * b01 + d11 * b11
                sx += 2.0 * u0
                sy += 2.0 * u1
                s00 += 2.0 * m00
                s01 += 2.0 * m01
                s10 += 2.0 * m10
                s11 += 2.0 * m11
                # stage 3
                u0, u1, d00, d01, d10, d11 = _bump2_stage(x + hh * u0, y + hh * u1, cx, cy, ir2, A, w2, want_jac)
                b00 = a00 + hh * m00
                b01 = a01 + hh * m01
                b10 = a10 + hh * m10
                b11 = a11 + hh * m11
                m00 = d00 * b00 + d01 * b10
                m01 = d00 * b01 + d01 * b11
                m10 = d10 * b00 + d11 * b10
                m11 = d10 * b01 + d11 * b11
                sx += 2.0 * u0
                sy += 2.0 * u1
                s00 += 2.0 * m00
                s01 += 2.0 * m01
                s10 += 2.0 * m10
                s11 += 2.0 * m11
                # stage 4
                u0, u1, d00, d01, d10, d11 = _bump2_stage(x + h * u0, y + h * u1, cx, cy, ir2, A, w4, want_jac)
                b00 = a00 + h * m00
                b01 = a01 + h * m01
                b10 = a10 + h * m10
                b11 = a11 + h * m11
                m00 = d00 * b00 + d01 * b10
                m01 = d00 * b01 + d01 * b11
                m10 = d10 * b00 + d11 * b10
                m11 = d10 * b01 + d11 * b11
                sx += u0
                sy += u1
                s00 += m00
                s01 += m01
                s10 += m10
                s11 += m11
                c6 = h / 6.0
                x += c6 * sx
                y += c6 * sy
                a00 += c6 * s00
                a01 += c6 * s01
                a10 += c6 * s10
                a11 += c6 * s11
                idx += 1
                if record:
                    traj[idx, n, 0] = x
                    traj[idx, n, 1] = y
        Pout[n, 0] = x
        Pout[n, 1] = y
        Jout[n, 0, 0] = a00
        Jout[n, 0, 1] = a01
        Jout[n, 1, 0] = a10
        Jout[n, 1, 1] = a11
    return Pout, Jout, traj


# ---------------------------------------------------------------------------
# flow driver


@dataclass(frozen=True)
class FlowSettings:
    step: float = 1e-3
    tol: float = 1e-8
    max_halvings: int = 8
    method: str = "rk4"  # "rk4" or "exact" (closed form: radial bumps, plane quadratics)

    def __post_init__(self):
        if self.method not in ("rk4", "exact"):
            raise ValueError(f"unknown flow method {self.method!r}")
        if self.step <= 0 or self.tol <= 0:
            raise ValueError("step and tol must be positive")


@dataclass
class FlowResult:
    points: np.ndarray
    jacobians: np.ndarray | None
    step: float
    segments: list = field(default_factory=list)  # [(times, traj (M, N, d), t_mid)]
    halvings: int = 0

    @property
    def points_jac(self):
        return self.points, self.jacobians


def _segments(h: HamiltonianSpec, t0, t1, step):
    edges = [t0, *h.breakpoints(min(t0, t1), max(t0, t1)), t1]
    if t1 < t0:
        edges = sorted(edges, reverse=True)
    seg_t0 = np.array(edges[:-1], dtype=float)
    seg_t1 = np.array(edges[1:], dtype=float)
    n = np.array([max(2, 2 * math.ceil(abs(b - a) / (2 * step) - 1e-9)) for a, b in zip(seg_t0, seg_t1)], dtype=np.int64)
    return seg_t0, seg_t1, n


def _use_kernel(h, model):
    return h.preset is not None and model.kind == "plane"


def _run_kernel(h, P, want_jac, seg, record):
    kind, params = h.preset
    prof = h.profile
    if kind == KIND_BUMP and P.shape[1] == 2:
        return _rk4_bump2(
            params, prof.code, prof.scale, prof.a, prof.b,
            np.ascontiguousarray(P, dtype=float), want_jac, seg[0], seg[1], seg[2], record,
        )
    return _rk4_preset(
        kind, params, prof.code, prof.scale, prof.a, prof.b,
        np.ascontiguousarray(P, dtype=float), want_jac, seg[0], seg[1], seg[2], record,
    )


def _run_numpy(h, model, P, want_jac, seg, record):
    N, d = P.shape
    p = P.copy()
    J = np.broadcast_to(np.eye(d), (N, d, d)).copy()
    traj = [p.copy()] if record else None

    def rhs(t, tm, q, Jq):
        dH = h.dH(t, q, tm)
        X, DX = model.hamiltonian_field(q, dH, h.d2H(t, q, tm) if want_jac else None)
        return X, (DX @ Jq if want_jac else None)

    for t0, t1, n in zip(*seg):
        step = (t1 - t0) / n
        for k in range(n):
            t = t0 + k * step
            tm = t + 0.5 * step
            k1, L1 = rhs(t, tm, p, J)
            k2, L2 = rhs(t + 0.5 * step, tm, p + 0.5 * step * k1, J + 0.5 * step * L1 if want_jac else None)
            k3, L3 = rhs(t + 0.5 * step, tm, p + 0.5 * step * k2, J + 0.5 * step * L2 if want_jac else None)
            k4, L4 = rhs(t + step, tm, p + step * k3, J + step * L3 if want_jac else None)
            p = p + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if want_jac:
                J = J + step / 6.0 * (L1 + 2 * L2 + 2 * L3 + L4)
            if not np.all(np.isfinite(p)):
                raise DomainEscapeError("flow diverged")
            if model.kind == "disk":
                try:
                    model.check(p)
                except DomainError as exc:
                    raise DomainEscapeError("flow left the disk chart") from exc
            if record:
                traj.append(p.copy())
    return p, J, (np.array(traj) if record else None)


def _run(h, model, P, want_jac, seg, record):
    if _use_kernel(h, model):
        Q, J, traj = _run_kernel(h, P, want_jac, seg, record)
        if not np.all(np.isfinite(Q)):
            raise DomainEscapeError("flow diverged")
        return Q, (J if want_jac else None), (traj if record else None)
    Q, J, traj = _run_numpy(h, model, P, want_jac, seg, record)
    return Q, (J if want_jac else None), traj


def _split_record(seg, traj):
    out = []
    start = 0
    for t0, t1, n in zip(*seg):
        times = np.linspace(t0, t1, n + 1)
        out.append((times, traj[start : start + n + 1], 0.5 * (t0 + t1)))
        start += n
    return out


def flow(h: HamiltonianSpec, model, P, t0=0.0, t1=1.0, settings: FlowSettings = FlowSettings(),
         jacobian=True, record=False, halvings: int | None = None) -> FlowResult:
    """Time-(t0 -> t1) flow of ``h`` applied to points ``P`` (N, d).

    Step control halves ``settings.step`` until two successive runs agree
    within ``settings.tol``.  Passing ``halvings`` replays a previously
    validated grid (``settings.step / 2**halvings``) in a single run.
    """
    P = model.check(P)
    if settings.method == "exact":
        if record:
            raise ValueError("the exact method does not record trajectories")
        Q, J = exact_flow(h, model, P, t0, t1, jacobian)
        return FlowResult(Q, J, 0.0)
    seg = _segments(h, t0, t1, settings.step)
    if halvings is not None:
        seg = (seg[0], seg[1], seg[2] * 2**halvings)
        cur = _run(h, model, P, jacobian, seg, record)
        segments = _split_record(seg, cur[2]) if record else []
        return FlowResult(cur[0], cur[1], settings.step / 2**halvings, segments, halvings)
    prev = _run(h, model, P, jacobian, seg, False)
    for k in range(1, settings.max_halvings + 1):
        seg = (seg[0], seg[1], seg[2] * 2)
        cur = _run(h, model, P, jacobian, seg, record)
        diff = float(np.max(np.abs(cur[0] - prev[0]), initial=0.0))
        if jacobian:
            diff = max(diff, float(np.max(np.abs(cur[1] - prev[1]), initial=0.0)))
        if diff <= settings.tol:
            segments = _split_record(seg, cur[2]) if record else []
            return FlowResult(cur[0], cur[1], settings.step / 2**k, segments, k)
        prev = cur
    raise ConvergenceError(
        f"flow step control did not reach tol={settings.tol} after {settings.max_halvings} halvings",
        estimate=prev[0],
    )


def _rotate_pairs(V, cos, sin):
    out = np.empty_like(V)
    out[:, 0::2] = cos[:, None] * V[:, 0::2] - sin[:, None] * V[:, 1::2]
    out[:, 1::2] = sin[:, None] * V[:, 0::2] + cos[:, None] * V[:, 1::2]
    return out


def exact_flow(h: HamiltonianSpec, model, P, t0=0.0, t1=1.0, jacobian=True):
    """Closed-form flow of a preset Hamiltonian.

    Radial bumps rotate each coordinate pair about the centre by an angle that
    depends on the distance only; on the disk this needs the bump centred at
    the chart origin, where the metric factor is radial too.  Quadratics on the
    plane generate affine flows given by a matrix exponential.
    """
    if h.preset is None:
        raise ValueError("closed-form flows exist only for preset Hamiltonians")
    P = model.check(P)
    N, d = P.shape
    W = h.profile.integral(t0, t1)
    kind, params = h.preset
    if model.kind == "disk" and (kind != KIND_BUMP or np.any(params[:d] != 0.0)):
        raise ValueError("closed-form disk flows need a bump centred at the origin")
    if kind == KIND_BUMP:
        c, R, A = params[:d], params[d], params[d + 1]
        D = P - c
        s = np.sum(D * D, axis=1) / R**2
        _, dpsi, d2psi = _bump_profile(s)
        phi = -2.0 * A * W * dpsi / R**2
        # gradient of the angle: grad_phi = dphi_drho * 2 D with rho = |D|^2
        dphi_drho = -2.0 * A * W * d2psi / R**4
        if model.kind == "disk":
            f = 0.25 * (1.0 - R**2 * s) ** 2
            df = -0.5 * (1.0 - R**2 * s)
            dphi_drho = dphi_drho * f + phi * df
            phi = phi * f
        cs, sn = np.cos(phi), np.sin(phi)
        Q = c + _rotate_pairs(D, cs, sn)
        if model.kind == "disk":
            model.check(Q)
        if not jacobian:
            return Q, None
        J = np.empty((N, d, d))
        eye = np.eye(d)
        for j in range(d):
            J[:, :, j] = _rotate_pairs(np.broadcast_to(eye[j], (N, d)), cs, sn)
        # derivative of the rotation w.r.t. its angle, applied to D
        BD = _rotate_pairs(D, -sn, cs)
        J += np.einsum("ni,nj->nij", BD, (2.0 * dphi_drho)[:, None] * D)
        return Q, J
    Qm = params[: d * d].reshape(d, d)
    b = params[d * d : d * d + d]
    Wm = standard_omega(d)
    aug = np.zeros((d + 1, d + 1))
    aug[:d, :d] = Wm @ Qm
    aug[:d, d] = Wm @ b
    E = expm(W * aug)
    Q = P @ E[:d, :d].T + E[:d, d]
    J = np.broadcast_to(E[:d, :d], (N, d, d)).copy() if jacobian else None
    return Q, J
