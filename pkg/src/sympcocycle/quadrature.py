"""Line integrals of one-forms and action integrals along Hamiltonian trajectories."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .errors import QuadratureError
from .hamiltonian import FlowSettings, HamiltonianSpec, flow

GL_ORDER = 10
MAX_DEPTH = 24
DEFAULT_TOL = 1e-9

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(GL_ORDER)


@dataclass(frozen=True)
class IntegralResult:
    value: float
    error_estimate: float
    panels_used: int

    def __float__(self):
        return self.value


def _panel_sums(f, lo, hi):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    t = (mid[:, None] + half[:, None] * _NODES[None, :]).ravel()
    vals = np.asarray(f(t), dtype=float).reshape(len(lo), GL_ORDER)
    return half * (vals @ _WEIGHTS)


def adaptive_gauss_legendre(f, a=0.0, b=1.0, tol=DEFAULT_TOL, breakpoints=(), max_depth=MAX_DEPTH) -> IntegralResult:
    """Integrate a vectorised scalar function ``f(t)`` over ``[a, b]``.

    Each panel is compared with the sum over its two halves (order-10
    Gauss-Legendre on all three); a panel is accepted once the two agree within
    ``tol`` times its share of the interval, otherwise both halves are refined.
    All panels of one level are evaluated in a single call of ``f``.
    """
    if b == a:
        return IntegralResult(0.0, 0.0, 0)
    if b < a:
        res = adaptive_gauss_legendre(f, b, a, tol, breakpoints, max_depth)
        return IntegralResult(-res.value, res.error_estimate, res.panels_used)
    edges = np.array(sorted({a, b, *(x for x in breakpoints if a < x < b)}))
    lo, hi = edges[:-1], edges[1:]
    whole = _panel_sums(f, lo, hi)
    length = b - a
    accepted_lo, accepted_val, accepted_err = [], [], []
    depth = 0
    while len(lo):
        mid = 0.5 * (lo + hi)
        both = _panel_sums(f, np.concatenate([lo, mid]), np.concatenate([mid, hi]))
        left, right = both[: len(lo)], both[len(lo):]
        fine = left + right
        diff = np.abs(whole - fine)
        floor = 64 * np.finfo(float).eps * (np.abs(left) + np.abs(right))
        ok = (diff <= tol * (hi - lo) / length) | (diff <= floor)
        accepted_lo.extend(lo[ok])
        accepted_val.extend(fine[ok])
        accepted_err.extend(diff[ok])
        if np.all(ok):
            break
        depth += 1
        if depth > max_depth:
            order = np.argsort(np.concatenate([accepted_lo, lo[~ok]]), kind="stable")
            vals = np.concatenate([accepted_val, fine[~ok]])[order]
            raise QuadratureError(
                f"adaptive quadrature did not converge to tol={tol} within depth {max_depth}",
                estimate=math.fsum(vals),
            )
        bad = ~ok
        lo, hi = np.concatenate([lo[bad], mid[bad]]), np.concatenate([mid[bad], hi[bad]])
        whole = np.concatenate([left[bad], right[bad]])
    order = np.argsort(accepted_lo, kind="stable")
    value = math.fsum(np.asarray(accepted_val)[order])
    error = math.fsum(np.asarray(accepted_err)[order])
    return IntegralResult(value, error, len(accepted_lo))


def integrate_one_form(form, path, tol=DEFAULT_TOL) -> IntegralResult:
    """``int_path form``, where ``form`` maps points (N, d) to covectors (N, d)."""

    def integrand(t):
        P = path.point(t)
        return np.einsum("ni,ni->n", form(P), path.velocity(t))

    return adaptive_gauss_legendre(integrand, 0.0, 1.0, tol, path.breakpoints)


def batch_segment_integrals(form, starts, ends, tol=DEFAULT_TOL, max_depth=MAX_DEPTH):
    """``int_{a_k -> b_k} form`` along straight chart segments, for many pairs at once.

    Same panel rule and acceptance test as :func:`adaptive_gauss_legendre`,
    applied to every segment independently; each refinement level evaluates
    ``form`` once on all active panels.  Returns ``(values, error_estimates)``.
    """
    A = np.atleast_2d(np.asarray(starts, dtype=float))
    B = np.atleast_2d(np.asarray(ends, dtype=float))
    A, B = np.broadcast_arrays(A, B)
    n = len(A)
    V = B - A
    values = np.zeros(n)
    errors = np.zeros(n)
    idx = np.arange(n)
    lo = np.zeros(n)
    hi = np.ones(n)

    def sums(idx, lo, hi):
        half = 0.5 * (hi - lo)
        t = 0.5 * (hi + lo)[:, None] + half[:, None] * _NODES[None, :]
        P = A[idx][:, None, :] + t[:, :, None] * V[idx][:, None, :]
        F = np.asarray(form(P.reshape(-1, A.shape[1]))).reshape(P.shape)
        vals = np.einsum("nkd,nd->nk", F, V[idx])
        return half * (vals @ _WEIGHTS)

    whole = sums(idx, lo, hi)
    for depth in range(max_depth + 1):
        if not len(idx):
            break
        mid = 0.5 * (lo + hi)
        both = sums(np.concatenate([idx, idx]), np.concatenate([lo, mid]), np.concatenate([mid, hi]))
        left, right = both[: len(idx)], both[len(idx):]
        fine = left + right
        diff = np.abs(whole - fine)
        ok = (diff <= tol * (hi - lo)) | (diff <= 64 * np.finfo(float).eps * (np.abs(left) + np.abs(right)))
        np.add.at(values, idx[ok], fine[ok])
        np.add.at(errors, idx[ok], diff[ok])
        bad = ~ok
        if depth == max_depth and np.any(bad):
            np.add.at(values, idx[bad], fine[bad])
            raise QuadratureError(
                f"batched quadrature did not converge to tol={tol} within depth {max_depth}", estimate=values
            )
        idx = np.concatenate([idx[bad], idx[bad]])
        lo, hi = np.concatenate([lo[bad], mid[bad]]), np.concatenate([mid[bad], hi[bad]])
        whole = np.concatenate([left[bad], right[bad]])
    return values, errors


def path_independence_residual(form, path1, path2, tol=DEFAULT_TOL, endpoint_tol=1e-9) -> float:
    if not (np.allclose(path1.start, path2.start, atol=endpoint_tol)
            and np.allclose(path1.end, path2.end, atol=endpoint_tol)):
        raise ValueError("paths must share their endpoints")
    return abs(integrate_one_form(form, path1, tol).value - integrate_one_form(form, path2, tol).value)


@dataclass
class Trajectory:
    """Samples of ``s -> f_s(p)`` and of ``lambda(X_s) + H_s`` along it.

    One entry per time segment; segments split the interval where the
    Hamiltonian's time profile is discontinuous.
    """

    times: list
    points: list
    integrand: list
    step: float

    def time_integral(self) -> float:
        """Composite Simpson rule on the integrator grid, segment by segment."""
        return math.fsum(float(simpson(v, x=t)) for t, v in zip(self.times, self.integrand))

    @property
    def end(self) -> np.ndarray:
        return self.points[-1][-1]

    def length(self, model) -> float:
        """Metric length of the sampled trajectory (polygonal approximation)."""
        total = 0.0
        for P in self.points:
            dP = np.diff(P, axis=0)
            mid = 0.5 * (P[1:] + P[:-1])
            total += float(np.sum(np.linalg.norm(dP, axis=1) * np.sqrt(model.metric_factor(mid))))
        return total


def flow_trajectory(h: HamiltonianSpec, model, p, t0=0.0, t1=1.0, settings: FlowSettings = FlowSettings()) -> Trajectory:
    """Integrate the trajectory of ``p`` and sample the action integrand on the ODE grid."""
    P = model.check(p)
    if len(P) != 1:
        raise ValueError("flow_trajectory expects a single point")
    res = flow(h, model, P, t0, t1, settings, jacobian=False, record=True)
    times, points, values = [], [], []
    for ts, traj, t_mid in res.segments:
        Q = traj[:, 0, :]
        dH = np.stack([h.dH(t, Q[k : k + 1], t_mid)[0] for k, t in enumerate(ts)]) if h.profile is None \
            else h.dH(ts, Q, np.full(len(ts), t_mid))
        Hv = np.array([h.H(t, Q[k : k + 1], t_mid)[0] for k, t in enumerate(ts)]) if h.profile is None \
            else h.H(ts, Q, np.full(len(ts), t_mid))
        X, _ = model.hamiltonian_field(Q, dH)
        lam_X = np.einsum("ni,ni->n", model.lambda_(Q), X)
        times.append(ts)
        points.append(Q)
        values.append(lam_X + Hv)
    return Trajectory(times, points, values, res.step)
