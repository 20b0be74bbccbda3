import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import disk_points, finite, plane_points
from sympcocycle.cocycle import (
    G,
    CocycleContext,
    IsotopySpec,
    K_tilde,
    action_difference,
    action_functional,
    action_increment_residual,
    b_chain,
    basepoint_change_residual,
    coboundary,
    coboundary2_residual,
    compact_coboundary_residual,
    compose,
    hom_Gxh,
    isotopy_independence_residual,
    k_chain,
    kahler_cocycle,
    primitive_change_residual,
    trilateral_identity,
)
from sympcocycle.errors import ConfigurationError, FixedPointError
from sympcocycle.geometry import EuclideanPlane, HyperbolicDisk
from sympcocycle.hamiltonian import FlowSettings, TimeProfile, bump_hamiltonian
from sympcocycle.symplectomap import (
    AffineSymplectic,
    CompactBump,
    Identity,
    MoebiusIsometry,
    Word,
    linear_symplectic,
    pullback_form,
    translation,
)

PLANE = EuclideanPlane()
LIOUVILLE = EuclideanPlane(primitive="liouville")
DISK = HyperbolicDisk()
EXACT = FlowSettings(method="exact")

vectors = st.tuples(st.floats(-2, 2, **finite), st.floats(-2, 2, **finite)).map(np.array)


def bump(c, R, A, settings=EXACT):
    return CompactBump(bump_hamiltonian(c, R, A), settings=settings)


def test_heisenberg_unit_values():
    u, v = translation([1.0, 0.0]), translation([0.0, 1.0])
    assert G(CocycleContext(PLANE), u, v) == pytest.approx(0.5, abs=1e-12)
    assert G(CocycleContext(LIOUVILLE), u, v) == pytest.approx(1.0, abs=1e-12)
    assert G(CocycleContext(PLANE), v, u) == pytest.approx(-0.5, abs=1e-12)


@given(vectors, vectors, plane_points())
def test_heisenberg_closed_form(u, v, x):
    ctx = CocycleContext(PLANE, tuple(x))
    assert G(ctx, translation(u), translation(v)) == pytest.approx(0.5 * (u[0] * v[1] - u[1] * v[0]), abs=1e-9)


@given(vectors, vectors, vectors)
def test_translation_cocycle_identity(u, v, w):
    ctx = CocycleContext(PLANE, (0.3, -0.4))
    assert coboundary2_residual(ctx, translation(u), translation(v), translation(w)) <= 1e-9


def test_identity_gives_zero():
    ctx = CocycleContext(PLANE)
    g = translation([1.0, 2.0])
    assert G(ctx, Identity(2), g) == 0.0
    assert G(ctx, g, Identity(2)) == 0.0
    assert k_chain(ctx, Identity(2)) == 0.0
    assert compose(Identity(2), g) is g


def test_k_chain_translation():
    # k(T_u) = int_0^u lambda = 0 along a ray through the origin; shift the basepoint
    ctx = CocycleContext(PLANE, (0.0, 1.0))
    assert k_chain(ctx, translation([2.0, 0.0])) == pytest.approx(-1.0, abs=1e-12)


@given(st.lists(st.floats(-0.6, 0.6, **finite), min_size=4, max_size=4), vectors)
def test_affine_cocycle_identity(entries, t):
    A = linear_symplectic(np.reshape(entries, (2, 2)))
    g = AffineSymplectic(A, t)
    h = AffineSymplectic(A.T, -t)
    ctx = CocycleContext(PLANE, (0.2, 0.1))
    assert coboundary2_residual(ctx, g, h, translation(t)) <= 1e-8


def test_one_cocycle_relation_in_first_argument():
    # G(f g, h) = G(g, h) + K(f)(g h x) - K(f)(g x)
    ctx = CocycleContext(PLANE, (1.5, -0.3))
    f, g, h = bump([0.2, 0.0], 1.0, 0.5), bump([-0.3, 0.2], 0.8, -0.4), translation([-1.2, 0.4])
    x = ctx.x
    lhs = G(ctx, Word((f, g)), h)
    rhs = G(ctx, g, h) + K_tilde(ctx, f, g.apply(h.apply(x))) - K_tilde(ctx, f, g.apply(x))
    assert lhs == pytest.approx(rhs, abs=1e-9)


@given(disk_points(0.7), disk_points(0.7))
def test_disk_equals_kahler(a, b):
    ctx = CocycleContext(DISK)
    g, h = MoebiusIsometry.moving_origin_to(a), MoebiusIsometry.moving_origin_to(b)
    K = kahler_cocycle(ctx, g, h)
    assert G(ctx, g, h) == pytest.approx(K, abs=1e-7)
    assert abs(K) < math.pi


def test_kahler_on_plane_rejected():
    with pytest.raises(ConfigurationError):
        kahler_cocycle(CocycleContext(PLANE), translation([1, 0]), translation([0, 1]))


def test_kahler_rotation_vanishes():
    ctx = CocycleContext(DISK)
    assert kahler_cocycle(ctx, MoebiusIsometry.rotation(1.0), MoebiusIsometry.moving_origin_to([0.3, 0.0])) == 0.0


def test_trilateral_on_bumps_and_words():
    ctx = CocycleContext(PLANE, (0.4, 0.1))
    g = Word((bump([0.0, 0.0], 1.0, 0.6), translation([0.2, -0.1])))
    h = bump([0.3, 0.2], 0.7, -0.5, FlowSettings())
    lhs, rhs, res = trilateral_identity(ctx, g, h)
    assert res <= 1e-8
    assert lhs == pytest.approx(rhs, abs=1e-8)


def test_b_chain_requires_support():
    ctx = CocycleContext(PLANE)
    with pytest.raises(ConfigurationError):
        b_chain(ctx, translation([1.0, 0.0]))
    assert b_chain(ctx, Identity(2)) == 0.0


def test_compact_coboundary_any_direction():
    ctx = CocycleContext(PLANE, (0.3, 0.0))
    g, h = bump([0.0, 0.0], 1.0, 0.6), bump([0.5, 0.5], 0.6, -0.4)
    for direction in ([1.0, 0.0], [0.0, -1.0], [-0.6, 0.8]):
        assert compact_coboundary_residual(ctx, g, h, direction) <= 1e-8


def test_b_chain_differences_are_direction_independent():
    # two rays give b-chains differing by a constant times zero: the loop
    # integral of alpha_g vanishes since alpha_g is closed with compact support
    ctx = CocycleContext(PLANE, (0.3, 0.0))
    g = bump([0.0, 0.0], 1.0, 0.6)
    from sympcocycle.cocycle import default_ray

    vals = [b_chain(ctx, g, default_ray(ctx, g, d)) for d in ([1, 0], [0, 1], [-1, -1])]
    assert np.allclose(vals, vals[0], atol=1e-9)


def test_basepoint_change_sign_convention():
    # the chain c(f) = int_{x -> x'} alpha_f makes G_x - G_x' a coboundary;
    # the opposite orientation does not
    ctx = CocycleContext(PLANE, (0.1, 0.2))
    xp = np.array([0.9, -0.4])
    g, h = bump([0.3, 0.0], 1.0, 0.7), AffineSymplectic(linear_symplectic([[0.3, 0.1], [0.1, 0.2]]), [0.2, 0.1])
    assert basepoint_change_residual(ctx, xp, g, h) <= 1e-9
    other = ctx.at(xp)
    from sympcocycle.cocycle import _line

    c_rev = lambda f: _line(ctx, pullback_form(f, PLANE), xp, ctx.x)
    wrong = abs(G(ctx, g, h) - G(other, g, h) - coboundary(c_rev, g, h))
    assert wrong > 1e-3


@given(disk_points(0.6))
def test_disk_basepoint_change(xp):
    ctx = CocycleContext(DISK)
    g, h = MoebiusIsometry.from_parameters(0.5, 0.2, 1.0), MoebiusIsometry.from_parameters(0.3, -0.7, 2.0)
    assert basepoint_change_residual(ctx, xp, g, h) <= 1e-8


def test_primitive_change():
    ctx = CocycleContext(PLANE, (0.2, -0.5))
    g, h = bump([0.0, 0.1], 1.0, 0.5), translation([0.7, 0.3])
    assert primitive_change_residual(ctx, g, h) <= 1e-9
    with pytest.raises(ConfigurationError):
        primitive_change_residual(CocycleContext(DISK), MoebiusIsometry.rotation(1), MoebiusIsometry.rotation(2))


# ---------------------------------------------------------------------------
# action functional

H_CENTRE = np.array([0.5, 0.2])


def test_rest_point_values():
    ctx = CocycleContext(PLANE, (2.0, 0.0))
    for kind in ("constant", "double_then_freeze", "linear"):
        iso = IsotopySpec(bump_hamiltonian(H_CENTRE, 1.0, 0.6, TimeProfile(kind)))
        assert action_functional(ctx, iso, H_CENTRE) == pytest.approx(0.6, abs=1e-9)
        assert action_functional(ctx, iso, [2.0, 0.0]) == pytest.approx(0.0, abs=1e-12)


def test_action_difference_matches_G():
    ctx = CocycleContext(PLANE, (2.0, 0.0))
    iso = IsotopySpec(bump_hamiltonian(H_CENTRE, 1.0, 0.6))
    h = translation(H_CENTRE - ctx.x)
    g = iso.time_one_map(PLANE)
    ad = action_difference(ctx, iso, ctx.x, H_CENTRE)
    assert ad == pytest.approx(0.6, abs=1e-8)
    assert G(ctx, g, h) == pytest.approx(ad, abs=1e-8)
    assert hom_Gxh(ctx, h, g) == pytest.approx(ad, abs=1e-8)


def test_action_difference_requires_fixed_points():
    ctx = CocycleContext(PLANE, (2.0, 0.0))
    iso = IsotopySpec(bump_hamiltonian(H_CENTRE, 1.0, 0.6))
    with pytest.raises(FixedPointError):
        action_difference(ctx, iso, ctx.x, H_CENTRE + [0.3, 0.0])
    with pytest.raises(FixedPointError):
        hom_Gxh(ctx, translation([0.1, 0.0]), translation([1.0, 0.0]))


def test_increment_identity():
    ctx = CocycleContext(PLANE, (0.0, 0.0))
    iso = IsotopySpec(bump_hamiltonian([0.2, 0.1], 1.2, 0.5))
    for y in ([0.6, 0.4], [-0.3, 0.2], [0.2, 0.1]):
        assert action_increment_residual(ctx, iso, [3.0, 0.0], y) <= 1e-8


def test_action_increment_matches_K_tilde():
    # pins the orientation of K: F_1(y) - F_1(x) = int_{x -> y} (g^* lambda - lambda)
    ctx = CocycleContext(PLANE, (3.0, 0.0))
    iso = IsotopySpec(bump_hamiltonian([0.0, 0.0], 1.0, 0.8))
    g = iso.time_one_map(PLANE)
    y = np.array([0.4, 0.1])
    dF = action_functional(ctx, iso, y) - action_functional(ctx, iso, ctx.x)
    assert dF == pytest.approx(K_tilde(ctx, g, y), abs=1e-8)
    assert abs(dF) > 1e-2


def test_reparametrisation_independence_and_mismatch():
    ctx = CocycleContext(PLANE)
    H = bump_hamiltonian([0.0, 0.0], 1.0, 0.7)
    a, b = IsotopySpec(H), IsotopySpec(H.with_profile(TimeProfile("double_then_freeze")))
    assert isotopy_independence_residual(ctx, a, b, [0.3, 0.2]) <= 1e-8
    c = IsotopySpec(bump_hamiltonian([0.0, 0.0], 1.0, 0.2))
    with pytest.raises(ConfigurationError):
        isotopy_independence_residual(ctx, a, c, [0.3, 0.2])
