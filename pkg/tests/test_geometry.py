import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import disk_points, plane_points
from sympcocycle.errors import DomainError
from sympcocycle.geometry import (
    EuclideanPlane,
    HyperbolicDisk,
    Parametrized,
    Ray,
    boundary_integral_area,
    check_dlambda,
    covector_norm,
    distance,
    from_origin,
    lambda_at,
    standard_omega,
    triangle_area_gauss_bonnet,
    triangle_orientation,
)
from sympcocycle.quadrature import integrate_one_form

DISK = HyperbolicDisk()


def test_disk_distance_log3():
    # d(0, 1/2) = 2 artanh(1/2) = log 3
    assert distance(DISK, [0.0, 0.0], [0.5, 0.0]) == pytest.approx(math.log(3.0), abs=1e-14)


def test_point_outside_disk_rejected():
    with pytest.raises(DomainError):
        DISK.check([0.8, 0.7])
    with pytest.raises(DomainError):
        HyperbolicDisk((1.0, 0.0))


def test_wrong_dimension_rejected():
    with pytest.raises(DomainError):
        EuclideanPlane().check([1.0, 2.0, 3.0])


@given(disk_points(0.85), disk_points(0.85))
def test_disk_geodesic_midpoint_halves_distance(a, b):
    path = DISK.geodesic(a, b)
    m = path.point(np.array([0.5]))[0]
    d = DISK.distance(a, b)
    assert DISK.distance(a, m) == pytest.approx(0.5 * d, abs=1e-9)
    assert DISK.distance(m, b) == pytest.approx(0.5 * d, abs=1e-9)


def _metric_length(model, path, n=4001):
    t = np.linspace(0, 1, n)
    v = np.linalg.norm(path.velocity(t), axis=1) * np.sqrt(model.metric_factor(path.point(t)))
    return float(np.trapezoid(v, t))


def test_geodesic_beats_perturbed_curves():
    # curve shortening: any bent curve with the same ends is longer
    a, b = np.array([-0.5, 0.2]), np.array([0.6, -0.3])
    geo = DISK.geodesic(a, b)
    L = _metric_length(DISK, geo)
    assert L == pytest.approx(DISK.distance(a, b), rel=1e-6)
    for eps in (0.05, -0.05, 0.01):
        bent = Parametrized(lambda t, e=eps: geo.point(t) + e * np.sin(math.pi * t)[:, None] * np.array([0.3, 1.0]))
        assert _metric_length(DISK, bent) > L


def test_large_equilateral_triangle_area_near_pi():
    # vertices at hyperbolic radius 4: area close to the ideal limit pi
    rho = math.tanh(2.0)
    pts = [rho * np.array([math.cos(a), math.sin(a)]) for a in (0, 2 * math.pi / 3, 4 * math.pi / 3)]
    area = triangle_area_gauss_bonnet(DISK, *pts)
    assert 0 < area < math.pi
    assert abs(area - math.pi) < 0.15


def test_triangle_orientation_and_sign():
    a, b, c = [0.0, 0.0], [0.5, 0.0], [0.0, 0.5]
    assert triangle_orientation(a, b, c) == 1
    assert triangle_area_gauss_bonnet(DISK, a, b, c) == pytest.approx(-triangle_area_gauss_bonnet(DISK, a, c, b))
    assert triangle_area_gauss_bonnet(DISK, a, b, c) > 0


def test_degenerate_triangle_zero_area():
    assert triangle_area_gauss_bonnet(DISK, [0.1, 0.1], [0.1, 0.1], [0.3, 0.0]) == 0.0
    assert triangle_area_gauss_bonnet(DISK, [0.0, 0.0], [0.2, 0.0], [0.5, 0.0]) == 0.0


def test_gauss_bonnet_plane_rejected():
    with pytest.raises(TypeError):
        triangle_area_gauss_bonnet(EuclideanPlane(), [0, 0], [1, 0], [0, 1])


@given(disk_points(0.8), disk_points(0.8), disk_points(0.8))
def test_gauss_bonnet_matches_stokes(a, b, c):
    assert triangle_area_gauss_bonnet(DISK, a, b, c) == pytest.approx(
        boundary_integral_area(DISK, a, b, c), abs=1e-6
    )


def test_plane_triangle_area_by_stokes():
    for prim in ("radial", "liouville"):
        area = boundary_integral_area(EuclideanPlane(primitive=prim), [0, 0], [2, 0], [0, 3])
        assert area == pytest.approx(3.0, abs=1e-12)


def test_circle_area_oracle():
    # hyperbolic disk of radius r has area 2 pi (cosh r - 1)
    for r in (0.5, 1.0, 2.0):
        rho = math.tanh(r / 2)
        circle = Parametrized(
            lambda t: rho * np.stack([np.cos(2 * math.pi * t), np.sin(2 * math.pi * t)], axis=1),
            lambda t: 2 * math.pi * rho * np.stack([-np.sin(2 * math.pi * t), np.cos(2 * math.pi * t)], axis=1),
        )
        val = integrate_one_form(DISK.lambda_, circle, 1e-12).value
        assert val == pytest.approx(2 * math.pi * (math.cosh(r) - 1), abs=1e-8)


@given(disk_points(0.9), disk_points(0.5))
def test_primitive_is_minus_J_dphi(p, bp):
    # finite-difference oracle for the Kahler potential
    model = HyperbolicDisk(tuple(bp))
    if model.distance(p, bp) < 1e-3:
        return
    h = 1e-6
    grad = np.array([(model.potential(p + h * e) - model.potential(p - h * e))[0] / (2 * h) for e in np.eye(2)])
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    scale = 1.0 + np.linalg.norm(grad)
    assert np.max(np.abs(lambda_at(model, p) + J.T @ grad)) <= 1e-6 * scale


@given(disk_points(0.95))
def test_disk_primitive_norm_tanh(p):
    r = DISK.distance([0.0, 0.0], p)
    assert covector_norm(DISK, p, lambda_at(DISK, p)) == pytest.approx(math.tanh(r / 2), abs=1e-9)


@given(plane_points())
def test_dlambda_plane(p):
    for prim in ("radial", "liouville"):
        assert check_dlambda(EuclideanPlane(primitive=prim), p) <= 1e-8


@given(disk_points(0.9), disk_points(0.5))
def test_dlambda_disk(p, bp):
    assert check_dlambda(HyperbolicDisk(tuple(bp)), p) <= 1e-6


def test_standard_omega_pairs():
    W = standard_omega(4)
    assert W[0, 1] == 1 and W[1, 0] == -1 and W[2, 3] == 1 and W[0, 2] == 0


@given(st.floats(0.1, 3.0), st.floats(0, 2 * math.pi))
def test_disk_ray_has_requested_length(length, theta):
    origin = np.array([0.2, -0.3])
    ray = Ray(DISK, origin, [math.cos(theta), math.sin(theta)], length)
    assert DISK.distance(origin, ray.end) == pytest.approx(length, abs=1e-9)
    assert np.allclose(ray.start, origin)


def test_sample_respects_radius():
    rng = np.random.default_rng(0)
    P = DISK.sample(rng, 100, max_radius=2.0)
    assert np.all(DISK.radius(P) <= 2.0 + 1e-12)
    z, _ = from_origin(0.3 + 0.1j, 0.0)
    assert z == pytest.approx(0.3 + 0.1j)
