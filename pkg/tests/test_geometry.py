import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatialamr import EUCLIDEAN, GEODESIC, DistanceMetric, default_numpts, distance, sample_circle
from spatialamr.errors import DomainError, MetricContractError, ValidationError
from spatialamr.geometry import EARTH_RADIUS_M, haversine

coord = st.floats(-1e3, 1e3, allow_nan=False)
radius = st.floats(1e-2, 1e3, allow_nan=False)


def test_euclidean_distance():
    assert distance(EUCLIDEAN, (0, 0), (3, 4)) == 5.0
    assert EUCLIDEAN((1, 1), (1, 1)) == 0.0


def test_geodesic_quarter_circle_matches_closed_form():
    expected = math.pi * EARTH_RADIUS_M / 2.0
    assert abs(GEODESIC((0.0, 0.0), (0.0, 90.0)) - expected) < 0.1
    assert abs(GEODESIC((0.0, 0.0), (90.0, 0.0)) - expected) < 0.1
    assert abs(GEODESIC((-45.0, 0.0), (135.0, 0.0)) - 2 * expected) < 0.1


def test_geodesic_one_degree_of_latitude():
    # Closed form on the sphere: R * pi / 180.
    assert GEODESIC((32.5, 0.3), (32.5, 1.3)) == pytest.approx(EARTH_RADIUS_M * math.pi / 180, rel=1e-12)


def test_geodesic_rejects_out_of_range_coordinates():
    with pytest.raises(DomainError):
        GEODESIC((0.0, 95.0), (0.0, 0.0))
    with pytest.raises(DomainError):
        sample_circle((200.0, 0.0), 10.0, 8, GEODESIC)


def test_pairwise_matches_scalar_distance(rng):
    a = rng.uniform(-50, 50, (7, 2))
    b = rng.uniform(-50, 50, (5, 2))
    mat = EUCLIDEAN.pairwise(a, b)
    for i in range(7):
        for j in range(5):
            assert mat[i, j] == pytest.approx(distance(EUCLIDEAN, a[i], b[j]), rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(coord, coord, radius, st.integers(1, 200))
def test_circle_points_lie_on_the_circle(cx, cy, r, n):
    s = sample_circle((cx, cy), r, n)
    d = np.hypot(s.points[:, 0] - cx, s.points[:, 1] - cy)
    assert np.all(np.abs(d - r) <= 1e-9 * r)
    assert len(s.points) == n


def test_circle_angle_convention():
    s = sample_circle((1.0, 2.0), 2.0, 4)
    np.testing.assert_allclose(s.points, [[3, 2], [1, 4], [-1, 2], [1, 0]], atol=1e-12)
    np.testing.assert_allclose(s.angles, [0, math.pi / 2, math.pi, 3 * math.pi / 2])


@settings(max_examples=100, deadline=None)
@given(st.floats(-170, 170), st.floats(-80, 80), st.floats(10.0, 2e6), st.integers(4, 64))
def test_geodesic_circle_points_are_at_the_radius(lon, lat, r, n):
    s = sample_circle((lon, lat), r, n, GEODESIC)
    d = haversine(np.array([lon, lat]), s.points)
    assert np.all(np.abs(d - r) <= 1e-6 * r + 1e-6)


def test_geodesic_first_point_is_east_second_north():
    s = sample_circle((30.0, 1.0), 1000.0, 4, GEODESIC)
    east, north = s.points[0], s.points[1]
    assert east[0] > 30.0 and abs(east[1] - 1.0) < 1e-4
    assert north[1] > 1.0 and abs(north[0] - 30.0) < 1e-12


def test_user_metric_keeps_points_near_radius():
    manhattan = DistanceMetric.user(lambda a, b: abs(a.x - b.x) + abs(a.y - b.y))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s = sample_circle((0.0, 0.0), 1.0, 400, manhattan, tol=0.05)
    d = np.abs(s.points).sum(axis=1)
    assert np.all(np.abs(d - 1.0) <= 0.05)
    assert 8 <= len(s.points) < 400


def test_user_metric_warns_when_few_points_survive():
    manhattan = DistanceMetric.user(lambda a, b: abs(a.x - b.x) + abs(a.y - b.y))
    with pytest.warns(RuntimeWarning, match="evaluation points"):
        sample_circle((0.0, 0.0), 1.0, 8, manhattan, tol=0.01)


def test_user_metric_contract():
    bad = DistanceMetric.user(lambda a, b: -1.0)
    with pytest.raises(MetricContractError):
        bad((0, 0), (1, 1))
    nan = DistanceMetric.user(lambda a, b: float("nan"))
    with pytest.raises(MetricContractError):
        nan((0, 0), (1, 1))


def test_metric_names():
    assert DistanceMetric.from_name("Euclidean") is EUCLIDEAN
    assert DistanceMetric.from_name("geodesic") is GEODESIC
    with pytest.raises(ValidationError):
        DistanceMetric.from_name("chebyshev")


@pytest.mark.parametrize("r,res,expected", [
    (1.0, 1.0, 8),
    (10.0, 1.0, 63),
    (0.1, 0.001, 629),
    (1e6, 1e-3, 100000),
])
def test_default_numpts(r, res, expected):
    assert default_numpts(r, res) == expected


def test_invalid_circle_inputs():
    with pytest.raises(ValidationError):
        sample_circle((0, 0), 0.0, 8)
    with pytest.raises(ValidationError):
        sample_circle((0, 0), 1.0, 0)
    with pytest.raises(ValidationError):
        sample_circle((0, np.nan), 1.0, 8)
