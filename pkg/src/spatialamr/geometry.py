"""Points, distance metrics and evaluation circles around intervention nodes.

Coordinates are ``(x, y)`` pairs. Under the geodesic metric they are read as
``(lon, lat)`` in degrees and distances are great-circle metres.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import DomainError, MetricContractError, ValidationError

EARTH_RADIUS_M = 6371000.0
DEFAULT_NUMPTS_CAP = 100000
MIN_NUMPTS = 8


class SpatialPoint(NamedTuple):
    x: float
    y: float


def as_point(p) -> np.ndarray:
    """Validate a single coordinate pair and return it as a float array."""
    arr = np.asarray(p, dtype=float)
    if arr.shape != (2,):
        raise ValidationError(f"a point needs exactly two coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"point coordinates must be finite, got {tuple(arr)}")
    return arr


def as_points(pts) -> np.ndarray:
    """Validate an ``(n, 2)`` array of coordinates."""
    arr = np.asarray(pts, dtype=float)
    if arr.ndim == 1 and arr.shape == (2,):
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError(f"expected an (n, 2) coordinate array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("point coordinates must be finite")
    return arr


def _check_lonlat(arr: np.ndarray) -> None:
    lon, lat = arr[..., 0], arr[..., 1]
    if np.any(np.abs(lon) > 180.0) or np.any(np.abs(lat) > 90.0):
        raise DomainError("geodesic metric needs lon in [-180, 180] and lat in [-90, 90]")


@dataclass(frozen=True)
class DistanceMetric:
    """A distance function on the spatial field.

    Use the module constants :data:`EUCLIDEAN` and :data:`GEODESIC`, or
    :meth:`DistanceMetric.user` to wrap a callable ``f(a, b) -> float``
    (for instance a least-cost distance).
    """

    kind: str
    func: Optional[Callable] = field(default=None, compare=False)
    radius: float = EARTH_RADIUS_M

    def __post_init__(self):
        if self.kind not in ("euclidean", "geodesic", "user"):
            raise ValidationError(f"unknown metric kind {self.kind!r}")
        if self.kind == "user" and not callable(self.func):
            raise ValidationError("a user-supplied metric needs a callable")

    @classmethod
    def user(cls, func: Callable) -> "DistanceMetric":
        return cls("user", func)

    @classmethod
    def from_name(cls, name: str) -> "DistanceMetric":
        key = name.strip().lower()
        if key in ("euclidean", "euc"):
            return EUCLIDEAN
        if key in ("geodesic", "haversine", "geo"):
            return GEODESIC
        raise ValidationError(f"unknown distance metric {name!r}")

    def __call__(self, a, b) -> float:
        return distance(self, a, b)

    def pairwise(self, a, b) -> np.ndarray:
        """Distance matrix between the rows of ``a`` (n, 2) and ``b`` (m, 2)."""
        a = as_points(a)
        b = as_points(b)
        if self.kind == "euclidean":
            diff = a[:, None, :] - b[None, :, :]
            return np.hypot(diff[..., 0], diff[..., 1])
        if self.kind == "geodesic":
            _check_lonlat(a)
            _check_lonlat(b)
            return haversine(a[:, None, :], b[None, :, :], self.radius)
        out = np.empty((len(a), len(b)))
        for i, pa in enumerate(a):
            for j, pb in enumerate(b):
                out[i, j] = self._user_value(pa, pb)
        return out

    def to_points(self, center, q) -> np.ndarray:
        """Distances from one ``center`` to each row of ``q``."""
        return self.pairwise(np.asarray(center, dtype=float)[None, :], q)[0]

    def _user_value(self, a, b) -> float:
        val = float(self.func(SpatialPoint(*a), SpatialPoint(*b)))
        if not val >= 0.0:  # catches NaN
            raise MetricContractError(
                f"user-supplied metric returned {val!r} for {tuple(a)} -> {tuple(b)}"
            )
        return val


EUCLIDEAN = DistanceMetric("euclidean")
GEODESIC = DistanceMetric("geodesic")


def haversine(a: np.ndarray, b: np.ndarray, radius: float = EARTH_RADIUS_M) -> np.ndarray:
    """Great-circle distance between (lon, lat) degree arrays, broadcasting."""
    lon1, lat1 = np.radians(a[..., 0]), np.radians(a[..., 1])
    lon2, lat2 = np.radians(b[..., 0]), np.radians(b[..., 1])
    h = (np.sin((lat2 - lat1) / 2.0) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2)
    return 2.0 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def destination(center, bearing: np.ndarray, arc: float,
                radius: float = EARTH_RADIUS_M) -> np.ndarray:
    """Points reached from ``center`` (lon, lat) along ``bearing`` radians
    (clockwise from north) after ``arc`` metres on the sphere."""
    lon1, lat1 = np.radians(center[0]), np.radians(center[1])
    delta = arc / radius
    bearing = np.asarray(bearing, dtype=float)
    sin_lat2 = (math.sin(lat1) * math.cos(delta)
                + math.cos(lat1) * math.sin(delta) * np.cos(bearing))
    lat2 = np.arcsin(np.clip(sin_lat2, -1.0, 1.0))
    lon2 = lon1 + np.arctan2(np.sin(bearing) * math.sin(delta) * math.cos(lat1),
                             math.cos(delta) - math.sin(lat1) * sin_lat2)
    lon2 = (lon2 + np.pi) % (2.0 * np.pi) - np.pi
    return np.column_stack([np.degrees(lon2), np.degrees(lat2)])


def distance(metric: DistanceMetric, a, b) -> float:
    """Distance between two points under ``metric``.

    Examples
    --------
    >>> distance(EUCLIDEAN, (0, 0), (3, 4))
    5.0
    """
    a = as_point(a)
    b = as_point(b)
    if metric.kind == "euclidean":
        return float(math.hypot(a[0] - b[0], a[1] - b[1]))
    if metric.kind == "geodesic":
        _check_lonlat(a)
        _check_lonlat(b)
        return float(haversine(a, b, metric.radius))
    return metric._user_value(a, b)


@dataclass(frozen=True)
class CircleSample:
    center: tuple
    radius: float
    numpts: int
    angles: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)


def circle_angles(numpts: int) -> np.ndarray:
    # Written as (2*pi*k)/n so the n-grid is bitwise a subset of the 2n-grid.
    return 2.0 * np.pi * np.arange(numpts) / numpts


def sample_circle(center, radius: float, numpts: int,
                  metric: DistanceMetric = EUCLIDEAN, tol: float = 0.05) -> CircleSample:
    """Equally spaced evaluation points on the circle of ``radius`` around ``center``.

    Angles start due east and run counterclockwise. Geodesic circles are built
    with the spherical destination formula, so every point sits at exactly
    ``radius`` metres. For a user-supplied metric the Euclidean circle is
    generated and only points within ``tol * radius`` of the requested
    distance are kept.
    """
    c = as_point(center)
    if not radius > 0:
        raise ValidationError(f"circle radius must be positive, got {radius!r}")
    numpts = int(numpts)
    if numpts < 1:
        raise ValidationError(f"numpts must be >= 1, got {numpts}")
    theta = circle_angles(numpts)
    if metric.kind == "geodesic":
        _check_lonlat(c)
        pts = destination(c, np.pi / 2.0 - theta, radius, metric.radius)
    else:
        pts = np.column_stack([c[0] + radius * np.cos(theta),
                               c[1] + radius * np.sin(theta)])
    if metric.kind == "user":
        d = metric.to_points(c, pts)
        keep = np.abs(d - radius) <= tol * radius
        theta, pts = theta[keep], pts[keep]
        if keep.sum() < MIN_NUMPTS:
            warnings.warn(
                f"only {int(keep.sum())} of {numpts} evaluation points lie within "
                f"{tol:.0%} of radius {radius} under the user metric",
                RuntimeWarning, stacklevel=2,
            )
    return CircleSample((float(c[0]), float(c[1])), float(radius), numpts, theta, pts)


def default_numpts(radius: float, raster_resolution: float,
                   cap: int = DEFAULT_NUMPTS_CAP) -> int:
    """Number of circle points giving about one point per raster cell of arc.

    ``max(8, ceil(2*pi*radius / resolution))``, capped at ``cap``.
    """
    if not radius > 0 or not raster_resolution > 0:
        raise ValidationError("radius and raster resolution must be positive")
    n = math.ceil(2.0 * math.pi * radius / raster_resolution)
    return int(min(max(MIN_NUMPTS, n), cap))
