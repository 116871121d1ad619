"""Outcome data over the spatial field: raster grids and kriged point data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import linalg, optimize

from .errors import KrigingError, ValidationError
from .geometry import EUCLIDEAN, DistanceMetric, as_point, as_points

MAX_KRIGING_POINTS = 5000
N_VARIOGRAM_BINS = 15


@dataclass(frozen=True)
class RasterGrid:
    """A square-celled raster.

    ``values[r, c]`` is the cell whose lower-left corner is
    ``origin + (c, r) * cell_size``; row 0 is the bottom row. Missing cells
    hold NaN or ``nodata``.
    """

    origin: tuple
    cell_size: float
    values: np.ndarray = field(repr=False)
    nodata: float = -9999.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2 or vals.size == 0:
            raise ValidationError(f"raster values must be a non-empty 2-D array, got shape {vals.shape}")
        if not self.cell_size > 0:
            raise ValidationError(f"cell_size must be positive, got {self.cell_size!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "origin", tuple(float(v) for v in as_point(self.origin)))

    @property
    def nrows(self) -> int:
        return self.values.shape[0]

    @property
    def ncols(self) -> int:
        return self.values.shape[1]

    @property
    def extent(self) -> tuple:
        x0, y0 = self.origin
        return (x0, y0, x0 + self.ncols * self.cell_size, y0 + self.nrows * self.cell_size)

    def masked_values(self) -> np.ndarray:
        """Cell values with the nodata sentinel replaced by NaN."""
        v = self.values
        return np.where(v == self.nodata, np.nan, v)

    def cell_centers(self) -> np.ndarray:
        """``(nrows * ncols, 2)`` cell-centre coordinates in flat (row-major) order."""
        x0, y0 = self.origin
        cols = x0 + (np.arange(self.ncols) + 0.5) * self.cell_size
        rows = y0 + (np.arange(self.nrows) + 0.5) * self.cell_size
        xx, yy = np.meshgrid(cols, rows)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def cell_index(self, q) -> np.ndarray:
        """Flat cell index for each row of ``q``; -1 outside the grid."""
        q = np.asarray(q, dtype=float).reshape(-1, 2)
        x0, y0 = self.origin
        col = np.floor((q[:, 0] - x0) / self.cell_size)
        row = np.floor((q[:, 1] - y0) / self.cell_size)
        inside = (col >= 0) & (col < self.ncols) & (row >= 0) & (row < self.nrows)
        idx = np.full(len(q), -1, dtype=np.int64)
        idx[inside] = row[inside].astype(np.int64) * self.ncols + col[inside].astype(np.int64)
        return idx

    def with_values(self, values) -> "RasterGrid":
        return RasterGrid(self.origin, self.cell_size, values, self.nodata)


def raster_lookup(grid: RasterGrid, q) -> float:
    """Value of the cell containing ``q``, NaN when outside or nodata.

    Cells are half-open, ``[x0, x0 + s) x [y0, y0 + s)``.
    """
    idx = grid.cell_index(as_point(q))[0]
    if idx < 0:
        return float("nan")
    v = float(grid.values.flat[idx])
    return float("nan") if v == grid.nodata else v


@dataclass(frozen=True)
class OutcomePoints:
    """Sparse outcome observations ``values[k]`` at ``locations[k]``."""

    locations: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        loc = as_points(self.locations)
        val = np.asarray(self.values, dtype=float).ravel()
        if len(loc) != len(val):
            raise ValidationError("locations and values differ in length")
        if not np.all(np.isfinite(val)):
            raise ValidationError("outcome values must be finite")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "values", val)

    def __len__(self):
        return len(self.values)

    def deduplicated(self) -> "OutcomePoints":
        """Average the values of coincident locations."""
        uniq, inverse = np.unique(self.locations, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        sums = np.bincount(inverse, weights=self.values, minlength=len(uniq))
        counts = np.bincount(inverse, minlength=len(uniq))
        return OutcomePoints(uniq, sums / counts)


@dataclass(frozen=True)
class ExponentialCovariance:
    """``C(h) = sill * exp(-h / range)`` for ``h > 0``; ``C(0) = sill + nugget``.

    ``sill`` is the partial sill. The nugget acts as measurement noise, so a
    positive nugget smooths rather than interpolates.
    """

    range: float
    sill: float = 1.0
    nugget: float = 0.0

    def __post_init__(self):
        if not self.range > 0 or not self.sill > 0 or not self.nugget >= 0:
            raise ValidationError(
                f"exponential covariance needs range > 0, sill > 0, nugget >= 0; got {self}"
            )

    def __call__(self, h):
        return self.sill * np.exp(-np.asarray(h, dtype=float) / self.range)

    def semivariogram(self, h):
        h = np.asarray(h, dtype=float)
        return self.nugget + self.sill * (1.0 - np.exp(-h / self.range))


@dataclass(frozen=True)
class KrigingModel:
    """A fitted ordinary-kriging predictor in dual form.

    ``predict(q) = mean + c(q) @ weights`` where ``mean`` is the generalised
    least-squares estimate of the constant mean.
    """

    training: OutcomePoints
    covariance: ExponentialCovariance
    weights: np.ndarray = field(repr=False)
    mean: float
    metric: DistanceMetric = EUCLIDEAN

    def predict(self, q) -> np.ndarray:
        q = as_points(q)
        c = self.covariance(self.metric.pairwise(q, self.training.locations))
        return self.mean + c @ self.weights


def empirical_semivariogram(points: OutcomePoints, n_bins: int = N_VARIOGRAM_BINS,
                            metric: DistanceMetric = EUCLIDEAN):
    """Binned semivariances over lags up to half the largest pairwise distance.

    Returns ``(lag_centres, semivariance, pair_counts)`` for non-empty bins.
    """
    h = metric.pairwise(points.locations, points.locations)
    iu = np.triu_indices(len(points), k=1)
    h = h[iu]
    g = 0.5 * (points.values[iu[0]] - points.values[iu[1]]) ** 2
    hmax = h.max() / 2.0
    if not hmax > 0:
        raise ValidationError("all training points coincide")
    edges = np.linspace(0.0, hmax, n_bins + 1)
    which = np.digitize(h, edges[1:-1])
    keep = h <= hmax
    counts = np.bincount(which[keep], minlength=n_bins)
    sums = np.bincount(which[keep], weights=g[keep], minlength=n_bins)
    centres = 0.5 * (edges[:-1] + edges[1:])
    ok = counts > 0
    return centres[ok], sums[ok] / counts[ok], counts[ok]


def fit_variogram(points: OutcomePoints, metric: DistanceMetric = EUCLIDEAN) -> ExponentialCovariance:
    """Least-squares fit of an exponential semivariogram to the binned cloud."""
    lags, gamma, _ = empirical_semivariogram(points, metric=metric)
    var = float(np.var(points.values))
    if var == 0.0:
        # Flat field: any covariance reproduces it; pick a harmless one.
        return ExponentialCovariance(range=float(lags.max()), sill=1.0, nugget=0.0)
    x0 = [lags.max() / 3.0, max(var, 1e-12), 0.0]

    def resid(theta):
        return ExponentialCovariance(*theta).semivariogram(lags) - gamma

    res = optimize.least_squares(
        resid, x0,
        bounds=([lags.min() * 1e-3, var * 1e-6, 0.0], [lags.max() * 10.0, var * 10.0, var * 10.0]),
    )
    rng_, sill, nugget = res.x
    return ExponentialCovariance(float(rng_), float(sill), float(nugget))


def _is_collinear(locs: np.ndarray) -> bool:
    if len(locs) < 3:
        return True
    centred = locs - locs.mean(axis=0)
    s = np.linalg.svd(centred, compute_uv=False)
    return s[1] <= 1e-12 * max(s[0], 1.0)


def fit_kriging(points: OutcomePoints,
                covariance: Union[ExponentialCovariance, str] = "auto",
                metric: DistanceMetric = EUCLIDEAN) -> KrigingModel:
    """Fit ordinary kriging with an exponential covariance.

    Parameters
    ----------
    points : OutcomePoints
        Training data. Coincident locations are averaged first.
    covariance : ExponentialCovariance or "auto"
        Fixed covariance parameters, or ``"auto"`` to fit range, sill and
        nugget to the empirical semivariogram (15 lag bins).
    metric : DistanceMetric
        Distance used in the covariance.
    """
    pts = points.deduplicated()
    n = len(pts)
    if n < 1:
        raise ValidationError("kriging needs at least one training point")
    if n > MAX_KRIGING_POINTS:
        raise ValidationError(
            f"{n} training points exceed the dense-solver limit of {MAX_KRIGING_POINTS}"
        )
    if isinstance(covariance, str):
        if covariance != "auto":
            raise ValidationError(f"unknown covariance specification {covariance!r}")
        if n < 3 or _is_collinear(pts.locations):
            raise ValidationError("automatic variogram fitting needs >= 3 non-collinear points")
        covariance = fit_variogram(pts, metric)

    cov = covariance(metric.pairwise(pts.locations, pts.locations))
    cov[np.diag_indices(n)] += covariance.nugget
    factor = None
    for jitter in (0.0, 1e-10 * covariance.sill):
        try:
            factor = linalg.cho_factor(cov + jitter * np.eye(n), lower=True)
            break
        except linalg.LinAlgError:
            continue
    if factor is None:
        raise KrigingError("kriging covariance matrix is not positive definite")
    ones = np.ones(n)
    cinv_one = linalg.cho_solve(factor, ones)
    cinv_y = linalg.cho_solve(factor, pts.values)
    mean = float(ones @ cinv_y / (ones @ cinv_one))
    weights = cinv_y - mean * cinv_one
    if not np.all(np.isfinite(weights)):
        raise KrigingError("kriging system is numerically singular")
    return KrigingModel(pts, covariance, weights, mean, metric)


def predict(model: KrigingModel, q) -> float:
    """Ordinary-kriging prediction at a single point."""
    return float(model.predict(as_point(q)[None, :])[0])


FieldSource = Union[RasterGrid, KrigingModel]


def field_values(source: FieldSource, q) -> np.ndarray:
    """Vectorised :func:`field_value` over the rows of ``q``."""
    q = np.asarray(q, dtype=float).reshape(-1, 2)
    if isinstance(source, RasterGrid):
        idx = source.cell_index(q)
        vals = source.masked_values().ravel()
        out = np.full(len(q), np.nan)
        inside = idx >= 0
        out[inside] = vals[idx[inside]]
        return out
    if isinstance(source, KrigingModel):
        return source.predict(q)
    raise ValidationError(f"unsupported field source {type(source).__name__}")


def field_value(source: FieldSource, q) -> float:
    """Outcome at ``q`` from a raster or a fitted kriging model; NaN if missing."""
    return float(field_values(source, as_point(q))[0])


def rasterize_kriging(model: KrigingModel, origin, cell_size: float,
                      ncols: int, nrows: int, chunk: Optional[int] = 20000) -> RasterGrid:
    """Evaluate a kriging model at the cell centres of a new raster."""
    grid = RasterGrid(origin, cell_size, np.zeros((nrows, ncols)))
    centres = grid.cell_centers()
    out = np.empty(len(centres))
    step = chunk or len(centres)
    for s in range(0, len(centres), step):
        out[s:s + step] = model.predict(centres[s:s + step])
    return grid.with_values(out.reshape(nrows, ncols))
