"""Circle averages, Horvitz-Thompson and Hajek AMR estimators, curve smoothing."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy import sparse

from .errors import EstimationError, ValidationError
from .field import FieldSource, KrigingModel, RasterGrid, field_values
from .geometry import (
    EUCLIDEAN,
    DistanceMetric,
    as_point,
    as_points,
    circle_angles,
    default_numpts,
    destination,
    sample_circle,
)

ESTIMATORS = ("hajek", "ht")


# --------------------------------------------------------------------------
# designs and intervention nodes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Bernoulli:
    """Independent assignment, each node treated with probability ``p``."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValidationError(f"Bernoulli p must lie in (0, 1), got {self.p!r}")

    def treat_prob(self, n: int) -> float:
        return self.p


@dataclass(frozen=True)
class Complete:
    """Complete randomisation: exactly ``n1`` nodes treated."""

    n1: int

    def treat_prob(self, n: int) -> float:
        return self.n1 / n


Design = Union[Bernoulli, Complete]


def parse_design(text: str) -> Design:
    """Parse ``"bernoulli:0.5"`` or ``"complete:2"``."""
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "bernoulli":
            return Bernoulli(float(arg))
        if kind == "complete":
            return Complete(int(arg))
    except ValueError as exc:
        raise ValidationError(f"bad design specification {text!r}: {exc}") from None
    raise ValidationError(f"unknown design {text!r}; use bernoulli:P or complete:N1")


@dataclass(frozen=True)
class InterventionSet:
    """Intervention nodes, their realised treatments and the design that drew them."""

    coords: np.ndarray = field(repr=False)
    z: np.ndarray
    design: Design
    ids: Optional[tuple] = None
    blocks: Optional[np.ndarray] = None

    def __post_init__(self):
        coords = as_points(self.coords)
        z = np.asarray(self.z)
        if z.ndim != 1 or len(z) != len(coords):
            raise ValidationError("z must be a vector with one entry per node")
        if not np.all((z == 0) | (z == 1)):
            raise ValidationError("treatments must be 0 or 1")
        if len(z) < 2:
            raise ValidationError("at least two intervention nodes are required")
        if isinstance(self.design, Complete) and not 0 < self.design.n1 < len(z):
            raise ValidationError(f"complete design needs 0 < n1 < N, got n1={self.design.n1}")
        if not isinstance(self.design, (Bernoulli, Complete)):
            raise ValidationError(f"unsupported design {self.design!r}")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "z", z.astype(np.int64))
        if self.ids is not None:
            if len(self.ids) != len(z):
                raise ValidationError("ids must have one entry per node")
            object.__setattr__(self, "ids", tuple(self.ids))
        if self.blocks is not None:
            blocks = np.asarray(self.blocks)
            if blocks.shape != z.shape:
                raise ValidationError("blocks must have one label per node")
            object.__setattr__(self, "blocks", blocks)

    @property
    def n(self) -> int:
        return len(self.z)

    @property
    def n1(self) -> int:
        return int(self.z.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def p(self) -> float:
        return self.design.treat_prob(self.n)

    def with_z(self, z) -> "InterventionSet":
        return replace(self, z=np.asarray(z))


# --------------------------------------------------------------------------
# circle averages
# --------------------------------------------------------------------------

def _circle_points(coords: np.ndarray, d: float, k: int, metric: DistanceMetric,
                   tol: float) -> tuple:
    """Evaluation points for every node; returns ``(points, node_of_point)``."""
    if metric.kind == "euclidean":
        theta = circle_angles(k)
        offs = np.column_stack([d * np.cos(theta), d * np.sin(theta)])
        pts = coords[:, None, :] + offs[None, :, :]
        return pts.reshape(-1, 2), np.repeat(np.arange(len(coords)), k)
    if metric.kind == "geodesic":
        bearing = np.pi / 2.0 - circle_angles(k)
        pts = np.concatenate([destination(c, bearing, d, metric.radius) for c in coords])
        return pts, np.repeat(np.arange(len(coords)), k)
    chunks, owner = [], []
    for i, c in enumerate(coords):
        s = sample_circle(c, d, k, metric, tol=tol)
        chunks.append(s.points)
        owner.append(np.full(len(s.points), i))
    return np.concatenate(chunks), np.concatenate(owner)


def _resolution_in_distance_units(grid: RasterGrid, metric: DistanceMetric) -> float:
    if metric.kind == "geodesic":
        # Raster in degrees, radii in metres; use the latitude cell height.
        return math.radians(grid.cell_size) * metric.radius
    return grid.cell_size


@dataclass
class CircleAverageTable:
    """Per-node circle averages at each distance.

    ``mu[i, j]`` is the circle average for node ``i`` at ``dvec[j]``, NaN when
    no evaluation point produced a value; ``n_eval`` counts the values used.
    """

    dvec: np.ndarray
    mu: np.ndarray
    n_eval: np.ndarray
    numpts: tuple


@dataclass
class CirclePlan:
    """Geometry of the circle averages against a fixed raster layout.

    Holds, per distance, a sparse ``(N, ncells)`` matrix counting how often
    each node's evaluation points land in each cell. Because the map from
    cell values to circle averages is linear, one plan serves any number of
    rasters that share the layout.
    """

    dvec: np.ndarray
    numpts: tuple
    operators: list
    ncells: int

    def apply(self, values) -> tuple:
        """Circle averages for raster values of shape ``(..., nrows, ncols)``.

        Returns ``(mu, n_eval)`` with shapes ``(..., N, D)``.
        """
        v = np.asarray(values, dtype=float)
        lead = v.shape[:-2]
        flat = v.reshape(-1, self.ncells)
        valid = ~np.isnan(flat)
        filled = np.where(valid, flat, 0.0)
        validf = valid.astype(float)
        mus, counts = [], []
        for op in self.operators:
            s = (op @ filled.T).T
            c = (op @ validf.T).T
            with np.errstate(invalid="ignore", divide="ignore"):
                mus.append(np.where(c > 0, s / np.where(c > 0, c, 1.0), np.nan))
            counts.append(c)
        mu = np.stack(mus, axis=-1)
        n_eval = np.rint(np.stack(counts, axis=-1)).astype(np.int64)
        n = mu.shape[1]
        return mu.reshape(lead + (n, len(self.dvec))), n_eval.reshape(lead + (n, len(self.dvec)))


def _numpts_for(d: float, numpts, resolution: Optional[float]) -> int:
    if numpts is None:
        if resolution is None:
            raise ValidationError("numpts is required when the outcome source has no raster resolution")
        return default_numpts(d, resolution)
    if callable(numpts):
        return int(numpts(d))
    k = int(numpts)
    if k < 1:
        raise ValidationError(f"numpts must be >= 1, got {numpts!r}")
    return k


def check_dvec(dvec) -> np.ndarray:
    d = np.asarray(dvec, dtype=float).ravel()
    if d.size == 0:
        raise ValidationError("dVec must not be empty")
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise ValidationError("dVec entries must be finite and positive")
    if np.any(np.diff(d) <= 0):
        raise ValidationError("dVec must be strictly increasing")
    return d


def circle_plan(grid: RasterGrid, coords, dvec, numpts=None, only_unique: bool = False,
                metric: DistanceMetric = EUCLIDEAN, tol: float = 0.05) -> CirclePlan:
    """Build the :class:`CirclePlan` for nodes at ``coords`` over ``grid``'s layout.

    ``numpts`` may be an int, a callable of the radius, or None to derive it
    from the raster resolution with :func:`default_numpts`.
    """
    coords = as_points(coords)
    dvec = check_dvec(dvec)
    ncells = grid.nrows * grid.ncols
    res = _resolution_in_distance_units(grid, metric)
    ops, used = [], []
    for d in dvec:
        k = _numpts_for(d, numpts, res)
        used.append(k)
        pts, owner = _circle_points(coords, float(d), k, metric, tol)
        idx = grid.cell_index(pts)
        keep = idx >= 0
        owner, idx = owner[keep], idx[keep]
        data = np.ones(len(idx))
        if only_unique:
            key = np.unique(owner * ncells + idx)
            owner, idx = key // ncells, key % ncells
            data = np.ones(len(idx))
        op = sparse.csr_matrix((data, (owner, idx)), shape=(len(coords), ncells))
        op.sum_duplicates()
        ops.append(op)
    return CirclePlan(dvec, tuple(used), ops, ncells)


def circle_average_table(source: FieldSource, coords, dvec, numpts=None,
                         only_unique: bool = False, metric: DistanceMetric = EUCLIDEAN,
                         resolution: Optional[float] = None, tol: float = 0.05) -> CircleAverageTable:
    """Circle averages for every node and distance.

    For raster sources each evaluation point takes the value of the cell it
    falls in; with ``only_unique`` a cell hit several times by one circle
    counts once. For kriging sources each point takes the kriged prediction.
    Missing values are dropped before averaging.
    """
    coords = as_points(coords)
    dvec = check_dvec(dvec)
    if isinstance(source, RasterGrid):
        plan = circle_plan(source, coords, dvec, numpts, only_unique, metric, tol)
        mu, n_eval = plan.apply(source.masked_values())
        return CircleAverageTable(dvec, mu, n_eval, plan.numpts)
    if not isinstance(source, KrigingModel):
        raise ValidationError(f"unsupported field source {type(source).__name__}")
    mu = np.full((len(coords), len(dvec)), np.nan)
    n_eval = np.zeros((len(coords), len(dvec)), dtype=np.int64)
    used = []
    for j, d in enumerate(dvec):
        k = _numpts_for(d, numpts, resolution)
        used.append(k)
        pts, owner = _circle_points(coords, float(d), k, metric, tol)
        vals = field_values(source, pts)
        ok = ~np.isnan(vals)
        cnt = np.bincount(owner[ok], minlength=len(coords))
        tot = np.bincount(owner[ok], weights=vals[ok], minlength=len(coords))
        has = cnt > 0
        mu[has, j] = tot[has] / cnt[has]
        n_eval[:, j] = cnt
    return CircleAverageTable(dvec, mu, n_eval, tuple(used))


def circle_average(source: FieldSource, center, d: float, numpts: int,
                   only_unique: bool = False, metric: DistanceMetric = EUCLIDEAN) -> tuple:
    """Mean outcome over ``numpts`` evaluation points on the radius-``d`` circle.

    Returns ``(mu, n_eval)``; ``mu`` is NaN when ``n_eval == 0``.
    """
    c = as_point(center)[None, :]
    if not d > 0:
        raise ValidationError(f"distance must be positive, got {d!r}")
    tab = circle_average_table(source, c, [d], numpts, only_unique, metric)
    return float(tab.mu[0, 0]), int(tab.n_eval[0, 0])


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------

def amr_contrast(z, mu, estimator: str = "hajek", p: Optional[float] = None) -> np.ndarray:
    """Vectorised AMR estimate for one or many assignments.

    Parameters
    ----------
    z : array_like, shape (..., N)
        Treatment indicators; leading axes index alternative assignments.
    mu : array_like, shape (N,) or (N, D)
        Circle averages, NaN where missing.
    estimator : {"hajek", "ht"}
    p : float
        Treatment probability, required for ``"ht"``.

    Returns
    -------
    ndarray of shape ``(...,)`` or ``(..., D)``; NaN where an arm has no
    observed circle average.
    """
    z = np.asarray(z, dtype=float)
    mu = np.asarray(mu, dtype=float)
    vec = mu.ndim == 1
    if vec:
        mu = mu[:, None]
    obs = ~np.isnan(mu)
    mu0 = np.where(obs, mu, 0.0)
    obsf = obs.astype(float)
    s1 = z @ mu0
    s0 = (1.0 - z) @ mu0
    n1 = z @ obsf
    n0 = (1.0 - z) @ obsf
    empty = (n1 == 0) | (n0 == 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        if estimator == "hajek":
            est = s1 / n1 - s0 / n0
        elif estimator == "ht":
            if p is None:
                raise ValidationError("the Horvitz-Thompson estimator needs the treatment probability p")
            n = mu.shape[0]
            est = s1 / (n * p) - s0 / (n * (1.0 - p))
        else:
            raise ValidationError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    est = np.where(empty, np.nan, est)
    return est[..., 0] if vec else est


def _scalar_estimate(iv: InterventionSet, mus, estimator: str) -> float:
    mus = np.asarray(mus, dtype=float).ravel()
    if len(mus) != iv.n:
        raise ValidationError("need one circle average per node")
    val = float(amr_contrast(iv.z, mus, estimator, iv.p))
    if math.isnan(val):
        raise EstimationError("a treatment arm has no observed circle average")
    return val


def horvitz_thompson(iv: InterventionSet, mus) -> float:
    """Horvitz-Thompson AMR estimate at one distance.

    Missing circle averages contribute zero while ``N`` stays fixed.
    """
    return _scalar_estimate(iv, mus, "ht")


def hajek(iv: InterventionSet, mus) -> float:
    """Hajek AMR estimate: treated mean minus control mean of observed circle averages."""
    return _scalar_estimate(iv, mus, "hajek")


# --------------------------------------------------------------------------
# AMR curve
# --------------------------------------------------------------------------

@dataclass
class AmrCurve:
    dvec: np.ndarray
    amr_est: np.ndarray
    conley_se: Optional[np.ndarray] = None
    conley_ci_lo: Optional[np.ndarray] = None
    conley_ci_hi: Optional[np.ndarray] = None
    per_ci_lo: Optional[np.ndarray] = None
    per_ci_hi: Optional[np.ndarray] = None
    amr_smoothed: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)
    table: Optional[CircleAverageTable] = field(default=None, repr=False)

    def __len__(self):
        return len(self.dvec)

    def columns(self) -> dict:
        """Available result columns, in display order, keyed by their table names."""
        cols = {"dVec": self.dvec, "AMR_est": self.amr_est}
        if self.conley_ci_lo is not None:
            cols["Conley.CI.l"] = self.conley_ci_lo
            cols["Conley.CI.u"] = self.conley_ci_hi
        if self.per_ci_lo is not None:
            cols["Per.CI.l"] = self.per_ci_lo
            cols["Per.CI.u"] = self.per_ci_hi
        if self.amr_smoothed is not None:
            cols["AMR_est_smoothed"] = self.amr_smoothed
        return cols


def estimate_amr(iv: InterventionSet, source: FieldSource, dvec, numpts=None,
                 only_unique: bool = False, metric: DistanceMetric = EUCLIDEAN,
                 estimator: str = "hajek", resolution: Optional[float] = None,
                 table: Optional[CircleAverageTable] = None) -> AmrCurve:
    """Point estimates of the AMR at each distance in ``dvec``.

    Distances where an arm has no observed circle average get NaN.
    Pass a precomputed ``table`` to skip the circle averaging.
    """
    if estimator not in ESTIMATORS:
        raise ValidationError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    dvec = check_dvec(dvec)
    if table is None:
        table = circle_average_table(source, iv.coords, dvec, numpts, only_unique, metric,
                                     resolution=resolution)
    est = amr_contrast(iv.z, table.mu, estimator, iv.p)
    meta = {
        "estimator": estimator,
        "numpts": list(table.numpts),
        "only_unique": bool(only_unique),
        "metric": metric.kind,
    }
    missing = np.isnan(table.mu).sum(axis=0)
    if estimator == "ht" and missing.any():
        meta["ht_zero_filled"] = [int(m) for m in missing]
        warnings.warn(
            f"Horvitz-Thompson zero-filled {int(missing.sum())} missing circle averages",
            RuntimeWarning, stacklevel=2,
        )
    return AmrCurve(dvec, est, metadata=meta, table=table)


# --------------------------------------------------------------------------
# smoothing
# --------------------------------------------------------------------------

def epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)


def local_linear(x, y, x0, bandwidth: float) -> np.ndarray:
    """Local linear regression of ``y`` on ``x`` with Epanechnikov weights.

    Falls back to the local weighted mean where fewer than two distinct
    ``x`` carry weight, and to NaN where none do.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = ~np.isnan(y)
    x, y = x[ok], y[ok]
    out = np.full(np.shape(x0), np.nan)
    for k, t in enumerate(np.atleast_1d(x0)):
        w = epanechnikov((x - t) / bandwidth)
        pos = w > 0
        if not pos.any():
            continue
        if np.unique(x[pos]).size < 2:
            out.flat[k] = np.sum(w * y) / np.sum(w)
            continue
        dx = x - t
        s0, s1, s2 = w.sum(), (w * dx).sum(), (w * dx * dx).sum()
        t0, t1 = (w * y).sum(), (w * dx * y).sum()
        out.flat[k] = (s2 * t0 - s1 * t1) / (s0 * s2 - s1 * s1)
    return out


def auto_bandwidth(dvec) -> float:
    return 2.0 * float(np.median(np.diff(np.asarray(dvec, dtype=float))))


def smooth_amr(curve: AmrCurve, bandwidth: Union[float, str] = "auto") -> AmrCurve:
    """Return a copy of ``curve`` with ``amr_smoothed`` filled in.

    ``"auto"`` uses twice the median spacing of ``dvec``.
    """
    if len(curve.dvec) < 3:
        raise ValidationError("smoothing needs at least three distances")
    if isinstance(bandwidth, str):
        if bandwidth != "auto":
            raise ValidationError(f"bandwidth must be positive or 'auto', got {bandwidth!r}")
        bandwidth = auto_bandwidth(curve.dvec)
    if not bandwidth > 0:
        raise ValidationError(f"bandwidth must be positive, got {bandwidth!r}")
    sm = local_linear(curve.dvec, curve.amr_est, curve.dvec, bandwidth)
    meta = dict(curve.metadata, smooth_bandwidth=float(bandwidth), smooth_kernel="epanechnikov")
    return replace(curve, amr_smoothed=sm, metadata=meta)
