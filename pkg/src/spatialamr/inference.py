"""Permutation intervals, spatial-HAC (Conley) standard errors and the
cumulative-effect permutation test.

Random assignments come from numpy's Philox-4x64 counter-based generator.
Draws are produced in fixed blocks of :data:`CHUNK` assignments; block ``c``
uses the Philox key ``(seed, c)``, so results do not depend on how many
threads compute them.
"""

from __future__ import annotations

import itertools
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy import stats

from .errors import EstimationError, ValidationError
from .estimator import (
    CircleAverageTable,
    InterventionSet,
    amr_contrast,
    check_dvec,
    circle_average_table,
)
from .geometry import EUCLIDEAN, DistanceMetric

PRNG_NAME = "Philox4x64-10"
CHUNK = 256
SCHEMES = ("complete", "bernoulli", "blocks", "clusters")

_KERNEL_ALIASES = {
    "uni": "uniform", "uniform": "uniform",
    "tri": "triangular", "triangular": "triangular",
    "epa": "epanechnikov", "epanechnikov": "epanechnikov",
}


def default_threads() -> int:
    """Worker count from ``AMR_THREADS`` (default 1)."""
    raw = os.environ.get("AMR_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        raise ValidationError(f"AMR_THREADS must be an integer, got {raw!r}") from None


# --------------------------------------------------------------------------
# kernels and Conley standard errors
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    kind: str
    cutoff: float

    def __post_init__(self):
        kind = _KERNEL_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise ValidationError(f"unknown kernel {self.kind!r}; use uni, tri or epa")
        if not self.cutoff > 0:
            raise ValidationError(f"kernel cutoff must be positive, got {self.cutoff!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "cutoff", float(self.cutoff))


def kernel_weight(spec: KernelSpec, dist):
    """Kernel weight for a distance (or array of distances)."""
    d = np.asarray(dist, dtype=float)
    if np.any(d < 0):
        raise ValidationError("distances must be non-negative")
    u = d / spec.cutoff
    if spec.kind == "uniform":
        w = (u <= 1.0).astype(float)
    elif spec.kind == "triangular":
        w = np.maximum(0.0, 1.0 - u)
    else:
        w = np.maximum(0.0, 1.0 - u * u)
    return float(w) if w.ndim == 0 else w


class ConleyResult(NamedTuple):
    se: float
    ci_lo: float
    ci_hi: float
    variance: float
    edf_nu: Optional[float]


def sandwich_variance(x: np.ndarray, e: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``A^-1 M A^-1`` with ``A = X'X`` and ``M = sum_ij w_ij x_i e_i e_j x_j'``."""
    a_inv = np.linalg.inv(x.T @ x)
    scores = x * e[:, None]
    meat = scores.T @ weights @ scores
    meat = 0.5 * (meat + meat.T)
    return a_inv @ meat @ a_inv


def conley_se(iv: InterventionSet, mus, spec: KernelSpec, edf: bool = False,
              alpha: float = 0.05, estimate: Optional[float] = None,
              metric: DistanceMetric = EUCLIDEAN,
              node_distances: Optional[np.ndarray] = None) -> ConleyResult:
    """Spatial-HAC standard error of the AMR at one distance.

    The estimate is treated as the coefficient on ``Z`` in the regression of
    the circle averages on ``(1, Z)``; cross-node score products are weighted
    by ``kernel_weight`` of the inter-node distance. Nodes with a missing
    circle average are left out.

    With ``edf`` the variance is multiplied by ``nu / (nu - 2)`` where
    ``nu = tr(W)^2 / tr(W^2)`` is the effective number of independent nodes
    implied by the kernel matrix ``W``.

    The interval is ``estimate +/- z_{1 - alpha/2} * se``; ``estimate``
    defaults to the regression coefficient (the Hajek estimate).
    """
    y = np.asarray(mus, dtype=float).ravel()
    ok = ~np.isnan(y)
    z = iv.z[ok].astype(float)
    y = y[ok]
    if z.sum() == 0 or z.sum() == len(z):
        raise EstimationError("Conley SE needs observed circle averages in both arms")
    x = np.column_stack([np.ones(len(y)), z])
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    e = y - x @ beta
    if node_distances is None:
        node_distances = metric.pairwise(iv.coords, iv.coords)
    w = kernel_weight(spec, node_distances[np.ix_(ok, ok)])
    var = float(sandwich_variance(x, e, w)[1, 1])
    nu = None
    if edf:
        nu = float(np.trace(w) ** 2 / np.sum(w * w))
        if nu > 2.0:
            var *= nu / (nu - 2.0)
        else:
            warnings.warn(f"effective degrees of freedom {nu:.3g} <= 2; variance undefined",
                          RuntimeWarning, stacklevel=2)
            var = float("nan")
    if var < 0:
        warnings.warn(f"negative sandwich variance {var:.3g} clamped to zero",
                      RuntimeWarning, stacklevel=2)
        var = 0.0
    se = math.sqrt(var) if not math.isnan(var) else float("nan")
    centre = float(beta[1]) if estimate is None else float(estimate)
    zq = stats.norm.ppf(1.0 - alpha / 2.0)
    return ConleyResult(se, centre - zq * se, centre + zq * se, var, nu)


def conley_curve(iv: InterventionSet, table: CircleAverageTable, spec: KernelSpec,
                 estimates, edf: bool = False, alpha: float = 0.05,
                 metric: DistanceMetric = EUCLIDEAN) -> dict:
    """:func:`conley_se` at every distance of a circle-average table.

    Returns arrays ``se``, ``ci_lo``, ``ci_hi`` (NaN where undefined) and the
    list of ``edf_nu`` values.
    """
    dist = metric.pairwise(iv.coords, iv.coords)
    n_d = len(table.dvec)
    se, lo, hi = (np.full(n_d, np.nan) for _ in range(3))
    nus = []
    for j in range(n_d):
        if np.isnan(estimates[j]):
            nus.append(None)
            continue
        try:
            r = conley_se(iv, table.mu[:, j], spec, edf, alpha, estimates[j],
                          node_distances=dist)
        except EstimationError:
            nus.append(None)
            continue
        se[j], lo[j], hi[j] = r.se, r.ci_lo, r.ci_hi
        nus.append(r.edf_nu)
    return {"se": se, "ci_lo": lo, "ci_hi": hi, "edf_nu": nus}


# --------------------------------------------------------------------------
# re-randomisation
# --------------------------------------------------------------------------

def percentile(sample, q: float) -> float:
    """Type-7 (linear interpolation) percentile of a sample."""
    s = np.sort(np.asarray(sample, dtype=float).ravel())
    if s.size == 0:
        raise ValidationError("percentile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValidationError(f"q must lie in [0, 1], got {q!r}")
    h = (s.size - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, s.size - 1)
    return float(s[lo] + (h - lo) * (s[hi] - s[lo]))


def _cluster_labels(iv: InterventionSet):
    if iv.blocks is None:
        raise ValidationError("this permutation scheme needs block labels")
    labels, inverse = np.unique(iv.blocks, return_inverse=True)
    return labels, inverse.ravel()


def _cluster_treatment(iv: InterventionSet):
    labels, inverse = _cluster_labels(iv)
    zc = np.zeros(len(labels), dtype=np.int64)
    for k in range(len(labels)):
        members = iv.z[inverse == k]
        if members.min() != members.max():
            raise ValidationError(f"treatment varies within cluster {labels[k]!r}")
        zc[k] = members[0]
    return zc, inverse


def _check_scheme(iv: InterventionSet, scheme: str) -> None:
    if scheme not in SCHEMES:
        raise ValidationError(f"unknown permutation scheme {scheme!r}; choose from {SCHEMES}")
    if scheme == "complete" and (iv.n1 == 0 or iv.n0 == 0):
        raise ValidationError("all nodes are in one arm; nothing to permute")
    if scheme == "blocks":
        _, inverse = _cluster_labels(iv)
        sums = np.bincount(inverse, weights=iv.z)
        sizes = np.bincount(inverse)
        if np.all((sums == 0) | (sums == sizes)):
            raise ValidationError("every block is all-treated or all-control; nothing to permute")
    if scheme == "clusters":
        zc, _ = _cluster_treatment(iv)
        if zc.sum() in (0, len(zc)):
            raise ValidationError("all clusters are in one arm; nothing to permute")


def assignment_space_size(iv: InterventionSet, scheme: str) -> Optional[int]:
    """Number of equally likely assignments under ``scheme`` (None for Bernoulli)."""
    if scheme == "complete":
        return math.comb(iv.n, iv.n1)
    if scheme == "blocks":
        _, inverse = _cluster_labels(iv)
        total = 1
        for k in range(inverse.max() + 1):
            zk = iv.z[inverse == k]
            total *= math.comb(len(zk), int(zk.sum()))
        return total
    if scheme == "clusters":
        zc, _ = _cluster_treatment(iv)
        return math.comb(len(zc), int(zc.sum()))
    return None


def _combos(n: int, k: int) -> np.ndarray:
    out = np.zeros((math.comb(n, k), n), dtype=np.int8)
    for r, idx in enumerate(itertools.combinations(range(n), k)):
        out[r, list(idx)] = 1
    return out


def enumerate_assignments(iv: InterventionSet, scheme: str = "complete") -> np.ndarray:
    """Every assignment of the (equiprobable) permutation space, one per row."""
    _check_scheme(iv, scheme)
    if scheme == "complete":
        return _combos(iv.n, iv.n1)
    if scheme == "clusters":
        zc, inverse = _cluster_treatment(iv)
        return _combos(len(zc), int(zc.sum()))[:, inverse]
    if scheme == "blocks":
        _, inverse = _cluster_labels(iv)
        parts = []
        for k in range(inverse.max() + 1):
            members = np.flatnonzero(inverse == k)
            parts.append((members, _combos(len(members), int(iv.z[members].sum()))))
        rows = []
        for choice in itertools.product(*(range(len(c)) for _, c in parts)):
            z = np.zeros(iv.n, dtype=np.int8)
            for (members, combos), r in zip(parts, choice):
                z[members] = combos[r]
            rows.append(z)
        return np.array(rows)
    raise ValidationError("Bernoulli assignments are not equiprobable; cannot enumerate")


def _generator(seed: int, chunk: int) -> np.random.Generator:
    key = np.array([seed, chunk], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw_chunk(iv: InterventionSet, scheme: str, seed: int, chunk: int, m: int) -> np.ndarray:
    rng = _generator(seed, chunk)
    if scheme == "bernoulli":
        return (rng.random((m, iv.n)) < iv.p).astype(np.int8)
    if scheme == "complete":
        return rng.permuted(np.tile(iv.z.astype(np.int8), (m, 1)), axis=1)
    if scheme == "clusters":
        zc, inverse = _cluster_treatment(iv)
        return rng.permuted(np.tile(zc.astype(np.int8), (m, 1)), axis=1)[:, inverse]
    _, inverse = _cluster_labels(iv)
    out = np.tile(iv.z.astype(np.int8), (m, 1))
    for k in range(inverse.max() + 1):
        cols = np.flatnonzero(inverse == k)
        out[:, cols] = rng.permuted(out[:, cols], axis=1)
    return out


def _check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValidationError(f"seed must be a non-negative 64-bit integer, got {seed}")
    return seed


def draw_assignments(iv: InterventionSet, nperms: int, scheme: str = "complete",
                     seed: int = 0) -> np.ndarray:
    """``nperms`` re-randomised assignments, shape ``(nperms, N)``."""
    _check_scheme(iv, scheme)
    seed = _check_seed(seed)
    blocks = [_draw_chunk(iv, scheme, seed, c, min(CHUNK, nperms - s))
              for c, s in enumerate(range(0, nperms, CHUNK))]
    return np.concatenate(blocks)


def _null_estimates(iv: InterventionSet, mu: np.ndarray, nperms: int, scheme: str,
                    seed: int, estimator: str, exact, threads: Optional[int]):
    """Estimates under re-randomisation; returns ``(draws, is_exact)``."""
    _check_scheme(iv, scheme)
    seed = _check_seed(seed)
    if nperms < 1:
        raise ValidationError(f"nperms must be >= 1, got {nperms}")
    size = assignment_space_size(iv, scheme)
    use_exact = exact is True or (exact == "auto" and size is not None and size <= nperms)
    if use_exact:
        if size is None:
            raise ValidationError("exact enumeration is unavailable for the Bernoulli scheme")
        if size > 1_000_000:
            raise ValidationError(f"{size} assignments are too many to enumerate")
        return amr_contrast(enumerate_assignments(iv, scheme), mu, estimator, iv.p), True

    def work(c):
        m = min(CHUNK, nperms - c * CHUNK)
        zs = _draw_chunk(iv, scheme, seed, c, m)
        return amr_contrast(zs, mu, estimator, iv.p)

    n_chunks = -(-nperms // CHUNK)
    threads = threads or default_threads()
    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(n_chunks)))
    else:
        parts = [work(c) for c in range(n_chunks)]
    return np.concatenate(parts), False


@dataclass
class PermutationResult:
    dvec: np.ndarray
    null_lo: np.ndarray
    null_hi: np.ndarray
    nperms: int
    seed: int
    scheme: str
    alpha: float
    exact: bool
    draws: np.ndarray

    def rejects(self, estimates) -> np.ndarray:
        est = np.asarray(estimates, dtype=float)
        return (est < self.null_lo) | (est > self.null_hi)


def _resolve_table(iv, data, dvec, numpts, only_unique, metric) -> CircleAverageTable:
    if isinstance(data, CircleAverageTable):
        return data
    if dvec is None:
        raise ValidationError("dvec is required when passing a field source")
    return circle_average_table(data, iv.coords, check_dvec(dvec), numpts, only_unique, metric)


def _null_quantiles(draws: np.ndarray, alpha: float):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        lo = np.nanquantile(draws, alpha / 2.0, axis=0, method="linear")
        hi = np.nanquantile(draws, 1.0 - alpha / 2.0, axis=0, method="linear")
    return lo, hi


def permutation_test(iv: InterventionSet, data, dvec=None, nperms: int = 1000,
                     alpha: float = 0.05, scheme: str = "complete", seed: int = 0,
                     estimator: str = "hajek", exact: Union[bool, str] = "auto",
                     numpts=None, only_unique: bool = False,
                     metric: DistanceMetric = EUCLIDEAN,
                     threads: Optional[int] = None) -> PermutationResult:
    """Sharp-null permutation percentiles of the AMR estimator at each distance.

    Under the sharp null every circle average is fixed, so only arm
    membership is re-drawn. ``data`` is a :class:`CircleAverageTable` or a
    field source (then ``dvec`` is required).

    Schemes: ``"complete"`` shuffles the observed labels, ``"bernoulli"``
    redraws with the design's ``p``, ``"blocks"`` shuffles within each block
    label and ``"clusters"`` shuffles whole blocks as units.

    With ``exact="auto"`` the full assignment space is enumerated instead of
    sampled whenever it has no more than ``nperms`` members.
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    table = _resolve_table(iv, data, dvec, numpts, only_unique, metric)
    draws, is_exact = _null_estimates(iv, table.mu, nperms, scheme, seed, estimator,
                                      exact, threads)
    lo, hi = _null_quantiles(draws, alpha)
    return PermutationResult(table.dvec, lo, hi, len(draws), int(seed), scheme, alpha,
                             is_exact, draws)


@dataclass
class CumulativeTestResult:
    d_range: tuple
    cumulative_est: float
    null_lo: float
    null_hi: float
    p_value: float
    alpha: float
    nperms: int
    n_distances: int
    exact: bool = False

    @property
    def reject(self) -> bool:
        return bool(self.cumulative_est < self.null_lo or self.cumulative_est > self.null_hi)


def _in_range(dvec, d_range):
    lo, hi = float(d_range[0]), float(d_range[1])
    if lo > hi:
        raise ValidationError(f"empty distance range ({lo}, {hi})")
    eps = 1e-9 * max(abs(lo), abs(hi), 1.0)
    mask = (dvec >= lo - eps) & (dvec <= hi + eps)
    if not mask.any():
        raise ValidationError(f"range ({lo}, {hi}) contains no distance of dVec")
    return mask


def cumulative_effect_test(iv: InterventionSet, data, d_range, dvec=None,
                           nperms: int = 1000, alpha: float = 0.05,
                           scheme: str = "complete", seed: int = 0,
                           estimator: str = "hajek", exact: Union[bool, str] = "auto",
                           numpts=None, only_unique: bool = False,
                           metric: DistanceMetric = EUCLIDEAN,
                           threads: Optional[int] = None) -> CumulativeTestResult:
    """Permutation test of the summed AMR estimates over ``d_range``.

    The statistic is the sum of the estimates at the distances of ``dvec``
    inside ``[lo, hi]``, recomputed under each re-randomised assignment (the
    same draws :func:`permutation_test` uses for that seed). The two-sided
    p-value is ``(1 + #{|T*| >= |T|}) / (1 + nperms)`` for sampled draws and
    ``#{|T*| >= |T|} / size`` when the space is enumerated.
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    table = _resolve_table(iv, data, dvec, numpts, only_unique, metric)
    mask = _in_range(table.dvec, d_range)
    mu = table.mu[:, mask]
    observed = float(np.nansum(amr_contrast(iv.z, mu, estimator, iv.p)))
    draws, is_exact = _null_estimates(iv, mu, nperms, scheme, seed, estimator, exact, threads)
    null = np.nansum(draws, axis=1)
    lo, hi = _null_quantiles(null[:, None], alpha)
    tol = 1e-12 * max(1.0, abs(observed))
    extreme = int(np.sum(np.abs(null) >= abs(observed) - tol))
    p = extreme / len(null) if is_exact else (1 + extreme) / (1 + len(null))
    return CumulativeTestResult((float(d_range[0]), float(d_range[1])), observed,
                                float(lo[0]), float(hi[0]), float(min(p, 1.0)), alpha,
                                len(null), int(mask.sum()), is_exact)
