"""Ground truth for spatial interference experiments.

A :class:`StructuralModel` fixes every potential outcome ``Y_x(z)`` on a
raster. :func:`enumerate_truth` walks all assignments of the design and
returns the node-and-cell effects, their circle averages and the true AMR.
Circle averages use the estimator's own evaluation plan, so estimator and
oracle see exactly the same cells.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .errors import CapacityError, ValidationError
from .estimator import Bernoulli, Complete, Design, InterventionSet, circle_plan, check_dvec
from .field import RasterGrid
from .geometry import EUCLIDEAN, DistanceMetric, as_points

MAX_ENUMERATION_NODES = 20

TOY_GAMMA = dict(a1=8.0, k1=2.0, theta1=0.3, a2=4.0, k2=6.0, theta2=0.2)
TOY_NODES = ((1.0, 1.0), (3.0, 1.0), (1.0, 3.0), (3.0, 3.0))


def gamma_mixture_effect(d, a1: float = 8.0, k1: float = 2.0, theta1: float = 0.3,
                         a2: float = 4.0, k2: float = 6.0, theta2: float = 0.2):
    """Difference of two scaled gamma densities, ``a1*g(d;k1,theta1) - a2*g(d;k2,theta2)``.

    With the defaults the effect rises to a positive peak near 0.3, turns
    negative around 0.9 and decays back to zero.
    """
    if not (k1 > 0 and k2 > 0 and theta1 > 0 and theta2 > 0):
        raise ValidationError("gamma shapes and scales must be positive")
    d = np.asarray(d, dtype=float)
    out = (a1 * stats.gamma.pdf(d, k1, scale=theta1)
           - a2 * stats.gamma.pdf(d, k2, scale=theta2))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class StructuralModel:
    """Potential outcomes on a raster.

    ``combination="additive"``: ``Y_x(z) = baseline(x) + sum_i z_i f(d_i(x))``.
    ``combination="max"``: ``Y_x(z) = baseline(x) + max_{i: z_i=1} f(d_i(x))``
    (plain baseline when nothing is treated).

    Distances are measured from each node to cell centres.
    """

    baseline: RasterGrid
    nodes: np.ndarray = field(repr=False)
    effect_fn: Callable = field(repr=False)
    combination: str = "additive"
    design: Design = Bernoulli(0.5)
    metric: DistanceMetric = EUCLIDEAN

    def __post_init__(self):
        object.__setattr__(self, "nodes", as_points(self.nodes))
        if self.combination not in ("additive", "max"):
            raise ValidationError(f"unknown combination {self.combination!r}")
        if isinstance(self.design, Complete) and not 0 < self.design.n1 < len(self.nodes):
            raise ValidationError("complete design needs 0 < n1 < N")

    @property
    def n(self) -> int:
        return len(self.nodes)

    def effects(self) -> np.ndarray:
        """``(N, nrows, ncols)`` effect of each node on each cell."""
        g = self.baseline
        dist = self.metric.pairwise(self.nodes, g.cell_centers())
        eff = np.asarray(self.effect_fn(dist), dtype=float)
        return eff.reshape(self.n, g.nrows, g.ncols)

    def realize(self, z, effects: Optional[np.ndarray] = None) -> np.ndarray:
        """Outcome raster values for assignment(s) ``z`` of shape ``(..., N)``."""
        z = np.asarray(z)
        eff = self.effects() if effects is None else effects
        base = self.baseline.masked_values()
        if self.combination == "additive":
            return base + np.tensordot(z.astype(float), eff, axes=([-1], [0]))
        treated = z.astype(bool)
        top = np.full(z.shape[:-1] + base.shape, -np.inf)
        for i in range(self.n):
            on = treated[..., i][..., None, None]
            top = np.where(on, np.maximum(top, eff[i]), top)
        return base + np.where(np.isfinite(top), top, 0.0)


def assignment_distribution(n: int, design: Design):
    """All assignments with positive probability, as ``(Z, prob)``."""
    if n > MAX_ENUMERATION_NODES:
        raise CapacityError(f"exact enumeration is limited to {MAX_ENUMERATION_NODES} nodes, got {n}")
    if isinstance(design, Bernoulli):
        z = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int8)
        k = z.sum(axis=1)
        prob = design.p ** k * (1.0 - design.p) ** (n - k)
        return z, prob
    rows = []
    for idx in itertools.combinations(range(n), design.n1):
        r = np.zeros(n, dtype=np.int8)
        r[list(idx)] = 1
        rows.append(r)
    z = np.array(rows)
    return z, np.full(len(z), 1.0 / len(z))


@dataclass
class EnumeratedTruth:
    """Exact estimands of a structural model.

    Attributes
    ----------
    assignments, probabilities :
        Support of the design and the probability of each assignment.
    outcomes :
        Realised raster values per assignment, ``(M, nrows, ncols)``.
    tau_ix :
        Effect of switching node ``i`` on cell ``x`` marginalising over the
        other nodes, ``(N, nrows, ncols)``.
    tau_id :
        Circle averages of ``tau_ix``, ``(N, D)``; NaN where the circle misses
        the raster.
    true_amr :
        Mean of ``tau_id`` over nodes with a defined value, ``(D,)``.
    """

    dvec: np.ndarray
    assignments: np.ndarray
    probabilities: np.ndarray
    outcomes: np.ndarray = field(repr=False)
    tau_ix: np.ndarray = field(repr=False)
    tau_id: np.ndarray
    true_amr: np.ndarray
    numpts: tuple = ()
    only_unique: bool = False

    def to_json(self) -> str:
        doc = {
            "schema": "spatialamr.enumerated_truth/1",
            "dvec": self.dvec.tolist(),
            "numpts": list(self.numpts),
            "only_unique": self.only_unique,
            "assignments": self.assignments.astype(int).tolist(),
            "probabilities": self.probabilities.tolist(),
            "tau_ix": self.tau_ix.tolist(),
            "tau_id": [[None if math.isnan(v) else v for v in row] for row in self.tau_id.tolist()],
            "true_amr": [None if math.isnan(v) else v for v in self.true_amr.tolist()],
        }
        return json.dumps(doc, indent=1, sort_keys=True)


def conditional_weights(z: np.ndarray, prob: np.ndarray):
    """Weights for ``E[. | z_i = 1]`` and ``E[. | z_i = 0]``, each ``(N, M)``."""
    zf = z.astype(float)
    w1 = (zf * prob[:, None]).T
    w0 = ((1.0 - zf) * prob[:, None]).T
    w1 /= w1.sum(axis=1, keepdims=True)
    w0 /= w0.sum(axis=1, keepdims=True)
    return w1, w0


def marginal_effects(model: StructuralModel, z: np.ndarray, prob: np.ndarray,
                     outcomes: np.ndarray) -> np.ndarray:
    """``tau_ix`` from the outcome of every assignment."""
    w1, w0 = conditional_weights(z, prob)
    flat = outcomes.reshape(len(z), -1)
    g = model.baseline
    return ((w1 - w0) @ flat).reshape(model.n, g.nrows, g.ncols)


def _node_mean(tau_id: np.ndarray) -> np.ndarray:
    """Mean over nodes of the defined entries; NaN where none is defined."""
    ok = ~np.isnan(tau_id)
    cnt = ok.sum(axis=0)
    tot = np.where(ok, tau_id, 0.0).sum(axis=0)
    return np.where(cnt > 0, tot / np.maximum(cnt, 1), np.nan)


def truth_from_effects(tau_ix: np.ndarray, model: StructuralModel, dvec, numpts=None,
                       only_unique: bool = False):
    """Circle averages of node effects around their own node, and their mean."""
    plan = circle_plan(model.baseline, model.nodes, dvec, numpts, only_unique, model.metric)
    mu, _ = plan.apply(tau_ix)  # (N, N, D): raster of node k around node i
    idx = np.arange(model.n)
    tau_id = mu[idx, idx, :]
    return tau_id, _node_mean(tau_id), plan


def enumerate_truth(model: StructuralModel, dvec, numpts=None,
                    only_unique: bool = False) -> EnumeratedTruth:
    """Exact AMR by enumerating every assignment the design can produce.

    ``tau_ix`` is ``E[Y_x | z_i = 1] - E[Y_x | z_i = 0]`` under the design;
    under Bernoulli designs the conditioning leaves the other nodes'
    distribution unchanged, under complete designs it is the conditional
    (hypergeometric) distribution.
    """
    dvec = check_dvec(dvec)
    z, prob = assignment_distribution(model.n, model.design)
    outcomes = model.realize(z)
    tau_ix = marginal_effects(model, z, prob, outcomes)
    tau_id, amr, plan = truth_from_effects(tau_ix, model, dvec, numpts, only_unique)
    return EnumeratedTruth(dvec, z, prob, outcomes, tau_ix, tau_id, amr,
                           plan.numpts, only_unique)


def additive_truth(model: StructuralModel, dvec, numpts=None, only_unique: bool = False):
    """Exact ``(tau_id, true_amr)`` for additive models of any size.

    Under additivity ``tau_ix`` equals the node's own effect, whatever the
    design, so no enumeration is needed.
    """
    if model.combination != "additive":
        raise ValidationError("additive_truth needs an additive model")
    dvec = check_dvec(dvec)
    g = model.baseline
    centres = g.cell_centers()
    plan = circle_plan(g, model.nodes, dvec, numpts, only_unique, model.metric)
    tau_id = np.full((model.n, len(dvec)), np.nan)
    for i in range(model.n):
        eff = np.asarray(model.effect_fn(model.metric.to_points(model.nodes[i], centres)), dtype=float)
        for j, op in enumerate(plan.operators):
            r = op.getrow(i)
            if r.nnz:
                tau_id[i, j] = float(r.data @ eff[r.indices]) / r.data.sum()
    return tau_id, _node_mean(tau_id)


def simulate_realization(model: StructuralModel, seed: int = 0, effects=None):
    """Draw one assignment from the design; returns ``(InterventionSet, RasterGrid)``."""
    rng = np.random.Generator(np.random.Philox(key=np.array([int(seed), 0], dtype=np.uint64)))
    if isinstance(model.design, Bernoulli):
        z = (rng.random(model.n) < model.design.p).astype(np.int64)
    else:
        z = np.zeros(model.n, dtype=np.int64)
        z[rng.permutation(model.n)[:model.design.n1]] = 1
    values = model.realize(z, effects)
    g = model.baseline
    raster = RasterGrid(g.origin, g.cell_size, values, g.nodata)
    return InterventionSet(model.nodes, z, model.design), raster


def make_toy_example(seed: int = 2020, dvec=None, numpts=None, only_unique: bool = False):
    """The four-node, 4x4-raster toy instance and its exact truth.

    Baseline cells are uniform on [0, 1] from the seeded generator; nodes sit
    at (1, 1), (3, 1), (1, 3) and (3, 3); the effect is
    :func:`gamma_mixture_effect` with its default parameters; treatment is
    Bernoulli(0.5), so there are 16 equally likely assignments.
    """
    rng = np.random.Generator(np.random.Philox(key=np.array([int(seed), 0], dtype=np.uint64)))
    baseline = RasterGrid((0.0, 0.0), 1.0, rng.random((4, 4)))
    model = StructuralModel(baseline, np.array(TOY_NODES), gamma_mixture_effect,
                            "additive", Bernoulli(0.5))
    if dvec is None:
        dvec = toy_dvec()
    return model, enumerate_truth(model, dvec, numpts, only_unique)


def toy_dvec() -> np.ndarray:
    return np.round(np.arange(1, 21) * 0.1, 10)


def truncated_gamma_effect(support: float, shape: float = 2.0, scale: float = 0.3):
    """Effect function ``g(d; shape, scale)`` (a gamma density) cut to zero at ``support``."""
    if not support > 0:
        raise ValidationError("support must be positive")

    def effect(d):
        d = np.asarray(d, dtype=float)
        return np.where(d < support, stats.gamma.pdf(d, shape, scale=scale), 0.0)

    return effect


def jittered_grid_model(nx: int, ny: int, seed: int, effect_fn: Callable,
                        spacing: float = 1.0, jitter: float = 0.2, cell: float = 0.2,
                        pad: float = 3.0, design: Design = Bernoulli(0.5),
                        combination: str = "additive") -> StructuralModel:
    """Nodes on an ``nx`` by ``ny`` grid, each shifted uniformly by up to ``jitter``.

    The baseline raster holds independent uniform [0, 1] cells and extends
    ``pad`` beyond the outermost grid line on every side.
    """
    rng = np.random.Generator(np.random.Philox(key=np.array([int(seed), 0], dtype=np.uint64)))
    gx, gy = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing)
    nodes = np.column_stack([gx.ravel(), gy.ravel()]) + rng.uniform(-jitter, jitter, (nx * ny, 2))
    ncols = int(math.ceil(((nx - 1) * spacing + 2 * pad) / cell))
    nrows = int(math.ceil(((ny - 1) * spacing + 2 * pad) / cell))
    baseline = RasterGrid((-pad, -pad), cell, rng.random((nrows, ncols)))
    return StructuralModel(baseline, nodes, effect_fn, combination, design)
