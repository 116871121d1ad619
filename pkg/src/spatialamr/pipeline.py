"""End-to-end analysis: files in, AMR table, intervals, plot and tests out."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import __version__
from .errors import EstimationError, ValidationError
from .estimator import (
    AmrCurve,
    Bernoulli,
    CircleAverageTable,
    Complete,
    InterventionSet,
    circle_average_table,
    estimate_amr,
    parse_design,
    smooth_amr,
)
from .field import ExponentialCovariance, KrigingModel, fit_kriging, rasterize_kriging
from .geometry import DistanceMetric
from .inference import (
    PRNG_NAME,
    CumulativeTestResult,
    KernelSpec,
    conley_curve,
    cumulative_effect_test,
    permutation_test,
)
from .io import (
    dump_json,
    load_json,
    nan_array,
    read_outcome_column,
    read_raster_ascii,
    read_table_csv,
    read_zdata,
    write_raster_ascii,
    write_table_csv,
    write_zdata,
)
from .plot import emit_plot

SUMMARY_COLUMNS = ("dVec", "AMR_est", "Conley.CI.l", "Conley.CI.u", "Per.CI.l", "Per.CI.u",
                   "AMR_est_smoothed")


@dataclass
class RunConfig:
    zdata_path: Optional[str] = None
    raster_path: Optional[str] = None
    ydata_path: Optional[str] = None
    x_coord_Z: str = "x"
    y_coord_Z: str = "y"
    treatment: str = "Z"
    x_coord_Y: str = "x"
    y_coord_Y: str = "y"
    outcome: Optional[str] = None
    dvec: Union[str, Sequence[float], None] = None
    dist_metric: str = "euclidean"
    numpts: Optional[int] = None
    only_unique: bool = False
    per_se: bool = True
    conley_se: bool = True
    cutoff: Optional[float] = None
    kernel: str = "uniform"
    edf: bool = False
    smooth: bool = False
    bandwidth: Union[float, str] = "auto"
    nperms: int = 1000
    alpha: float = 0.05
    seed: int = 0
    estimator: str = "hajek"
    design: Optional[str] = None
    scheme: str = "complete"
    block_col: Optional[str] = None
    kriging: str = "auto"
    out_dir: Optional[str] = None

    def validate(self) -> None:
        if not self.zdata_path:
            raise ValidationError("a Zdata file is required")
        if self.raster_path and self.ydata_path:
            raise ValidationError("give either a raster or Ydata, not both")
        if not (self.raster_path or self.ydata_path or self.outcome):
            raise ValidationError("no outcome source: give a raster, Ydata, or an outcome column in Zdata")
        if self.dvec is None:
            raise ValidationError("dVec is required")
        if not 0.0 < float(self.alpha) < 1.0:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.conley_se and not (self.cutoff is not None and float(self.cutoff) > 0):
            raise ValidationError("a positive cutoff is required for Conley standard errors")
        if int(self.nperms) < 1:
            raise ValidationError("nperms must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ValidationError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**doc)


def parse_dvec(spec) -> np.ndarray:
    """``"FROM:TO:BY"`` (inclusive, like R's ``seq``), a comma list, or a sequence."""
    if isinstance(spec, str):
        if ":" in spec:
            try:
                lo, hi, by = (float(p) for p in spec.split(":"))
            except ValueError:
                raise ValidationError(f"bad dVec {spec!r}; expected FROM:TO:BY") from None
            if not by > 0 or hi < lo:
                raise ValidationError(f"bad dVec {spec!r}")
            n = int(math.floor((hi - lo) / by + 1e-9)) + 1
            return np.round(lo + by * np.arange(n), 12)
        try:
            return np.array([float(p) for p in spec.split(",") if p.strip()])
        except ValueError:
            raise ValidationError(f"bad dVec {spec!r}") from None
    return np.asarray(spec, dtype=float)


@dataclass
class ResultTable:
    """Per-distance results plus run metadata."""

    columns: dict
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_curve(cls, curve: AmrCurve) -> "ResultTable":
        cols = dict(curve.columns())
        if curve.conley_se is not None:
            cols["Conley.SE"] = curve.conley_se
        return cls(cols, dict(curve.metadata))

    def __len__(self):
        return len(self.columns["dVec"])

    def to_csv(self, path) -> None:
        write_table_csv(self.columns, path)

    def to_json(self, path) -> None:
        dump_json({"schema": "spatialamr.result_table/1",
                   "column_order": list(self.columns),
                   "columns": self.columns,
                   "metadata": self.metadata}, path)

    @classmethod
    def from_csv(cls, path) -> "ResultTable":
        return cls(read_table_csv(path))

    @classmethod
    def from_json(cls, path) -> "ResultTable":
        doc = load_json(path)
        cols = {k: nan_array(doc["columns"][k]) for k in doc["column_order"]}
        return cls(cols, doc.get("metadata", {}))

    def subset(self, lo: float, hi: float) -> "ResultTable":
        d = self.columns["dVec"]
        eps = 1e-9 * max(abs(lo), abs(hi), 1.0)
        mask = (d >= lo - eps) & (d <= hi + eps)
        return ResultTable({k: np.asarray(v)[mask] for k, v in self.columns.items()},
                           self.metadata)


# --------------------------------------------------------------------------
# text output
# --------------------------------------------------------------------------

def _format_column(values, decimals: Optional[int]) -> list:
    vals = np.asarray(values, dtype=float)
    if decimals is None:
        # smallest decimal count that shows every distance exactly (R-style)
        finite = vals[np.isfinite(vals)]
        decimals = 0
        while decimals < 8 and np.any(np.abs(np.round(finite, decimals) - finite) > 1e-9):
            decimals += 1
    return ["NA" if math.isnan(v) else f"{v:.{decimals}f}" for v in vals]


def format_summary(table: ResultTable, d_range: Optional[tuple] = None, decimals: int = 3) -> str:
    """Matrix-style summary block, one row per distance, 3 decimals."""
    if d_range is not None:
        table = table.subset(*d_range)
    names = [c for c in SUMMARY_COLUMNS if c in table.columns]
    cells = {c: _format_column(table.columns[c], None if c == "dVec" else decimals) for c in names}
    n = len(table)
    labels = [f"[{k + 1},]" for k in range(n)]
    lw = max([len(s) for s in labels] + [0])
    widths = {c: max([len(c)] + [len(s) for s in cells[c]]) for c in names}
    lines = [" " * lw + " " + " ".join(c.rjust(widths[c]) for c in names)]
    for k in range(n):
        lines.append(labels[k].rjust(lw) + " " + " ".join(cells[c][k].rjust(widths[c]) for c in names))
    return "\n".join(lines) + "\n"


def format_cumulative_report(res: CumulativeTestResult) -> str:
    lo_q, hi_q = res.alpha / 2.0, 1.0 - res.alpha / 2.0
    decision = ("reject the sharp null hypothesis of no cumulative effect" if res.reject
                else "fail to reject the sharp null hypothesis of no cumulative effect")
    kind = "enumerated assignments" if res.exact else "permutations"
    text = (
        f"Cumulative effect on [{res.d_range[0]:g}, {res.d_range[1]:g}] "
        f"({res.n_distances} distances)\n"
        f"Observed cumulative effect: {res.cumulative_est:.3f}\n"
        f"{lo_q:g} and {hi_q:g} percentiles of the sharp null permutation distribution: "
        f"{res.null_lo:.3f} and {res.null_hi:.3f}\n"
        f"Permutation p-value: {res.p_value:.3f} ({res.nperms} {kind})\n"
        f"Decision at alpha = {res.alpha:g}: {decision}\n"
    )
    if res.reject != (res.p_value <= res.alpha):
        text += ("Note: the percentile rule and the p-value disagree; the decision above "
                 "follows the percentile rule.\n")
    return text


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------

@dataclass
class PipelineState:
    """What the cumulative test needs to re-run permutations without the raster."""

    iv: InterventionSet
    table: CircleAverageTable
    config: RunConfig
    metric: DistanceMetric

    def to_json(self, path) -> None:
        design = self.iv.design
        dump_json({
            "schema": "spatialamr.state/1",
            "coords": self.iv.coords,
            "z": self.iv.z,
            "design": ({"kind": "bernoulli", "p": design.p} if isinstance(design, Bernoulli)
                       else {"kind": "complete", "n1": design.n1}),
            "blocks": None if self.iv.blocks is None else [str(b) for b in self.iv.blocks],
            "dvec": self.table.dvec,
            "mu": self.table.mu,
            "n_eval": self.table.n_eval,
            "numpts": list(self.table.numpts),
            "config": dataclasses.asdict(self.config),
        }, path)

    @classmethod
    def from_json(cls, path) -> "PipelineState":
        doc = load_json(path)
        d = doc["design"]
        design = Bernoulli(d["p"]) if d["kind"] == "bernoulli" else Complete(d["n1"])
        blocks = None if doc["blocks"] is None else np.array(doc["blocks"])
        iv = InterventionSet(np.array(doc["coords"], dtype=float), np.array(doc["z"]), design,
                             blocks=blocks)
        table = CircleAverageTable(np.array(doc["dvec"], dtype=float), nan_array(doc["mu"]),
                                   np.array(doc["n_eval"]), tuple(doc["numpts"]))
        config = RunConfig.from_dict(doc["config"])
        return cls(iv, table, config, DistanceMetric.from_name(config.dist_metric))


def _kriging_cov(spec: str):
    if spec == "auto":
        return "auto"
    try:
        rng_, sill, nugget = (float(v) for v in spec.split(","))
    except ValueError:
        raise ValidationError(f"kriging must be 'auto' or 'RANGE,SILL,NUGGET', got {spec!r}") from None
    return ExponentialCovariance(rng_, sill, nugget)


def load_source(cfg: RunConfig, iv: InterventionSet, dvec: np.ndarray, metric: DistanceMetric):
    """Resolve the outcome source; returns ``(source, resolution, metadata)``."""
    if cfg.raster_path:
        grid = read_raster_ascii(cfg.raster_path)
        return grid, None, {"outcome_source": "raster", "raster_cell_size": grid.cell_size}
    if cfg.ydata_path:
        pts = read_outcome_column(cfg.ydata_path, cfg.x_coord_Y, cfg.y_coord_Y,
                                  cfg.outcome or "Y")
        model = fit_kriging(pts, _kriging_cov(cfg.kriging), metric)
        res = float(dvec.max()) / 100.0
        return model, res, {"outcome_source": "ydata-kriging", **_kriging_meta(model),
                            "default_numpts_resolution": res}
    pts = read_outcome_column(cfg.zdata_path, cfg.x_coord_Z, cfg.y_coord_Z, cfg.outcome)
    model = fit_kriging(pts, _kriging_cov(cfg.kriging), metric)
    pad, res = float(dvec.max()), float(dvec.max()) / 100.0
    if metric.kind == "geodesic":
        pad = math.degrees(pad / metric.radius)
        res = math.degrees(res / metric.radius)
    lo = iv.coords.min(axis=0) - pad
    hi = iv.coords.max(axis=0) + pad
    ncols = int(math.ceil((hi[0] - lo[0]) / res))
    nrows = int(math.ceil((hi[1] - lo[1]) / res))
    if ncols * nrows > 25_000_000:
        raise ValidationError(f"kriging grid of {ncols}x{nrows} cells is too large")
    grid = rasterize_kriging(model, tuple(lo), res, ncols, nrows)
    return grid, None, {"outcome_source": "zdata-kriging", **_kriging_meta(model),
                        "kriging_grid": {"origin": list(lo), "cell_size": res,
                                         "ncols": ncols, "nrows": nrows}}


def _kriging_meta(model: KrigingModel) -> dict:
    c = model.covariance
    return {"kriging": {"covariance": "exponential", "range": c.range, "sill": c.sill,
                        "nugget": c.nugget, "n_training": len(model.training),
                        "mean": model.mean}}


def run_pipeline(cfg: RunConfig, write: bool = True):
    """Run the full analysis; returns ``(ResultTable, PipelineState)``.

    Writes ``results.csv``, ``results.json``, ``plot.svg`` and ``state.json``
    to ``cfg.out_dir`` when ``write`` is set and an output directory is given.
    """
    cfg.validate()
    metric = DistanceMetric.from_name(cfg.dist_metric)
    design = parse_design(cfg.design) if cfg.design else None
    iv = read_zdata(cfg.zdata_path, cfg.x_coord_Z, cfg.y_coord_Z, cfg.treatment, design,
                    cfg.block_col)
    dvec = parse_dvec(cfg.dvec)
    source, resolution, source_meta = load_source(cfg, iv, dvec, metric)
    table = circle_average_table(source, iv.coords, dvec, cfg.numpts, cfg.only_unique, metric,
                                 resolution=resolution)
    curve = estimate_amr(iv, source, dvec, estimator=cfg.estimator, metric=metric,
                         only_unique=cfg.only_unique, table=table)
    if np.all(np.isnan(curve.amr_est)):
        raise EstimationError("no distance has observed circle averages in both arms")
    meta = {
        "package_version": __version__,
        "estimator": cfg.estimator,
        "alpha": float(cfg.alpha),
        "metric": metric.kind,
        "numpts": list(table.numpts),
        "only_unique": bool(cfg.only_unique),
        "design": dataclasses.asdict(iv.design) | {"kind": type(iv.design).__name__.lower()},
        "n_nodes": iv.n,
        "n_treated": iv.n1,
        **source_meta,
    }
    if "ht_zero_filled" in curve.metadata:
        meta["ht_zero_filled"] = curve.metadata["ht_zero_filled"]
    if cfg.conley_se:
        spec = KernelSpec(cfg.kernel, float(cfg.cutoff))
        cc = conley_curve(iv, table, spec, curve.amr_est, cfg.edf, float(cfg.alpha), metric)
        curve.conley_se, curve.conley_ci_lo, curve.conley_ci_hi = cc["se"], cc["ci_lo"], cc["ci_hi"]
        meta.update(cutoff=spec.cutoff, kernel=spec.kind, edf=bool(cfg.edf))
        if cfg.edf:
            meta["edf_nu"] = cc["edf_nu"]
    if cfg.per_se:
        perm = permutation_test(iv, table, nperms=int(cfg.nperms), alpha=float(cfg.alpha),
                                scheme=cfg.scheme, seed=int(cfg.seed), estimator=cfg.estimator)
        curve.per_ci_lo, curve.per_ci_hi = perm.null_lo, perm.null_hi
        meta.update(nperms=perm.nperms, seed=int(cfg.seed), scheme=perm.scheme,
                    permutation_exact=perm.exact, prng=PRNG_NAME)
    if cfg.smooth:
        curve = smooth_amr(curve, cfg.bandwidth)
        meta.update(smooth_bandwidth=curve.metadata["smooth_bandwidth"],
                    smooth_kernel="epanechnikov")
    curve.metadata = meta
    result = ResultTable.from_curve(curve)
    state = PipelineState(iv, table, cfg, metric)
    if write and cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.to_csv(out / "results.csv")
        result.to_json(out / "results.json")
        state.to_json(out / "state.json")
        if len(result) >= 2:
            emit_plot(result.columns, out / "plot.svg", distance_units="distance d",
                      outcome_units="AMR")
    return result, state


def run_cumulative_test(state: PipelineState, d_lo: float, d_hi: float) -> CumulativeTestResult:
    """Cumulative-effect test over ``[d_lo, d_hi]`` using the stored circle averages."""
    d = state.table.dvec
    if d_lo < d.min() - 1e-9 * abs(d.min()) or d_hi > d.max() + 1e-9 * abs(d.max()):
        raise ValidationError(f"range [{d_lo}, {d_hi}] lies outside dVec [{d.min()}, {d.max()}]")
    cfg = state.config
    return cumulative_effect_test(state.iv, state.table, (d_lo, d_hi), nperms=int(cfg.nperms),
                                  alpha=float(cfg.alpha), scheme=cfg.scheme, seed=int(cfg.seed),
                                  estimator=cfg.estimator)


# --------------------------------------------------------------------------
# bundled toy example
# --------------------------------------------------------------------------

TOY_BASELINE_SEED = 2020
TOY_ASSIGNMENT_SEED = 1


def toy_config(out_dir) -> RunConfig:
    out = Path(out_dir)
    return RunConfig(zdata_path=str(out / "zdata.csv"), raster_path=str(out / "raster.asc"),
                     dvec="0.1:2:0.1", cutoff=0.4, nperms=1000, smooth=True, seed=0,
                     out_dir=str(out))


def run_toy(out_dir):
    """Build the toy instance, write its inputs and run the pipeline on them.

    Returns ``(ResultTable, PipelineState, EnumeratedTruth)``.
    """
    from .oracle import make_toy_example, simulate_realization

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, truth = make_toy_example(TOY_BASELINE_SEED)
    # The realised experiment treats two of the four nodes.
    drawn = dataclasses.replace(model, design=Complete(2))
    iv, raster = simulate_realization(drawn, TOY_ASSIGNMENT_SEED)
    write_zdata(iv, out / "zdata.csv")
    write_raster_ascii(raster, out / "raster.asc")
    (out / "truth.json").write_text(truth.to_json() + "\n")
    result, state = run_pipeline(toy_config(out))
    return result, state, truth
