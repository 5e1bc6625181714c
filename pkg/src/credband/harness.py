"""Replication loops for coverage, rate and empirical-Bayes studies.

Every random draw comes from a stream derived from
``(master_seed, n index, rep index or cell tag, purpose)``, and results are
folded in (n, rep) order, so reports are identical for any worker count.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .credible import (
    CredibleSet,
    DEFAULT_DRAWS,
    credibility_check,
    distance_to_center,
    effective_support,
    l2_norm_samples,
    order_statistic_quantile,
    quantile_standard_error,
    sup_norm_samples,
)
from .fourier import GRID_CAP, Grid, default_grid_size, grid_bias_bound
from .inference import (
    PosteriorState,
    bracket_from_alphas,
    contraction_rate,
    empirical_bayes_alpha,
    posterior_update,
    posterior_variances,
)
from .sequence import (
    ALPHA_MAX,
    ALPHA_MIN,
    Direct,
    KappaSpec,
    ModelConfig,
    RandomStream,
    default_n_trunc,
    kappa_from_dict,
    parse_kappa,
    sample_data,
    truncation_tail_bound,
)
from .truths import PolyDecay, TruthSpec, generate_truth, parse_truth

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "n", "rep", "alpha_used", "gamma", "M", "norm_kind",
    "radius", "effective_radius", "error", "covered", "seed",
)
EB = "eb"
MIN_CLAIM_REPS = 30


@dataclass(frozen=True)
class ExperimentConfig:
    n_grid: tuple[float, ...] = (1e3, 1e4, 1e5)
    truth: TruthSpec = field(default_factory=lambda: TruthSpec(PolyDecay(1.0, 1.0)))
    prior_alpha: float | str = 1.0
    gamma: float = 0.5
    inflation_M: float = 3.0
    norm_kind: str = "sup"
    reps: int = 200
    draws: int = DEFAULT_DRAWS
    master_seed: int = 0
    kappa: KappaSpec = field(default_factory=Direct)
    grid_size: int | None = None
    max_grid_size: int = GRID_CAP
    n_trunc: int | None = None
    alpha_bounds: tuple[float, float] = (ALPHA_MIN, ALPHA_MAX)
    calib_draws: int = 10_000
    rate_band: float = 4.0
    alpha_lattice: float = 1e-3
    noiseless: bool = False

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(float(n) for n in self.n_grid))
        object.__setattr__(self, "alpha_bounds", tuple(float(a) for a in self.alpha_bounds))
        if not self.n_grid or any(not n > 1 for n in self.n_grid):
            raise ValueError("n_grid must be a nonempty list of values > 1")
        if self.prior_alpha != EB:
            a = float(self.prior_alpha)
            lo, hi = self.alpha_bounds
            if not lo <= a <= hi:
                raise ValueError(f"prior alpha {a} outside bounds {self.alpha_bounds}")
            object.__setattr__(self, "prior_alpha", a)
        if not 0 < self.gamma <= 0.5:
            raise ValueError("gamma must lie in (0, 0.5]")
        if self.inflation_M < 1:
            raise ValueError("inflation_M must be >= 1")
        if self.norm_kind not in ("l2", "sup"):
            raise ValueError("norm_kind must be 'l2' or 'sup'")
        if self.reps < 1 or self.draws < 1:
            raise ValueError("reps and draws must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    @property
    def empirical_bayes(self) -> bool:
        return self.prior_alpha == EB

    def model(self, n: float) -> ModelConfig:
        return ModelConfig(n, self.kappa, self.n_trunc or default_n_trunc(n))

    def truth_length(self) -> int:
        return max(self.model(n).n_trunc for n in self.n_grid)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["n_grid"] = list(self.n_grid)
        d["truth"] = self.truth.to_dict()
        d["kappa"] = self.kappa.to_dict()
        d["alpha_bounds"] = list(self.alpha_bounds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if isinstance(d.get("truth"), str):
            d["truth"] = parse_truth(d["truth"])
        elif isinstance(d.get("truth"), dict):
            d["truth"] = TruthSpec.from_dict(d["truth"])
        if isinstance(d.get("kappa"), str):
            d["kappa"] = parse_kappa(d["kappa"])
        elif isinstance(d.get("kappa"), dict):
            d["kappa"] = kappa_from_dict(d["kappa"])
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class CoverageReport:
    config: dict
    rows: list[dict] = field(default_factory=list)
    cells: list[dict] = field(default_factory=list)
    status: dict[str, bool] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.status.values())

    def coverage(self) -> list[float]:
        return [c["coverage_rate"] for c in self.cells]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "cells": self.cells,
            "status": self.status,
            "extra": self.extra,
            "rows": self.rows,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoverageReport":
        return cls(d["config"], d.get("rows", []), d.get("cells", []), d.get("status", {}), d.get("extra", {}))


# -- helpers -----------------------------------------------------------------


def _streams(cfg: ExperimentConfig) -> RandomStream:
    return RandomStream(cfg.master_seed)


def _pmap(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _grid_for(cfg: ExperimentConfig, alpha: float, model: ModelConfig) -> Grid:
    if cfg.grid_size is not None:
        return Grid(cfg.grid_size)
    return Grid(default_grid_size(alpha, model.n, model.n_trunc, cap=cfg.max_grid_size))


@dataclass(frozen=True)
class _Radius:
    radius: float
    se: float
    grid: Grid | None
    dropped_tail: float


def _radius(cfg, alpha, model, stream, workers) -> _Radius:
    v = posterior_variances(alpha, model)
    if cfg.norm_kind == "sup":
        grid = _grid_for(cfg, alpha, model)
        s = sup_norm_samples(v, grid, cfg.draws, stream, workers)
        dropped = effective_support(v)[1]
    else:
        grid = None
        s = l2_norm_samples(v, cfg.draws, stream, workers)
        dropped = 0.0
    p = 1 - cfg.gamma
    return _Radius(order_statistic_quantile(s, p), quantile_standard_error(s, p), grid, dropped)


def _snap(alpha: float, cfg: ExperimentConfig) -> float:
    lo, hi = cfg.alpha_bounds
    node = round(round(alpha / cfg.alpha_lattice) * cfg.alpha_lattice, 10)
    return min(max(node, lo), hi)


def _run_cell(cfg: ExperimentConfig, n_idx: int, n: float, truth, workers: int):
    master = _streams(cfg)
    model = cfg.model(n)
    radius_stream = master.child(n_idx, "cell", "radius")
    data_streams = [master.child(n_idx, rep, "data") for rep in range(cfg.reps)]

    def data(rep):
        if cfg.noiseless:
            return truth.padded(model.n_trunc) * model.kappas()
        return sample_data(truth, model, data_streams[rep]).coeffs

    Ys = _pmap(data, range(cfg.reps), workers)

    if cfg.empirical_bayes:
        alphas = _pmap(lambda y: empirical_bayes_alpha(y, model, cfg.alpha_bounds), Ys, workers)
    else:
        alphas = [cfg.prior_alpha] * cfg.reps
    nodes = sorted({_snap(a, cfg) for a in alphas}) if cfg.empirical_bayes else [cfg.prior_alpha]

    # write-once cache: one radius per alpha node, common random numbers across nodes
    cache = {a: _radius(cfg, a, model, radius_stream, workers) for a in nodes}

    def rep_record(rep):
        a = alphas[rep]
        rad = cache[_snap(a, cfg) if cfg.empirical_bayes else a]
        state = posterior_update(Ys[rep], a, model)
        cs = CredibleSet(
            center=state.means,
            radius=rad.radius,
            norm_kind=cfg.norm_kind,
            credibility=1 - cfg.gamma,
            inflation=cfg.inflation_M,
            grid=rad.grid,
        )
        err = distance_to_center(cs, truth)
        return {
            "n": n,
            "rep": rep,
            "alpha_used": a,
            "gamma": cfg.gamma,
            "M": cfg.inflation_M,
            "norm_kind": cfg.norm_kind,
            "radius": rad.radius,
            "effective_radius": cs.effective_radius,
            "error": err,
            "covered": int(err <= cs.effective_radius),
            "seed": data_streams[rep].stream_id,
        }

    rows = _pmap(rep_record, range(cfg.reps), workers)

    # harness self-check at the prior alpha (or the node of the lower-median alpha-hat)
    a_chk = nodes[0] if not cfg.empirical_bayes else _snap(sorted(alphas)[(cfg.reps - 1) // 2], cfg)
    rad = cache[a_chk]
    state0 = PosteriorState(
        np.zeros(model.n_trunc), posterior_variances(a_chk, model), a_chk, n, model.kappa
    )
    cs0 = CredibleSet(np.zeros(model.n_trunc), rad.radius, cfg.norm_kind, 1 - cfg.gamma, 1.0, rad.grid)
    calib = credibility_check(
        cs0, state0, cfg.calib_draws, master.child(n_idx, "cell", "calibration"), cfg.draws
    )
    calib["alpha"] = a_chk

    covered = [r["covered"] for r in rows]
    radii = np.array([r["radius"] for r in rows])
    errs = np.array([r["error"] for r in rows])
    rate_ratio = float(np.mean([r["radius"] / contraction_rate(r["alpha_used"], n) for r in rows]))
    a_ref = float(np.median(alphas)) if cfg.empirical_bayes else cfg.prior_alpha
    cell = {
        "n": n,
        "n_trunc": model.n_trunc,
        "grid_size": cache[a_chk].grid.size if cache[a_chk].grid else None,
        "reps": cfg.reps,
        "coverage_rate": sum(covered) / len(covered),
        "mean_radius": float(np.mean(radii)),
        "mean_effective_radius": float(np.mean(radii)) * cfg.inflation_M,
        "mean_error": float(np.mean(errs)),
        "rate_ratio": rate_ratio,
        "radius_se": cache[a_chk].se,
        "calibration": calib,
        "grid_bias_bound": (
            grid_bias_bound(a_ref, n, cache[a_chk].grid.size, model.n_trunc)
            if cache[a_chk].grid else None
        ),
        "truncation_tail_bound": truncation_tail_bound(a_ref, model.n_trunc),
        "dropped_tail_bound": cache[a_chk].dropped_tail,
    }
    if cfg.empirical_bayes:
        q = np.quantile(alphas, [0.025, 0.25, 0.5, 0.75, 0.975])
        cell["alpha_hat"] = dict(zip(("q025", "q25", "q50", "q75", "q975"), map(float, q)))
        cell["alpha_nodes"] = len(nodes)
    return rows, cell, alphas, cache


def _check_pre(cfg: ExperimentConfig):
    if cfg.norm_kind == "sup" and cfg.grid_size is not None and cfg.grid_size < 2:
        raise ValueError("grid_size must be >= 2")


def _meta(cfg: ExperimentConfig) -> dict:
    return {
        "radius_quantile": "ceil((1-gamma)*draws)-th order statistic",
        "eb_likelihood_window": "all i <= n_trunc",
        "alpha_bounds": list(cfg.alpha_bounds),
        "alpha_lattice": cfg.alpha_lattice if cfg.empirical_bayes else None,
        "truth_length": cfg.truth_length(),
        # fewer than 30 replications is a smoke run, not a coverage claim
        "coverage_claim": cfg.reps >= MIN_CLAIM_REPS,
    }


def _run(cfg: ExperimentConfig, workers: int):
    _check_pre(cfg)
    truth = generate_truth(cfg.truth.with_length(cfg.truth_length()))
    report = CoverageReport(config=cfg.to_dict(), extra={"meta": _meta(cfg)})
    per_n = []
    for n_idx, n in enumerate(cfg.n_grid):
        log.info("cell n=%g (%d/%d)", n, n_idx + 1, len(cfg.n_grid))
        rows, cell, alphas, cache = _run_cell(cfg, n_idx, n, truth, workers)
        report.rows.extend(rows)
        report.cells.append(cell)
        per_n.append((alphas, cache))
    report.status["calibration"] = all(c["calibration"]["ok"] for c in report.cells)
    return report, per_n


# -- studies -----------------------------------------------------------------


def run_coverage(cfg: ExperimentConfig, workers: int = 1) -> CoverageReport:
    """Coverage of the inflated credible set for a fixed truth over the n grid."""
    return _run(cfg, workers)[0]


def rate_table(report: CoverageReport) -> list[dict]:
    return [
        {k: c[k] for k in ("n", "mean_radius", "rate_ratio", "mean_error")}
        for c in report.cells
    ]


def run_rate_study(cfg: ExperimentConfig, workers: int = 1) -> CoverageReport:
    """Radius against ``n**(-a/(2a+1)) sqrt(log n)`` over the n grid.

    Fails (status) when the ratio's max/min exceeds ``cfg.rate_band`` or the
    radii are not strictly decreasing; the data are kept either way.
    """
    ns = sorted(cfg.n_grid)
    if len(ns) < 3 or math.log10(ns[-1] / ns[0]) < 2 - 1e-9:
        raise ValueError("rate study needs >= 3 n values spanning >= 2 decades")
    report = run_coverage(cfg, workers)
    table = rate_table(report)
    ratios = [t["rate_ratio"] for t in table]
    radii = [t["mean_radius"] for t in sorted(table, key=lambda t: t["n"])]
    spread = max(ratios) / min(ratios)
    report.extra["rate_table"] = table
    report.extra["rate_ratio_spread"] = spread
    report.status["rate_band"] = spread <= cfg.rate_band
    report.status["radii_decreasing"] = all(b < a for a, b in zip(radii, radii[1:]))
    return report


def cox_freedman_checks(over: CoverageReport, under: CoverageReport, gamma: float) -> dict:
    """Qualitative conclusions: oversmoothed coverage collapses, undersmoothed holds."""
    oc, uc = over.coverage(), under.coverage()
    return {
        "oversmooth_decreases": oc[-1] < oc[0],
        "oversmooth_below_credibility": oc[-1] < 1 - gamma,
        "undersmooth_holds": all(c >= 1 - gamma for c in uc),
    }


@dataclass
class CoxFreedmanResult:
    over: CoverageReport
    under: CoverageReport
    status: dict[str, bool]

    @property
    def ok(self) -> bool:
        return all(self.status.values())

    def to_report(self) -> CoverageReport:
        """Both arms in one report; ``alpha_used`` tells the arms apart."""
        return CoverageReport(
            config={"oversmooth": self.over.config, "undersmooth": self.under.config},
            rows=self.over.rows + self.under.rows,
            cells=[dict(c, arm="oversmooth") for c in self.over.cells]
            + [dict(c, arm="undersmooth") for c in self.under.cells],
            status=dict(self.status),
        )


def run_cox_freedman_demo(
    cfg: ExperimentConfig, under_alpha: float = ALPHA_MIN, workers: int = 1
) -> CoxFreedmanResult:
    """Oversmoothing (``cfg.prior_alpha`` above the truth's smoothness) against
    undersmoothing (``under_alpha`` below it), both with M = 1.
    """
    t_alpha = cfg.truth.alpha
    if cfg.empirical_bayes or t_alpha is None or not cfg.prior_alpha > t_alpha:
        raise ValueError("need a fixed prior alpha above the truth's smoothness")
    if not under_alpha < t_alpha:
        raise ValueError("undersmoothing alpha must lie below the truth's smoothness")
    over = run_coverage(replace(cfg, inflation_M=1.0), workers)
    under = run_coverage(replace(cfg, inflation_M=1.0, prior_alpha=under_alpha), workers)
    status = cox_freedman_checks(over, under, cfg.gamma)
    return CoxFreedmanResult(over, under, status)


def run_eb_study(cfg: ExperimentConfig, workers: int = 1) -> CoverageReport:
    """Plug-in empirical-Bayes sets: alpha-hat spread, radius order, coverage.

    Coverage is reported, not asserted.  The status carries the radius-order
    band ``radius(alpha_hat) / eps(n, alpha_hat)`` across n.
    """
    if not cfg.empirical_bayes:
        cfg = replace(cfg, prior_alpha=EB)
    report, per_n = _run(cfg, workers)
    t_alpha = cfg.truth.alpha
    brackets = []
    for n_idx, (cell, (alphas, cache)) in enumerate(zip(report.cells, per_n)):
        b = bracket_from_alphas(alphas)
        entry = {
            "n": cell["n"],
            "alpha_lo": b.alpha_lo,
            "alpha_hi": b.alpha_hi,
            "iqr": b.iqr(),
            "eps_ratio": contraction_rate(b.alpha_lo, cell["n"]) / contraction_rate(b.alpha_hi, cell["n"]),
        }
        if t_alpha is not None and cfg.alpha_bounds[0] <= t_alpha <= cfg.alpha_bounds[1]:
            # radius at the true alpha on the same stream as the plug-in radii
            model = cfg.model(cell["n"])
            stream = _streams(cfg).child(n_idx, "cell", "radius")
            fixed = _radius(cfg, t_alpha, model, stream, workers).radius
            plug = [cache[_snap(a, cfg)].radius for a in alphas]
            ratios = [p / fixed for p in plug]
            entry["fixed_alpha_radius"] = fixed
            entry["plugin_radius_ratio_max"] = float(max(max(ratios), 1 / min(ratios)))
            entry["plugin_radius_ratio_median"] = float(np.median(ratios))
        brackets.append(entry)
    ratios = [c["rate_ratio"] for c in report.cells]
    report.extra["eb_brackets"] = brackets
    report.extra["rate_ratio_spread"] = max(ratios) / min(ratios)
    report.status["rate_band"] = report.extra["rate_ratio_spread"] <= cfg.rate_band
    return report


# -- output ------------------------------------------------------------------


def _csv_value(v):
    if isinstance(v, float):
        return repr(v)
    return v


def emit_report(report: CoverageReport, path: str | Path, fmt: str = "csv") -> None:
    """Write per-rep rows as CSV, or the whole report as JSON."""
    path = Path(path)
    fmt = fmt.lower()
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown report format {fmt!r}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if fmt == "csv":
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_COLUMNS)
                for r in report.rows:
                    w.writerow([_csv_value(r[c]) for c in CSV_COLUMNS])
            else:
                json.dump(report.to_dict(), fh, indent=2, allow_nan=True)
                fh.write("\n")
    except OSError as e:
        raise OSError(f"could not write report to {path}: {e}") from e


def load_report(path: str | Path) -> CoverageReport:
    with open(path, encoding="utf-8") as fh:
        return CoverageReport.from_dict(json.load(fh))
