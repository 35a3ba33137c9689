"""Monte Carlo comparison of the RT, LT and PRS estimators."""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .estimate import FitOptions, fit_two_step_lt, maximize_cl
from .margins import empirical_quantile
from .model import SmithParams, extremal_coefficient
from .pairlik import make_weights, pairwise_distances
from .simulate import SimConfig, regular_grid, simulate_dataset, to_gumbel

logger = logging.getLogger(__name__)

TRUTH = SmithParams(200.0, 300.0, 150.0)
PARAMS = ("sigma11", "sigma22", "sigma12")
CELL_COLUMNS = ("replication", "method", "sigma11", "sigma22", "sigma12",
                "sigma_u", "xi", "converged", "seconds")
SUMMARY_COLUMNS = ("n", "k", "threshold", "weights", "method", "parameter", "truth",
                   "mean", "sd", "rmse", "bias", "replications", "failures")


@dataclass
class StudyConfig:
    grid_sides: list = field(default_factory=lambda: [7])
    lags: list = field(default_factory=lambda: [1, 5, 10])
    replications: int = 500
    years: int = 40
    days_per_year: int = 91
    threshold_levels: list = field(default_factory=lambda: [0.98])
    weight_levels: list = field(default_factory=lambda: [0.25, 0.50, 1.00])
    methods: list = field(default_factory=lambda: ["RT", "LT", "PRS"])
    master_seed: int = 20130101
    truth: tuple = TRUTH.as_tuple()
    two_step: bool = True
    rt_fix_xi_zero: bool = True
    known_margins: list = field(default_factory=lambda: ["RT", "PRS"])
    stop_tolerance: float = 1e-6

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        for lv in list(self.threshold_levels) + list(self.weight_levels):
            if not 0 < lv <= 1:
                raise ValueError(f"level {lv} outside (0, 1]")
        self.methods = [m.upper() for m in self.methods]
        bad = set(self.methods) - {"RT", "LT", "PRS"}
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        self.truth = tuple(float(x) for x in self.truth)
        self.known_margins = [m.upper() for m in self.known_margins]
        bad = set(self.known_margins) - {"RT", "LT", "PRS"}
        if bad:
            raise ValueError(f"unknown methods in known_margins {sorted(bad)}")

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown study config keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def cells(self):
        """Design cells ``(n, k, threshold, weights, method)``; PRS has no threshold."""
        out = []
        for n in self.grid_sides:
            for k in self.lags:
                for a in self.weight_levels:
                    for m in self.methods:
                        levels = [None] if m == "PRS" else self.threshold_levels
                        out.extend((n, k, q, a, m) for q in levels)
        return out


@dataclass
class CellSummary:
    names: tuple
    truth: np.ndarray
    mean: np.ndarray
    sd: np.ndarray | None
    rmse: np.ndarray
    bias: np.ndarray
    replications: int
    failures: int = 0
    cell: tuple | None = None


def summarize(estimates, truth, failures: int = 0, names=PARAMS, cell=None) -> CellSummary:
    """Mean, sample SD, bias and RMSE about ``truth`` of an R x dim matrix.

    RMSE uses the population mean square, so RMSE^2 = bias^2 + SD^2 (R-1)/R.
    ``sd`` is ``None`` when R = 1.
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    truth = np.asarray(truth, dtype=float)
    r = est.shape[0]
    if r == 0:
        nan = np.full(truth.shape, np.nan)
        return CellSummary(tuple(names), truth, nan, None, nan, nan, 0, failures, cell)
    mean = est.mean(axis=0)
    sd = est.std(axis=0, ddof=1) if r > 1 else None
    rmse = np.sqrt(np.mean((est - truth) ** 2, axis=0))
    return CellSummary(tuple(names), truth, mean, sd, rmse, mean - truth, r, failures, cell)


def extremal_profile(sites, params: SmithParams) -> dict:
    """Extremal coefficient at every inter-site lag, sorted by distance.

    Returns a dict with ``distance``, ``v`` arrays and the 0.25 / 0.50 distance
    quantiles used as weight cut-offs.
    """
    sites = np.asarray(sites, dtype=float)
    i, j = np.triu_indices(sites.shape[0], k=1)
    h = sites[i] - sites[j]
    d = np.hypot(h[:, 0], h[:, 1])
    v = np.atleast_1d(extremal_coefficient(h, params))
    order = np.argsort(d, kind="stable")
    dists = pairwise_distances(sites)
    return {
        "distance": d[order],
        "v": v[order],
        "q25": empirical_quantile(dists, 0.25),
        "q50": empirical_quantile(dists, 0.50),
    }


def replication_seed(master_seed: int, n: int, k, rep: int) -> int:
    """Seed of one replication, independent of which cells are run."""
    kk = int(round(float(k) * 1000))
    ss = np.random.SeedSequence([int(master_seed), int(n), kk, int(rep)])
    return int(ss.generate_state(1, np.uint64)[0])


def cell_name(cell) -> str:
    n, k, q, a, m = cell
    qs = "na" if q is None else f"{q:g}"
    return f"n{n}_k{k:g}_u{qs}_w{a:g}_{m}"


def simulate_replication(cfg: StudyConfig, n: int, k, rep: int):
    seed = replication_seed(cfg.master_seed, n, k, rep)
    sim = SimConfig(regular_grid(n, k), SmithParams(*cfg.truth), cfg.years,
                    cfg.days_per_year, seed, stop_tolerance=cfg.stop_tolerance)
    return to_gumbel(simulate_dataset(sim))


def fit_cell(ds, cfg: StudyConfig, cell) -> dict:
    """Fit one design cell on one dataset; failures are returned, not raised."""
    _, _, q, a, m = cell
    opts = FitOptions(threshold_quantile=q or 0.98, weights_quantile=a,
                      two_step=cfg.two_step, rt_fix_xi_zero=cfg.rt_fix_xi_zero,
                      known_margins=m in cfg.known_margins)
    t0 = time.perf_counter()
    row = {"method": m, "sigma_u": "", "xi": "", "converged": False}
    try:
        ws = make_weights(ds.sites, a)
        if m == "LT" and cfg.two_step and not opts.known_margins:
            res = fit_two_step_lt(ds, ws, opts)
        else:
            res = maximize_cl(ds, ws, m, options=opts)
    except Exception as err:  # noqa: BLE001 - failures are data here
        logger.warning("%s failed: %s", cell_name(cell), err)
        row.update({p: float("nan") for p in PARAMS})
    else:
        p = res.params
        if m == "LT" and "marginal_fit" in res.extras:
            p = {**p, **res.extras["marginal_fit"]}
        row.update({name: p[name] for name in PARAMS})
        row["sigma_u"] = p.get("sigma_u", "")
        row["xi"] = p.get("xi", "")
        row["converged"] = res.converged
    row["seconds"] = time.perf_counter() - t0
    return row


def _run_replication(args):
    cfg, n, k, rep, cells = args
    ds = simulate_replication(cfg, n, k, rep)
    return rep, [(cell, fit_cell(ds, cfg, cell)) for cell in cells]


def _fmt(x):
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _read_cell(path: Path) -> dict:
    if not path.exists():
        return {}
    with path.open() as fh:
        return {int(r["replication"]): r for r in csv.DictReader(fh)}


def _append_row(path: Path, rep: int, row: dict):
    new = not path.exists()
    with path.open("a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(CELL_COLUMNS)
        w.writerow([_fmt(rep)] + [_fmt(row[c]) for c in CELL_COLUMNS[1:]])


def _row_ok(r: dict) -> bool:
    return str(r["converged"]) == "True" and all(
        np.isfinite(float(r[p])) for p in PARAMS)


def run_study(cfg: StudyConfig, out_dir=None, threads: int = 1) -> list[CellSummary]:
    """Run every design cell for ``cfg.replications`` replications.

    With ``out_dir`` each cell's rows are appended to ``<cell>.csv`` as they are
    produced and already present replications are skipped on a rerun.  One
    dataset per (grid, lag, replication) is shared by all cells.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    results = {cell: {} for cell in cfg.cells()}
    if out is not None:
        for cell in results:
            results[cell] = _read_cell(out / f"{cell_name(cell)}.csv")
    groups = {}
    for cell in results:
        groups.setdefault((cell[0], cell[1]), []).append(cell)
    for (n, k), cells in groups.items():
        jobs = []
        for rep in range(cfg.replications):
            todo = [c for c in cells if rep not in results[c]]
            if todo:
                jobs.append((cfg, n, k, rep, todo))
        if not jobs:
            continue
        logger.info("grid n=%d k=%g: %d replications to run", n, k, len(jobs))
        if threads > 1:
            with ProcessPoolExecutor(threads) as pool:
                done = pool.map(_run_replication, jobs)
                _collect(done, results, out)
        else:
            _collect(map(_run_replication, jobs), results, out)
    return [_summarize_cell(cfg, cell, rows) for cell, rows in results.items()]


def _collect(done, results, out):
    for rep, pairs in done:
        for cell, row in pairs:
            row = {k: _fmt(v) for k, v in row.items()}
            results[cell][rep] = {"replication": str(rep), **row}
            if out is not None:
                _append_row(out / f"{cell_name(cell)}.csv", rep, row)


def _summarize_cell(cfg, cell, rows: dict) -> CellSummary:
    reps = [rows[r] for r in sorted(rows) if r < cfg.replications]
    good = [r for r in reps if _row_ok(r)]
    est = np.array([[float(r[p]) for p in PARAMS] for r in good]).reshape(-1, len(PARAMS))
    return summarize(est, cfg.truth, failures=len(reps) - len(good), cell=cell)


def write_summary(summaries, path) -> None:
    """One row per cell and parameter, the layout of the reference tables."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            n, k, q, a, m = s.cell
            for idx, name in enumerate(s.names):
                sd = "" if s.sd is None else _fmt(s.sd[idx])
                w.writerow([n, _fmt(k), "" if q is None else _fmt(q), _fmt(a), m, name,
                            _fmt(s.truth[idx]), _fmt(s.mean[idx]), sd, _fmt(s.rmse[idx]),
                            _fmt(s.bias[idx]), s.replications, s.failures])


def write_figure_data(cfg: StudyConfig, out_dir, path) -> None:
    """Tidy (method, delta level, lag, parameter, estimate) rows for box plots."""
    out_dir = Path(out_dir)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "lag", "threshold", "delta_level", "method", "replication",
                    "parameter", "estimate"])
        for cell in cfg.cells():
            n, k, q, a, m = cell
            rows = _read_cell(out_dir / f"{cell_name(cell)}.csv")
            for rep in sorted(rows):
                if rep >= cfg.replications or not _row_ok(rows[rep]):
                    continue
                for p in PARAMS:
                    w.writerow([n, _fmt(k), "" if q is None else _fmt(q), _fmt(a), m, rep, p,
                                rows[rep][p]])


def load_summaries(cfg: StudyConfig, out_dir) -> list[CellSummary]:
    """Summaries from cell CSVs already on disk (no fitting)."""
    out_dir = Path(out_dir)
    return [_summarize_cell(cfg, cell, _read_cell(out_dir / f"{cell_name(cell)}.csv"))
            for cell in cfg.cells()]


__all__ = [
    "CellSummary",
    "StudyConfig",
    "extremal_profile",
    "load_summaries",
    "run_study",
    "summarize",
    "write_figure_data",
    "write_summary",
]
