"""Command line front end: ``simulate``, ``fit``, ``study`` and ``extcoef``.

Exit codes: 0 success, 1 configuration error, 2 numerical nonconvergence,
3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .estimate import FitOptions, SubsampleConfig, fit
from .mcstudy import StudyConfig, extremal_profile, run_study, write_figure_data, write_summary
from .model import ParameterDomainError, SmithParams
from .simulate import Dataset, SimConfig, regular_grid, simulate_dataset, to_gumbel

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_IO = 0, 1, 2, 3

logger = logging.getLogger("smithcl")


class ConfigError(Exception):
    pass


def _now():
    return datetime.now(timezone.utc).isoformat()


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise OSError(f"cannot read config {path}: {err}") from err
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from err
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}:1:1: top level must be a JSON object")
    return cfg


def write_manifest(path, command, config, seed, outputs, started):
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": [str(p) for p in outputs],
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))


def _sites_from(cfg: dict) -> np.ndarray:
    if "sites" in cfg:
        return np.asarray(cfg["sites"], dtype=float)
    grid = cfg.get("grid")
    if not grid or "n" not in grid or "k" not in grid:
        raise ConfigError("config needs 'sites' or 'grid': {'n': ..., 'k': ...}")
    return regular_grid(int(grid["n"]), float(grid["k"]))


def _sigma_from(cfg: dict) -> SmithParams:
    s = cfg.get("sigma", [200.0, 300.0, 150.0])
    if len(s) != 3:
        raise ConfigError("'sigma' must be [sigma11, sigma22, sigma12]")
    return SmithParams(*map(float, s))


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    started = _now()
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if "seed" not in cfg:
        raise ConfigError("missing required key 'seed'")
    sim = SimConfig(
        sites=_sites_from(cfg),
        params=_sigma_from(cfg),
        years=int(cfg.get("years", 40)),
        days_per_year=int(cfg.get("days_per_year", 91)),
        seed=int(cfg["seed"]),
        buffer_radius=cfg.get("buffer_radius"),
        stop_tolerance=float(cfg.get("stop_tolerance", 1e-6)),
    )
    ds = simulate_dataset(sim)
    out = Path(args.out or "dataset.csv")
    ds.to_csv(out)
    resolved = {**cfg, "buffer_radius": sim.buffer_radius, "stop_tolerance": sim.stop_tolerance}
    write_manifest(out.with_name(out.name + ".manifest.json"), "simulate", resolved,
                   sim.seed, [out, out.with_name(out.name + ".json")], started)
    return EXIT_OK


def cmd_fit(args) -> int:
    started = _now()
    cfg = load_config(args.config)
    opts_cfg = cfg.get("options", {})
    ds = Dataset.from_csv(args.dataset)
    if ds.scale == "raw":
        raise ConfigError(
            "dataset is on the raw scale; the estimators expect Gumbel margins. "
            "Transform the data to unit Frechet (or Gumbel) margins first and set "
            "'scale' in the sidecar."
        )
    if ds.scale == "frechet":
        ds = to_gumbel(ds)
    method = (args.method or cfg.get("method", "RT")).upper()
    sub = SubsampleConfig(int(args.window or opts_cfg.get("window_length", 91)),
                          int(args.stride or opts_cfg.get("stride", 30)))
    opts = FitOptions(
        threshold_quantile=float(args.threshold_quantile or opts_cfg.get("threshold_quantile", 0.98)),
        weights_quantile=float(args.weights_quantile or opts_cfg.get("weights_quantile", 0.25)),
        two_step=not args.joint_lt and opts_cfg.get("two_step", True),
        known_margins=args.known_margins or opts_cfg.get("known_margins", False),
        maxiter=int(opts_cfg.get("maxiter", 5000)),
        standard_errors=not args.no_se,
        subsample=sub,
    )
    res = fit(ds, method, opts)
    report = res.to_dict()
    report["dataset"] = str(args.dataset)
    report["options"] = {"method": method, "threshold_quantile": opts.threshold_quantile,
                         "weights_quantile": opts.weights_quantile, "two_step": opts.two_step,
                         "window_length": sub.window_length, "stride": sub.stride}
    report["seed"] = ds.meta.get("seed")
    truth = ds.meta.get("truth")
    if truth:
        report["truth"] = truth
        report["delta"] = {k: report["theta_hat"][k] - v for k, v in truth.items()
                           if k in report["theta_hat"]}
    text = json.dumps(report, indent=2, default=float)
    if args.out:
        Path(args.out).write_text(text)
        write_manifest(Path(args.out).with_name(Path(args.out).name + ".manifest.json"),
                       "fit", report["options"], report["seed"], [args.out], started)
    else:
        print(text)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_study(args) -> int:
    started = _now()
    cfg_dict = load_config(args.config)
    if args.seed is not None:
        cfg_dict["master_seed"] = args.seed
    try:
        cfg = StudyConfig.from_dict(cfg_dict)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err
    out = Path(args.out or "study")
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        old = dict(json.loads(manifest_path.read_text()).get("config", {}))
        new = json.loads(json.dumps(cfg.to_dict(), default=list))
        # the replication count may grow between runs; everything else must match
        old.pop("replications", None)
        new.pop("replications", None)
        if old != new:
            raise ConfigError(f"{out} holds results of a different configuration")
    summaries = run_study(cfg, out, threads=args.threads or 1)
    write_summary(summaries, out / "summary.csv")
    write_figure_data(cfg, out, out / "figure_data.csv")
    outputs = sorted(out.glob("*.csv"))
    write_manifest(manifest_path, "study", cfg.to_dict(), cfg.master_seed, outputs, started)
    return EXIT_OK


def cmd_extcoef(args) -> int:
    cfg = load_config(args.config)
    if args.n is not None:
        cfg["grid"] = {"n": args.n, "k": args.k}
    prof = extremal_profile(_sites_from(cfg), _sigma_from(cfg))
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["distance", "v", "q25", "q50"])
        for d, v in zip(prof["distance"], prof["v"]):
            w.writerow([f"{d:.17g}", f"{v:.17g}", f"{prof['q25']:.17g}", f"{prof['q50']:.17g}"])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smithcl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out")

    p = sub.add_parser("simulate", help="simulate a dataset")
    shared(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one dataset")
    shared(p)
    p.add_argument("dataset")
    p.add_argument("--method", type=str.upper, choices=["RT", "LT", "PRS"])
    p.add_argument("--weights-quantile", type=float)
    p.add_argument("--threshold-quantile", type=float)
    p.add_argument("--window", type=int, help="subsampling window length in days")
    p.add_argument("--stride", type=int, help="subsampling stride in days")
    p.add_argument("--joint-lt", action="store_true", help="fit LT margins jointly")
    p.add_argument("--known-margins", action="store_true",
                   help="treat the Gumbel margins as known instead of estimating them")
    p.add_argument("--no-se", action="store_true", help="skip sandwich standard errors")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("study", help="run a Monte Carlo study")
    shared(p)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("extcoef", help="extremal coefficient profile of a grid")
    shared(p)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=float, default=1.0)
    p.set_defaults(func=cmd_extcoef)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is None:
        args.threads = os.cpu_count() or 1
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParameterDomainError, ValueError, KeyError, TypeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
