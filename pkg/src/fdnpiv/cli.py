"""Command-line entry point: ``fdnpiv fit | simulate | ftest``.

Settings come from an optional key = value config file (``--config``) and
are overridden by flags. Every output file of a run is staged in a
temporary directory and moved into ``--out`` only when all stages succeed.

Config keys
-----------
input, out, seed, delta, knots, degree, penalty_order, draws, burnin, thin,
desk_profile, truncation, site, detectors, window (``HH:MM-HH:MM`` or slot
range ``a-b``), workdays_only, date_start, date_end, holidays, half_window,
lag_days, bins, drop_window, density_floor, cell_width, n, error_var,
estimators, appendix_a, mc_profile.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as dt
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import CELL_WIDTH, DENSITY_FLOOR, DROP_WINDOW, capacity_report
from .baselines import PolySpec, bins_from_edges, fit_pols, weak_instrument_ftest
from .ingest import SLOTS_PER_DAY, SiteConfig, build_lagged_instrument, parse_slot, read_detector_csv
from .npiv import McmcConfig, SplinePriors, fit_np, fit_npiv
from .simulation import (ESTIMATORS, SimConfig, ovb_demo, reverse_causality_demo,
                         run_mc_comparison)
from .splines import make_knots
from .summary import error_density_grid, simultaneous_band, write_band_csv, write_density_csv

log = logging.getLogger("fdnpiv")

SCHEMA_VERSION = 1


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {type(exc).__name__}: {exc}")
        self.stage = stage


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage: %s", self.name)

    def __exit__(self, etype, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc


def read_config(path) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    text = Path(path).read_text(encoding="utf-8")
    parser.read_string("[run]\n" + text)
    return {k.replace("-", "_"): v for k, v in parser["run"].items()}


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def _list(v) -> list:
    if isinstance(v, (list, tuple)):
        return list(v)
    return [s.strip() for s in str(v).split(",") if s.strip()]


def _window(text) -> tuple:
    a, b = str(text).split("-")
    if ":" in a:
        lo = parse_slot(a)
        hi = SLOTS_PER_DAY - 1 if b.strip() in ("24:00", "24:0") else parse_slot(b) - 1
        return lo, hi
    return int(a), int(b)


def _settings(args) -> dict:
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    for key, value in vars(args).items():
        if key in ("config", "command", "func", "verbose") or value is None:
            continue
        if value is False and key in cfg:
            continue
        cfg[key] = value
    return cfg


def _mcmc(s) -> McmcConfig:
    base = McmcConfig.desk() if _bool(s.get("desk_profile", False)) else McmcConfig.full()
    return McmcConfig(
        int(s.get("draws", base.total)), int(s.get("burnin", base.burnin)),
        int(s.get("thin", base.thin)), int(s.get("seed", 0)), float(s.get("delta", 0.05)),
    )


def _site(s) -> SiteConfig:
    rng = None
    if "date_start" in s or "date_end" in s:
        rng = (dt.date.fromisoformat(s.get("date_start", "1900-01-01")),
               dt.date.fromisoformat(s.get("date_end", "2999-12-31")))
    return SiteConfig(
        name=s.get("site", "site"),
        detectors=tuple(_list(s.get("detectors", ""))),
        window=_window(s.get("window", "12:00-24:00")),
        workdays_only=_bool(s.get("workdays_only", True)),
        date_range=rng,
        holidays=frozenset(dt.date.fromisoformat(d) for d in _list(s.get("holidays", ""))),
    )


def _bins(s):
    if "bins" not in s:
        return bins_from_edges([15.0])
    return bins_from_edges([float(b) for b in _list(s["bins"])])


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


class _Outputs:
    """Stage files in a temp dir; publish with atomic renames on success."""

    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".fdnpiv-", dir=self.out))

    def path(self, name) -> Path:
        return self.tmp / name

    def __enter__(self):
        return self

    def __exit__(self, etype, exc, tb):
        try:
            if exc is None:
                for f in sorted(self.tmp.iterdir()):
                    os.replace(f, self.out / f.name)
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)


def _load_sample(s):
    path = s.get("input")
    if not path:
        raise ValueError("no --input given")
    records, summary = read_detector_csv(path)
    sample = build_lagged_instrument(records, _site(s), int(s.get("half_window", 15)),
                                     int(s.get("lag_days", 1)))
    return sample, summary


def cmd_fit(s) -> dict:
    mc = _mcmc(s)
    with _Outputs(s.get("out", ".")) as out:
        with _Stage("ingest"):
            sample, read_summary = _load_sample(s)
        n_knots = int(s.get("knots", 20))
        degree = int(s.get("degree", 3))
        sp = SplinePriors(penalty_order=int(s.get("penalty_order", 2)))
        with _Stage("knots"):
            kv_s = make_knots(sample.o, n_knots, degree)
            kv_h = make_knots(sample.z, n_knots, degree)
        h = int(s.get("truncation", 25))
        with _Stage("fit_npiv"):
            npiv = fit_npiv(sample, (kv_s, kv_h), sp, cfg=mc, truncation=h)
        with _Stage("fit_np"):
            np_draws = fit_np(sample, kv_s, sp, cfg=mc, truncation=h)
        with _Stage("summary"):
            bands = {"bayes-npiv": simultaneous_band(npiv, mc.delta),
                     "bayes-np": simultaneous_band(np_draws, mc.delta)}
            dens = error_density_grid(npiv)
        with _Stage("analysis"):
            kw = dict(window=float(s.get("drop_window", DROP_WINDOW)),
                      floor=float(s.get("density_floor", DENSITY_FLOOR)),
                      cell_width=float(s.get("cell_width", CELL_WIDTH)))
            estimators = {}
            for name, draws in (("bayes-npiv", npiv), ("bayes-np", np_draws)):
                rep = capacity_report(bands[name], sample.o, **kw)
                estimators[name] = {
                    "capacity": rep.as_dict(),
                    "band_inflation": bands[name].inflation,
                    "mean_occupied_components": float(draws.n_occupied.mean()),
                }
            pols = fit_pols(sample, PolySpec(2))
            estimators["pols-quadratic"] = {"coefficients": pols.as_dict(),
                                            "standard_errors": dict(zip(pols.spec.names(),
                                                                        pols.se.tolist()))}
        with _Stage("ftest"):
            ftest = weak_instrument_ftest(sample, _bins(s))
        with _Stage("write"):
            write_band_csv(out.path("curves.csv"), bands)
            write_density_csv(out.path("error_density.csv"), dens)
            report = {
                "schema_version": SCHEMA_VERSION,
                "software": {"name": "fdnpiv", "version": __version__},
                "command": "fit",
                "seed": mc.seed,
                "mcmc": {"total": mc.total, "burnin": mc.burnin, "thin": mc.thin,
                         "retained": mc.retained, "delta": mc.delta},
                "splines": {"interior_knots": n_knots, "degree": degree,
                            "penalty_order": sp.penalty_order},
                "sample": {"n": len(sample), "rows_rejected": read_summary.n_rejected,
                           "rows_dropped": sample.dropped},
                "estimators": estimators,
                "first_stage_f": ftest.as_dict(),
                "error_density": {"coverage": dens.coverage},
            }
            _write_json(out.path("report.json"), report)
    return report


def cmd_simulate(s) -> dict:
    estimators = tuple(_list(s.get("estimators", ",".join(ESTIMATORS))))
    mc = McmcConfig.monte_carlo(int(s.get("seed", 0))) if _bool(s.get("mc_profile", False)) \
        else _mcmc({**s, "desk_profile": True})
    cfg = SimConfig(n=int(s.get("n", 10_000)), seed=int(s.get("seed", 0)),
                    error_var=float(s.get("error_var", 0.5)), estimators=estimators,
                    mcmc=mc, knots=int(s.get("knots", 20)))
    with _Outputs(s.get("out", ".")) as out:
        with _Stage("simulate"):
            res = run_mc_comparison(cfg)
        report = {"schema_version": SCHEMA_VERSION,
                  "software": {"name": "fdnpiv", "version": __version__},
                  "command": "simulate", "seed": cfg.seed, "n": cfg.n,
                  "summary": res.summary_rows()}
        if _bool(s.get("appendix_a", False)):
            with _Stage("appendix_a"):
                report["appendix_a"] = _appendix_a(cfg.seed)
        with _Stage("write"):
            with open(out.path("comparison.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["estimator", "grid", "fitted", "truth"])
                for r in res.results.values():
                    if r.curve is None:
                        continue
                    for g, f, t in zip(res.grid, r.curve, res.truth):
                        w.writerow([r.name, f"{g:.10g}", f"{f:.10g}", f"{t:.10g}"])
            with open(out.path("summary.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["estimator", "rmse", "runtime_s", "error"])
                for row in res.summary_rows():
                    w.writerow([row["estimator"], row["rmse"], f"{row['runtime_s']:.3f}",
                                row["error"] or ""])
            _write_json(out.path("report.json"), report)
    return report


def _appendix_a(seed) -> dict:
    ovb = []
    for beta, alpha, load in ((3.0, 2.0, 0.8), (3.0, 0.0, 0.8), (3.0, -2.0, 0.8)):
        r = ovb_demo(100_000, beta, alpha, load, seed)
        ovb.append({"beta": beta, "alpha": alpha, "delta": load, "slope": r.slope,
                    "se": r.se, "plim": r.plim, "difference": r.difference})
    rc = []
    for beta, gamma in ((0.5, 0.5), (0.5, 0.0), (0.5, -0.5)):
        r = reverse_causality_demo(100_000, beta, gamma, seed=seed)
        rc.append({"beta": beta, "gamma": gamma, "cov": r.cov, "cov_se": r.cov_se,
                   "cov_analytic": r.cov_analytic, "ols_slope": r.slope,
                   "bias": r.bias, "bias_analytic": r.bias_analytic})
    return {"omitted_variable_bias": ovb, "reverse_causality": rc}


def cmd_ftest(s) -> dict:
    with _Outputs(s.get("out", ".")) as out:
        with _Stage("ingest"):
            sample, _ = _load_sample(s)
        with _Stage("ftest"):
            rep = weak_instrument_ftest(sample, _bins(s))
        with _Stage("write"):
            report = {"schema_version": SCHEMA_VERSION,
                      "software": {"name": "fdnpiv", "version": __version__},
                      "command": "ftest", "n": len(sample), "first_stage_f": rep.as_dict()}
            _write_json(out.path("report.json"), report)
    return report


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", help="detector CSV")
    data.add_argument("--bins", help="comma-separated instrument split points (default 15)")

    mcmc = argparse.ArgumentParser(add_help=False)
    mcmc.add_argument("--delta", type=float)
    mcmc.add_argument("--knots", type=int)
    mcmc.add_argument("--draws", type=int)
    mcmc.add_argument("--burnin", type=int)
    mcmc.add_argument("--thin", type=int)
    mcmc.add_argument("--desk-profile", dest="desk_profile", action="store_true", default=None)

    p = argparse.ArgumentParser(prog="fdnpiv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    f = sub.add_parser("fit", parents=[common, data, mcmc], help="fit Bayes NPIV and NP curves")
    f.set_defaults(func=cmd_fit)
    sm = sub.add_parser("simulate", parents=[common, mcmc], help="Monte Carlo comparison")
    sm.add_argument("--estimators", help=f"comma list from {','.join(ESTIMATORS)}")
    sm.add_argument("--n", type=int)
    sm.add_argument("--appendix-a", dest="appendix_a", action="store_true", default=None)
    sm.add_argument("--mc-profile", dest="mc_profile", action="store_true", default=None)
    sm.set_defaults(func=cmd_simulate)
    ft = sub.add_parser("ftest", parents=[common, data], help="binned first-stage F tests")
    ft.set_defaults(func=cmd_ftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = _settings(args)
        if settings.get("delta") is not None and not 0 < float(settings["delta"]) <= 0.5:
            raise ValueError("--delta must lie in (0, 0.5]")
        if settings.get("input") and not Path(settings["input"]).exists():
            raise FileNotFoundError(settings["input"])
        args.func(settings)
    except StageError as exc:
        print(f"fdnpiv: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"fdnpiv: configuration error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
