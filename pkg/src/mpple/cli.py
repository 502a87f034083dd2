"""Command-line interface: ``mpple {fit,predict,band,gof,simulate}``.

Settings come from an optional JSON file (``--config``); flags given on the
command line take precedence. Every output file gets a ``<name>.meta.json``
sidecar recording the package version, seed, a hash of the resolved
configuration and the file's SHA-256. Outputs contain no timestamps, so a
rerun with the same configuration reproduces them byte for byte.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 fit failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import fit
from .bands import BandRequest, normalize_weight
from .data import Schema, _split_terms, dataset_csv_text, load_dataset
from .exceptions import ConfigError, DataError, FitError
from .simulation import THETAS, WORKING_TERMS, ScenarioConfig, generate_dataset, run_study

log = logging.getLogger("mpple")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_FIT = 0, 2, 3, 4

DEFAULTS = {
    "seed": 0,
    "alpha": 0.05,
    "B": 1000,
    "cause": 1,
    "clip": [0.1, 0.9],
    "domain_rule": "quantile_clip",
    "weight": None,
    "out": ".",
    "overwrite": False,
    "threads": None,
    "scenario": 1,
    "n": 400,
    "theta": list(THETAS[25]),
    "replicates": 1000,
    "time_points": [],
    "z0": [],
    "raw": False,
    "dataset_only": False,
    "replicate_index": 0,
}
# settings that never change results, left out of the configuration hash
_UNHASHED = ("out", "overwrite", "threads", "config")


# --------------------------------------------------------------------------
# configuration

def _float_list(text, what):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{what} must be a comma-separated list of numbers, got {text!r}") from None


def _read_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def resolve_config(args) -> dict:
    """Merge defaults, the JSON config file and command-line flags."""
    cfg = dict(DEFAULTS)
    cfg.update(_read_config(args.config))
    for key, value in vars(args).items():
        if key in ("command", "func", "verbose") or value is None:
            continue
        if key in ("overwrite", "raw", "dataset_only") and value is False:
            continue
        if key == "clip":
            value = _float_list(value, "--clip")
            if len(value) != 2:
                raise ConfigError("--clip takes exactly two values c1,c2")
            cfg["domain_rule"] = "quantile_clip"
        elif key == "theta":
            value = _float_list(value, "--theta")
        elif key == "time_points":
            value = _float_list(value, "--time-points")
        elif key == "terms":
            key = "pi_terms"
        cfg[key] = value
    return cfg


def config_hash(cfg) -> str:
    payload = {k: v for k, v in cfg.items() if k not in _UNHASHED}
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _weights(cfg):
    w = cfg.get("weight")
    if w is None:
        return []
    if isinstance(w, str):
        w = ["ep", "hw"] if w == "both" else [w]
    return [normalize_weight(x) for x in w]


def _clip(cfg):
    clip = cfg.get("clip") or [0.1, 0.9]
    if len(clip) != 2:
        raise ConfigError("clip must have two values")
    return float(clip[0]), float(clip[1])


# --------------------------------------------------------------------------
# output handling

def _num(v):
    """Shortest round-trip text for a float; empty for NaN/None."""
    if v is None:
        return ""
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def _json_clean(obj):
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(float(obj)) else float(obj)
    return obj


def _json_text(obj):
    return json.dumps(_json_clean(obj), indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


class OutputDir:
    """Writes result files plus metadata sidecars, refusing to overwrite."""

    def __init__(self, cfg, command):
        self.root = Path(cfg["out"])
        self.overwrite = bool(cfg.get("overwrite"))
        self.meta = {"command": command, "mpple_version": __version__,
                     "seed": int(cfg["seed"]), "config_hash": config_hash(cfg)}
        self.written = []

    def reserve(self, names):
        """Fail before any work is done if an output already exists."""
        if self.overwrite:
            return
        for name in names:
            for path in (self.root / name, self.root / f"{name}.meta.json"):
                if path.exists():
                    raise ConfigError(f"{path} exists; pass --overwrite to replace it")

    def write(self, name, text, **extra):
        self.reserve([name])
        self.root.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        (self.root / name).write_bytes(data)
        meta = dict(self.meta, file=name, sha256=hashlib.sha256(data).hexdigest(), **extra)
        (self.root / f"{name}.meta.json").write_text(_json_text(meta), encoding="utf-8")
        self.written.append(name)
        log.info("wrote %s", self.root / name)


# --------------------------------------------------------------------------
# data and model

def _schema(cfg):
    if "schema" in cfg:
        return Schema.from_dict(cfg["schema"])
    path = cfg["data"]
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise DataError(f"cannot read data {path}: {exc}") from None
    if not header:
        raise DataError(f"{path}: empty file")
    cov = [c for c in header if c not in ("time", "event", "cause")]
    return Schema("time", "event", "cause", tuple(cov))


def _load(cfg):
    if not cfg.get("data"):
        raise ConfigError("no data file given (--data or 'data' in config)")
    schema = _schema(cfg)
    ds = load_dataset(cfg["data"], schema, k=cfg.get("k"), tau=cfg.get("tau"))
    with open(cfg["data"], "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    return ds, digest


def _pi_terms(cfg, ds, required=False):
    """Working model terms: configured, else ``1, t`` plus all covariates and
    auxiliaries when the data need (or the command requires) a model."""
    terms = cfg.get("pi_terms")
    if terms is not None:
        return terms
    has_missing = bool(np.any((ds.event == 1) & (ds.cause_observed == 0)))
    if has_missing or required:
        return ["1", "t", *ds.covariate_names, *ds.auxiliary_names]
    return None


def _fit(cfg, required_pi=False):
    ds, digest = _load(cfg)
    model = fit(ds, _pi_terms(cfg, ds, required_pi))
    return model, digest


def _z0_list(cfg, ds):
    raw = cfg.get("z0") or []
    if isinstance(raw, str):
        raw = [raw]
    out = []
    for z in raw:
        if isinstance(z, str):
            if z.strip() == "mean":
                out.append(ds.covariates.mean(axis=0))
                continue
            z = _float_list(z, "z0")
        z = np.asarray(z, dtype=float)
        if z.shape != (ds.p,):
            raise DataError(f"z0 {z.tolist()} has {z.size} components; the model has {ds.p}")
        out.append(z)
    return out


# --------------------------------------------------------------------------
# commands

def cmd_fit(cfg):
    out = OutputDir(cfg, "fit")
    out.reserve(["missingness_fit.json", "mpple_fit.json", "baseline_hazard.csv"])
    model, digest = _fit(cfg)
    ds = model.dataset
    if model.mfit is not None:
        mjson = {"fitted": True, **model.mfit.to_dict()}
    else:
        mjson = {"fitted": False, "reason": "all failure causes observed"}
    table = model.coefficient_table(cfg["alpha"])
    causes = []
    for j in range(1, ds.k + 1):
        f = model.cfit.cause(j)
        causes.append({
            "cause": j, "iterations": f.iterations, "converged": f.converged,
            "weighted_events": float(model.cfit.weights[j].sum()),
            "coefficients": [r for r in table if r["cause"] == j],
        })
    fjson = {"n": ds.n, "k": ds.k, "alpha": cfg["alpha"],
             "covariates": list(ds.covariate_names), "causes": causes}
    rows = []
    for j in range(1, ds.k + 1):
        f = model.cfit.cause(j)
        for t, d, c in zip(f.grid, f.dlambda, np.cumsum(f.dlambda)):
            rows.append([j, _num(t), _num(d), _num(c)])
    extra = {"data_sha256": digest}
    out.write("missingness_fit.json", _json_text(mjson), **extra)
    out.write("mpple_fit.json", _json_text(fjson), **extra)
    out.write("baseline_hazard.csv", _csv_text(["cause", "time", "dLambda", "Lambda"], rows), **extra)
    return EXIT_OK


def _band_request(cfg, target, cause, z0, weight):
    c1, c2 = _clip(cfg)
    return BandRequest(target=target, cause=cause,
                       z0=None if z0 is None else tuple(float(v) for v in z0),
                       alpha=float(cfg["alpha"]), weight=weight, B=int(cfg["B"]),
                       domain_rule=cfg.get("domain_rule", "quantile_clip"),
                       c1=c1, c2=c2, seed=int(cfg["seed"]))


def _suffix(weight, several):
    return ("_ep" if weight == "equal_precision" else "_hw") if several else ""


def cmd_predict(cfg):
    weights = _weights(cfg)
    out = OutputDir(cfg, "predict")
    model, digest = _fit(cfg)
    ds = model.dataset
    z0s = _z0_list(cfg, ds) or [ds.covariates.mean(axis=0)]
    names = [f"cif_z{i}.csv" for i in range(len(z0s))]
    out.reserve([*names, "predict.json"])
    several = len(weights) > 1
    header = ["cause", "time", "cif", "se", "lower_pt", "upper_pt"]
    for w in weights:
        header += [f"lower_band{_suffix(w, several)}", f"upper_band{_suffix(w, several)}"]
    report = {"alpha": cfg["alpha"], "z0": [], "bands": []}
    texts = []
    for i, z0 in enumerate(z0s):
        curves, phi_f = model.cif(z0, cfg["alpha"], with_influence=True)
        rows = []
        for c in curves:
            cols = [c.values, c.se, c.lower, c.upper]
            for w in weights:
                band = model.cif_band(_band_request(cfg, "cif", c.cause, z0, w), curves, phi_f)
                lo = np.full(c.grid.shape, np.nan)
                hi = np.full(c.grid.shape, np.nan)
                sel = np.isin(c.grid, band.times)
                lo[sel], hi[sel] = band.lower, band.upper
                bad = int(np.sum((c.upper[sel] > band.upper + 1e-12)
                                 | (c.lower[sel] < band.lower - 1e-12)))
                if bad:
                    log.warning("z0 #%d cause %d: pointwise CI extends beyond the %s band "
                                "at %d of %d grid points", i, c.cause, w, bad, int(sel.sum()))
                report["bands"].append({**band.metadata(), "z0_index": i,
                                        "pointwise_outside_band": bad})
                cols += [lo, hi]
            for r in range(c.grid.size):
                rows.append([c.cause, _num(c.grid[r]), *(_num(col[r]) for col in cols)])
        report["z0"].append({"index": i, "z0": z0, "file": names[i]})
        texts.append(_csv_text(header, rows))
    for name, text in zip(names, texts):
        out.write(name, text, data_sha256=digest)
    out.write("predict.json", _json_text(report), data_sha256=digest)
    return EXIT_OK


def cmd_band(cfg):
    weights = _weights(cfg) or ["equal_precision"]
    out = OutputDir(cfg, "band")
    out.reserve(["cumhaz_band.csv", "band.json"])
    model, digest = _fit(cfg)
    ds = model.dataset
    cause = int(cfg["cause"])
    if not 1 <= cause <= ds.k:
        raise ConfigError(f"cause must lie in 1..{ds.k}")
    z0s = _z0_list(cfg, ds)
    z0 = z0s[0] if z0s else None
    target = "cumhaz" if z0 is None else "cumhaz_at_z0"
    est = model.cumhaz(cause, z0)
    bands = [model.cumhaz_band(_band_request(cfg, target, cause, z0, w)) for w in weights]
    several = len(weights) > 1
    header = ["time", "cumhaz", "se"]
    cols = [est.values, est.se]
    for w, b in zip(weights, bands):
        header += [f"lower_band{_suffix(w, several)}", f"upper_band{_suffix(w, several)}"]
        lo = np.full(est.times.shape, np.nan)
        hi = np.full(est.times.shape, np.nan)
        sel = np.isin(est.times, b.times)
        lo[sel], hi[sel] = b.lower, b.upper
        cols += [lo, hi]
    rows = [[_num(est.times[r]), *(_num(c[r]) for c in cols)] for r in range(est.times.size)]
    report = {"cause": cause, "target": target,
              "z0": None if z0 is None else z0, "bands": [b.metadata() for b in bands]}
    out.write("cumhaz_band.csv", _csv_text(header, rows), data_sha256=digest)
    out.write("band.json", _json_text(report), data_sha256=digest)
    return EXIT_OK


def cmd_gof(cfg):
    out = OutputDir(cfg, "gof")
    out.reserve(["gof.csv", "gof.json"])
    model, digest = _fit(cfg, required_pi=True)
    cause = int(cfg["cause"])
    if not 1 <= cause <= model.k:
        raise ConfigError(f"cause must lie in 1..{model.k}")
    res = model.gof(cause, int(cfg["B"]), float(cfg["alpha"]), int(cfg["seed"]))
    rows = [[_num(t), _num(v), _num(lo), _num(hi)]
            for t, v, lo, hi in zip(res.grid, res.process, *res.band)]
    out.write("gof.csv", _csv_text(["time", "residual", "band_lower", "band_upper"], rows),
              data_sha256=digest)
    out.write("gof.json", _json_text({**res.to_dict(), "terms": list(model.mfit.grammar.labels)}),
              data_sha256=digest)
    return EXIT_OK


def _scenario_config(cfg):
    try:
        return ScenarioConfig(scenario=int(cfg["scenario"]), n=int(cfg["n"]),
                              theta=tuple(cfg["theta"]), replicates=int(cfg["replicates"]),
                              seed=int(cfg["seed"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid simulation settings: {exc}") from None


def cmd_simulate(cfg):
    sc = _scenario_config(cfg)
    out = OutputDir(cfg, "simulate")
    if cfg.get("dataset_only"):
        out.reserve(["dataset.csv"])
        index = int(cfg["replicate_index"])
        ds = generate_dataset(sc, index)
        out.write("dataset.csv", dataset_csv_text(ds), replicate_index=index)
        return EXIT_OK
    names = ["simulation_summary.csv"] + (["simulation_raw.csv"] if cfg.get("raw") else [])
    out.reserve(names)
    terms = cfg.get("pi_terms") or list(WORKING_TERMS)
    z0s = []
    for z in cfg.get("z0") or []:
        z = _float_list(z, "z0") if isinstance(z, str) else [float(v) for v in z]
        if len(z) != 2:
            raise ConfigError("simulation z0 vectors need 2 components")
        z0s.append(z)
    threads = cfg.get("threads") or os.cpu_count() or 1
    summary = run_study(sc, terms, time_points=cfg.get("time_points") or (), z0s=z0s,
                        threads=int(threads), keep_raw=bool(cfg.get("raw")))
    out.write("simulation_summary.csv", summary.csv_text(), failed_replicates=summary.n_failed)
    if cfg.get("raw"):
        out.write("simulation_raw.csv", summary.raw_csv_text())
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "band": cmd_band,
            "gof": cmd_gof, "simulate": cmd_simulate}


# --------------------------------------------------------------------------
# argument parsing

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--threads", type=int, help="worker processes (default: all cores)")
    common.add_argument("--overwrite", action="store_true", help="replace existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="CSV data file")
    data.add_argument("--terms", help="cause-probability model terms, e.g. '1,t,z1,z2'")
    data.add_argument("--alpha", type=float, help="1 - confidence level (default 0.05)")

    bands = argparse.ArgumentParser(add_help=False)
    bands.add_argument("--B", type=int, help="multiplier replications (default 1000)")
    bands.add_argument("--weight", choices=("ep", "hw", "both"),
                       help="band weight: equal precision, Hall-Wellner, or both")
    bands.add_argument("--clip", help="domain clipping constants c1,c2 (default 0.1,0.9)")
    bands.add_argument("--z0", action="append",
                       help="covariate vector 'v1,v2,...' or 'mean' (repeatable)")
    bands.add_argument("--cause", type=int, help="cause of interest (default 1)")

    parser = argparse.ArgumentParser(prog="mpple", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"mpple {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common, data], help="fit both model stages")
    sub.add_parser("predict", parents=[common, data, bands],
                   help="cumulative incidence with pointwise CIs and optional bands")
    sub.add_parser("band", parents=[common, data, bands],
                   help="simultaneous band for a cumulative hazard")
    g = sub.add_parser("gof", parents=[common, data], help="goodness of fit of the cause model")
    g.add_argument("--B", type=int, help="multiplier replications (default 1000)")
    g.add_argument("--cause", type=int, help="cause of interest (default 1)")
    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo study")
    s.add_argument("--scenario", type=int, help="scenario 1-4 (default 1)")
    s.add_argument("--n", type=int, help="subjects per replicate (default 400)")
    s.add_argument("--theta", help="missingness coefficients t0,t1,t2,t3")
    s.add_argument("--replicates", type=int, help="number of replicates (default 1000)")
    s.add_argument("--terms", help="working cause-probability model (default '1,t,z1,z2')")
    s.add_argument("--time-points", dest="time_points",
                   help="times at which Lambda_1 and F_1 are summarized")
    s.add_argument("--z0", action="append", help="covariate vector for F_1 (repeatable)")
    s.add_argument("--raw", action="store_true", help="also write per-replicate results")
    s.add_argument("--dataset-only", dest="dataset_only", action="store_true",
                   help="write one simulated dataset instead of running a study")
    s.add_argument("--replicate-index", dest="replicate_index", type=int,
                   help="replicate used by --dataset-only (default 0)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse exits with 2 on bad usage
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        if isinstance(cfg.get("pi_terms"), str):
            cfg["pi_terms"] = [t.strip() for t in _split_terms(cfg["pi_terms"])]
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"mpple: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"mpple: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FitError, np.linalg.LinAlgError) as exc:
        print(f"mpple: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
