"""Command line entry point: ``kinetic-coupler {rates,metric,simulate,verify,scan}``.

Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""
import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .bundle import build_bundle
from .coupling import CouplingControls, k_inequality_check
from .csvio import csv_text, write_csv
from .drift import DriftConstants, simplified_to_general, verify_lyapunov_drift
from .errors import ConfigurationError, KineticCouplerError
from .mc import EnsembleConfig, contraction_audit, run_ensemble, scaling_scan
from .metric import (
    METRIC_HEADER,
    check_rate_admissible,
    corollary_rate,
    gaussian_spectral_gap,
    make_rate_constants,
    metric_bounds_report,
    table_rows,
)
from .model import QUADRATIC, ModelParams, PotentialSpec, check_assumptions, make_potential

logger = logging.getLogger("kinetic_coupler")

DEFAULT_SEED = 0
SUITES = ("lyapunov", "metric", "kcheck", "assumptions", "all")
POTENTIAL_KEYS = {"kind", "L", "R", "a"}
_SIM_KEYS = {f.name for f in fields(EnsembleConfig)}


@dataclass
class ExperimentConfig:
    potential: PotentialSpec
    params: ModelParams
    drift: dict
    use_optimized: bool = False
    ell: Optional[float] = None
    sim: dict = field(default_factory=dict)
    out_dir: Optional[str] = None
    formats: tuple = ("txt", "csv")


def _real(section, key, path, required=True, positive=False):
    if key not in section:
        if required:
            raise ConfigurationError(f"missing required key '{path}'", key=key)
        return None
    val = section[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ConfigurationError(f"'{path}' must be a finite real, got {val!r}", key=key)
    if positive and not val > 0:
        raise ConfigurationError(f"'{path}' must be positive, got {val!r}", key=key)
    return float(val)


def _section(raw, key, required=True):
    if key not in raw:
        if required:
            raise ConfigurationError(f"missing required section '{key}'", key=key)
        return {}
    sec = raw[key]
    if not isinstance(sec, dict):
        raise ConfigurationError(f"'{key}' must be an object", key=key)
    return sec


def parse_config(raw):
    """Validate a decoded JSON config into an ExperimentConfig."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be an object", key="model")
    model = _section(raw, "model")
    pot_raw = _section(model, "potential")
    if "kind" not in pot_raw:
        raise ConfigurationError("missing required key 'model.potential.kind'", key="kind")
    unknown = set(pot_raw) - POTENTIAL_KEYS
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigurationError(f"unknown key 'model.potential.{k}'", key=k)
    if pot_raw["kind"] == "custom":
        raise ConfigurationError("custom potentials need the Python API", key="kind")
    spec_args = {k: _real(pot_raw, k, f"model.potential.{k}", required=False) for k in ("L", "R", "a")}
    spec = PotentialSpec(pot_raw["kind"], **{k: v for k, v in spec_args.items() if v is not None})
    d = model.get("d")
    if d is None:
        raise ConfigurationError("missing required key 'model.d'", key="d")
    if isinstance(d, bool) or not isinstance(d, int):
        raise ConfigurationError(f"'model.d' must be an integer, got {d!r}", key="d")
    params = ModelParams(d, _real(model, "u", "model.u"), _real(model, "gamma", "model.gamma"))

    drift = _section(raw, "drift", required=False)
    has_rb = any(k in drift for k in ("R", "beta"))
    has_al = any(k in drift for k in ("A", "lambda"))
    if has_rb and has_al:
        raise ConfigurationError("drift takes either {R, beta} or {A, lambda}, not both", key="drift")
    if has_rb:
        drift = {"R": _real(drift, "R", "drift.R", positive=True), "beta": _real(drift, "beta", "drift.beta", positive=True)}
    elif has_al:
        drift = {"A": _real(drift, "A", "drift.A"), "lambda": _real(drift, "lambda", "drift.lambda", positive=True)}

    rate = _section(raw, "rate", required=False)
    use_opt = rate.get("use_optimized", False)
    if not isinstance(use_opt, bool):
        raise ConfigurationError("'rate.use_optimized' must be a boolean", key="use_optimized")
    ell = _real(rate, "ell", "rate.ell", required=False)

    sim = dict(_section(raw, "sim", required=False))
    bad = set(sim) - _SIM_KEYS
    if bad:
        k = sorted(bad)[0]
        raise ConfigurationError(f"unknown key 'sim.{k}'", key=k)
    outputs = _section(raw, "outputs", required=False)
    formats = tuple(outputs.get("formats", ("txt", "csv")))
    return ExperimentConfig(spec, params, drift, use_opt, ell, sim, outputs.get("directory"), formats)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}", key="config") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON in {path}: {exc}", key="config") from None
    return parse_config(raw)


@dataclass
class Pipeline:
    cfg: ExperimentConfig
    pot: object
    consts: DriftConstants
    drift_R: Optional[float]
    drift_beta: Optional[float]


def make_pipeline(cfg):
    pot = make_potential(cfg.potential)
    if pot.dim is not None and pot.dim != cfg.params.d:
        raise ConfigurationError("potential dimension does not match model.d", key="d")
    R, beta = pot.drift_R, pot.drift_beta
    if "A" in cfg.drift:
        consts = DriftConstants(pot.lipschitz_L, cfg.drift["A"], cfg.drift["lambda"])
        R = beta = None
    else:
        if "R" in cfg.drift:
            R, beta = cfg.drift["R"], cfg.drift["beta"]
        consts = simplified_to_general(pot.lipschitz_L, R, beta, cfg.params)
    consts.check(cfg.params)
    return Pipeline(cfg, pot, consts, R, beta)


def default_ell(L, R, beta):
    return max(1.0, L * R**2 / beta)


def rate_report(pipe):
    """Ordered ``(name, value)`` pairs of the full constant set."""
    cfg = pipe.cfg
    params, consts = cfg.params, pipe.consts
    b = build_bundle(pipe.pot, params, consts, use_optimized=True)
    c_used = b.c_opt if cfg.use_optimized else b.c_closed
    if cfg.use_optimized:
        rates = b.rates
    else:
        rates = make_rate_constants(b.geometry, consts, params, b.c_closed)
    g = b.geometry
    out = [("L", consts.L), ("R", pipe.drift_R), ("beta", pipe.drift_beta), ("A", consts.A), ("lambda", consts.lam),
           ("alpha", g.alpha), ("eta", g.eta), ("R1", g.R1), ("Lambda", g.Lambda),
           ("c_closed", b.c_closed), ("c_opt", b.c_opt), ("c", c_used), ("epsilon", rates.epsilon), ("C", rates.C_wass2)]
    if pipe.pot.kind == QUADRATIC:
        out.append(("c_gap", gaussian_spectral_gap(consts.L, params)))
    if pipe.drift_R is not None:
        ell = cfg.ell if cfg.ell is not None else default_ell(consts.L, pipe.drift_R, pipe.drift_beta)
        try:
            cor = corollary_rate(consts.L, pipe.drift_R, pipe.drift_beta, ell, params)
            out += [("ell", ell), ("Lambda1", cor.Lambda1), ("c_corollary", cor.rate),
                    ("c_corollary_radius_form", cor.rate_radius_form)]
        except KineticCouplerError as exc:
            logger.info("corollary bound not reported: %s", exc)
    return out


def format_aligned(pairs):
    width = max(len(k) for k, _ in pairs)
    lines = []
    for k, v in pairs:
        text = "n/a" if v is None else (repr(float(v)) if isinstance(v, float) else str(v))
        lines.append(f"{k.ljust(width)}  {text}")
    return "\n".join(lines)


def _out_path(cfg, name, explicit=None):
    if explicit:
        parent = os.path.dirname(explicit)
        if parent:
            os.makedirs(parent, exist_ok=True)
        return explicit
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        return os.path.join(cfg.out_dir, name)
    return None


def cmd_rates(args, cfg):
    if args.optimized:
        cfg = replace(cfg, use_optimized=True)
    pairs = rate_report(make_pipeline(cfg))
    print(format_aligned(pairs))
    path = _out_path(cfg, "rates.csv", args.out)
    rows = [(k, "" if v is None else v) for k, v in pairs]
    if path:
        write_csv(path, ["name", "value"], rows)
    elif args.csv:
        sys.stdout.write(csv_text(["name", "value"], rows))
    return 0


def _bundle(cfg, pipe):
    return build_bundle(pipe.pot, cfg.params, pipe.consts, use_optimized=cfg.use_optimized, ell=cfg.ell)


def cmd_metric(args, cfg):
    pipe = make_pipeline(cfg)
    b = _bundle(cfg, pipe)
    write_csv(args.out, METRIC_HEADER, table_rows(b.table))
    print(f"wrote {len(b.table.grid)} rows to {args.out} (quadrature error {b.table.quad_error:.3g})")
    return 0


def _ensemble_config(cfg, seed):
    sim = dict(cfg.sim)
    sim["seed"] = seed
    try:
        return EnsembleConfig(**sim)
    except TypeError as exc:
        raise ConfigurationError(f"bad sim section: {exc}", key="sim") from None


def cmd_simulate(args, cfg):
    pipe = make_pipeline(cfg)
    b = _bundle(cfg, pipe)
    ens = _ensemble_config(cfg, args.seed)
    series = run_ensemble(ens, b)
    series.to_csv(args.out)
    audit = contraction_audit(series, b.rates, b.geometry, ens, gamma=cfg.params.gamma)
    print(audit.summary())
    return 0 if audit.passed else 1


def run_suites(suite, pipe, cfg, seed):
    """Run verification suites; returns ``{name: (passed, detail)}``."""
    names = ["lyapunov", "metric", "kcheck", "assumptions"] if suite == "all" else [suite]
    results = {}
    b = None
    for name in names:
        if name == "lyapunov":
            rep = verify_lyapunov_drift(pipe.pot, pipe.consts, cfg.params)
            results[name] = (rep.ok(), f"max excess {rep.max_excess:.3g} over {rep.n_points} points")
        elif name == "assumptions":
            rep = check_assumptions(pipe.pot, cfg.params, pipe.consts, rng=np.random.default_rng(seed))
            results[name] = (rep.ok(), ", ".join(f"{k}={v:.3g}" for k, v in rep.margins().items()))
        else:
            b = b or _bundle(cfg, pipe)
            if name == "metric":
                rep = metric_bounds_report(b.table, b.consts, rng=np.random.default_rng(seed))
                adm = check_rate_admissible(b.rates.c, b.geometry, b.consts, cfg.params)
                ok = rep.ok and adm.admissible
                detail = "failing: " + ", ".join(rep.failing() + adm.failing()) if not ok else "all bounds hold"
                results[name] = (ok, detail)
            else:
                controls = CouplingControls.from_geometry(b.geometry, xi=cfg.sim.get("xi"))
                rep = k_inequality_check(b, controls, rng=np.random.default_rng(seed))
                results[name] = (rep.ok(), f"max K - (1+alpha) xi G = {rep.max_excess:.3g}; regimes {rep.regime_counts}")
    return results


def cmd_verify(args, cfg):
    results = run_suites(args.suite, make_pipeline(cfg), cfg, args.seed)
    for name, (ok, detail) in results.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
    return 0 if all(ok for ok, _ in results.values()) else 1


def _parse_values(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"--values must be comma-separated reals, got {text!r}", key="values") from None
    if not vals or not all(math.isfinite(v) and v > 0 for v in vals):
        raise ConfigurationError("--values must be positive finite reals", key="values")
    return vals


def cmd_scan(args, cfg):
    if args.param != "a":
        raise ConfigurationError(f"only --param a is supported, got {args.param!r}", key="param")
    pipe = make_pipeline(cfg)
    b = build_bundle(pipe.pot, cfg.params, pipe.consts)
    empirical = _ensemble_config(cfg, args.seed) if args.empirical else None
    table = scaling_scan(b, _parse_values(args.values), empirical=empirical)
    table.to_csv(args.out)
    ca = table.column("c_times_a")
    print(f"wrote {len(ca)} rows to {args.out}; c*a spread {np.nanmax(ca) / np.nanmin(ca) - 1:.3g}")
    for note in table.notes:
        print(f"note: {note}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="kinetic-coupler", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED, help="RNG seed (default 0)")

    sp = sub.add_parser("rates", help="print the constant set")
    common(sp)
    sp.add_argument("--optimized", action="store_true", help="use the largest admissible rate")
    sp.add_argument("--out", help="CSV output path")
    sp.add_argument("--csv", action="store_true", help="also write CSV to stdout")
    sp.set_defaults(func=cmd_rates)

    sp = sub.add_parser("metric", help="write the metric table")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_metric)

    sp = sub.add_parser("simulate", help="ensemble run and contraction audit")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="run an invariant suite")
    common(sp)
    sp.add_argument("--suite", choices=SUITES, default="all")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("scan", help="kinetic scaling scan over a")
    common(sp)
    sp.add_argument("--param", default="a")
    sp.add_argument("--values", required=True, help="comma-separated list")
    sp.add_argument("--out", required=True)
    sp.add_argument("--empirical", action="store_true", help="also fit empirical rates (runs the sim section)")
    sp.set_defaults(func=cmd_scan)
    return p


def run_command(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigurationError as exc:
        key = f" [key: {exc.key}]" if getattr(exc, "key", None) else ""
        print(f"configuration error: {exc}{key}", file=sys.stderr)
        return 2
    except KineticCouplerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
