"""Command-line front end.

    mtm run          --config run.json --output trace.csv [--seed S]
    mtm experiment   --config grid.json --output summary.csv [--seed S] [--threads K]
    mtm oracle-check --config oracle.json [--output report.json]
    mtm grid-mean    --config grid_mean.json [--output mean.json]

Configs are JSON objects; unknown keys are errors.  Every output file gets a
``<output>.manifest.json`` next to it holding the command, the fully resolved
config, the seed, the package version and the wall-clock duration.  A manifest
can be passed back as ``--config`` to regenerate its output.

Exit codes: 0 success, 1 runtime failure (or a failed oracle check), 2 bad
configuration.
"""

import argparse
import copy
import csv
import io
import json
import logging
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .densities import GaussianProposal, TargetDensity, gaussian_target
from .errors import ConfigurationError, EnumerationSizeError, MTMError
from .experiments import (
    CONF1,
    DEFAULT_ANCHORS,
    DEFAULT_OBSERVATIONS,
    POSTERIOR_MEAN,
    START,
    ExperimentConfig,
    SensorModel,
    build_sampler,
    grid_posterior_mean,
    run_experiment,
)
from .oracle import (
    EXACT_TOL,
    DiscreteProposal,
    DiscreteSpace,
    check_detailed_balance,
    check_stationarity,
    exact_imtm_kernel,
    exact_rw_mtm_kernel,
    mixture_kernel,
    perturb_kernel,
    random_pmf,
    random_space,
)
from .samplers import SamplerConfig, chain_rng, run_chain
from .weights import LIU_LAMBDA, WeightSpec, named_log_lambda

log = logging.getLogger("mtm")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2
MANIFEST_SUFFIX = ".manifest.json"

REQUIRED = object()

SENSOR_DEFAULTS = {
    "kind": "sensor",
    "anchors": [list(a) for a in DEFAULT_ANCHORS],
    "observations": list(DEFAULT_OBSERVATIONS),
    "noise_variance": 5.0,
    "reference_distance": 0.3,
    "slope": 10.0,
    "log_base": "natural",
}
GAUSSIAN_DEFAULTS = {"kind": "gaussian", "mean": REQUIRED, "covariance": REQUIRED}
PROPOSAL_DEFAULTS = {"kind": REQUIRED, "mean": None, "sigma": None, "covariance": None}
WEIGHT_DEFAULTS = {"kind": "importance", "lambda": None}
SAMPLER_DEFAULTS = {
    "variant": REQUIRED,
    "proposals": REQUIRED,
    "tries": 1,
    "weights": WEIGHT_DEFAULTS,
    "sampling_mode": "per-proposal",
    "tries_per_proposal": 1,
    "dm_rule": "generic",
}
SCHEME_DEFAULTS = {
    "scheme": REQUIRED,
    "sigma": REQUIRED,
    "n_tilde": REQUIRED,
    "proposal_means": [list(m) for m in CONF1],
    "dm_rule": "generic",
}
RUN_DEFAULTS = {"target": SENSOR_DEFAULTS, "sampler": REQUIRED, "chain_length": 2000, "x0": list(START), "seed": 0}
EXPERIMENT_DEFAULTS = {
    "schemes": ["rw-standard"],
    "sigma_grid": [1.0],
    "n_grid": [50],
    "runs": 100,
    "chain_length": 2000,
    "x0": list(START),
    "box": [[-6.0, 6.0], [-6.0, 6.0]],
    "master_seed": 0,
    "proposal_means": [list(m) for m in CONF1],
    "dm_rule": "generic",
    "mu": list(POSTERIOR_MEAN),
    "stop_at_escape": True,
    "model": SENSOR_DEFAULTS,
}
SPACE_DEFAULTS = {"n": None, "seed": 0, "target_pmf": None, "proposal_pmf": None}
ORACLE_DEFAULTS = {
    "space": {"n": 5, "seed": 0, "target_pmf": None, "proposal_pmf": None},
    "variant": REQUIRED,
    "tries": 2,
    "proposals": 2,
    "weights": WEIGHT_DEFAULTS,
    "tries_per_proposal": 1,
    "sampling_mode": "per-proposal",
    "dm_rule": "generic",
    "tolerance": EXACT_TOL,
    "perturb": None,
}
PERTURB_DEFAULTS = {"row": 0, "col": 1, "amount": 1e-3}
GRID_DEFAULTS = {
    "target": SENSOR_DEFAULTS,
    "box": [[-10.0, 10.0], [-10.0, 10.0]],
    "resolution": 400,
    "reference": list(POSTERIOR_MEAN),
    "tolerance": 0.05,
}


class ConfigError(ConfigurationError):
    """A config problem, located by line when possible."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        where = f"line {line}: " if line else ""
        super().__init__(f"{path + ': ' if path else ''}{where}{message}")


class _Config:
    """Raw config text plus helpers that report errors by line."""

    def __init__(self, text, path):
        self.text = text
        self.path = str(path)
        try:
            self.data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, self.path) from None
        if not isinstance(self.data, dict):
            raise ConfigError("top level must be a JSON object", 1, self.path)

    def line_of(self, key):
        m = re.search(r'"' + re.escape(key) + r'"\s*:', self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def error(self, message, key=None):
        return ConfigError(message, self.line_of(key) if key else None, self.path)

    def resolve(self, given, defaults, where):
        """Merge ``given`` over ``defaults``; unknown or missing keys are errors."""
        if not isinstance(given, dict):
            raise self.error(f"{where} must be an object", where.rsplit(".", 1)[-1])
        for key in given:
            if key not in defaults:
                allowed = ", ".join(sorted(defaults))
                raise self.error(f"unknown key {key!r} in {where} (allowed: {allowed})", key)
        out = {}
        for key, default in defaults.items():
            if key in given:
                out[key] = given[key]
            elif default is REQUIRED:
                raise self.error(f"missing required key {key!r} in {where}")
            else:
                out[key] = copy.deepcopy(default)
        return out


def _load(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=str(path)) from None
    cfg = _Config(text, path)
    # a manifest carries its resolved config and seed
    if "manifest_version" in cfg.data:
        cfg.manifest = cfg.data
        cfg.data = cfg.data.get("config", {})
    else:
        cfg.manifest = None
    return cfg


def _guard(cfg, key, fn):
    """Run ``fn`` turning library configuration errors into located ones."""
    try:
        return fn()
    except ConfigError:
        raise
    except (ConfigurationError, TypeError, ValueError) as exc:
        raise cfg.error(str(exc), key) from None


# --- config sections ---------------------------------------------------------


def _target(cfg, given):
    kind = given.get("kind", "sensor") if isinstance(given, dict) else None
    if kind == "sensor":
        res = cfg.resolve(given, SENSOR_DEFAULTS, "target")
        model = _guard(cfg, "target", lambda: _sensor_model(res))
        return model.target(), res
    if kind == "gaussian":
        res = cfg.resolve(given, GAUSSIAN_DEFAULTS, "target")
        return _guard(cfg, "target", lambda: gaussian_target(res["mean"], res["covariance"])), res
    raise cfg.error(f"target kind must be 'sensor' or 'gaussian', got {kind!r}", "target")


def _sensor_model(res):
    fields = {k: v for k, v in res.items() if k != "kind"}
    return SensorModel(**{**fields, "anchors": tuple(map(tuple, fields["anchors"])), "observations": tuple(fields["observations"])})


def _proposal(cfg, given, dim):
    res = cfg.resolve(given, PROPOSAL_DEFAULTS, "proposal")
    if (res["sigma"] is None) == (res["covariance"] is None):
        raise cfg.error("a proposal needs exactly one of sigma or covariance", "proposals")

    def build():
        cov = res["covariance"] if res["covariance"] is not None else float(res["sigma"]) ** 2 * np.eye(dim)
        mean = res["mean"] if res["kind"] == "independent" else None
        if res["kind"] == "random-walk" and res["mean"] is not None:
            raise ConfigurationError("random-walk proposals take no mean")
        return GaussianProposal(res["kind"], mean, cov)

    return _guard(cfg, "proposals", build), res


def _weights(cfg, given, proposals):
    res = cfg.resolve(given, WEIGHT_DEFAULTS, "weights")

    def build():
        if res["kind"] == LIU_LAMBDA:
            if res["lambda"] is None:
                raise ConfigurationError("liu-lambda weights need a named lambda")
            return WeightSpec(LIU_LAMBDA, log_lambda=[named_log_lambda(res["lambda"], q) for q in proposals])
        if res["lambda"] is not None:
            raise ConfigurationError("lambda is only meaningful for liu-lambda weights")
        return WeightSpec(res["kind"])

    return _guard(cfg, "weights", build), res


def _sampler(cfg, given, dim, chain_length, seed):
    if isinstance(given, dict) and "scheme" in given:
        res = cfg.resolve(given, SCHEME_DEFAULTS, "sampler")
        sampler = _guard(cfg, "scheme", lambda: build_sampler(
            res["scheme"], float(res["sigma"]), int(res["n_tilde"]), chain_length,
            tuple(map(tuple, res["proposal_means"])), res["dm_rule"],
        ))
        return sampler, res
    res = cfg.resolve(given, SAMPLER_DEFAULTS, "sampler")
    if not isinstance(res["proposals"], list) or not res["proposals"]:
        raise cfg.error("proposals must be a non-empty list", "proposals")
    built = [_proposal(cfg, p, dim) for p in res["proposals"]]
    proposals = [b[0] for b in built]
    res["proposals"] = [b[1] for b in built]
    spec, res["weights"] = _weights(cfg, res["weights"], proposals)
    tries = tuple(res["tries"]) if isinstance(res["tries"], list) else res["tries"]
    sampler = _guard(cfg, "sampler", lambda: SamplerConfig(
        res["variant"], proposals, tries=tries, weight_spec=spec, sampling_mode=res["sampling_mode"],
        tries_per_proposal=res["tries_per_proposal"], dm_rule=res["dm_rule"],
        chain_length=chain_length, seed=seed,
    ))
    return sampler, res


def _positive_int(cfg, value, key):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise cfg.error(f"{key} must be a positive integer", key)
    return value


def _seed(cfg, value, key):
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise cfg.error(f"{key} must be a non-negative integer", key)
    return value


# --- output helpers ----------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def _write_manifest(output, command, resolved, seed, started, extra=None):
    manifest = {
        "manifest_version": 1,
        "command": command,
        "config": resolved,
        "master_seed": seed,
        "version": __version__,
        "duration_seconds": time.perf_counter() - started,
    }
    if extra:
        manifest.update(extra)
    Path(str(output) + MANIFEST_SUFFIX).write_text(json.dumps(manifest, indent=2) + "\n")


# --- commands ----------------------------------------------------------------


def cmd_run(config_path, output_path, seed_override=None):
    """Run one chain and write its trace CSV (iteration 0 is x0)."""
    started = time.perf_counter()
    cfg = _load(config_path)
    res = cfg.resolve(cfg.data, RUN_DEFAULTS, "config")
    if seed_override is not None:
        res["seed"] = seed_override
    seed = _seed(cfg, res["seed"], "seed")
    chain_length = _positive_int(cfg, res["chain_length"], "chain_length")
    target, res["target"] = _target(cfg, res["target"])
    sampler, res["sampler"] = _sampler(cfg, res["sampler"], target.dim, chain_length, seed)
    x0 = np.asarray(res["x0"], dtype=float)
    if x0.shape != (target.dim,):
        raise cfg.error(f"x0 must have {target.dim} coordinates", "x0")

    trace = run_chain(sampler, target, x0, chain_rng(seed))
    dims = [f"x{i + 1}" for i in range(target.dim)]
    rows = [[0, *trace.states[0], None, None, None]]
    for t, (x, rec) in enumerate(zip(trace.states[1:], trace.records), start=1):
        rows.append([t, *x, rec.n_used, rec.alpha, rec.accepted])
    _write_csv(output_path, ["iteration", *dims, "n_used", "alpha", "accepted"], rows)
    _write_manifest(output_path, "run", res, seed, started)
    return EXIT_OK


def _experiment_config(cfg, res):
    res["model"] = cfg.resolve(res["model"], SENSOR_DEFAULTS, "model")
    model = _guard(cfg, "model", lambda: _sensor_model(res["model"]))
    _seed(cfg, res["master_seed"], "master_seed")
    _positive_int(cfg, res["runs"], "runs")
    _positive_int(cfg, res["chain_length"], "chain_length")
    for key in ("schemes", "sigma_grid", "n_grid"):
        if not isinstance(res[key], list):
            raise cfg.error(f"{key} must be a list", key)
    x0 = res["x0"] if isinstance(res["x0"], str) else tuple(res["x0"])
    return _guard(cfg, "schemes", lambda: ExperimentConfig(
        schemes=tuple(res["schemes"]), sigma_grid=tuple(res["sigma_grid"]), n_grid=tuple(res["n_grid"]),
        runs=res["runs"], chain_length=res["chain_length"], x0=x0, box=tuple(map(tuple, res["box"])),
        master_seed=res["master_seed"], proposal_means=tuple(map(tuple, res["proposal_means"])),
        dm_rule=res["dm_rule"], mu=tuple(res["mu"]), stop_at_escape=bool(res["stop_at_escape"]), model=model,
    ))


SUMMARY_COLUMNS = ["scheme", "sigma", "n_tilde", "runs", "mean_tau", "tau_se", "mse", "mse_se"]


def cmd_experiment(config_path, output_path, seed_override=None, threads=1):
    """Run a (scheme, sigma, N~) grid and write one summary row per cell."""
    started = time.perf_counter()
    cfg = _load(config_path)
    res = cfg.resolve(cfg.data, EXPERIMENT_DEFAULTS, "config")
    if seed_override is not None:
        res["master_seed"] = seed_override
    config = _experiment_config(cfg, res)
    summary = run_experiment(config, workers=threads)
    rows = [[c.scheme, c.sigma, c.n_tilde, c.runs, c.mean_tau, c.tau_se, c.mse, c.mse_se] for c in summary.cells]
    _write_csv(output_path, SUMMARY_COLUMNS, rows)
    failures = {f"{c.scheme} sigma={c.sigma:g} n_tilde={c.n_tilde}": list(c.errors) for c in summary.cells if c.errors}
    _write_manifest(output_path, "experiment", res, config.master_seed, started, {"failed_runs": failures})
    if failures:
        for cell, errs in failures.items():
            print(f"warning: {cell}: {len(errs)} run(s) failed; first: {errs[0]}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _oracle_space(cfg, given):
    res = cfg.resolve(given, SPACE_DEFAULTS, "space")
    if res["target_pmf"] is not None:
        space = _guard(cfg, "target_pmf", lambda: DiscreteSpace(np.asarray(res["target_pmf"], dtype=float),
                                                                 None if res["proposal_pmf"] is None else np.asarray(res["proposal_pmf"], dtype=float)))
        return space, res
    n = _positive_int(cfg, res["n"], "n")
    rng = np.random.default_rng(_seed(cfg, res["seed"], "seed"))
    return _guard(cfg, "space", lambda: random_space(n, rng)), res


def _oracle_kernel(cfg, res, space):
    variant = res["variant"]
    tries = res["tries"]
    if variant == "rw-mtm":
        return exact_rw_mtm_kernel(space, _positive_int(cfg, tries, "tries"))
    if variant == "kernel-mixture":
        if not isinstance(tries, list) or not tries:
            raise cfg.error("kernel-mixture needs tries as a list of try counts", "tries")
        return mixture_kernel([exact_rw_mtm_kernel(space, _positive_int(cfg, n, "tries")) for n in tries])
    if variant == "imtm":
        props = res["proposals"]
        if isinstance(props, int) and not isinstance(props, bool):
            rng = np.random.default_rng([res["space"]["seed"], 1])
            pmfs = [random_pmf(space.n, rng) for _ in range(_positive_int(cfg, props, "proposals"))]
        elif isinstance(props, list) and props:
            pmfs = [np.asarray(p, dtype=float) for p in props]
        else:
            raise cfg.error("proposals must be a count or a list of pmfs", "proposals")
        discrete = [DiscreteProposal(p / p.sum()) for p in pmfs]
        spec, res["weights"] = _weights(cfg, res["weights"], discrete)
        return _guard(cfg, "variant", lambda: exact_imtm_kernel(
            space, pmfs, spec, res["tries_per_proposal"], res["sampling_mode"], res["dm_rule"]))
    raise cfg.error(f"variant must be rw-mtm, imtm or kernel-mixture, got {variant!r}", "variant")


def cmd_oracle_check(config_path, output_path=None):
    """Exact stationarity and detailed-balance check; exit 0 iff both pass."""
    started = time.perf_counter()
    cfg = _load(config_path)
    res = cfg.resolve(cfg.data, ORACLE_DEFAULTS, "config")
    space, res["space"] = _oracle_space(cfg, res["space"])
    try:
        kernel = _oracle_kernel(cfg, res, space)
    except EnumerationSizeError as exc:
        raise cfg.error(str(exc), "variant") from None
    if res["perturb"] is not None:
        res["perturb"] = cfg.resolve(res["perturb"], PERTURB_DEFAULTS, "perturb")
        kernel = perturb_kernel(kernel, **res["perturb"])
    tol = float(res["tolerance"])
    stat = check_stationarity(kernel, space.target_pmf, tol)
    db = check_detailed_balance(kernel, space.target_pmf, tol)
    print(f"stationarity: l1 residual = {stat.l1_residual:.3e} (tol {tol:.1e}) {'PASS' if stat.passed else 'FAIL'}")
    print(f"detailed balance: max violation = {db.max_violation:.3e} (tol {tol:.1e}) {'PASS' if db.passed else 'FAIL'}")
    passed = stat.passed and db.passed
    if output_path:
        report = {"l1_residual": stat.l1_residual, "max_violation": db.max_violation, "tolerance": tol, "passed": passed}
        Path(output_path).write_text(json.dumps(report, indent=2) + "\n")
        _write_manifest(output_path, "oracle-check", res, res["space"]["seed"], started)
    return EXIT_OK if passed else EXIT_FAILURE


def cmd_grid_mean(config_path, output_path=None):
    """Grid posterior mean and its distance to a reference point."""
    started = time.perf_counter()
    cfg = _load(config_path)
    res = cfg.resolve(cfg.data, GRID_DEFAULTS, "config")
    target, res["target"] = _target(cfg, res["target"])
    resolution = _positive_int(cfg, res["resolution"], "resolution")
    mean = _guard(cfg, "box", lambda: grid_posterior_mean(target, res["box"], resolution))
    ref = np.asarray(res["reference"], dtype=float)
    if ref.shape != mean.shape:
        raise cfg.error("reference must have one coordinate per dimension", "reference")
    delta = mean - ref
    tol = float(res["tolerance"])
    within = bool(np.all(np.abs(delta) <= tol))
    print("mean:      " + " ".join(f"{v: .6f}" for v in mean))
    print("reference: " + " ".join(f"{v: .6f}" for v in ref))
    print("delta:     " + " ".join(f"{v: .6f}" for v in delta))
    print(f"within {tol:g} per coordinate: {'yes' if within else 'no'}")
    if output_path:
        report = {"mean": mean.tolist(), "reference": ref.tolist(), "delta": delta.tolist(), "within_tolerance": within}
        Path(output_path).write_text(json.dumps(report, indent=2) + "\n")
        _write_manifest(output_path, "grid-mean", res, None, started)
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="mtm", description="Multiple-try Metropolis samplers and benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one chain and write its trace")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("experiment", help="run a benchmark grid and write a summary")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1, help="worker processes")

    p = sub.add_parser("oracle-check", help="exact kernel stationarity check")
    p.add_argument("--config", required=True)
    p.add_argument("--output")

    p = sub.add_parser("grid-mean", help="grid posterior mean")
    p.add_argument("--config", required=True)
    p.add_argument("--output")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args.config, args.output, args.seed)
        if args.command == "experiment":
            if args.threads < 1:
                raise ConfigError("--threads must be at least 1")
            return cmd_experiment(args.config, args.output, args.seed, args.threads)
        if args.command == "oracle-check":
            return cmd_oracle_check(args.config, args.output)
        return cmd_grid_mean(args.config, args.output)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MTMError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
