"""Sensor-network localization benchmark.

A target at unknown position x in the plane is observed by six sensors.  Each
reading is ``slope * log(||x - h_j|| / d0)`` plus Gaussian noise, and with a
flat prior the posterior is proportional to the likelihood.  The harness
measures how long chains started at ``[-6, -6]`` stay trapped there (the
escape time tau*) and how well full chains estimate the posterior mean.

The default ``slope = +10`` with natural logarithms and noise variance 5 is the
only reading of the model whose grid posterior mean is ``[-0.753, -0.037]``;
see ``scripts/disambiguate_sensor_model.py``.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .densities import GaussianProposal, TargetDensity
from .errors import ConfigurationError, MTMError, UsageError
from .samplers import IMTM, MIXTURE, PER_PROPOSAL, RW_MTM, SamplerConfig, chain_rng, run_chain
from .weights import DM_MIXTURE, IMPORTANCE, WeightSpec

log = logging.getLogger(__name__)

DEFAULT_ANCHORS = ((-5.0, 1.0), (-2.0, 6.0), (0.0, 0.0), (5.0, -6.0), (6.0, 4.0), (-4.0, -4.0))
DEFAULT_OBSERVATIONS = (26.0, 26.5, 25.0, 28.0, 28.0, 25.3)
POSTERIOR_MEAN = (-0.753, -0.037)
START = (-6.0, -6.0)
CONF1 = ((-6.0, -6.0), (0.0, 0.0))
CONF2 = ((-6.0, -6.0), (-1.0, -2.0))

RW_STANDARD = "rw-standard"
RW_VARIABLE_N = "rw-variable-n"
IMTM_STANDARD = "imtm-standard"
IMTM_DM = "imtm-dm"
IMTM_MIXTURE = "imtm-mixture"
# position in this tuple is part of every derived seed; append only
SCHEMES = (RW_STANDARD, RW_VARIABLE_N, IMTM_STANDARD, IMTM_DM, IMTM_MIXTURE)


@dataclass(frozen=True)
class SensorModel:
    anchors: Tuple[Tuple[float, float], ...] = DEFAULT_ANCHORS
    observations: Tuple[float, ...] = DEFAULT_OBSERVATIONS
    noise_variance: float = 5.0
    reference_distance: float = 0.3
    slope: float = 10.0
    log_base: str = "natural"

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=float)
        obs = np.asarray(self.observations, dtype=float)
        if anchors.ndim != 2 or anchors.shape[1] != 2 or anchors.shape[0] != obs.shape[0]:
            raise ConfigurationError("need one observation per 2-d anchor")
        if len({tuple(a) for a in anchors}) != anchors.shape[0]:
            raise ConfigurationError("anchors must be distinct")
        if not self.noise_variance > 0 or not self.reference_distance > 0:
            raise ConfigurationError("noise_variance and reference_distance must be positive")
        if self.log_base not in ("natural", "base-10"):
            raise ConfigurationError("log_base must be 'natural' or 'base-10'")
        object.__setattr__(self, "anchors", tuple(map(tuple, anchors.tolist())))
        object.__setattr__(self, "observations", tuple(obs.tolist()))

    def log_density(self, x):
        """Unnormalized log posterior; ``-inf`` on an anchor."""
        h = np.asarray(self.anchors)
        diff = np.asarray(x, dtype=float)[..., None, :] - h
        dist = np.sqrt(np.einsum("...ij,...ij->...i", diff, diff))
        log = np.log if self.log_base == "natural" else np.log10
        with np.errstate(divide="ignore", invalid="ignore"):
            mean = self.slope * log(dist / self.reference_distance)
            resid = np.asarray(self.observations) - mean
            out = -np.einsum("...i,...i->...", resid, resid) / (2.0 * self.noise_variance)
        return np.where(np.isnan(out), -np.inf, out)

    def target(self):
        return TargetDensity(2, self.log_density)


def sensor_log_target(x, model=SensorModel()):
    return model.target()(x)


def grid_posterior_mean(model, box=((-10.0, 10.0), (-10.0, 10.0)), resolution=400):
    """Posterior mean by a cell-centred Riemann sum over ``box``.

    ``model`` is a :class:`SensorModel` or any 2-d :class:`TargetDensity`.
    """
    target = model.target() if isinstance(model, SensorModel) else model
    if int(resolution) != resolution or resolution < 100:
        raise UsageError("resolution must be an integer >= 100")
    box = np.asarray(box, dtype=float)
    if box.shape != (target.dim, 2) or np.any(box[:, 1] <= box[:, 0]):
        raise UsageError(f"box must be {target.dim} (low, high) pairs")
    axes = [lo + (np.arange(resolution) + 0.5) * (hi - lo) / resolution for lo, hi in box]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, target.dim)
    log_p = target(grid)
    top = log_p.max()
    if not np.isfinite(top):
        raise ConfigurationError("target is zero on the whole grid")
    w = np.exp(log_p - top)
    return w @ grid / w.sum()


def _states(trace):
    return np.asarray(getattr(trace, "states", trace), dtype=float)


def escape_time(trace, x0, mu):
    """First t >= 1 with ``||x_t - x0|| > ||x_t - mu||``, or T if there is none."""
    states = _states(trace)
    if states.shape[0] < 2:
        raise UsageError("escape time needs at least one iteration")
    rest = states[1:]
    d1 = np.linalg.norm(rest - np.asarray(x0, dtype=float), axis=1)
    d2 = np.linalg.norm(rest - np.asarray(mu, dtype=float), axis=1)
    hits = np.flatnonzero(d1 > d2)
    return int(hits[0] + 1) if hits.size else int(rest.shape[0])


def squared_error(trace, mu_true):
    """``||mean of all states (x0 included) - mu_true||^2`` for one run."""
    err = _states(trace).mean(axis=0) - np.asarray(mu_true, dtype=float)
    return float(err @ err)


def mse_estimate(traces, mu_true):
    """Average over runs of the squared Euclidean error of the chain mean."""
    traces = list(traces)
    if not traces:
        raise UsageError("need at least one trace")
    return float(np.mean([squared_error(t, mu_true) for t in traces]))


@dataclass(frozen=True)
class ExperimentConfig:
    """A grid of (scheme, sigma, N~) cells, each run ``runs`` times.

    ``x0`` is a fixed start point or ``"uniform"`` for a fresh uniform draw
    from ``box`` at every run; MSE is reported only in the uniform case.  For
    I-MTM schemes ``n_grid`` holds the total tries per iteration P, a multiple
    of the number of proposals.
    """

    schemes: Tuple[str, ...] = (RW_STANDARD,)
    sigma_grid: Tuple[float, ...] = (1.0,)
    n_grid: Tuple[int, ...] = (50,)
    runs: int = 100
    chain_length: int = 2000
    x0: Union[str, Tuple[float, float]] = START
    box: Tuple[Tuple[float, float], ...] = ((-6.0, 6.0), (-6.0, 6.0))
    master_seed: int = 0
    proposal_means: Tuple[Tuple[float, float], ...] = CONF1
    dm_rule: str = "generic"
    mu: Tuple[float, float] = POSTERIOR_MEAN
    stop_at_escape: bool = True
    model: SensorModel = field(default_factory=SensorModel)

    def __post_init__(self):
        schemes = (self.schemes,) if isinstance(self.schemes, str) else tuple(self.schemes)
        for s in schemes:
            if s not in SCHEMES:
                raise ConfigurationError(f"unknown scheme {s!r}; expected one of {SCHEMES}")
        object.__setattr__(self, "schemes", schemes)
        object.__setattr__(self, "sigma_grid", tuple(float(s) for s in self.sigma_grid))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if not schemes or not self.sigma_grid or not self.n_grid:
            raise ConfigurationError("schemes, sigma_grid and n_grid must be non-empty")
        if any(not s > 0 for s in self.sigma_grid):
            raise ConfigurationError("sigma values must be positive")
        if any(n < 1 for n in self.n_grid):
            raise ConfigurationError("N~ values must be positive")
        if int(self.runs) != self.runs or self.runs < 1:
            raise ConfigurationError("runs must be a positive integer")
        if int(self.chain_length) != self.chain_length or self.chain_length < 1:
            raise ConfigurationError("chain_length must be a positive integer")
        if int(self.master_seed) != self.master_seed or self.master_seed < 0:
            raise ConfigurationError("master_seed must be a non-negative integer")
        if isinstance(self.x0, str):
            if self.x0 != "uniform":
                raise ConfigurationError("x0 must be a point or 'uniform'")
        else:
            object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
            if len(self.x0) != 2:
                raise ConfigurationError("x0 must be a 2-d point")
        box = tuple(tuple(float(v) for v in b) for b in self.box)
        if len(box) != 2 or any(len(b) != 2 or b[1] <= b[0] for b in box):
            raise ConfigurationError("box must be two (low, high) pairs")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "proposal_means", tuple(tuple(float(v) for v in m) for m in self.proposal_means))
        object.__setattr__(self, "mu", tuple(float(v) for v in self.mu))
        n_props = len(self.proposal_means)
        for s in schemes:
            if s.startswith("imtm"):
                if n_props < 1:
                    raise ConfigurationError("I-MTM schemes need proposal_means")
                bad = [n for n in self.n_grid if n % n_props]
                if bad:
                    raise ConfigurationError(f"I-MTM tries {bad} are not multiples of {n_props} proposals")

    @property
    def uniform_start(self):
        return self.x0 == "uniform"


@dataclass(frozen=True)
class CellSummary:
    scheme: str
    sigma: float
    n_tilde: int
    runs: int
    mean_tau: float
    tau_se: float
    mse: Optional[float]
    mse_se: Optional[float]
    runs_completed: int
    taus: Tuple[int, ...] = field(repr=False, default=())
    errors: Tuple[str, ...] = field(repr=False, default=())

    @property
    def complete(self):
        return self.runs_completed == self.runs


@dataclass(frozen=True)
class ExperimentSummary:
    cells: Tuple[CellSummary, ...]

    def cell(self, scheme, sigma, n_tilde):
        for c in self.cells:
            if c.scheme == scheme and c.sigma == float(sigma) and c.n_tilde == int(n_tilde):
                return c
        raise KeyError((scheme, sigma, n_tilde))


def build_sampler(scheme, sigma, n_tilde, chain_length, proposal_means=CONF1, dm_rule="generic"):
    """Sampler configuration for one cell of the benchmark grid."""
    if scheme == RW_STANDARD:
        return SamplerConfig(RW_MTM, GaussianProposal.random_walk(2, sigma), tries=n_tilde, chain_length=chain_length)
    if scheme == RW_VARIABLE_N:
        schedule = (1, n_tilde, 2 * n_tilde - 1)
        return SamplerConfig(RW_MTM, GaussianProposal.random_walk(2, sigma), tries=schedule, chain_length=chain_length)
    proposals = [GaussianProposal.independent(m, sigma) for m in proposal_means]
    k = n_tilde // len(proposals)
    if scheme == IMTM_STANDARD:
        spec, mode = WeightSpec(IMPORTANCE), PER_PROPOSAL
    elif scheme == IMTM_DM:
        spec, mode = WeightSpec(DM_MIXTURE), PER_PROPOSAL
    elif scheme == IMTM_MIXTURE:
        spec, mode = WeightSpec(IMPORTANCE), MIXTURE
    else:
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    return SamplerConfig(
        IMTM, proposals, weight_spec=spec, sampling_mode=mode, tries_per_proposal=k,
        dm_rule=dm_rule, chain_length=chain_length,
    )


def cell_seed_keys(scheme, sigma, n_tilde, run):
    """Seed keys for one run.  Built from the cell's values rather than grid
    positions, so reordering a grid leaves every cell's numbers unchanged."""
    sigma_bits = int(np.float64(sigma).view(np.uint64))
    return (SCHEMES.index(scheme), sigma_bits, int(n_tilde), int(run))


def run_one(config, scheme, sigma, n_tilde, run):
    """One chain of one cell; returns ``(tau, squared_error_or_None)``."""
    rng = chain_rng(config.master_seed, *cell_seed_keys(scheme, sigma, n_tilde, run))
    if config.uniform_start:
        box = np.asarray(config.box)
        x0 = rng.uniform(box[:, 0], box[:, 1])
    else:
        x0 = np.asarray(config.x0)
    mu = np.asarray(config.mu)
    sampler = build_sampler(scheme, sigma, n_tilde, config.chain_length, config.proposal_means, config.dm_rule)
    until = None
    if config.stop_at_escape and not config.uniform_start:
        def until(x):
            return np.linalg.norm(x - x0) > np.linalg.norm(x - mu)
    trace = run_chain(sampler, config.model.target(), x0, rng, until=until)
    # an early-stopped trace ends at its first escape, so this is still exact
    tau = escape_time(trace, x0, mu)
    sq = squared_error(trace, mu) if config.uniform_start else None
    return tau, sq


def _run_task(args):
    config, scheme, sigma, n_tilde, run = args
    try:
        return run_one(config, scheme, sigma, n_tilde, run), None
    except MTMError as exc:
        return None, f"run {run}: {exc}"


def _se(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.size))


def _summarize(config, scheme, sigma, n_tilde, results):
    taus, sqs, errors = [], [], []
    for res, err in results:
        if err is not None:
            errors.append(err)
            continue
        taus.append(res[0])
        if res[1] is not None:
            sqs.append(res[1])
    done = len(taus)
    return CellSummary(
        scheme=scheme, sigma=sigma, n_tilde=n_tilde, runs=config.runs,
        mean_tau=float(np.mean(taus)) if done else float("nan"),
        tau_se=_se(taus) if done else float("nan"),
        mse=float(np.mean(sqs)) if sqs else None,
        mse_se=_se(sqs) if sqs else None,
        runs_completed=done, taus=tuple(taus), errors=tuple(errors),
    )


def run_experiment(config, workers=1):
    """Run every cell of ``config``; deterministic given ``master_seed``.

    With ``workers > 1`` runs are spread over a process pool.  Results do not
    depend on the worker count or on execution order.
    """
    cells = [(s, sig, n) for s in config.schemes for sig in config.sigma_grid for n in config.n_grid]
    tasks = [(config, s, sig, n, r) for s, sig, n in cells for r in range(config.runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_run_task(t) for t in tasks]
    out = []
    for i, (s, sig, n) in enumerate(cells):
        chunk = results[i * config.runs:(i + 1) * config.runs]
        summary = _summarize(config, s, sig, n, chunk)
        if not summary.complete:
            log.warning("cell %s sigma=%g N=%d: %d of %d runs failed", s, sig, n, config.runs - summary.runs_completed, config.runs)
        out.append(summary)
    return ExperimentSummary(tuple(out))
