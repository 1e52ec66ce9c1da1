"""Ground truth on finite state spaces.

A state space of n states is embedded in R^1 as the points 0, 1, ..., n-1.
:class:`DiscreteProposal` and :meth:`DiscreteSpace.target` expose the same
interface as the continuous densities, so the production step functions run
unchanged on the embedding and can be compared with the exact kernels built
here by brute-force enumeration.
"""

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .densities import RANDOM_WALK, INDEPENDENT, TargetDensity
from .errors import ConfigurationError, EnumerationSizeError, UsageError
from .weights import DM_MIXTURE, IMPORTANCE, LIU_LAMBDA

MAX_TERMS = 10**7
EXACT_TOL = 1e-12


def _as_index(z):
    return np.rint(np.asarray(z, dtype=float)[..., 0]).astype(int)


def _check_pmf(p, name):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ConfigurationError(f"{name} must be finite and non-negative")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-12):
        raise ConfigurationError(f"{name} rows must sum to 1")
    return p


class DiscreteProposal:
    """Proposal on the embedded states; ``pmf`` is a vector (independent) or a
    row-stochastic matrix ``pmf[i, j] = q(j | i)`` (random-walk kind)."""

    dim = 1

    def __init__(self, pmf):
        pmf = _check_pmf(pmf, "proposal pmf")
        if pmf.ndim == 2 and pmf.shape[0] != pmf.shape[1]:
            raise ConfigurationError("conditional proposal matrix must be square")
        self.pmf = pmf
        self.kind = RANDOM_WALK if pmf.ndim == 2 else INDEPENDENT
        with np.errstate(divide="ignore"):
            self._log = np.log(pmf)
        self._cdf = np.cumsum(pmf, axis=-1)

    @property
    def is_conditional(self):
        return self.kind == RANDOM_WALK

    def _row(self, table, condition):
        if not self.is_conditional:
            return table
        if condition is None:
            raise UsageError("conditional proposal needs a conditioning point")
        return table[int(_as_index(condition))]

    def sample(self, rng, condition=None, size=None):
        cdf = self._row(self._cdf, condition)
        u = rng.random(1 if size is None else size)
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
        pts = idx.astype(float)[:, None]
        return pts[0] if size is None else pts

    def log_density(self, z, condition=None):
        return self._row(self._log, condition)[_as_index(z)]


@dataclass(frozen=True, eq=False)
class DiscreteSpace:
    target_pmf: np.ndarray
    proposal_pmf: Optional[np.ndarray] = None

    def __post_init__(self):
        pi = np.asarray(self.target_pmf, dtype=float)
        if pi.ndim != 1 or np.any(pi < 0) or not pi.sum() > 0:
            raise ConfigurationError("target pmf must be a non-negative vector with positive mass")
        object.__setattr__(self, "target_pmf", pi / pi.sum())
        if self.proposal_pmf is not None:
            q = _check_pmf(self.proposal_pmf, "proposal matrix")
            if q.shape != (pi.size, pi.size):
                raise ConfigurationError("proposal matrix must be n x n")
            if np.any((q > 0) != (q.T > 0)):
                raise ConfigurationError("proposal matrix must have symmetric support")
            object.__setattr__(self, "proposal_pmf", q)

    @property
    def n(self):
        return self.target_pmf.size

    @property
    def points(self):
        return np.arange(self.n, dtype=float)[:, None]

    def target(self, shift=0.0):
        with np.errstate(divide="ignore"):
            log_pmf = np.log(self.target_pmf) + shift
        return TargetDensity(1, lambda x: log_pmf[_as_index(x)])

    def proposal(self):
        if self.proposal_pmf is None:
            raise UsageError("space has no conditional proposal")
        return DiscreteProposal(self.proposal_pmf)


def random_space(n, rng, symmetric=True, floor=0.05):
    """A space with strictly positive target and (optionally symmetric) proposal."""
    pi = rng.random(n) + floor
    a = rng.random((n, n)) + floor
    if symmetric:
        a = a + a.T
        # doubly-stochastic symmetric matrix via Sinkhorn keeps q(j|i) = q(i|j)
        for _ in range(500):
            a /= a.sum(axis=1, keepdims=True)
            a = 0.5 * (a + a.T)
        a /= a.sum(axis=1, keepdims=True)
    else:
        a /= a.sum(axis=1, keepdims=True)
    return DiscreteSpace(pi / pi.sum(), a)


def random_pmf(n, rng, floor=0.05):
    p = rng.random(n) + floor
    return p / p.sum()


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    entries: np.ndarray
    estimated: bool = False

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


class StationarityReport(NamedTuple):
    l1_residual: float
    passed: bool


class DetailedBalanceReport(NamedTuple):
    max_violation: float
    passed: bool


def _guard(terms):
    if terms > MAX_TERMS:
        raise EnumerationSizeError(f"enumeration needs {terms:.3g} terms, limit is {MAX_TERMS:.0e}")


def exact_rw_mtm_kernel(space, n_tries):
    """Exact RW-MTM transition matrix by enumerating every candidate tuple,
    selected index and auxiliary tuple."""
    if space.proposal_pmf is None:
        raise UsageError("RW-MTM needs a conditional proposal matrix")
    n, big_n = space.n, int(n_tries)
    if big_n < 1:
        raise UsageError("need at least one try")
    _guard(n ** (2 * big_n - 1) * big_n)
    pi, q = space.target_pmf, space.proposal_pmf
    aux = np.array(list(itertools.product(range(n), repeat=big_n - 1)), dtype=int).reshape(n ** (big_n - 1), big_n - 1)
    # per selected z: probability of each auxiliary tuple and its summed weight
    aux_prob = np.array([np.prod(q[z][aux], axis=1) for z in range(n)])
    with np.errstate(divide="ignore", invalid="ignore"):
        w_table = np.where(q > 0, pi[None, :] / q, 0.0)
    aux_wsum = np.array([w_table[z][aux].sum(axis=1) for z in range(n)])
    k = np.zeros((n, n))
    for x in range(n):
        for cand in itertools.product(range(n), repeat=big_n):
            cand = np.array(cand)
            p_c = np.prod(q[x, cand])
            if p_c == 0.0:
                continue
            w = pi[cand] / q[x, cand]
            s = w.sum()
            if s == 0.0:
                k[x, x] += p_c
                continue
            for j in range(big_n):
                if w[j] == 0.0:
                    continue
                z = cand[j]
                den = aux_wsum[z] + pi[x] / q[z, x]
                # den = 0 only when leaving a zero-mass state: always accept
                with np.errstate(divide="ignore"):
                    alpha = np.minimum(1.0, s / den)
                move = p_c * w[j] / s * np.dot(aux_prob[z], alpha)
                k[x, z] += move
                k[x, x] += p_c * w[j] / s - move
    return TransitionMatrix(k)


def _lam(spec, n_idx, a, b):
    f = spec.lambda_for(n_idx)
    return float(np.exp(f(np.array([float(a)]), np.array([float(b)]))))


def exact_imtm_kernel(space, proposals, weight_spec, tries_per_proposal=1, sampling_mode="per-proposal", dm_rule="generic"):
    """Exact I-MTM transition matrix.

    ``proposals`` is a list of pmf vectors.  Covers importance, DM and Liu
    weights, per-proposal and mixture sampling, and the three DM rules of
    :func:`mtm.samplers.imtm_step`.
    """
    pi = space.target_pmf
    n = space.n
    qs = [_check_pmf(p, "proposal pmf") for p in proposals]
    if any(p.shape != (n,) for p in qs):
        raise ConfigurationError("each proposal pmf must have one entry per state")
    big_n = len(qs)
    kk = int(tries_per_proposal)
    slots = big_n * kk
    owners = np.repeat(np.arange(big_n), kk)
    psi = np.mean(qs, axis=0)
    kind = weight_spec.kind
    mixture = sampling_mode == "mixture"
    if kind == LIU_LAMBDA and np.any(pi == 0):
        raise UsageError("generic weights need a strictly positive target")
    if kind == DM_MIXTURE and not mixture and dm_rule == "generic" and np.any(pi == 0):
        raise UsageError("generic weights need a strictly positive target")
    slot_q = [psi] * slots if mixture else [qs[o] for o in owners]
    _guard(n**slots * slots * n)
    k = np.zeros((n, n))

    if kind == DM_MIXTURE and not mixture and dm_rule == "embedded":
        for x in range(n):
            for s in range(slots):
                p_s = slot_q[s][x] / (slots * psi[x])
                if p_s == 0.0:
                    continue
                for rest in itertools.product(range(n), repeat=slots - 1):
                    tup = list(rest)
                    tup.insert(s, x)
                    p_r = np.prod([slot_q[t][tup[t]] for t in range(slots) if t != s])
                    if p_r == 0.0:
                        continue
                    w = np.array([pi[a] / psi[a] for a in tup])
                    tot = w.sum()
                    if tot == 0.0:
                        k[x, x] += p_s * p_r
                        continue
                    for j in range(slots):
                        k[x, tup[j]] += p_s * p_r * w[j] / tot
        return TransitionMatrix(k)

    def weight(slot, a, cond):
        if kind == LIU_LAMBDA:
            return pi[a] * slot_q[slot][cond] * _lam(weight_spec, 0 if mixture else owners[slot], a, cond)
        if kind == DM_MIXTURE or mixture:
            return pi[a] / psi[a]
        return pi[a] / slot_q[slot][a]

    generic = kind == LIU_LAMBDA or (kind == DM_MIXTURE and not mixture and dm_rule == "generic")
    for x in range(n):
        for cand in itertools.product(range(n), repeat=slots):
            p_c = np.prod([slot_q[t][cand[t]] for t in range(slots)])
            if p_c == 0.0:
                continue
            w = np.array([weight(t, cand[t], x) for t in range(slots)])
            tot = w.sum()
            if tot == 0.0:
                k[x, x] += p_c
                continue
            for j in range(slots):
                if w[j] == 0.0:
                    continue
                z = cand[j]
                if generic:
                    rev = np.array([weight(t, cand[t], z) for t in range(slots)])
                    rev[j] = weight(j, x, z)
                    qj = slot_q[j]
                    ratio = pi[z] * qj[x] / (pi[x] * qj[z]) * (rev[j] / rev.sum()) / (w[j] / tot)
                else:
                    ratio = tot / (tot - w[j] + weight(j, x, x))
                alpha = min(1.0, ratio)
                k[x, z] += p_c * w[j] / tot * alpha
                k[x, x] += p_c * w[j] / tot * (1.0 - alpha)
    return TransitionMatrix(k)


def metropolis_kernel(space):
    """Textbook Metropolis kernel for a symmetric proposal matrix."""
    pi, q = space.target_pmf, space.proposal_pmf
    with np.errstate(divide="ignore", invalid="ignore"):
        acc = np.minimum(1.0, pi[None, :] / pi[:, None])
    k = q * np.nan_to_num(acc, nan=1.0)
    np.fill_diagonal(k, 0.0)
    np.fill_diagonal(k, 1.0 - k.sum(axis=1))
    return TransitionMatrix(k)


def independence_mh_kernel(space, proposal_pmf):
    """Independence Metropolis-Hastings kernel with importance ratio w = pi/q."""
    pi, q = space.target_pmf, np.asarray(proposal_pmf, dtype=float)
    w = pi / q
    acc = np.minimum(1.0, w[None, :] / w[:, None])
    k = q[None, :] * acc
    np.fill_diagonal(k, 0.0)
    np.fill_diagonal(k, 1.0 - k.sum(axis=1))
    return TransitionMatrix(k)


def mixture_kernel(kernels):
    """Uniform average of transition matrices."""
    mats = [np.asarray(kern, dtype=float) for kern in kernels]
    return TransitionMatrix(np.mean(mats, axis=0))


def perturb_kernel(kernel, row=0, col=1, amount=1e-3):
    """Add ``amount`` to one entry and renormalize that row."""
    k = np.array(kernel, dtype=float)
    k[row, col] += amount
    k[row] /= k[row].sum()
    return TransitionMatrix(k)


def mc_kernel_estimate(step_function, space, samples_per_state, rng):
    """Estimate the transition matrix by running ``step_function(x, rng)`` from
    every state ``samples_per_state`` times.

    ``step_function`` may return a point or a ``(point, record)`` pair.
    """
    n = space.n
    counts = np.zeros((n, n))
    for i, x in enumerate(space.points):
        for _ in range(samples_per_state):
            out = step_function(x, rng)
            if isinstance(out, tuple):
                out = out[0]
            counts[i, int(_as_index(out))] += 1
    return TransitionMatrix(counts / samples_per_state, estimated=True)


def mc_tolerance(samples_per_state, n_se=4.0):
    """``n_se`` worst-case binomial standard errors for one kernel entry."""
    return n_se * np.sqrt(0.25 / samples_per_state)


def _kernel_and_pi(kernel, pi):
    k = np.asarray(kernel, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or pi.shape != (k.shape[0],):
        raise UsageError(f"kernel {k.shape} and distribution {pi.shape} do not match")
    return k, pi / pi.sum()


def check_stationarity(kernel, pi, tol=EXACT_TOL):
    """``||pi K - pi||_1`` and whether it is below ``tol``."""
    k, pi = _kernel_and_pi(kernel, pi)
    res = float(np.abs(pi @ k - pi).sum())
    return StationarityReport(res, res < tol)


def check_detailed_balance(kernel, pi, tol=EXACT_TOL):
    """``max_ij |pi_i K_ij - pi_j K_ji|`` and whether it is below ``tol``."""
    k, pi = _kernel_and_pi(kernel, pi)
    flow = pi[:, None] * k
    viol = float(np.abs(flow - flow.T).max())
    return DetailedBalanceReport(viol, viol < tol)
