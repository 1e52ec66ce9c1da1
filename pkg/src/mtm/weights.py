"""Weight functions for choosing among tries, and the normalizing-constant estimator.

Three families are supported:

* importance weights ``pi(z) / q(z|x)``,
* deterministic-mixture (DM) weights ``pi(z) / psi(z)`` where ``psi`` is the
  equal mixture of all proposals,
* Liu's generic class ``pi(z) * q_n(x) * lambda(z, x)`` with ``lambda``
  symmetric in its two arguments.

``lambda`` is always supplied in log form.  Everything returned is a log
weight; ``-inf`` encodes a zero weight.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np

from ._numeric import logsumexp
from .densities import mixture_log_density
from .errors import ConfigurationError, InvariantViolation, UsageError

IMPORTANCE = "importance"
DM_MIXTURE = "dm-mixture"
LIU_LAMBDA = "liu-lambda"
WEIGHT_KINDS = (IMPORTANCE, DM_MIXTURE, LIU_LAMBDA)

LogLambda = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Which weight function a sampler uses.

    Args:
        kind: one of ``"importance"``, ``"dm-mixture"``, ``"liu-lambda"``.
        log_lambda: for ``liu-lambda``, ``log lambda(z, x)``; either one
            callable shared by all proposals or a sequence with one callable
            per proposal.  Each must broadcast over leading axes and be
            symmetric in its arguments.
        components: for ``dm-mixture``, the proposals forming the mixture.
            Samplers fill this in from their own proposals when omitted.
    """

    kind: str = IMPORTANCE
    log_lambda: Optional[Union[LogLambda, Sequence[LogLambda]]] = None
    components: Optional[Sequence] = None

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ConfigurationError(f"unknown weight kind {self.kind!r}; expected one of {WEIGHT_KINDS}")
        if self.kind == LIU_LAMBDA and self.log_lambda is None:
            raise ConfigurationError("liu-lambda weights need log_lambda")
        if self.kind != LIU_LAMBDA and self.log_lambda is not None:
            raise ConfigurationError("log_lambda is only meaningful for liu-lambda weights")
        if self.components is not None:
            comps = tuple(self.components)
            if self.kind == DM_MIXTURE and not comps:
                raise ConfigurationError("dm-mixture weights need at least one component")
            object.__setattr__(self, "components", comps)

    def lambda_for(self, n):
        """The log-lambda callable attached to proposal ``n``."""
        if callable(self.log_lambda):
            return self.log_lambda
        return self.log_lambda[n]


class Selection(NamedTuple):
    probs: np.ndarray
    index: Optional[int]

    @property
    def degenerate(self):
        return self.index is None


@dataclass(frozen=True, eq=False)
class WeightedCandidates:
    points: np.ndarray
    log_weights: np.ndarray
    selection_probs: np.ndarray
    selected_index: Optional[int]


def _check_proposal_support(log_q):
    if np.isneginf(log_q).any() or np.isnan(log_q).any():
        raise InvariantViolation("proposal density is zero at a point it is asked to weight")


def importance_log_weight(z, target, proposal, condition=None):
    """``log pi(z) - log q(z|condition)``; ``-inf`` exactly where ``pi(z) = 0``.

    Raises:
        InvariantViolation: if ``q(z|condition) = 0``.
    """
    log_q = np.asarray(proposal.log_density(z, condition), dtype=float)
    _check_proposal_support(log_q)
    out = target(z) - log_q
    return out[()] if np.ndim(out) == 0 else out


def dm_log_weight(z, target, components):
    """``log pi(z) - log psi(z)`` with ``psi`` the equal mixture of ``components``."""
    log_psi = np.asarray(mixture_log_density(z, components), dtype=float)
    _check_proposal_support(log_psi)
    out = target(z) - log_psi
    return out[()] if np.ndim(out) == 0 else out


def liu_log_weight(z, x, target, proposal_n, log_lambda):
    """``log pi(z) + log q_n(x) + log lambda(z, x)``.

    ``lambda`` must be positive, so ``log_lambda`` must return finite values.
    Boundedness of ``lambda`` is the caller's responsibility.
    """
    log_lam = np.asarray(log_lambda(np.asarray(z, dtype=float), np.asarray(x, dtype=float)), dtype=float)
    if not np.all(np.isfinite(log_lam)):
        raise ConfigurationError("lambda must be positive and finite")
    out = target(z) + proposal_n.log_density(x) + log_lam
    return out[()] if np.ndim(out) == 0 else out


def named_log_lambda(name, proposal):
    """Ready-made symmetric ``log lambda`` functions tied to one proposal.

    ``"constant"``: lambda = 1.
    ``"importance"``: lambda = 1 / (q(z) q(x)), which turns Liu weights into
    importance weights.
    ``"inverse-sum"``: lambda = 1 / (q(z) + q(x)).
    """
    if name == "constant":
        return lambda z, x: np.zeros(np.broadcast_shapes(np.shape(z), np.shape(x))[:-1])
    if name == "importance":
        return lambda z, x: -(proposal.log_density(z) + proposal.log_density(x))
    if name == "inverse-sum":
        return lambda z, x: -np.logaddexp(proposal.log_density(z), proposal.log_density(x))
    raise ConfigurationError(f"unknown lambda {name!r}; expected constant, importance or inverse-sum")


def normalize_and_select(log_weights, rng):
    """Normalize log weights and draw one index in proportion to them.

    The draw uses the Gumbel-max rule, so extreme log weights are never
    exponentiated; ties go to the lowest index.  If every weight is zero the
    result has ``index=None`` and all-zero probabilities, and nothing is drawn
    from ``rng``.
    """
    log_weights = np.asarray(log_weights, dtype=float)
    if log_weights.ndim != 1 or log_weights.size == 0:
        raise UsageError("need a non-empty 1-d vector of log weights")
    if not np.all(log_weights < np.inf):
        raise InvariantViolation("log weights must not be NaN or +inf")
    total = logsumexp(log_weights)
    if np.isneginf(total):
        return Selection(np.zeros_like(log_weights), None)
    probs = np.exp(log_weights - total)
    probs /= probs.sum()
    keys = log_weights + rng.gumbel(size=log_weights.size)
    return Selection(probs, int(np.argmax(keys)))


def weigh_and_select(points, log_weights, rng):
    sel = normalize_and_select(log_weights, rng)
    return WeightedCandidates(np.asarray(points), np.asarray(log_weights, dtype=float), sel.probs, sel.index)


def log_mean_weight(log_weights):
    """``log((1/N) sum_n exp(log_weights[n]))``."""
    log_weights = np.asarray(log_weights, dtype=float)
    return float(logsumexp(log_weights) - np.log(log_weights.size))


def normalizing_constant_estimate(points, target, proposal, condition=None):
    """Mean importance weight ``(1/N) sum_n pi(v_n) / q(v_n|condition)``.

    ``points`` should be draws from ``proposal``; the result is then an
    unbiased estimate of the target's normalizing constant.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    if points.shape[0] == 0:
        raise UsageError("need at least one point")
    return float(np.exp(log_mean_weight(importance_log_weight(points, target, proposal, condition))))
