"""Multiple-try Metropolis kernels and the chain runner.

Random stream discipline.  Every draw comes from the single ``rng`` handed to
a step, in this order:

* ``rw_mtm_step``: N candidates, N Gumbel keys for the selection, N-1
  auxiliary points, one uniform for the accept test.  A degenerate candidate
  set (all weights zero) stops after the candidates.
* ``variable_n_step``: one integer picking the try count (skipped when the
  schedule has a single entry), then ``rw_mtm_step``.
* ``imtm_step``: candidates proposal by proposal in block order (or P draws
  from the mixture), P Gumbel keys, one uniform.  The ``embedded`` DM rule
  instead draws P Gumbel keys for the slot of the current state, the P-1
  fresh candidates, and P Gumbel keys for the selection.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._numeric import logsumexp
from .densities import MixtureProposal
from .errors import ChainError, ConfigurationError, InvariantViolation, UsageError
from .weights import (
    DM_MIXTURE,
    IMPORTANCE,
    LIU_LAMBDA,
    WeightSpec,
    importance_log_weight,
    log_mean_weight,
    normalize_and_select,
)

RW_MTM = "rw-mtm"
IMTM = "imtm"
PER_PROPOSAL = "per-proposal"
MIXTURE = "mixture"

# Acceptance rules for DM weights with one candidate block per proposal.
DM_EMBEDDED = "embedded"
DM_GENERIC = "generic"
DM_REPLACE_ONE = "replace-one"
DM_RULES = (DM_EMBEDDED, DM_GENERIC, DM_REPLACE_ONE)

NEG_INF = float("-inf")


@dataclass(slots=True)
class IterationRecord:
    """What happened at one iteration.

    ``log_z_hat_num`` and ``log_z_hat_den`` are the logs of the two
    normalizing-constant estimates whose ratio drives the acceptance test;
    they are kept in log space because the raw values routinely underflow.
    Rejected iterations still carry the selected candidate.
    """

    n_used: int
    alpha: float
    accepted: bool
    selected_candidate: Optional[np.ndarray]
    log_z_hat_num: float
    log_z_hat_den: float

    @property
    def z_hat_num(self):
        return float(np.exp(self.log_z_hat_num))

    @property
    def z_hat_den(self):
        return float(np.exp(self.log_z_hat_den))


@dataclass
class ChainTrace:
    states: np.ndarray
    records: List[IterationRecord]

    def __len__(self):
        return len(self.records)

    @property
    def alphas(self):
        return np.array([r.alpha for r in self.records])

    @property
    def accepted(self):
        return np.array([r.accepted for r in self.records], dtype=bool)

    @property
    def n_used(self):
        return np.array([r.n_used for r in self.records], dtype=int)


@dataclass(frozen=True, eq=False)
class SamplerConfig:
    """Everything that defines a chain except the target and starting point.

    ``tries`` is the fixed number of tries N or, for ``rw-mtm``, a tuple
    ``(N_1, ..., N_M)`` drawn uniformly at each iteration.  ``imtm`` always
    uses one block of ``tries_per_proposal`` candidates per proposal.
    """

    variant: str
    proposals: Sequence
    tries: Union[int, Sequence[int]] = 1
    weight_spec: WeightSpec = field(default_factory=WeightSpec)
    sampling_mode: str = PER_PROPOSAL
    tries_per_proposal: int = 1
    dm_rule: str = DM_GENERIC
    chain_length: int = 0
    seed: int = 0
    schedule: Tuple[int, ...] = field(init=False)
    mixture: Optional[MixtureProposal] = field(init=False, repr=False)
    owners: Optional[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        props = self.proposals
        if not isinstance(props, (list, tuple)):
            props = (props,)
        props = tuple(props)
        object.__setattr__(self, "proposals", props)
        if not props:
            raise ConfigurationError("need at least one proposal")
        if int(self.chain_length) != self.chain_length or self.chain_length < 0:
            raise ConfigurationError("chain_length must be a non-negative integer")
        tries = (self.tries,) if np.isscalar(self.tries) else tuple(self.tries)
        if not tries or any(int(n) != n or n < 1 for n in tries):
            raise ConfigurationError(f"try counts must be positive integers, got {self.tries!r}")
        object.__setattr__(self, "schedule", tuple(int(n) for n in tries))
        object.__setattr__(self, "mixture", None)
        object.__setattr__(self, "owners", None)
        spec = self.weight_spec
        if self.variant == RW_MTM:
            if len(props) != 1 or not props[0].is_conditional:
                raise ConfigurationError("rw-mtm needs exactly one random-walk proposal")
            if spec.kind != IMPORTANCE:
                raise ConfigurationError("rw-mtm supports importance weights only")
        elif self.variant == IMTM:
            if any(p.is_conditional for p in props):
                raise ConfigurationError("imtm proposals must be independent of the state")
            if self.schedule != (1,):
                raise ConfigurationError("imtm takes its try count from the proposals; use tries_per_proposal")
            k = self.tries_per_proposal
            if int(k) != k or k < 1:
                raise ConfigurationError("tries_per_proposal must be a positive integer")
            if self.sampling_mode not in (PER_PROPOSAL, MIXTURE):
                raise ConfigurationError(f"unknown sampling_mode {self.sampling_mode!r}")
            if self.dm_rule not in DM_RULES:
                raise ConfigurationError(f"unknown dm_rule {self.dm_rule!r}; expected one of {DM_RULES}")
            if spec.kind == DM_MIXTURE and spec.components is not None:
                if len(spec.components) != len(props) or any(a is not b for a, b in zip(spec.components, props)):
                    raise ConfigurationError("dm-mixture weights must use the sampler's own proposals")
            if spec.kind == LIU_LAMBDA and not callable(spec.log_lambda):
                expected = 1 if self.sampling_mode == MIXTURE else len(props)
                if len(spec.log_lambda) != expected:
                    raise ConfigurationError(f"need {expected} lambda function(s), got {len(spec.log_lambda)}")
            object.__setattr__(self, "mixture", MixtureProposal(props))
            object.__setattr__(self, "owners", np.repeat(np.arange(len(props)), int(k)))
        else:
            raise ConfigurationError(f"unknown variant {self.variant!r}")

    @property
    def n_tries(self):
        """Candidates per iteration (P = kN for imtm, the mean of the schedule for rw-mtm)."""
        if self.variant == IMTM:
            return len(self.proposals) * self.tries_per_proposal
        return float(np.mean(self.schedule))

    @property
    def uses_generic_acceptance(self):
        kind = self.weight_spec.kind
        if self.variant != IMTM:
            return False
        if kind == LIU_LAMBDA:
            return True
        return kind == DM_MIXTURE and self.sampling_mode == PER_PROPOSAL and self.dm_rule == DM_GENERIC


def chain_rng(master_seed, *keys):
    """Independent stream for one chain: ``SeedSequence([master_seed, *keys])``.

    Keys are non-negative integers such as a run index.  Streams for distinct
    key tuples are statistically independent and do not depend on the order
    in which chains are executed.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *(int(k) for k in keys)]))


def _alpha(log_ratio):
    if log_ratio >= 0.0:
        return 1.0
    return float(np.exp(log_ratio))


def _replace_log_sum(log_w, j, value):
    swapped = log_w.copy()
    swapped[j] = value
    return swapped


def alfa2_log_acceptance(log_w, j, log_w_j_at_x):
    """``log min[1, S / (S - w_j(z_j) + w_j(x))]`` with ``S = sum_n w_n(z_n)``."""
    rev = _replace_log_sum(log_w, j, log_w_j_at_x)
    return min(0.0, float(logsumexp(log_w) - logsumexp(rev)))


def generic_log_acceptance(log_pi_z, log_pi_x, log_qj_z, log_qj_x, log_w_fwd, log_w_rev, j):
    """Acceptance for arbitrary positive weights.

    ``log_w_fwd`` are the candidate weights seen from the current state x.
    ``log_w_rev`` are the weights of the reversed set (slot ``j`` holding x)
    seen from the proposed point ``z_j``.  When weights do not depend on the
    conditioning point this is::

        min[1, pi(z_j) q_j(x) / (pi(x) q_j(z_j)) * W_X / W_Z]

    with ``W_Z = w_j(z_j) / sum_n w_n(z_n)`` and
    ``W_X = w_j(x) / (sum_n w_n(z_n) - w_j(z_j) + w_j(x))``.
    """
    log_wz = log_w_fwd[j] - logsumexp(log_w_fwd)
    log_wx = log_w_rev[j] - logsumexp(log_w_rev)
    return min(0.0, float(log_pi_z + log_qj_x - log_pi_x - log_qj_z + log_wx - log_wz))


def _reject(n, x_prev, log_num=NEG_INF, log_den=NEG_INF, candidate=None, alpha=0.0):
    return x_prev, IterationRecord(n, alpha, False, candidate, log_num, log_den)


def rw_mtm_step(x_prev, target, proposal, n, rng):
    """One random-walk MTM iteration with importance weights.

    Draws N tries around ``x_prev``, picks one with probability proportional to
    its weight, draws N-1 reference points around the pick and appends
    ``x_prev``, then accepts with ``min[1, Z1 / Z2]`` where Z1 and Z2 are the
    mean weights of the tries and of the reference points.
    """
    if not proposal.is_conditional:
        raise UsageError("rw_mtm_step needs a random-walk proposal")
    if n < 1:
        raise UsageError("need at least one try")
    x_prev = np.asarray(x_prev, dtype=float)
    z = proposal.sample(rng, x_prev, size=n)
    log_w = importance_log_weight(z, target, proposal, x_prev)
    sel = normalize_and_select(log_w, rng)
    if sel.degenerate:
        return _reject(n, x_prev)
    z_sel = z[sel.index]
    y = np.vstack([proposal.sample(rng, z_sel, size=n - 1), x_prev[None, :]])
    log_w_y = importance_log_weight(y, target, proposal, z_sel)
    log_num = log_mean_weight(log_w)
    log_den = log_mean_weight(log_w_y)
    alpha = _alpha(log_num - log_den)
    accepted = bool(rng.random() < alpha)
    record = IterationRecord(n, alpha, accepted, z_sel, log_num, log_den)
    return (z_sel if accepted else x_prev), record


def variable_n_step(x_prev, target, proposal, schedule, rng):
    """Uniform mixture of RW-MTM kernels with try counts ``schedule``."""
    schedule = tuple(schedule)
    if not schedule:
        raise UsageError("schedule must not be empty")
    n = schedule[0] if len(schedule) == 1 else schedule[int(rng.integers(len(schedule)))]
    return rw_mtm_step(x_prev, target, proposal, n, rng)


def _per_slot_log_density(proposals, owners, points):
    out = np.empty(points.shape[0])
    for m, prop in enumerate(proposals):
        mask = owners == m
        if mask.any():
            out[mask] = prop.log_density(points[mask])
    return out


def _draw_blocks(proposals, counts, rng):
    return np.vstack([prop.sample(rng, size=c) for prop, c in zip(proposals, counts)])


def _liu_log_weights(spec, proposals, owners, log_pi, points, cond, mixture=None):
    log_w = np.empty(points.shape[0])
    for m in np.unique(owners):
        mask = owners == m
        prop = mixture if mixture is not None else proposals[m]
        log_lam = np.asarray(spec.lambda_for(0 if mixture is not None else m)(points[mask], cond), dtype=float)
        if not np.all(np.isfinite(log_lam)):
            raise ConfigurationError("lambda must be positive and finite")
        log_w[mask] = log_pi[mask] + prop.log_density(cond) + log_lam
    return log_w


def imtm_step(x_prev, target, config, rng):
    """One independent-proposal MTM iteration.

    Per-proposal mode draws ``tries_per_proposal`` candidates from each
    proposal; mixture mode draws all of them from the equal mixture ``psi``.
    Importance weights (and any weights in mixture mode that reduce to
    ``pi / psi``) use ``min[1, S / (S - w_j(z_j) + w_j(x))]``; Liu weights use
    the generic rule of :func:`generic_log_acceptance`.  DM weights in
    per-proposal mode follow ``config.dm_rule``:

    ``generic`` (default)
        Fresh candidates, DM weights, generic acceptance.  Exactly
        pi-invariant; needs ``pi(x) > 0`` at the current state.
    ``embedded``
        The current state takes one of the P slots, chosen with probability
        proportional to its proposal density there; the other P-1 slots get
        fresh draws and the next state is picked from all P points by DM
        weight.  Exactly pi-invariant, but with one try per proposal the
        current state usually occupies the slot of the best-placed proposal,
        and the chain can then sit still for thousands of iterations.
    ``replace-one``
        Fresh candidates, DM weights, ``min[1, S / (S - w(z_j) + w(x))]``.
        Only approximately pi-invariant; kept for comparison.
    """
    if config.variant != IMTM:
        raise UsageError("imtm_step needs an imtm config")
    x_prev = np.asarray(x_prev, dtype=float)
    spec = config.weight_spec
    props, owners, psi = config.proposals, config.owners, config.mixture
    p = owners.size
    if config.sampling_mode == PER_PROPOSAL and spec.kind == DM_MIXTURE and config.dm_rule == DM_EMBEDDED:
        return _dm_embedded_step(x_prev, target, config, rng)

    if config.sampling_mode == MIXTURE:
        z = psi.sample(rng, size=p)
    else:
        z = _draw_blocks(props, [config.tries_per_proposal] * len(props), rng)
    log_pi_all = target(np.vstack([z, x_prev[None, :]]))
    log_pi_z, log_pi_x = log_pi_all[:-1], float(log_pi_all[-1])

    mixture_like = config.sampling_mode == MIXTURE or spec.kind == DM_MIXTURE
    if spec.kind == LIU_LAMBDA:
        if not log_pi_x > NEG_INF:
            raise InvariantViolation("generic weights need pi(x) > 0 at the current state")
        mix = psi if config.sampling_mode == MIXTURE else None
        log_w = _liu_log_weights(spec, props, owners, log_pi_z, z, x_prev, mix)
    elif mixture_like:
        log_psi_z = psi.log_density(z)
        if np.isneginf(log_psi_z).any():
            raise InvariantViolation("mixture density is zero at a drawn candidate")
        log_w = log_pi_z - log_psi_z
    else:
        log_q_z = _per_slot_log_density(props, owners, z)
        if np.isneginf(log_q_z).any():
            raise InvariantViolation("proposal density is zero at its own draw")
        log_w = log_pi_z - log_q_z

    sel = normalize_and_select(log_w, rng)
    if sel.degenerate:
        return _reject(p, x_prev)
    j = sel.index
    z_j = z[j]
    log_num = log_mean_weight(log_w)

    generic = config.uses_generic_acceptance
    if not generic:
        if mixture_like:
            log_w_jx = log_pi_x - float(psi.log_density(x_prev))
        else:
            log_w_jx = log_pi_x - float(props[owners[j]].log_density(x_prev))
        log_rev = _replace_log_sum(log_w, j, log_w_jx)
        log_alpha = alfa2_log_acceptance(log_w, j, log_w_jx)
    else:
        if not log_pi_x > NEG_INF:
            raise InvariantViolation("generic weights need pi(x) > 0 at the current state")
        q_j = psi if config.sampling_mode == MIXTURE else props[owners[j]]
        if spec.kind == LIU_LAMBDA:
            rev_points = z.copy()
            rev_points[j] = x_prev
            rev_log_pi = log_pi_z.copy()
            rev_log_pi[j] = log_pi_x
            mix = psi if config.sampling_mode == MIXTURE else None
            log_rev = _liu_log_weights(spec, props, owners, rev_log_pi, rev_points, z_j, mix)
        else:
            log_rev = _replace_log_sum(log_w, j, log_pi_x - float(psi.log_density(x_prev)))
        log_alpha = generic_log_acceptance(
            float(log_pi_z[j]), log_pi_x, float(q_j.log_density(z_j)), float(q_j.log_density(x_prev)), log_w, log_rev, j
        )
    log_den = log_mean_weight(log_rev)
    alpha = _alpha(log_alpha)
    accepted = bool(rng.random() < alpha)
    record = IterationRecord(p, alpha, accepted, z_j, log_num, log_den)
    return (z_j if accepted else x_prev), record


def _dm_embedded_step(x_prev, target, config, rng):
    props, owners, psi = config.proposals, config.owners, config.mixture
    p = owners.size
    log_q_x = np.array([float(q.log_density(x_prev)) for q in props])
    slot = normalize_and_select(log_q_x[owners], rng)
    if slot.degenerate:
        raise InvariantViolation("current state lies outside the support of every proposal")
    s = slot.index
    counts = np.bincount(owners, minlength=len(props))
    counts[owners[s]] -= 1
    fresh = _draw_blocks(props, counts, rng)
    points = np.insert(fresh, s, x_prev, axis=0)
    log_w = target(points) - psi.log_density(points)
    sel = normalize_and_select(log_w, rng)
    if sel.degenerate:
        return _reject(p, x_prev)
    j = sel.index
    log_z = log_mean_weight(log_w)
    alpha = float(1.0 - sel.probs[s])
    accepted = j != s
    record = IterationRecord(p, min(max(alpha, 0.0), 1.0), accepted, points[j], log_z, log_z)
    return (points[j] if accepted else x_prev), record


def make_step(config, target):
    """Bind ``config`` and ``target`` into ``step(x, rng) -> (x_new, record)``."""
    if config.variant == RW_MTM:
        proposal = config.proposals[0]
        schedule = config.schedule
        if len(schedule) == 1:
            n = schedule[0]
            return lambda x, rng: rw_mtm_step(x, target, proposal, n, rng)
        return lambda x, rng: variable_n_step(x, target, proposal, schedule, rng)
    return lambda x, rng: imtm_step(x, target, config, rng)


def run_chain(config, target, x0, rng=None, until: Optional[Callable[[np.ndarray], bool]] = None):
    """Run ``config.chain_length`` iterations from ``x0``.

    ``rng`` defaults to a stream seeded with ``config.seed``.  If ``until`` is
    given the chain stops right after the first state for which it returns
    true, so the trace may be shorter than ``chain_length``.

    Raises:
        ChainError: wrapping whatever a step raised, with the iteration index.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (target.dim,):
        raise UsageError(f"x0 must have shape ({target.dim},), got {x.shape}")
    if config.uses_generic_acceptance and not target(x) > NEG_INF:
        raise UsageError("generic weights need pi(x0) > 0")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    step = make_step(config, target)
    total = int(config.chain_length)
    states = np.empty((total + 1, x.shape[0]))
    states[0] = x
    records = []
    for t in range(1, total + 1):
        try:
            x, record = step(x, rng)
        except Exception as exc:
            raise ChainError(t, exc) from exc
        states[t] = x
        records.append(record)
        if until is not None and until(x):
            states = states[: t + 1]
            break
    return ChainTrace(states, records)
