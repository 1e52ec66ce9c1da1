"""Target and proposal densities, all evaluated in log space.

Every density takes points as arrays of shape ``(..., d)`` and returns log
values of shape ``(...)``.  Zero density is ``-inf``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from ._numeric import logsumexp
from .errors import ConfigurationError, InvariantViolation, UsageError

LOG_2PI = float(np.log(2.0 * np.pi))

RANDOM_WALK = "random-walk"
INDEPENDENT = "independent"
MIXTURE = "mixture-of-independents"


def _cholesky(covariance, dim=None):
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ConfigurationError(f"covariance must be square, got shape {cov.shape}")
    if dim is not None and cov.shape[0] != dim:
        raise ConfigurationError(f"covariance is {cov.shape[0]}x{cov.shape[0]}, expected dimension {dim}")
    if not np.all(np.isfinite(cov)) or not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise ConfigurationError("covariance must be finite and symmetric")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError("covariance is not positive definite") from exc
    if np.any(np.diag(chol) <= 0.0):
        raise ConfigurationError("covariance is not positive definite")
    return cov, chol


def gaussian_log_density(z, mean, covariance):
    """Log of the normalized multivariate normal density N(z; mean, covariance).

    Raises:
        ConfigurationError: if ``covariance`` is not symmetric positive definite.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    _, chol = _cholesky(covariance, mean.shape[0])
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != mean.shape[0]:
        raise UsageError(f"point has dimension {z.shape[-1]}, mean has {mean.shape[0]}")
    diff = (z - mean).reshape(-1, mean.shape[0])
    sol = solve_triangular(chol, diff.T, lower=True)
    maha = np.sum(sol * sol, axis=0).reshape(z.shape[:-1])
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    out = -0.5 * (mean.shape[0] * LOG_2PI + log_det + maha)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class TargetDensity:
    """Unnormalized target ``pi`` over R^dim.

    ``log_density`` must accept an array of shape ``(..., dim)`` and return an
    array of shape ``(...)``.  Calling the object evaluates it and enforces the
    contract: no ``NaN`` and no ``+inf``.
    """

    dim: int
    log_density: Callable[[np.ndarray], np.ndarray]
    known_normalizer: Optional[float] = None

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigurationError(f"dim must be a positive integer, got {self.dim!r}")
        if self.known_normalizer is not None and not self.known_normalizer > 0:
            raise ConfigurationError("known_normalizer must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise UsageError(f"point has dimension {x.shape[-1]}, target has {self.dim}")
        out = np.asarray(self.log_density(x), dtype=float)
        # one comparison rejects both NaN and +inf
        if not np.all(out < np.inf):
            raise InvariantViolation("target log-density returned NaN or +inf")
        return out[()] if out.ndim == 0 else out


def gaussian_target(mean, covariance, normalized=True):
    """A Gaussian target; with ``normalized=True`` its normalizer is exactly 1."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    prop = GaussianProposal(INDEPENDENT, mean, covariance)
    if normalized:
        return TargetDensity(mean.shape[0], prop.log_density, known_normalizer=1.0)
    offset = 0.5 * mean.shape[0] * LOG_2PI + 0.5 * prop.log_det

    def log_density(x):
        return prop.log_density(x) + offset

    return TargetDensity(mean.shape[0], log_density, known_normalizer=float(np.exp(offset)))


@dataclass(frozen=True, eq=False)
class GaussianProposal:
    """Gaussian proposal, either random-walk ``q(z|x) = N(z; x, C)`` or
    independent ``q(z) = N(z; mean, C)``.

    The Cholesky factor and its inverse are computed once here.
    """

    kind: str
    mean: Optional[np.ndarray]
    covariance: np.ndarray
    dim: int = field(init=False)
    chol: np.ndarray = field(init=False, repr=False)
    chol_inv: np.ndarray = field(init=False, repr=False)
    log_det: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in (RANDOM_WALK, INDEPENDENT):
            raise ConfigurationError(f"unknown Gaussian proposal kind {self.kind!r}")
        if self.kind == INDEPENDENT:
            if self.mean is None:
                raise ConfigurationError("independent proposal needs a mean")
            mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
            if not np.all(np.isfinite(mean)):
                raise ConfigurationError("proposal mean must be finite")
            object.__setattr__(self, "mean", mean)
        else:
            object.__setattr__(self, "mean", None)
        dim = None if self.mean is None else self.mean.shape[0]
        cov, chol = _cholesky(self.covariance, dim)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "dim", cov.shape[0])
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "chol_inv", solve_triangular(chol, np.eye(cov.shape[0]), lower=True))
        object.__setattr__(self, "log_det", float(2.0 * np.sum(np.log(np.diag(chol)))))

    @classmethod
    def random_walk(cls, dim, sigma):
        """Isotropic random walk with covariance ``sigma**2 * I``."""
        return cls(RANDOM_WALK, None, sigma**2 * np.eye(dim))

    @classmethod
    def independent(cls, mean, sigma):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls(INDEPENDENT, mean, sigma**2 * np.eye(mean.shape[0]))

    @property
    def is_conditional(self):
        return self.kind == RANDOM_WALK

    def _center(self, condition):
        if self.kind == RANDOM_WALK:
            if condition is None:
                raise UsageError("random-walk proposal needs a conditioning point")
            return np.asarray(condition, dtype=float)
        return self.mean

    def sample(self, rng, condition=None, size=None):
        """One draw of shape ``(dim,)``, or ``size`` draws of shape ``(size, dim)``."""
        center = self._center(condition)
        shape = (self.dim,) if size is None else (size, self.dim)
        eps = rng.standard_normal(shape)
        return center + eps @ self.chol.T

    def log_density(self, z, condition=None):
        center = self._center(condition)
        sol = (np.asarray(z, dtype=float) - center) @ self.chol_inv.T
        maha = np.einsum("...i,...i->...", sol, sol)
        return -0.5 * (self.dim * LOG_2PI + self.log_det + maha)


@dataclass(frozen=True, eq=False)
class MixtureProposal:
    """Equal-weight mixture ``psi(z) = (1/N) sum_n q_n(z)`` of independent proposals."""

    components: Sequence
    kind: str = field(init=False, default=MIXTURE)
    dim: int = field(init=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ConfigurationError("mixture needs at least one component")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise ConfigurationError(f"mixture components disagree on dimension: {sorted(dims)}")
        if any(c.is_conditional for c in comps):
            raise ConfigurationError("mixture components must be independent proposals")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "dim", dims.pop())

    is_conditional = False

    def sample(self, rng, condition=None, size=None):
        n = 1 if size is None else size
        which = rng.integers(len(self.components), size=n)
        out = np.empty((n, self.dim))
        for m, comp in enumerate(self.components):
            mask = which == m
            count = int(mask.sum())
            if count:
                out[mask] = comp.sample(rng, size=count)
        return out[0] if size is None else out

    def log_density(self, z, condition=None):
        return mixture_log_density(z, self.components)


def sample_proposal(proposal, condition, rng):
    """Draw one point from ``q(.|condition)`` or ``q(.)``."""
    if proposal.is_conditional and condition is None:
        raise UsageError("random-walk proposal needs a conditioning point")
    return proposal.sample(rng, condition)


def mixture_log_density(z, components):
    """``log((1/N) sum_n q_n(z))`` via log-sum-exp."""
    comps = tuple(components)
    if not comps:
        raise UsageError("mixture needs at least one component")
    logs = np.stack([np.asarray(c.log_density(z), dtype=float) for c in comps])
    out = logsumexp(logs, axis=0) - np.log(len(comps))
    return out[()] if np.ndim(out) == 0 else out
