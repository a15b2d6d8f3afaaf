# minar-cli/minar_cli/likelihood.py
"""Conditional mass functions and the conditional log-likelihood.

Given x_{t-1}, series i at time t is the sum of independent
Binomial(x_{j,t-1}, alpha_ij) thinnings and an independent Poisson innovation,
so the joint conditional mass factorizes over series and each factor is a
finite convolution followed by a Poisson convolution.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binom, poisson

from .errors import DomainError, NumericalError
from .layout import ParameterLayout, unpack
from .model import MinarModel, MultiCountSeries

logger = logging.getLogger(__name__)

PMF_TOLERANCE = 1e-12
MASS_FLOOR = 1e-300
ZERO_MASS_PENALTY = -1e10
ENUMERATION_LIMIT = 1_000_000


@dataclass(frozen=True, eq=False)
class ConditionalPmf:
    """Masses on 0..support_max plus the probability truncated beyond it"""

    masses: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        masses = np.array(self.masses, dtype=float).ravel()
        if masses.size == 0 or np.any(masses < 0.0) or not np.all(np.isfinite(masses)):
            raise NumericalError("Masses must be finite and non-negative")
        tail = float(self.tail_mass)
        if tail < 0.0 or abs(masses.sum() + tail - 1.0) > 1e-10:
            raise NumericalError(f"Masses plus tail sum to {masses.sum() + tail!r}, not 1")
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "tail_mass", tail)

    @property
    def support_max(self) -> int:
        return self.masses.size - 1

    def pmf(self, k: int) -> float:
        return float(self.masses[k]) if 0 <= k <= self.support_max else 0.0

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.masses)

    def mean(self) -> float:
        return float(np.arange(self.masses.size) @ self.masses)


def _check_prev(x_prev: Sequence[int], n: int) -> np.ndarray:
    x_prev = np.asarray(x_prev).ravel()
    if x_prev.size != n:
        raise DomainError(f"Conditioning vector must have length {n}, got {x_prev.size}")
    if np.any(x_prev < 0):
        raise DomainError("Conditioning counts must be non-negative")
    return x_prev.astype(np.int64)


def _poisson_part(lam: float, tol: float) -> Tuple[np.ndarray, float]:
    """Poisson pmf on 0..K with K the smallest value reaching CDF >= 1 - tol"""
    K = int(poisson.ppf(1.0 - tol, lam))
    return poisson.pmf(np.arange(K + 1), lam), float(poisson.sf(K, lam))


def _flush(masses: np.ndarray) -> np.ndarray:
    masses[masses < MASS_FLOOR] = 0.0
    return masses


def component_conditional_pmf(
    i: int,
    x_prev: Sequence[int],
    model: MinarModel,
    z: Optional[np.ndarray] = None,
    tol: float = PMF_TOLERANCE,
) -> ConditionalPmf:
    """P(X_it = . | X_{t-1} = x_prev); z is the covariate row at time t in regression mode"""
    if not 0 <= i < model.n:
        raise DomainError(f"Series index {i} outside 0..{model.n - 1}")
    x_prev = _check_prev(x_prev, model.n)
    alphas = model.A.entries[i]
    lam = float(model.innovations.mean(z)[i])

    thinned = np.ones(1)
    for x, alpha in zip(x_prev, alphas):
        if x == 0:
            continue
        thinned = np.convolve(thinned, binom.pmf(np.arange(x + 1), x, alpha))
    pois, tail = _poisson_part(lam, tol)
    return ConditionalPmf(_flush(np.convolve(thinned, pois)), tail)


def brute_force_conditional_pmf(
    i: int,
    x_prev: Sequence[int],
    model: MinarModel,
    z: Optional[np.ndarray] = None,
    max_support: Optional[int] = None,
    tol: float = PMF_TOLERANCE,
) -> ConditionalPmf:
    """Same contract as component_conditional_pmf, by enumerating every thinning outcome"""
    if not 0 <= i < model.n:
        raise DomainError(f"Series index {i} outside 0..{model.n - 1}")
    x_prev = _check_prev(x_prev, model.n)
    combinations = int(np.prod(x_prev + 1))
    if combinations > ENUMERATION_LIMIT:
        raise DomainError(f"{combinations} thinning outcomes exceed the enumeration limit {ENUMERATION_LIMIT}")

    alphas = model.A.entries[i]
    tables = [binom.pmf(np.arange(x + 1), x, alpha) for x, alpha in zip(x_prev, alphas)]
    thinned = np.zeros(int(x_prev.sum()) + 1)
    for outcome in itertools.product(*(range(x + 1) for x in x_prev)):
        weight = 1.0
        for table, s in zip(tables, outcome):
            weight *= table[s]
        thinned[sum(outcome)] += weight

    lam = float(model.innovations.mean(z)[i])
    pois, tail = _poisson_part(lam, tol)
    masses = np.zeros(thinned.size + pois.size - 1)
    for s, weight in enumerate(thinned):
        masses[s:s + pois.size] += weight * pois

    if max_support is not None and masses.size > max_support + 1:
        tail += float(masses[max_support + 1:].sum())
        masses = masses[: max_support + 1]
    return ConditionalPmf(_flush(masses), tail)


def _convolve_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Convolution along the last axis, batched over the leading axes"""
    la, lb = a.shape[-1], b.shape[-1]
    out = np.zeros(a.shape[:-1] + (la + lb - 1,))
    for shift in range(lb):
        out[..., shift:shift + la] += a * b[..., shift:shift + 1]
    return out


def transition_probabilities(model: MinarModel, data: MultiCountSeries) -> np.ndarray:
    """(T-1, n) matrix of f_i(x_it | x_{t-1}) for t = 2..T"""
    if data.n != model.n:
        raise DomainError(f"Data has {data.n} series, model has {model.n}")
    if data.T < 2:
        raise DomainError("Conditional likelihood needs at least two time steps")
    prev = data.counts[:-1]
    following = data.counts[1:]
    steps, n = prev.shape

    covariates = data.covariate_matrix(model.innovations.covariate_names)
    lam = model.innovations.means(None if covariates is None else covariates[1:], steps)

    width = int(prev.max(initial=0)) + 1
    k = np.arange(width)
    # [i, t, j, k] = P(alpha_ij o x_{j,t-1} = k)
    pmfs = binom.pmf(k[None, None, None, :], prev[None, :, :, None], model.A.entries[:, None, :, None])
    thinned = pmfs[:, :, 0, :]
    for j in range(1, n):
        thinned = _convolve_rows(thinned, pmfs[:, :, j, :])

    s = np.arange(thinned.shape[-1])
    remaining = following.T[:, :, None] - s[None, None, :]
    with np.errstate(invalid="ignore"):
        innovation = poisson.pmf(remaining, lam.T[:, :, None])
    probs = np.sum(thinned * innovation, axis=2).T
    return _flush(probs)


def log_likelihood(model: MinarModel, data: MultiCountSeries) -> float:
    """Sum over t = 2..T and i of log f_i(x_it | x_{t-1})"""
    probs = transition_probabilities(model, data)
    violations = int(np.count_nonzero(~(probs > 0.0)))
    if violations:
        logger.debug(f"{violations} observations with zero conditional mass")
        return ZERO_MASS_PENALTY * violations
    return float(np.sum(np.log(probs)))


def conditional_log_likelihood(theta: Sequence[float], data: MultiCountSeries, layout: ParameterLayout) -> float:
    """Log-likelihood of a reporting parameter vector"""
    if data.T < 2:
        raise DomainError("Conditional likelihood needs at least two time steps")
    if data.n != layout.n:
        raise DomainError(f"Data has {data.n} series, layout expects {layout.n}")
    return log_likelihood(unpack(theta, layout), data)
