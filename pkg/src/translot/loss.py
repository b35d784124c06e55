"""First-order loss function, its complement and piecewise-linear minorants.

For a random variable D and a scalar x the loss is ``L(x) = E[max(D - x, 0)]``
(expected shortage) and the complement is ``Lc(x) = E[max(x - D, 0)]``
(expected overage).  They satisfy ``Lc(x) - L(x) = x - E[D]``.

Splitting the probability space into regions with probabilities ``p_k`` and
conditional means ``m_k`` (increasing) yields, by Jensen's inequality, the
affine minorants::

    H_i(x) = x * sum_{k<=i} p_k - sum_{k<=i} p_k * m_k      (for Lc)
    B_i(x) = H_i(x) - x + E[D]                              (for L)

for ``i = 0..N``.  The maximum over ``i`` touches the exact function at every
region boundary.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize
from scipy.special import ndtr, ndtri

from .demand import DiscreteDist, Normal
from .errors import DomainError

_SQRT2PI = np.sqrt(2 * np.pi)

# Minimax-optimal 10-region partition of the standard normal: region
# probabilities and conditional means.  Maximum approximation error of the
# resulting Jensen bound is 0.005885974956458359.
NORMAL10_PROBS = (
    0.04206108420763477, 0.0836356495308449, 0.11074334596058821,
    0.1276821455299152, 0.13587777477101692, 0.13587777477101692,
    0.1276821455299152, 0.11074334596058821, 0.0836356495308449,
    0.04206108420763477,
)
NORMAL10_MEANS = (
    -2.133986195498256, -1.3976822972668839, -0.918199946431143,
    -0.5265753462727588, -0.17199013069262026, 0.17199013069262026,
    0.5265753462727588, 0.918199946431143, 1.3976822972668839,
    2.133986195498256,
)
NORMAL10_MAX_ERROR = 0.005885974956458359


def _phi(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT2PI


@dataclass(frozen=True)
class Partition:
    region_probs: tuple[float, ...]
    cond_means: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in self.region_probs)
        m = tuple(float(x) for x in self.cond_means)
        if len(p) != len(m) or not p:
            raise DomainError("partition needs matching, non-empty probs and means")
        if abs(sum(p) - 1.0) > 1e-9:
            raise DomainError("region probabilities must sum to 1")
        if any(b <= a for a, b in zip(m, m[1:])):
            raise DomainError("conditional means must be strictly increasing")
        object.__setattr__(self, "region_probs", p)
        object.__setattr__(self, "cond_means", m)

    @property
    def n_regions(self) -> int:
        return len(self.region_probs)

    def mean(self) -> float:
        return float(np.dot(self.region_probs, self.cond_means))

    def scaled(self, mu: float, sigma: float) -> Partition:
        return Partition(self.region_probs, tuple(mu + sigma * m for m in self.cond_means))


@dataclass(frozen=True)
class LossEval:
    x: float
    loss: float
    complement: float


def loss_values(x, dist) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``(L(x), Lc(x))`` for an array of points."""
    x = np.asarray(x, dtype=float)
    if isinstance(dist, Normal):
        if dist.sigma == 0:
            loss = np.maximum(dist.mu - x, 0.0)
        else:
            z = (x - dist.mu) / dist.sigma
            loss = dist.sigma * (_phi(z) - z * (1.0 - ndtr(z)))
        return loss, loss + x - dist.mu
    if isinstance(dist, DiscreteDist):
        k = dist.support.astype(float)
        loss = np.maximum(k[None, :] - x.reshape(-1, 1), 0.0) @ dist.pmf
        loss = loss.reshape(x.shape)
        return loss, loss + x - dist.mean()
    raise TypeError(f"unsupported distribution handle {type(dist).__name__}")


def loss_exact(x: float, dist) -> LossEval:
    loss, comp = loss_values(np.array([x]), dist)
    return LossEval(float(x), float(loss[0]), float(comp[0]))


# -- partitions ---------------------------------------------------------------

def _normal_errors(breaks: np.ndarray) -> np.ndarray:
    """Bound error at each conditional mean for standard-normal breakpoints."""
    b = np.concatenate(([-np.inf], breaks, [np.inf]))
    cdf = ndtr(b)
    pdf = np.where(np.isfinite(b), _phi(np.where(np.isfinite(b), b, 0.0)), 0.0)
    p = np.diff(cdf)
    m = (pdf[:-1] - pdf[1:]) / p
    comp = m * ndtr(m) + _phi(m)
    lower = np.array([np.sum(p[:k] * (m[k] - m[:k])) for k in range(m.size)])
    return comp - lower


def _normal_partition_from_breaks(breaks: np.ndarray) -> Partition:
    b = np.concatenate(([-np.inf], breaks, [np.inf]))
    cdf = ndtr(b)
    pdf = np.where(np.isfinite(b), _phi(np.where(np.isfinite(b), b, 0.0)), 0.0)
    p = np.diff(cdf)
    m = (pdf[:-1] - pdf[1:]) / p
    return Partition(tuple(p / p.sum()), tuple(m))


@lru_cache(maxsize=64)
def optimal_normal_partition(n_regions: int) -> tuple[Partition, float]:
    """Minimax partition of the standard normal and its maximum error.

    Minimizes the largest gap between the complementary loss and its Jensen
    bound.  The gap is convex between consecutive conditional means, so its
    maximum sits at one of them.
    """
    if n_regions < 1:
        raise DomainError("n_regions must be positive")
    if n_regions == 1:
        part = Partition((1.0,), (0.0,))
        return part, float(_phi(0.0))
    n = n_regions - 1
    x0 = ndtri(np.arange(1, n_regions) / n_regions)
    start = np.append(x0, _normal_errors(x0).max())
    cons = [
        {"type": "ineq", "fun": lambda v: v[-1] - _normal_errors(v[:-1])},
    ]
    if n > 1:
        cons.append({"type": "ineq", "fun": lambda v: np.diff(v[:-1]) - 1e-6})
    res = optimize.minimize(lambda v: v[-1], start, method="SLSQP", constraints=cons,
                            options={"ftol": 1e-15, "maxiter": 2000})
    breaks = np.sort(res.x[:-1])
    # symmetrize; the optimum is symmetric about zero
    breaks = 0.5 * (breaks - breaks[::-1])
    err = float(_normal_errors(breaks).max())
    return _normal_partition_from_breaks(breaks), err


def standard_normal_partition(n_regions: int) -> Partition:
    if n_regions == 10:
        return Partition(NORMAL10_PROBS, NORMAL10_MEANS)
    return optimal_normal_partition(n_regions)[0]


def _discrete_partition(dist: DiscreteDist, n_regions: int) -> Partition:
    atoms = np.count_nonzero(dist.pmf)
    if n_regions > atoms:
        raise DomainError(f"{n_regions} regions requested for a support of {atoms} points")
    x = dist.support.astype(float)
    hi_cdf = np.cumsum(dist.pmf)
    hi_cdf[-1] = 1.0
    lo_cdf = np.concatenate(([0.0], hi_cdf[:-1]))
    edges = np.arange(n_regions + 1) / n_regions
    probs, means = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        w = np.clip(np.minimum(hi_cdf, b) - np.maximum(lo_cdf, a), 0.0, None)
        mass = w.sum()
        probs.append(mass)
        means.append(float(w @ x) / mass)
    # regions falling inside a single heavy atom share its value; merge them
    mp, mm = [probs[0]], [means[0]]
    for p, m in zip(probs[1:], means[1:]):
        if m - mm[-1] <= 1e-12 * max(1.0, abs(m)):
            mm[-1] = (mm[-1] * mp[-1] + m * p) / (mp[-1] + p)
            mp[-1] += p
        else:
            mp.append(p)
            mm.append(m)
    total = sum(mp)
    return Partition(tuple(p / total for p in mp), tuple(mm))


def build_partition(dist, n_regions: int) -> Partition:
    """Partition used for the piecewise bounds.

    Normal handles get the minimax standard-normal breakpoints scaled by
    ``(mu, sigma)``; discrete distributions get equal-probability regions of
    the quantile function (a boundary atom is split across regions).
    """
    if n_regions < 1:
        raise DomainError("n_regions must be positive")
    if isinstance(dist, Normal):
        if dist.sigma == 0:
            return Partition((1.0,), (dist.mu,))
        return standard_normal_partition(n_regions).scaled(dist.mu, dist.sigma)
    if isinstance(dist, DiscreteDist):
        return _discrete_partition(dist, n_regions)
    raise TypeError(f"unsupported distribution handle {type(dist).__name__}")


@dataclass(frozen=True)
class Minorants:
    """Affine minorants ``slope * x + intercept`` for ``Lc`` and ``L``."""

    slopes: np.ndarray
    h_intercepts: np.ndarray
    b_intercepts: np.ndarray

    @property
    def b_slopes(self) -> np.ndarray:
        return self.slopes - 1.0

    def complement_bound(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.max(np.multiply.outer(x, self.slopes) + self.h_intercepts, axis=-1)

    def loss_bound(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.max(np.multiply.outer(x, self.b_slopes) + self.b_intercepts, axis=-1)


def piecewise_lower_bounds(part: Partition, mean: float) -> Minorants:
    p = np.asarray(part.region_probs)
    m = np.asarray(part.cond_means)
    slopes = np.concatenate(([0.0], np.cumsum(p)))
    h_int = np.concatenate(([0.0], -np.cumsum(p * m)))
    return Minorants(slopes, h_int, h_int + mean)
