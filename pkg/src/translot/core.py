"""Problem data shared by every solver: costs, demand, truncated lattice."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .demand import DEFAULT_TRUNCATION_EPS, DemandSpec, DiscreteDist, discretize
from .errors import ConfigurationError, DomainError, RegimeWarning


class State(NamedTuple):
    i1: int
    i2: int


class Action(NamedTuple):
    """Transship ``W`` units (positive: location 1 to 2), then order ``Q1``, ``Q2``."""

    W: int
    Q1: int
    Q2: int


def transship_range(i1: int, i2: int) -> tuple[int, int]:
    """Feasible interval for W: only on-hand stock can be moved."""
    return min(0, -i2), max(0, i1)


def transship_order(lo: int, hi: int) -> list[int]:
    """Candidate W values in tie-breaking order: smallest |W| first, then smallest W."""
    out = [0] if lo <= 0 <= hi else []
    for k in range(1, max(-lo, hi) + 1):
        if -k >= lo:
            out.append(-k)
        if k <= hi:
            out.append(k)
    return out


@dataclass(frozen=True)
class Instance:
    """Two-location, finite-horizon lot-sizing instance with transshipment.

    Costs: ordering ``K + z*Q`` for ``Q > 0``; transshipping ``R + v*|W|`` for
    ``W != 0``; holding ``h`` and back-order penalty ``b`` per unit and period
    on closing inventory.  ``bounds`` and ``q_max`` define the finite lattice
    used by the dynamic programs; ``None`` selects the default rule.
    """

    T: int
    K: float
    z: float
    R: float
    v: float
    h: float
    b: float
    demand: tuple[DemandSpec, DemandSpec]
    bounds: tuple[tuple[int, int], tuple[int, int]] | None = None
    q_max: int | None = None
    truncation_eps: float = DEFAULT_TRUNCATION_EPS
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if len(self.demand) != 2:
            raise ConfigurationError("exactly two locations are supported")
        object.__setattr__(self, "demand", tuple(self.demand))
        if self.T < 1:
            raise ConfigurationError("horizon must be at least one period")
        for d in self.demand:
            if d.horizon != self.T:
                raise ConfigurationError(
                    f"demand horizon {d.horizon} does not match T={self.T}")
        for nm in ("K", "z", "R", "v", "h", "b"):
            if getattr(self, nm) < 0:
                raise DomainError(f"cost {nm} must be nonnegative")
        if not (self.h > 0 and self.b > 0):
            raise DomainError("holding and penalty costs must be positive")
        if self.bounds is not None:
            bnd = tuple((int(lo), int(hi)) for lo, hi in self.bounds)
            if len(bnd) != 2 or any(lo > hi for lo, hi in bnd):
                raise ConfigurationError("bounds must be two (lo, hi) pairs with lo <= hi")
            object.__setattr__(self, "bounds", bnd)
        if self.q_max is not None and self.q_max < 0:
            raise ConfigurationError("q_max must be nonnegative")

    def regime_issues(self) -> list[str]:
        issues = []
        if not self.K > self.R:
            issues.append("K > R violated")
        if not self.K <= 2 * self.R:
            issues.append("K <= 2R violated")
        if not self.v < self.b:
            issues.append("v < b violated")
        return issues

    def warn_regime(self) -> None:
        issues = self.regime_issues()
        if issues:
            warnings.warn(f"{self.name or 'instance'}: " + "; ".join(issues),
                          RegimeWarning, stacklevel=2)

    def with_(self, **changes) -> Instance:
        return replace(self, **changes)

    # -- discretized demand ---------------------------------------------------

    @cached_property
    def dists(self) -> tuple[tuple[DiscreteDist, DiscreteDist], ...]:
        """``dists[t-1][j]`` is the discretized demand of location j+1 in period t."""
        return tuple(tuple(discretize(d, t, self.truncation_eps) for d in self.demand)
                     for t in range(1, self.T + 1))

    def demand_max(self) -> tuple[int, int]:
        return tuple(sum(self.dists[t][j].support_max for t in range(self.T))
                     for j in range(2))

    @cached_property
    def order_cap(self) -> int:
        if self.q_max is not None:
            return int(self.q_max)
        return int(max(self.demand_max()))

    @cached_property
    def lattice(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """State bounds; default ``[-total max demand, total max demand + q_max]``."""
        if self.bounds is not None:
            return self.bounds
        dm = self.demand_max()
        return tuple((-dm[j], dm[j] + self.order_cap) for j in range(2))

    # -- cost pieces ----------------------------------------------------------

    def order_cost(self, q):
        q = np.asarray(q)
        return np.where(q > 0, self.K + self.z * q, 0.0)

    def transship_cost(self, w):
        w = np.abs(np.asarray(w))
        return np.where(w > 0, self.R + self.v * w, 0.0)

    def period_cost(self, W: int, Q1: int, Q2: int, closing: tuple[int, int]) -> float:
        """Realized cost of one period given decisions and closing inventories."""
        c = float(self.transship_cost(W) + self.order_cost(Q1) + self.order_cost(Q2))
        for i in closing:
            c += self.h * max(0, i) + self.b * max(0, -i)
        return c
