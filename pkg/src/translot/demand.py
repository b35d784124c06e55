"""Non-stationary demand models.

Period demands are independent across periods and locations.  Poisson and
Normal families are the ones used by the experiments; ``deterministic`` and
``empirical`` exist so that small hand-checkable instances can be written.
Stock is counted in integer units, so every family can be reduced to a
:class:`DiscreteDist` on a finite integer support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DomainError

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

FAMILIES = ("poisson", "normal", "deterministic", "empirical")
DEFAULT_TRUNCATION_EPS = 1e-5

TAGS_4 = ("LCY1", "LCY2", "SIN1", "SIN2", "STAT", "RAND", "EMP1", "EMP2", "EMP3", "EMP4")
TAGS_10 = ("LCY", "SIN", "STAT", "RAND", "EMP")


@dataclass(frozen=True)
class DiscreteDist:
    """Probability mass function on the consecutive integers
    ``support_min, support_min + 1, ...``.

    ``retained_mass`` records how much probability survived truncation before
    the pmf was renormalized.
    """

    support_min: int
    pmf: np.ndarray
    retained_mass: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.pmf, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise DomainError("pmf must be a non-empty 1-D sequence")
        if np.any(p < 0):
            raise DomainError("pmf entries must be nonnegative")
        total = p.sum()
        if not total > 0:
            raise DomainError("pmf carries no mass")
        p = p / total
        p.setflags(write=False)
        object.__setattr__(self, "pmf", p)
        object.__setattr__(self, "support_min", int(self.support_min))

    @classmethod
    def point_mass(cls, k: int) -> DiscreteDist:
        return cls(int(k), np.ones(1))

    @classmethod
    def from_dict(cls, masses: Mapping[int, float]) -> DiscreteDist:
        lo, hi = min(masses), max(masses)
        p = np.zeros(hi - lo + 1)
        for k, w in masses.items():
            p[k - lo] += w
        return cls(lo, p)

    @property
    def support_max(self) -> int:
        return self.support_min + self.pmf.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.support_min, self.support_max + 1)

    def mean(self) -> float:
        return float(self.support @ self.pmf)

    def var(self) -> float:
        m = self.mean()
        return float(((self.support - m) ** 2) @ self.pmf)

    def cdf(self, k) -> np.ndarray:
        c = np.concatenate(([0.0], np.cumsum(self.pmf)))
        idx = np.clip(np.floor(np.asarray(k, dtype=float)).astype(int) - self.support_min + 1,
                      0, self.pmf.size)
        return c[idx]

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        cum = np.cumsum(self.pmf)
        cum[-1] = 1.0
        u = rng.random(size)
        return self.support_min + np.searchsorted(cum, u, side="right")

    def __eq__(self, other):
        if not isinstance(other, DiscreteDist):
            return NotImplemented
        return (self.support_min == other.support_min
                and self.pmf.shape == other.pmf.shape
                and bool(np.all(self.pmf == other.pmf)))

    def __hash__(self):
        return hash((self.support_min, self.pmf.tobytes()))


@dataclass(frozen=True)
class Normal:
    """Continuous Normal handle, used where loss functions are analytic."""

    mu: float
    sigma: float

    def mean(self) -> float:
        return self.mu

    def __add__(self, other: Normal) -> Normal:
        return Normal(self.mu + other.mu, math.hypot(self.sigma, other.sigma))


@dataclass(frozen=True)
class DemandSpec:
    """Demand of one location over the whole horizon.

    ``means`` holds the per-period means.  For ``normal`` the standard
    deviation of period t is ``cv * means[t]``.  ``empirical`` carries an
    explicit pmf per period in ``pmfs`` as ``(support_min, probs)`` pairs.
    """

    family: str
    means: tuple[float, ...]
    cv: float = 0.0
    pmfs: tuple[tuple[int, tuple[float, ...]], ...] = field(default=(), repr=False)

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        if fam not in FAMILIES:
            raise ConfigurationError(f"unknown demand family {self.family!r}")
        if fam == "empirical":
            if not self.pmfs:
                raise ConfigurationError("empirical demand needs per-period pmfs")
            pm = tuple((int(lo), tuple(float(x) for x in p)) for lo, p in self.pmfs)
            object.__setattr__(self, "pmfs", pm)
            means = tuple(DiscreteDist(lo, np.array(p)).mean() for lo, p in pm)
            object.__setattr__(self, "means", means)
        means = tuple(float(m) for m in self.means)
        object.__setattr__(self, "means", means)
        if not means:
            raise ConfigurationError("demand needs at least one period")
        if any(not math.isfinite(m) for m in means):
            raise DomainError("demand means must be finite")
        if fam in ("poisson", "normal") and any(m <= 0 for m in means):
            raise DomainError("Poisson/Normal demand means must be strictly positive")
        if fam == "deterministic" and any(m < 0 or m != int(m) for m in means):
            raise DomainError("deterministic demand must be nonnegative integers")
        if fam == "normal" and not self.cv > 0:
            raise DomainError("Normal demand needs a positive coefficient of variation")

    @property
    def horizon(self) -> int:
        return len(self.means)

    def sigma(self, period: int) -> float:
        return self.cv * self.means[period - 1]

    def continuous(self, period: int) -> Normal:
        if self.family != "normal":
            raise DomainError("only Normal demand has a continuous handle")
        return Normal(self.means[period - 1], self.sigma(period))

    def sample(self, period: int, rng: np.random.Generator, size=None) -> np.ndarray:
        """Draw from the untruncated model (continuous for Normal)."""
        m = self.means[period - 1]
        if self.family == "poisson":
            return rng.poisson(m, size)
        if self.family == "normal":
            return rng.normal(m, self.sigma(period), size)
        return discretize(self, period).sample(rng, size)


def discretize(spec: DemandSpec, period: int,
               truncation_eps: float = DEFAULT_TRUNCATION_EPS) -> DiscreteDist:
    """Finite integer pmf for the demand of ``period`` (1-based)."""
    if not 1 <= period <= spec.horizon:
        raise DomainError(f"period {period} outside 1..{spec.horizon}")
    if not 0 < truncation_eps < 1:
        raise DomainError("truncation_eps must lie strictly between 0 and 1")
    return _discretize(spec, period, float(truncation_eps))


@lru_cache(maxsize=4096)
def _discretize(spec: DemandSpec, period: int, eps: float) -> DiscreteDist:
    m = spec.means[period - 1]
    if spec.family == "deterministic":
        return DiscreteDist.point_mass(int(m))
    if spec.family == "empirical":
        lo, p = spec.pmfs[period - 1]
        return DiscreteDist(lo, np.array(p))
    if spec.family == "poisson":
        q = int(stats.poisson.ppf(1.0 - eps, m))
        while stats.poisson.cdf(q, m) < 1.0 - eps:
            q += 1
        while q > 0 and stats.poisson.cdf(q - 1, m) >= 1.0 - eps:
            q -= 1
        p = stats.poisson.pmf(np.arange(q + 1), m)
        return DiscreteDist(0, p, float(p.sum()))
    # normal: mass of k is CDF(k + 1/2) - CDF(k - 1/2), negatives folded into 0
    dist = stats.norm(m, spec.sigma(period))
    lo = max(0, int(math.floor(dist.ppf(eps) + 0.5)))
    while lo > 0 and dist.cdf(lo - 0.5) > eps:
        lo -= 1
    while dist.cdf(lo + 0.5) <= eps:
        lo += 1
    hi = max(lo, int(math.ceil(dist.isf(eps) - 0.5)))
    while dist.sf(hi + 0.5) > eps:
        hi += 1
    while hi > lo and dist.sf(hi - 0.5) <= eps:
        hi -= 1
    k = np.arange(lo, hi + 1)
    p = dist.cdf(k + 0.5) - dist.cdf(k - 0.5)
    if lo == 0:
        p[0] = dist.cdf(0.5)
    return DiscreteDist(lo, p, float(p.sum()))


def convolve(a: DiscreteDist, b: DiscreteDist) -> DiscreteDist:
    """Distribution of the sum of two independent variables."""
    return DiscreteDist(a.support_min + b.support_min, np.convolve(a.pmf, b.pmf))


def cumulative(dists: Sequence[DiscreteDist]) -> DiscreteDist:
    out = DiscreteDist.point_mass(0)
    for d in dists:
        out = convolve(out, d)
    return out


# -- demand patterns ---------------------------------------------------------

@lru_cache(maxsize=1)
def _default_config() -> dict:
    text = resources.files("translot").joinpath("defaults.toml").read_text()
    return tomllib.loads(text)


def default_pattern_config() -> dict:
    """Pattern parameters shipped with the package (a fresh copy)."""
    cfg = _default_config()["patterns"]
    out = {k: v for k, v in cfg.items() if k != "tables"}
    out["tables"] = {k: list(v) for k, v in cfg["tables"].items()}
    return out


def merge_pattern_config(overrides: Mapping | None) -> dict:
    cfg = default_pattern_config()
    if overrides:
        for key, val in overrides.items():
            if key == "tables":
                cfg["tables"].update({k: list(v) for k, v in val.items()})
            else:
                cfg[key] = val
    return cfg


def make_pattern(tag: str, horizon: int, scale: float,
                 config: Mapping | None = None) -> list[float]:
    """Per-period demand means for a named pattern.

    Tags in the 4-period set require ``horizon == 4``; tags in the 10-period
    set accept any horizon from 2 to 10 (tables are truncated from the front),
    which covers the reduced-horizon studies.
    """
    tag = tag.upper()
    if tag not in TAGS_4 and tag not in TAGS_10:
        raise ConfigurationError(f"unknown demand pattern {tag!r}")
    ok = (tag in TAGS_4 and horizon == 4) or (tag in TAGS_10 and 2 <= horizon <= 10)
    if not ok:
        raise ConfigurationError(f"pattern {tag} does not support horizon {horizon}")
    if not scale > 0:
        raise ConfigurationError("pattern scale must be positive")
    cfg = merge_pattern_config(config)
    T = horizon
    t = np.arange(1, T + 1, dtype=float)
    if tag == "STAT":
        rel = np.ones(T)
    elif tag in ("SIN1", "SIN"):
        rel = 1.0 + cfg["sin_strong"] * np.sin(2 * np.pi * t / T)
    elif tag == "SIN2":
        rel = 1.0 + cfg["sin_weak"] * np.sin(2 * np.pi * t / T)
    elif tag in ("LCY1", "LCY"):
        floor = cfg["lcy_floor"]
        rel = floor + (1 - floor) / (1 + np.exp(-(t - T / 2)))
    elif tag == "LCY2":
        floor = cfg["lcy_floor"]
        peak = (T + 1) / 2
        rel = floor + (1 - floor) * np.maximum(0.0, 1 - np.abs(t - peak) / (T / 2))
    elif tag == "RAND":
        rng = np.random.default_rng(int(cfg["rand_seed"]))
        rel = rng.uniform(cfg["rand_low"], cfg["rand_high"], size=10 if T <= 10 else T)[:T]
    else:
        table = cfg["tables"].get(tag)
        if table is None or len(table) < T:
            raise ConfigurationError(f"no table of length >= {T} for pattern {tag}")
        rel = np.asarray(table[:T], dtype=float)
    means = scale * rel
    if np.any(~np.isfinite(means)) or np.any(means <= 0):
        raise ConfigurationError(f"pattern {tag} produced nonpositive means")
    return [float(x) for x in means]
