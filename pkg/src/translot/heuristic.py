"""Receding-horizon simulation policy built on the static model.

At every period the static model is re-solved from the realized opening
inventory over the remaining horizon.  Its first-period order quantities are
adopted (rounded half-up).  The transshipment is picked by enumerating every
feasible W and rolling the remaining horizon forward on sampled demand with
all later decisions frozen to the static plan.

Two lookahead modes are offered:

``"realized"``
    the rollout uses the replication's own future demand, i.e. the literal
    substitution of the sampled path.  The resulting policy peeks at demand
    it has not observed yet.
``"independent"``
    the rollout averages over ``lookahead_paths`` fresh demand paths drawn
    from a stream keyed by ``(seed, period, state)``.  The policy is then a
    plain function of period and state, so it can be cached and evaluated
    exactly with :func:`translot.sdp.evaluate_policy`.

Cost estimates follow a sequential stopping rule on the confidence interval
of the mean total cost.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .core import Action, Instance, State, transship_order, transship_range
from .errors import ConfigurationError, ModelInfeasible
from .milp import DEFAULT_REGIONS, StaticPlan, build_lp1, solve_static

LOOKAHEAD_MODES = ("realized", "independent")
MIN_REPLICATIONS = 100
MAX_REPLICATIONS = 1_000_000
BATCH = 100
_TIE_TOL = 1e-9


def _rng(*keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys]))


def sample_demand(inst: Instance, rng: np.random.Generator, start: int = 1,
                  size: int | None = None) -> np.ndarray:
    """Demand paths over periods ``start..T`` from the discretized model.

    Returns shape ``(T - start + 1, 2)`` or ``(size, T - start + 1, 2)``.
    """
    n = 1 if size is None else size
    out = np.empty((n, inst.T - start + 1, 2), dtype=np.int64)
    for k, t in enumerate(range(start, inst.T + 1)):
        for j in range(2):
            out[:, k, j] = inst.dists[t - 1][j].sample(rng, n)
    return out[0] if size is None else out


# -- transshipment choice -------------------------------------------------------------

def choose_transshipment(opening, k: int, lp_plan: StaticPlan, sampled_future,
                         inst: Instance) -> int:
    """Transshipment for period ``k`` by rollout against the static plan.

    ``sampled_future`` holds demand for periods ``k..T``, either one path of
    shape ``(T-k+1, 2)`` or several of shape ``(P, T-k+1, 2)``; the rollout
    cost is averaged over paths.  Later transshipments from the plan are
    clipped to what the rolled-out state allows.  Ties go to the smallest
    ``|W|``, then the smallest ``W``.
    """
    i1, i2 = int(opening[0]), int(opening[1])
    d = np.asarray(sampled_future)
    if d.ndim == 2:
        d = d[None]
    n = inst.T - k + 1
    if d.shape[1:] != (n, 2):
        raise ConfigurationError(f"expected demand for {n} periods, got shape {d.shape}")
    lo, hi = transship_range(i1, i2)
    cands = np.array(transship_order(lo, hi))
    Q = np.maximum(lp_plan.Q_int[:n], 0)
    Wf = lp_plan.W_int[:n]
    # state arrays: (candidates, paths)
    x1 = np.full((cands.size, d.shape[0]), i1, dtype=np.int64)
    x2 = np.full_like(x1, i2)
    cost = np.zeros(x1.shape)
    for s in range(n):
        if s == 0:
            w = np.broadcast_to(cands[:, None], x1.shape)
        else:
            w = np.clip(Wf[s], np.minimum(0, -x2), np.maximum(0, x1))
        cost += inst.transship_cost(w)
        cost += float(inst.order_cost(Q[s]).sum())
        x1 = x1 - w + Q[s, 0] - d[None, :, s, 0]
        x2 = x2 + w + Q[s, 1] - d[None, :, s, 1]
        cost += inst.h * (np.maximum(x1, 0) + np.maximum(x2, 0))
        cost += inst.b * (np.maximum(-x1, 0) + np.maximum(-x2, 0))
    avg = cost.mean(axis=1)
    best = 0
    for i in range(1, cands.size):
        if avg[i] < avg[best] - _TIE_TOL * max(1.0, abs(avg[best])):
            best = i
    return int(cands[best])


# -- policy -----------------------------------------------------------------------------

class RecedingHorizonPolicy:
    """Static-model re-solves and rollout choices, cached per (period, state).

    ``backend`` is passed to :func:`translot.milp.solve_static`.
    """

    def __init__(self, inst: Instance, *, backend="highs", n_regions: int = DEFAULT_REGIONS,
                 lookahead: str = "independent", lookahead_paths: int = 64, seed: int = 0):
        if lookahead not in LOOKAHEAD_MODES:
            raise ConfigurationError(f"lookahead must be one of {LOOKAHEAD_MODES}")
        if lookahead_paths < 1:
            raise ConfigurationError("lookahead_paths must be positive")
        self.inst = inst
        self.backend = backend
        self.n_regions = n_regions
        self.lookahead = lookahead
        self.lookahead_paths = lookahead_paths
        self.seed = seed
        self._plans: dict[tuple[int, int, int], StaticPlan] = {}
        self._actions: dict[tuple[int, int, int], Action] = {}

    @property
    def solves(self) -> int:
        return len(self._plans)

    def plan(self, k: int, state) -> StaticPlan:
        key = (k, int(state[0]), int(state[1]))
        p = self._plans.get(key)
        if p is None:
            sm = build_lp1(self.inst, key[1:], start_period=k, n_regions=self.n_regions)
            try:
                p = solve_static(sm, self.backend)
            except ModelInfeasible as exc:
                raise ModelInfeasible(f"period {k}, state {key[1:]}: {exc}") from exc
            self._plans[key] = p
        return p

    def decide(self, k: int, state, future=None) -> Action:
        """Action for period ``k``; ``future`` is the replication's own demand
        for ``k..T`` and is used only in ``"realized"`` mode."""
        key = (k, int(state[0]), int(state[1]))
        if self.lookahead == "independent" and key in self._actions:
            return self._actions[key]
        p = self.plan(k, state)
        if self.lookahead == "realized":
            if future is None:
                raise ConfigurationError("realized lookahead needs the sampled future")
            paths = future
        else:
            paths = sample_demand(self.inst, _rng(self.seed, k, key[1], key[2]), k,
                                  self.lookahead_paths)
        w = choose_transshipment(key[1:], k, p, paths, self.inst)
        q = np.maximum(p.Q_int[0], 0)
        act = Action(w, int(q[0]), int(q[1]))
        if self.lookahead == "independent":
            self._actions[key] = act
        return act

    def __call__(self, t: int, i1: int, i2: int) -> Action:
        if self.lookahead != "independent":
            raise ConfigurationError("only the independent lookahead is a state policy")
        return self.decide(t, (i1, i2))


# -- replications -------------------------------------------------------------------------

@dataclass
class Replication:
    opening: State
    demand: np.ndarray  # (T, 2)
    W: np.ndarray  # (T,)
    Q: np.ndarray  # (T, 2)
    states: np.ndarray  # (T + 1, 2), row t is the closing inventory of period t
    costs: np.ndarray  # (T,)

    @property
    def total(self) -> float:
        return float(self.costs.sum())


def run_replication(inst: Instance, opening, seed, policy: RecedingHorizonPolicy | None = None,
                    trace=None) -> Replication:
    """Simulate one demand path under the receding-horizon policy.

    ``seed`` is an int or a sequence of ints.  ``trace`` is an optional text
    stream that receives one JSON record per period.
    """
    policy = policy or RecedingHorizonPolicy(inst)
    keys = seed if isinstance(seed, Sequence) else (seed,)
    d = sample_demand(inst, _rng(*keys))
    T = inst.T
    W = np.zeros(T, dtype=np.int64)
    Q = np.zeros((T, 2), dtype=np.int64)
    S = np.zeros((T + 1, 2), dtype=np.int64)
    C = np.zeros(T)
    S[0] = opening
    for k in range(1, T + 1):
        i1, i2 = int(S[k - 1, 0]), int(S[k - 1, 1])
        act = policy.decide(k, (i1, i2), d[k - 1:])
        W[k - 1], Q[k - 1] = act.W, (act.Q1, act.Q2)
        c1 = i1 - act.W + act.Q1 - int(d[k - 1, 0])
        c2 = i2 + act.W + act.Q2 - int(d[k - 1, 1])
        S[k] = c1, c2
        C[k - 1] = inst.period_cost(act.W, act.Q1, act.Q2, (c1, c2))
        if trace is not None:
            trace.write(json.dumps({"period": k, "i1": i1, "i2": i2, "W": act.W,
                                    "Q1": act.Q1, "Q2": act.Q2, "cost": C[k - 1]}) + "\n")
    return Replication(State(int(opening[0]), int(opening[1])), d, W, Q, S, C)


# -- estimation -----------------------------------------------------------------------------

@dataclass
class EstimateAccumulator:
    """Running count, mean and sum of squared deviations; mergeable."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, values) -> None:
        v = np.asarray(values, dtype=float).ravel()
        if v.size:
            self.merge(EstimateAccumulator(v.size, float(v.mean()),
                                           float(((v - v.mean()) ** 2).sum())))

    def merge(self, other: EstimateAccumulator) -> None:
        if other.n == 0:
            return
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean += delta * other.n / n
        self.m2 += other.m2 + delta * delta * self.n * other.n / n
        self.n = n

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else math.nan

    def quantile(self, alpha: float) -> float:
        p = 1 - (1 - alpha) / 2
        return float(stats.t.ppf(p, self.n - 1) if self.n <= 30 else stats.norm.ppf(p))

    def halfwidth(self, alpha: float) -> float:
        if self.n < 2:
            raise ValueError("a confidence interval needs at least two observations")
        return self.quantile(alpha) * math.sqrt(max(self.variance, 0.0) / self.n)


@dataclass
class Estimate:
    mean: float
    halfwidth: float
    n: int
    converged: bool
    std: float
    alpha: float
    extra: dict = field(default_factory=dict)

    @property
    def ci(self) -> tuple[float, float]:
        return self.mean - self.halfwidth, self.mean + self.halfwidth


def sequential_estimate(draw: Callable[[int, int], np.ndarray], alpha: float = 0.95,
                        rel_halfwidth: float = 1e-3, *, min_n: int = MIN_REPLICATIONS,
                        max_n: int = MAX_REPLICATIONS, batch: int = BATCH) -> Estimate:
    """Draw observations until the CI half-width is within ``rel_halfwidth`` of the mean.

    ``draw(start, count)`` returns observations number ``start .. start+count-1``.
    After the minimum, the next batch is shortened to the sample size the
    current variance estimate says is still missing, so the rule does not
    overshoot by up to a whole batch.
    """
    if not 0 < alpha < 1:
        raise ConfigurationError("confidence level must lie in (0, 1)")
    if not rel_halfwidth > 0:
        raise ConfigurationError("relative half-width must be positive")
    if not 2 <= min_n <= max_n or batch < 1:
        raise ConfigurationError("need 2 <= min_n <= max_n and batch >= 1")
    acc = EstimateAccumulator()
    step = min_n
    while True:
        step = min(step, max_n - acc.n)
        acc.add(draw(acc.n, step))
        hw = acc.halfwidth(alpha)
        target = rel_halfwidth * abs(acc.mean)
        if hw <= target or acc.n >= max_n:
            break
        if target > 0:
            need = (acc.quantile(alpha) * math.sqrt(acc.variance) / target) ** 2
            step = int(min(batch, max(1, math.ceil(need) - acc.n)))
        else:
            step = batch
    return Estimate(acc.mean, hw, acc.n, hw <= target, math.sqrt(acc.variance), alpha)


def estimate(inst: Instance, opening, alpha: float = 0.95, rel_halfwidth: float = 1e-3, *,
             seed: int = 0, policy: RecedingHorizonPolicy | None = None,
             min_n: int = MIN_REPLICATIONS, max_n: int = MAX_REPLICATIONS,
             batch: int = BATCH, draw: Callable[[int, int], np.ndarray] | None = None) -> Estimate:
    """Expected total cost of the receding-horizon policy from ``opening``.

    Replication ``r`` uses seed ``(seed, r)``.  ``draw`` replaces the
    simulation with any other stream of observations.
    """
    if draw is None:
        policy = policy or RecedingHorizonPolicy(inst, seed=seed)
        op = (int(opening[0]), int(opening[1]))

        def draw(start, count):
            return np.array([run_replication(inst, op, (seed, r), policy).total
                             for r in range(start, start + count)])

    est = sequential_estimate(draw, alpha, rel_halfwidth, min_n=min_n, max_n=max_n,
                              batch=batch)
    if policy is not None:
        est.extra["lp_solves"] = policy.solves
    return est
