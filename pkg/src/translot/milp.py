"""Static-uncertainty model of the lot-sizing problem with transshipment.

All order and transship quantities over the remaining horizon are fixed from
the opening state using only distributional information.  Expected overage
and shortage at the end of each period are bounded from below by the
piecewise-linear minorants of the loss function of cumulative demand.  Fixed
charges are modelled with indicator binaries:

* ``g{j}_{k}``: an order is placed at location j in period k;
* ``dp_{k}`` / ``dm_{k}``: stock moves 1 -> 2 / 2 -> 1 in period k.

``W_k = Wp_k - Wm_k`` and only stock on hand (in expectation) may leave a
location: ``Wp_k <= max(0, I1_{k-1})``, ``Wm_k <= max(0, I2_{k-1})``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Instance
from .demand import DiscreteDist, Normal, cumulative
from .errors import ModelInfeasible
from .loss import Partition, build_partition, loss_values, piecewise_lower_bounds
from .mip import MilpModel, ModelBuilder, SolveResult, make_backend

DEFAULT_REGIONS = 10


@dataclass
class StaticModel:
    inst: Instance
    opening: tuple[int, int]
    start: int
    model: MilpModel
    big_m: float
    cumulative: dict = field(repr=False, default_factory=dict)

    @property
    def periods(self) -> range:
        return range(self.start, self.inst.T + 1)


@dataclass
class StaticPlan:
    objective: float
    start: int
    W: np.ndarray
    Q: np.ndarray  # shape (n, 2)
    I: np.ndarray
    H: np.ndarray
    B: np.ndarray
    status: str = "optimal"
    nodes: int = 0

    @property
    def W_int(self) -> np.ndarray:
        return np.floor(self.W + 0.5).astype(int)

    @property
    def Q_int(self) -> np.ndarray:
        return np.floor(self.Q + 0.5).astype(int)


def cumulative_demand(inst: Instance, start: int, end: int, j: int):
    """Distribution handle for the demand of location ``j`` over ``start..end``."""
    spec = inst.demand[j]
    if spec.family == "normal":
        out = Normal(0.0, 0.0)
        for t in range(start, end + 1):
            out = out + spec.continuous(t)
        return out
    return cumulative([inst.dists[t - 1][j] for t in range(start, end + 1)])


def _upper(dist) -> float:
    if isinstance(dist, Normal):
        return dist.mu + 6 * dist.sigma
    return float(dist.support_max)


def _period_mean(inst: Instance, t: int, j: int) -> float:
    spec = inst.demand[j]
    if spec.family == "normal":
        return spec.means[t - 1]
    return inst.dists[t - 1][j].mean()


def build_lp1(inst: Instance, opening, start_period: int = 1,
              partitions: dict | None = None,
              n_regions: int = DEFAULT_REGIONS) -> StaticModel:
    """Assemble the static model for periods ``start_period..T``.

    ``partitions`` maps ``(t, j)`` (period, 0-based location) to a
    :class:`Partition` of cumulative demand from ``start_period`` to ``t``;
    missing entries are built with ``n_regions`` regions.
    """
    i0 = (int(opening[0]), int(opening[1]))
    s, T = start_period, inst.T
    periods = range(s, T + 1)
    cum = {}
    for t in periods:
        for j in range(2):
            cum[t, j] = cumulative_demand(inst, s, t, j)
    backlog = max(0, -i0[0]) + max(0, -i0[1])
    # never worth ordering beyond the remaining system demand plus backlog
    big_q = {t: math.ceil(backlog + sum(_upper(cumulative_demand(inst, t, T, j))
                                        for j in range(2))) + 1 for t in periods}
    # expected closing inventory of location j can fall at most this far below 0
    floor_i = {(t, j): max(0, -i0[j]) + sum(_period_mean(inst, k, j) for k in range(s, t))
               for t in periods for j in range(2)}
    onhand = max(0, i0[0]) + max(0, i0[1])

    b = ModelBuilder()
    sign = (-1.0, 1.0)  # W leaves location 1 and enters location 2
    for t in periods:
        qcap = big_q[t] if inst.q_max is None else min(big_q[t], inst.q_max)
        for j in (1, 2):
            b.var(f"Q{j}_{t}", 0.0, qcap)
        b.var(f"Wp_{t}")
        b.var(f"Wm_{t}")
        for j in (1, 2):
            b.var(f"g{j}_{t}", binary=True)
        b.var(f"dp_{t}", binary=True)
        b.var(f"dm_{t}", binary=True)
        for j in (1, 2):
            b.var(f"I{j}_{t}", -np.inf, np.inf)
            b.var(f"X{j}_{t}", -np.inf, np.inf)
            b.var(f"H{j}_{t}")
            b.var(f"B{j}_{t}")

    for t in periods:
        b.cost(f"dp_{t}", inst.R)
        b.cost(f"dm_{t}", inst.R)
        b.cost(f"Wp_{t}", inst.v)
        b.cost(f"Wm_{t}", inst.v)
        for j in (1, 2):
            b.cost(f"g{j}_{t}", inst.K)
            b.cost(f"Q{j}_{t}", inst.z)
            b.cost(f"H{j}_{t}", inst.h)
            b.cost(f"B{j}_{t}", inst.b)

    for t in periods:
        for jj, j in enumerate((1, 2)):
            sg = sign[jj]
            # flow balance on expected inventory
            terms = {f"Q{j}_{t}": 1.0, f"Wp_{t}": sg, f"Wm_{t}": -sg, f"I{j}_{t}": -1.0}
            rhs = _period_mean(inst, t, jj)
            if t == s:
                rhs -= i0[jj]
            else:
                terms[f"I{j}_{t - 1}"] = 1.0
            b.eq(f"bal{j}_{t}", terms, rhs)
            # cumulative stock available up to t
            terms = {f"X{j}_{t}": 1.0}
            for k in range(s, t + 1):
                terms[f"Q{j}_{k}"] = -1.0
                terms[f"Wp_{k}"] = -sg
                terms[f"Wm_{k}"] = sg
            b.eq(f"cum{j}_{t}", terms, float(i0[jj]))
            # piecewise minorants
            dist = cum[t, jj]
            part = (partitions or {}).get((t, jj))
            if part is None:
                part = default_partition(dist, n_regions)
            mins = piecewise_lower_bounds(part, dist.mean())
            for i in range(1, mins.slopes.size):
                b.le(f"hcut{j}_{t}_{i}", {f"X{j}_{t}": mins.slopes[i], f"H{j}_{t}": -1.0},
                     -mins.h_intercepts[i])
            for i in range(mins.slopes.size):
                b.le(f"bcut{j}_{t}_{i}", {f"X{j}_{t}": mins.b_slopes[i], f"B{j}_{t}": -1.0},
                     -mins.b_intercepts[i])
            qcap = big_q[t] if inst.q_max is None else min(big_q[t], inst.q_max)
            b.le(f"setup{j}_{t}", {f"Q{j}_{t}": 1.0, f"g{j}_{t}": -float(qcap)}, 0.0)
        b.le(f"dir_{t}", {f"dp_{t}": 1.0, f"dm_{t}": 1.0}, 1.0)
        if t == s:
            b.le(f"wdom1_{t}", {f"Wp_{t}": 1.0, f"dp_{t}": -float(max(0, i0[0]))}, 0.0)
            b.le(f"wdom2_{t}", {f"Wm_{t}": 1.0, f"dm_{t}": -float(max(0, i0[1]))}, 0.0)
        else:
            big_w = float(onhand + sum(big_q[k] for k in range(s, t)))
            b.le(f"wset1_{t}", {f"Wp_{t}": 1.0, f"dp_{t}": -big_w}, 0.0)
            b.le(f"wset2_{t}", {f"Wm_{t}": 1.0, f"dm_{t}": -big_w}, 0.0)
            for j, d in ((1, "dp"), (2, "dm")):
                m = float(floor_i[t, j - 1])
                w = "Wp" if j == 1 else "Wm"
                b.le(f"wdom{j}_{t}", {f"{w}_{t}": 1.0, f"I{j}_{t - 1}": -1.0, f"{d}_{t}": m}, m)
    return StaticModel(inst, i0, s, b.build(), float(max(big_q.values())), cum)


def default_partition(dist, n_regions: int) -> Partition:
    if isinstance(dist, DiscreteDist):
        n_regions = min(n_regions, int(np.count_nonzero(dist.pmf)))
    return build_partition(dist, n_regions)


def extract_plan(sm: StaticModel, res: SolveResult) -> StaticPlan:
    idx = sm.model.index
    x = np.where(np.abs(res.x) < 1e-9, 0.0, res.x)
    per = list(sm.periods)
    g = lambda nm: np.array([x[idx[f"{nm}_{t}"]] for t in per])
    W = g("Wp") - g("Wm")
    Q = np.column_stack([g("Q1"), g("Q2")])
    I = np.column_stack([g("I1"), g("I2")])
    H = np.column_stack([g("H1"), g("H2")])
    B = np.column_stack([g("B1"), g("B2")])
    return StaticPlan(float(res.objective), sm.start, W, Q, I, H, B, res.status, res.nodes)


def solve_static(sm: StaticModel, backend=None) -> StaticPlan:
    """Solve a static model; raises :class:`ModelInfeasible` if no plan exists."""
    res = make_backend(backend).solve(sm.model)
    if res.status != "optimal":
        raise ModelInfeasible(f"static model from period {sm.start}: {res.status} {res.message}")
    return extract_plan(sm, res)


def plan_objective(inst: Instance, plan: StaticPlan) -> float:
    """Objective recomputed from plan quantities and bound variables."""
    tot = 0.0
    for k in range(plan.W.size):
        w = plan.W[k]
        if abs(w) > 1e-9:
            tot += inst.R + inst.v * abs(w)
        for j in range(2):
            q = plan.Q[k, j]
            if q > 1e-9:
                tot += inst.K + inst.z * q
            tot += inst.h * plan.H[k, j] + inst.b * plan.B[k, j]
    return tot


def plan_expected_cost(inst: Instance, opening, start: int, W, Q) -> float:
    """Exact expected cost of executing ``(W, Q)`` open loop from ``opening``.

    No feasibility clipping is applied to ``W``; the closing inventory of
    period t is ``opening + cumulative(Q -/+ W) - cumulative demand``.
    """
    W = np.asarray(W, dtype=float)
    Q = np.asarray(Q, dtype=float).reshape(-1, 2)
    W = np.where(np.abs(W) < 1e-9, 0.0, W)
    Q = np.where(np.abs(Q) < 1e-9, 0.0, Q)
    tot = 0.0
    x = np.array(opening, dtype=float)
    for k, t in enumerate(range(start, inst.T + 1)):
        tot += float(inst.transship_cost(W[k])) + float(inst.order_cost(Q[k]).sum())
        x = x + Q[k] + np.array([-W[k], W[k]])
        for j in range(2):
            loss, comp = loss_values(np.array([x[j]]), cumulative_demand(inst, start, t, j))
            tot += inst.h * comp[0] + inst.b * loss[0]
    return tot
