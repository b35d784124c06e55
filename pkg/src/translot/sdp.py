"""Backward-induction solvers on the truncated integer lattice.

Both solvers share one building block: for the post-decision position
``y = (i1 - W + Q1, i2 + W + Q2)`` the expected holding/penalty cost of the
period plus the expected cost-to-go, ``G_t(y)``.  Next states ``y - d`` that
fall outside the lattice are clamped onto its edge.

* :func:`solve_sdp1` minimizes ``u(|W|) + c(Q1) + c(Q2) + G_t(y)`` jointly
  over every ``(W, Q1, Q2)``.
* :func:`solve_sdp2` first tabulates the ordering stage over post-transship
  states, then minimizes over ``W`` alone.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from numba import njit

from .core import Action, Instance, State, transship_order, transship_range
from .errors import BoundsWarning, PolicyLookupError
from .loss import loss_values

BOUNDARY_TOL = 1e-4

Policy = Callable[[int, int, int], Action]


@dataclass
class ValueTable:
    """Cost-to-go and optimal action per stage on the state lattice.

    ``cost[t]`` for ``t = 1..T+1`` (stage T+1 is identically zero) and
    ``W[t]``, ``Q1[t]``, ``Q2[t]`` for ``t = 1..T``, indexed by
    ``(i1 - lo1, i2 - lo2)``.
    """

    inst: Instance
    method: str
    cost: dict[int, np.ndarray]
    W: dict[int, np.ndarray]
    Q1: dict[int, np.ndarray]
    Q2: dict[int, np.ndarray]
    diagnostics: dict = field(default_factory=dict)

    @property
    def lo(self) -> tuple[int, int]:
        return self.inst.lattice[0][0], self.inst.lattice[1][0]

    def _index(self, i1: int, i2: int) -> tuple[int, int]:
        (lo1, hi1), (lo2, hi2) = self.inst.lattice
        if not (lo1 <= i1 <= hi1 and lo2 <= i2 <= hi2):
            raise PolicyLookupError(f"state ({i1}, {i2}) outside the lattice")
        return i1 - lo1, i2 - lo2

    def value(self, t: int, state) -> float:
        a, c = self._index(*state)
        return float(self.cost[t][a, c])

    def action(self, t: int, i1: int, i2: int) -> Action:
        if not 1 <= t <= self.inst.T:
            raise PolicyLookupError(f"no decision at stage {t}")
        a, c = self._index(i1, i2)
        return Action(int(self.W[t][a, c]), int(self.Q1[t][a, c]), int(self.Q2[t][a, c]))

    def write_csv(self, fh) -> None:
        (lo1, hi1), (lo2, hi2) = self.inst.lattice
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "i1", "i2", "cost", "W", "Q1", "Q2"])
        for t in range(1, self.inst.T + 1):
            for a in range(hi1 - lo1 + 1):
                for c in range(hi2 - lo2 + 1):
                    w.writerow([t, lo1 + a, lo2 + c, format(self.cost[t][a, c], ".12g"),
                                self.W[t][a, c], self.Q1[t][a, c], self.Q2[t][a, c]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


# -- shared stage machinery ------------------------------------------------------

def _post_transship_range(inst: Instance) -> tuple[tuple[int, int], tuple[int, int]]:
    (lo1, hi1), (lo2, hi2) = inst.lattice
    return ((min(lo1, 0), hi1 + max(0, hi2)), (min(lo2, 0), hi2 + max(0, hi1)))


def _holding_penalty(inst: Instance, dist, y: np.ndarray) -> np.ndarray:
    loss, comp = loss_values(y, dist)
    return inst.h * comp + inst.b * loss


def immediate_cost(y: tuple[int, int], t: int, inst: Instance) -> float:
    """Expected holding plus penalty cost of period ``t`` at post-decision ``y``."""
    return float(sum(_holding_penalty(inst, inst.dists[t - 1][j], np.array([y[j]]))[0]
                     for j in range(2)))


def _expected_next(inst: Instance, t: int, V: np.ndarray,
                   y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    """``E[V(clamp(y - d))]`` on the grid ``y1 x y2``."""
    (lo1, hi1), (lo2, hi2) = inst.lattice
    d1, d2 = inst.dists[t - 1]
    idx1 = np.clip(y1[:, None] - d1.support[None, :] - lo1, 0, hi1 - lo1)
    A = np.einsum("ykj,k->yj", V[idx1], d1.pmf)
    idx2 = np.clip(y2[:, None] - d2.support[None, :] - lo2, 0, hi2 - lo2)
    return np.einsum("ayk,k->ay", A[:, idx2], d2.pmf)


def _stage_grid(inst: Instance, t: int, V_next: np.ndarray):
    """``G_t`` over all reachable post-decision positions and the grid origin."""
    (tl1, th1), (tl2, th2) = _post_transship_range(inst)
    q = inst.order_cap
    y1 = np.arange(tl1, th1 + q + 1)
    y2 = np.arange(tl2, th2 + q + 1)
    d1, d2 = inst.dists[t - 1]
    G = (_holding_penalty(inst, d1, y1)[:, None] + _holding_penalty(inst, d2, y2)[None, :]
         + _expected_next(inst, t, V_next, y1, y2))
    return G, (tl1, tl2)


def _lattice_shape(inst: Instance) -> tuple[int, int]:
    (lo1, hi1), (lo2, hi2) = inst.lattice
    return hi1 - lo1 + 1, hi2 - lo2 + 1


# -- SDP-1: joint enumeration -------------------------------------------------------

@njit(cache=True)
def _joint_kernel(G, g1, g2, lo1, n1, lo2, n2, qmax, ocost, tcost,
                  out_cost, out_w, out_q1, out_q2):
    for a in range(n1):
        i1 = lo1 + a
        for c in range(n2):
            i2 = lo2 + c
            wlo = min(0, -i2)
            whi = max(0, i1)
            best = np.inf
            bw = 0
            bq1 = 0
            bq2 = 0
            kmax = max(-wlo, whi)
            for k in range(kmax + 1):
                for s in range(2):
                    if k == 0 and s == 1:
                        continue
                    w = -k if s == 0 else k
                    if w < wlo or w > whi:
                        continue
                    base = tcost[k]
                    r1 = i1 - w - g1
                    r2 = i2 + w - g2
                    for q1 in range(qmax + 1):
                        b1 = base + ocost[q1]
                        for q2 in range(qmax + 1):
                            val = b1 + ocost[q2] + G[r1 + q1, r2 + q2]
                            if val < best:
                                best = val
                                bw = w
                                bq1 = q1
                                bq2 = q2
            out_cost[a, c] = best
            out_w[a, c] = bw
            out_q1[a, c] = bq1
            out_q2[a, c] = bq2


def _cost_vectors(inst: Instance):
    (lo1, hi1), (lo2, hi2) = inst.lattice
    wmax = max(hi1, hi2, -lo1, -lo2, 0) * 2 + 1
    ocost = inst.order_cost(np.arange(inst.order_cap + 1)).astype(float)
    tcost = inst.transship_cost(np.arange(wmax + 1)).astype(float)
    return ocost, tcost


def solve_sdp1(inst: Instance, initial_states: Iterable | None = None) -> ValueTable:
    """Exact optimum over the joint action space ``(W, Q1, Q2)``."""
    (lo1, _), (lo2, _) = inst.lattice
    n1, n2 = _lattice_shape(inst)
    ocost, tcost = _cost_vectors(inst)
    table = ValueTable(inst, "sdp1", {inst.T + 1: np.zeros((n1, n2))}, {}, {}, {})
    for t in range(inst.T, 0, -1):
        G, (g1, g2) = _stage_grid(inst, t, table.cost[t + 1])
        cost = np.empty((n1, n2))
        W = np.empty((n1, n2), dtype=np.int64)
        Q1 = np.empty_like(W)
        Q2 = np.empty_like(W)
        _joint_kernel(G, g1, g2, lo1, n1, lo2, n2, inst.order_cap, ocost, tcost,
                      cost, W, Q1, Q2)
        table.cost[t], table.W[t], table.Q1[t], table.Q2[t] = cost, W, Q1, Q2
    if initial_states is not None:
        _check_bounds(table, initial_states)
    return table


# -- SDP-2: transship stage, then ordering stage ----------------------------------------

def _order_stage(inst: Instance, G: np.ndarray, nt1: int, nt2: int):
    """Minimum over (Q1, Q2) of ``c(Q1) + c(Q2) + G`` for every post-transship state."""
    qmax = inst.order_cap
    ocost = inst.order_cost(np.arange(qmax + 1)).astype(float)
    ny1 = G.shape[0]
    inner = np.full((ny1, nt2), np.inf)
    arg2 = np.zeros((ny1, nt2), dtype=np.int64)
    for q2 in range(qmax + 1):
        cand = ocost[q2] + G[:, q2:q2 + nt2]
        better = cand < inner
        inner[better] = cand[better]
        arg2[better] = q2
    best = np.full((nt1, nt2), np.inf)
    arg1 = np.zeros((nt1, nt2), dtype=np.int64)
    for q1 in range(qmax + 1):
        cand = ocost[q1] + inner[q1:q1 + nt1, :]
        better = cand < best
        best[better] = cand[better]
        arg1[better] = q1
    rows = np.arange(nt1)[:, None] + arg1
    q2 = arg2[rows, np.arange(nt2)[None, :]]
    return best, arg1, q2


def solve_sdp2(inst: Instance, initial_states: Iterable | None = None) -> ValueTable:
    """Two-stage recursion: ``min_W u(|W|) + Cbar(i1 - W, i2 + W)`` where
    ``Cbar`` is the minimum over the order pair of the ordering-stage cost."""
    (lo1, hi1), (lo2, hi2) = inst.lattice
    n1, n2 = _lattice_shape(inst)
    (tl1, th1), (tl2, th2) = _post_transship_range(inst)
    nt1, nt2 = th1 - tl1 + 1, th2 - tl2 + 1
    I1, I2 = np.meshgrid(np.arange(lo1, hi1 + 1), np.arange(lo2, hi2 + 1), indexing="ij")
    wlo, whi = np.minimum(0, -I2), np.maximum(0, I1)
    table = ValueTable(inst, "sdp2", {inst.T + 1: np.zeros((n1, n2))}, {}, {}, {})
    for t in range(inst.T, 0, -1):
        G, _ = _stage_grid(inst, t, table.cost[t + 1])
        cbar, qa, qb = _order_stage(inst, G, nt1, nt2)
        cost = np.full((n1, n2), np.inf)
        W = np.zeros((n1, n2), dtype=np.int64)
        Q1 = np.zeros_like(W)
        Q2 = np.zeros_like(W)
        for w in transship_order(min(0, -hi2), max(0, hi1)):
            ok = (w >= wlo) & (w <= whi)
            r1 = np.clip(I1 - w - tl1, 0, nt1 - 1)
            r2 = np.clip(I2 + w - tl2, 0, nt2 - 1)
            cand = float(inst.transship_cost(w)) + cbar[r1, r2]
            better = ok & (cand < cost)
            cost[better] = cand[better]
            W[better] = w
            Q1[better] = qa[r1, r2][better]
            Q2[better] = qb[r1, r2][better]
        table.cost[t], table.W[t], table.Q1[t], table.Q2[t] = cost, W, Q1, Q2
    if initial_states is not None:
        _check_bounds(table, initial_states)
    return table


# -- forward induction ---------------------------------------------------------------

@dataclass
class ForwardResult:
    cost: float
    clamped_mass: float
    capped_mass: float


def _forward(inst: Instance, policy: Policy, initial, check_feasible: bool = True,
             first_action: Action | None = None) -> ForwardResult:
    (lo1, hi1), (lo2, hi2) = inst.lattice
    n1, n2 = _lattice_shape(inst)
    i1, i2 = int(initial[0]), int(initial[1])
    if not (lo1 <= i1 <= hi1 and lo2 <= i2 <= hi2):
        raise PolicyLookupError(f"initial state ({i1}, {i2}) outside the lattice")
    P = np.zeros((n1, n2))
    P[i1 - lo1, i2 - lo2] = 1.0
    total = clamped = capped = 0.0
    for t in range(1, inst.T + 1):
        d1, d2 = inst.dists[t - 1]
        nxt = np.zeros_like(P)
        for a, c in zip(*np.nonzero(P)):
            s1, s2 = lo1 + int(a), lo2 + int(c)
            mass = P[a, c]
            if t == 1 and first_action is not None:
                act = first_action
            else:
                act = policy(t, s1, s2)
            W, q1, q2 = int(act[0]), int(act[1]), int(act[2])
            if check_feasible:
                wl, wh = transship_range(s1, s2)
                if not wl <= W <= wh or q1 < 0 or q2 < 0:
                    raise PolicyLookupError(
                        f"infeasible action {tuple(act)} at stage {t}, state ({s1}, {s2})")
            if inst.order_cap > 0 and (q1 >= inst.order_cap or q2 >= inst.order_cap):
                capped += mass
            y1, y2 = s1 - W + q1, s2 + W + q2
            step = float(inst.transship_cost(W) + inst.order_cost(q1) + inst.order_cost(q2))
            step += immediate_cost((y1, y2), t, inst)
            total += mass * step
            r1 = y1 - d1.support
            r2 = y2 - d2.support
            out1 = (r1 < lo1) | (r1 > hi1)
            out2 = (r2 < lo2) | (r2 > hi2)
            clamped += mass * (1.0 - (d1.pmf @ ~out1) * (d2.pmf @ ~out2))
            k1 = np.clip(r1 - lo1, 0, n1 - 1)
            k2 = np.clip(r2 - lo2, 0, n2 - 1)
            np.add.at(nxt, (k1[:, None], k2[None, :]), mass * np.outer(d1.pmf, d2.pmf))
        P = nxt
    return ForwardResult(total, clamped, capped)


def evaluate_policy(inst: Instance, policy: Policy, initial,
                    check_feasible: bool = True) -> float:
    """Exact expected total cost of ``policy`` from ``initial``.

    ``policy(t, i1, i2)`` returns an :class:`Action`.  The expectation runs
    over the truncated demand lattice with the same edge clamping as the
    solvers, so a solver's own policy reproduces its table.
    """
    return _forward(inst, policy, initial, check_feasible).cost


def no_action_cost(inst: Instance, table: ValueTable, t: int, state) -> float:
    """Expected cost from stage ``t`` when nothing is done at ``t`` and the
    table's policy is followed afterwards (diagnostic only)."""
    sub = inst
    tail = lambda s, i1, i2: table.action(s + t - 1, i1, i2)
    if t > 1:
        sub = inst.with_(T=inst.T - t + 1,
                         demand=tuple(type(d)(d.family, d.means[t - 1:], d.cv, d.pmfs[t - 1:])
                                      for d in inst.demand))
    return _forward(sub, tail, state, first_action=Action(0, 0, 0)).cost


def _check_bounds(table: ValueTable, initial_states) -> None:
    worst = 0.0
    worst_cap = 0.0
    for s in initial_states:
        res = _forward(table.inst, table.action, s)
        worst = max(worst, res.clamped_mass)
        worst_cap = max(worst_cap, res.capped_mass)
    table.diagnostics.update(clamped_mass=float(worst), capped_mass=float(worst_cap))
    if worst > BOUNDARY_TOL or worst_cap > BOUNDARY_TOL:
        warnings.warn(
            f"{table.method}: lattice too tight (clamped mass {worst:.3g}, "
            f"order cap binding with mass {worst_cap:.3g})", BoundsWarning, stacklevel=3)
