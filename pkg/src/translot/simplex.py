"""Dense-tableau two-phase simplex.

Solves ``min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub``
with possibly infinite bounds.  Dantzig pricing, switching to Bland's rule
after a run of degenerate pivots to rule out cycling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-9
MAX_ITER = 100_000
DEGENERATE_RUN = 50


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "iteration_limit"
    x: np.ndarray | None = None
    fun: float | None = None
    iterations: int = 0


class _Tableau:
    def __init__(self, M: np.ndarray, basis: np.ndarray):
        self.M = M  # last row is the reduced-cost row, last column the rhs
        self.basis = basis
        self.iterations = 0

    def pivot(self, r: int, k: int) -> None:
        M = self.M
        M[r] /= M[r, k]
        col = M[:, k].copy()
        col[r] = 0.0
        M -= np.outer(col, M[r])
        self.basis[r] = k
        self.iterations += 1

    def run(self, allowed: np.ndarray) -> str:
        M = self.M
        m = M.shape[0] - 1
        degenerate = 0
        while True:
            if self.iterations >= MAX_ITER:
                return "iteration_limit"
            red = M[-1, :-1]
            cand = np.flatnonzero((red < -TOL) & allowed)
            if cand.size == 0:
                return "optimal"
            if degenerate >= DEGENERATE_RUN:
                k = cand[0]
            else:
                k = cand[np.argmin(red[cand])]
            colk = M[:m, k]
            pos = colk > TOL
            if not pos.any():
                return "unbounded"
            ratios = np.full(m, np.inf)
            ratios[pos] = M[:m, -1][pos] / colk[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + TOL * max(1.0, abs(best)))
            r = ties[np.argmin(self.basis[ties])]
            degenerate = degenerate + 1 if best <= TOL else 0
            self.pivot(r, k)


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lb=None, ub=None) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
    if np.any(lb > ub + TOL):
        return LPResult("infeasible")

    # x = shift + S @ x',  x' >= 0
    cols, shift = [], np.zeros(n)
    extra_ub = []  # (column in x', bound)
    for j in range(n):
        if np.isfinite(lb[j]):
            shift[j] = lb[j]
            cols.append((j, 1.0))
            if np.isfinite(ub[j]):
                extra_ub.append((len(cols) - 1, ub[j] - lb[j]))
        elif np.isfinite(ub[j]):
            shift[j] = ub[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nv = len(cols)
    S = np.zeros((n, nv))
    for k, (j, s) in enumerate(cols):
        S[j, k] = s
    Aub = A_ub @ S
    bub = b_ub - A_ub @ shift
    if extra_ub:
        rows = np.zeros((len(extra_ub), nv))
        for r, (k, bound) in enumerate(extra_ub):
            rows[r, k] = 1.0
        Aub = np.vstack([Aub, rows])
        bub = np.concatenate([bub, [bnd for _, bnd in extra_ub]])
    Aeq = A_eq @ S
    beq = b_eq - A_eq @ shift
    cp = c @ S

    m_ub, m_eq = Aub.shape[0], Aeq.shape[0]
    m = m_ub + m_eq
    # equality form [A | slacks] z = b with b >= 0
    A = np.zeros((m, nv + m_ub))
    A[:m_ub, :nv] = Aub
    A[:m_ub, nv:] = np.eye(m_ub)
    A[m_ub:, :nv] = Aeq
    b = np.concatenate([bub, beq])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    basis = -np.ones(m, dtype=int)
    for r in range(m_ub):
        if not neg[r]:
            basis[r] = nv + r
    art_rows = np.flatnonzero(basis < 0)
    na = art_rows.size
    ntot = nv + m_ub + na
    M = np.zeros((m + 1, ntot + 1))
    M[:m, :nv + m_ub] = A
    for k, r in enumerate(art_rows):
        M[r, nv + m_ub + k] = 1.0
        basis[r] = nv + m_ub + k
    M[:m, -1] = b
    tab = _Tableau(M, basis)

    if na:
        M[-1, :] = 0.0
        M[-1, nv + m_ub:ntot] = 1.0
        for r in art_rows:
            M[-1] -= M[r]
        status = tab.run(np.ones(ntot, dtype=bool))
        if status == "iteration_limit":
            return LPResult(status, iterations=tab.iterations)
        if -M[-1, -1] > 1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
            return LPResult("infeasible", iterations=tab.iterations)
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= nv + m_ub:
                row = M[r, :nv + m_ub]
                nz = np.flatnonzero(np.abs(row) > 1e-9)
                if nz.size:
                    tab.pivot(r, nz[0])
                else:
                    keep[r] = False
        if not keep.all():
            M = np.vstack([M[:m][keep], M[-1:]])
            tab.M = M
            tab.basis = tab.basis[keep]
            m = M.shape[0] - 1
    allowed = np.zeros(ntot, dtype=bool)
    allowed[:nv + m_ub] = True
    M[-1, :] = 0.0
    M[-1, :nv] = cp
    for r in range(m):
        k = tab.basis[r]
        if M[-1, k] != 0.0:
            M[-1] -= M[-1, k] * M[r]
    status = tab.run(allowed)
    if status != "optimal":
        return LPResult(status, iterations=tab.iterations)
    z = np.zeros(ntot)
    z[tab.basis] = M[:m, -1]
    x = shift + S @ z[:nv]
    return LPResult("optimal", x, float(c @ x), tab.iterations)
