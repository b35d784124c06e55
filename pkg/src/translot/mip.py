"""Generic MILP container, branch-and-bound, solver backends, LP-format I/O."""
from __future__ import annotations

import heapq
import os
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import simplex
from .errors import ConfigurationError

INT_TOL = 1e-6
GAP_TOL = 1e-6


@dataclass
class MilpModel:
    """``min c'x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq``, bounds,
    and integrality of the flagged columns (all integer columns here are
    binaries)."""

    names: list[str]
    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    row_names_ub: list[str] = field(default_factory=list)
    row_names_eq: list[str] = field(default_factory=list)

    @property
    def index(self) -> dict[str, int]:
        return {nm: k for k, nm in enumerate(self.names)}

    @property
    def n_binaries(self) -> int:
        return int(np.count_nonzero(self.integer))

    def with_bounds(self, lb, ub) -> MilpModel:
        return MilpModel(self.names, self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq,
                         np.asarray(lb, float), np.asarray(ub, float), self.integer,
                         self.row_names_ub, self.row_names_eq)


@dataclass
class SolveResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "error"
    x: np.ndarray | None = None
    objective: float | None = None
    nodes: int = 0
    message: str = ""


class ModelBuilder:
    """Row-by-row construction of a :class:`MilpModel` by variable name."""

    def __init__(self):
        self.names: list[str] = []
        self._idx: dict[str, int] = {}
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []
        self.obj: dict[str, float] = {}
        self.ub_rows: list[tuple[str, dict, float]] = []
        self.eq_rows: list[tuple[str, dict, float]] = []

    def var(self, name: str, lb=0.0, ub=np.inf, binary=False) -> str:
        if name in self._idx:
            raise ConfigurationError(f"duplicate variable {name}")
        self._idx[name] = len(self.names)
        self.names.append(name)
        self.lb.append(0.0 if binary else lb)
        self.ub.append(1.0 if binary else ub)
        self.integer.append(binary)
        return name

    def cost(self, name: str, coef: float) -> None:
        self.obj[name] = self.obj.get(name, 0.0) + coef

    def le(self, row: str, terms: dict, rhs: float) -> None:
        self.ub_rows.append((row, terms, rhs))

    def eq(self, row: str, terms: dict, rhs: float) -> None:
        self.eq_rows.append((row, terms, rhs))

    def _matrix(self, rows):
        A = np.zeros((len(rows), len(self.names)))
        for r, (_, terms, _) in enumerate(rows):
            for nm, coef in terms.items():
                A[r, self._idx[nm]] += coef
        return A, np.array([rhs for *_, rhs in rows], dtype=float)

    def build(self) -> MilpModel:
        c = np.zeros(len(self.names))
        for nm, coef in self.obj.items():
            c[self._idx[nm]] = coef
        A_ub, b_ub = self._matrix(self.ub_rows)
        A_eq, b_eq = self._matrix(self.eq_rows)
        return MilpModel(list(self.names), c, A_ub, b_ub, A_eq, b_eq,
                         np.array(self.lb, float), np.array(self.ub, float),
                         np.array(self.integer, bool),
                         [r[0] for r in self.ub_rows], [r[0] for r in self.eq_rows])


# -- branch and bound ----------------------------------------------------------------

def solve_lp(model: MilpModel, lb=None, ub=None) -> simplex.LPResult:
    return simplex.linprog(model.c, model.A_ub, model.b_ub, model.A_eq, model.b_eq,
                           model.lb if lb is None else lb, model.ub if ub is None else ub)


def branch_and_bound(model: MilpModel, rel_gap: float = GAP_TOL) -> SolveResult:
    """Best-first branch-and-bound over the binary columns.

    Nodes are explored by lowest LP bound, ties by creation order.  Each node
    also tries a rounding heuristic: fractional binaries are set to 1 (the
    fixed-charge direction) and the LP is re-solved.  ``nodes`` counts the LP
    relaxations solved beyond the root.
    """
    bins = np.flatnonzero(model.integer)
    incumbent, inc_x = np.inf, None
    counter = 0
    heap = [(-np.inf, counter, model.lb.copy(), model.ub.copy())]
    nodes = -1
    seen_unbounded = False

    def good_enough(bound):
        return bound >= incumbent - rel_gap * max(1.0, abs(incumbent))

    while heap:
        bound, _, lb, ub = heapq.heappop(heap)
        if good_enough(bound):
            break
        nodes += 1
        res = solve_lp(model, lb, ub)
        if res.status == "unbounded":
            seen_unbounded = True
            continue
        if res.status != "optimal":
            continue
        if good_enough(res.fun):
            continue
        xb = res.x[bins]
        frac = np.abs(xb - np.round(xb))
        if frac.max(initial=0.0) <= INT_TOL:
            incumbent, inc_x = res.fun, res.x
            continue
        lb_r, ub_r = lb.copy(), ub.copy()
        fix = (xb > INT_TOL).astype(float)
        lb_r[bins] = fix
        ub_r[bins] = fix
        heur = solve_lp(model, lb_r, ub_r)
        if heur.status == "optimal" and heur.fun < incumbent:
            incumbent, inc_x = heur.fun, heur.x
            if good_enough(res.fun):
                continue
        k = bins[np.argmax(frac)]
        for val in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[k] = cub[k] = val
            counter += 1
            heapq.heappush(heap, (res.fun, counter, clb, cub))
    nodes = max(nodes, 0)
    if inc_x is None:
        if seen_unbounded:
            return SolveResult("unbounded", nodes=nodes)
        return SolveResult("infeasible", nodes=nodes)
    x = inc_x.copy()
    x[bins] = np.round(x[bins])
    return SolveResult("optimal", x, float(incumbent), nodes)


# -- backends ------------------------------------------------------------------------

class BuiltinBackend:
    name = "builtin"

    def __init__(self, rel_gap: float = GAP_TOL):
        self.rel_gap = rel_gap

    def solve(self, model: MilpModel) -> SolveResult:
        return branch_and_bound(model, self.rel_gap)


class HighsBackend:
    """HiGHS through :func:`scipy.optimize.milp`."""

    name = "highs"

    def __init__(self, rel_gap: float = 1e-9):
        self.rel_gap = rel_gap

    def solve(self, model: MilpModel) -> SolveResult:
        from scipy.optimize import Bounds, LinearConstraint, milp

        cons = []
        if model.A_ub.shape[0]:
            cons.append(LinearConstraint(model.A_ub, -np.inf, model.b_ub))
        if model.A_eq.shape[0]:
            cons.append(LinearConstraint(model.A_eq, model.b_eq, model.b_eq))
        res = milp(model.c, constraints=cons, integrality=model.integer.astype(int),
                   bounds=Bounds(model.lb, model.ub),
                   options={"mip_rel_gap": self.rel_gap, "presolve": True})
        if res.status == 0:
            x = res.x.copy()
            x[model.integer] = np.round(x[model.integer])
            return SolveResult("optimal", x, float(res.fun), message=res.message)
        status = {2: "infeasible", 3: "unbounded"}.get(res.status, "error")
        return SolveResult(status, message=res.message)


class ExternalBackend:
    """Solve through an external program exchanging files.

    ``command`` is a shell-style template with ``{lp}`` (model in LP format)
    and ``{sol}`` (solution path) placeholders.  The program must write
    ``status <word>``, ``objective <value>`` and one ``<name> <value>`` line
    per variable to ``{sol}``.
    """

    name = "external"

    def __init__(self, command: str, timeout: float | None = None):
        self.command = command
        self.timeout = timeout

    def solve(self, model: MilpModel) -> SolveResult:
        with tempfile.TemporaryDirectory() as tmp:
            lp = os.path.join(tmp, "model.lp")
            sol = os.path.join(tmp, "model.sol")
            with open(lp, "w") as fh:
                fh.write(write_lp(model))
            argv = [a.format(lp=lp, sol=sol) for a in shlex.split(self.command)]
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout)
            if proc.returncode != 0 or not os.path.exists(sol):
                return SolveResult("error", message=proc.stderr.strip())
            return read_solution(open(sol).read(), model)


def read_solution(text: str, model: MilpModel) -> SolveResult:
    values, status, obj = {}, "error", None
    for line in text.splitlines():
        parts = line.split()
        if len(parts) != 2:
            continue
        key, val = parts
        if key == "status":
            status = val
        elif key == "objective":
            obj = float(val)
        else:
            values[key] = float(val)
    if status != "optimal":
        return SolveResult(status)
    x = np.array([values.get(nm, 0.0) for nm in model.names])
    return SolveResult("optimal", x, obj if obj is not None else float(model.c @ x))


def make_backend(spec: str | object | None):
    if spec is None or spec == "builtin":
        return BuiltinBackend()
    if spec == "highs":
        return HighsBackend()
    if isinstance(spec, str) and spec.startswith("external:"):
        return ExternalBackend(spec[len("external:"):])
    if hasattr(spec, "solve"):
        return spec
    raise ConfigurationError(f"unknown solver backend {spec!r}")


# -- LP text format ---------------------------------------------------------------

def _num(x: float) -> str:
    return format(float(x), ".12g")


def _expr(coefs: np.ndarray, names: list[str]) -> str:
    terms = []
    for k in np.flatnonzero(coefs):
        a = coefs[k]
        sign = "-" if a < 0 else "+"
        terms.append(f"{sign} {_num(abs(a))} {names[k]}")
    if not terms:
        return "0 " + names[0]
    lines, cur = [], []
    for t in terms:
        cur.append(t)
        if len(cur) == 6:
            lines.append(" ".join(cur))
            cur = []
    if cur:
        lines.append(" ".join(cur))
    return "\n   ".join(lines)


def write_lp(model: MilpModel, comment: str = "") -> str:
    out = []
    if comment:
        out.extend(f"\\ {ln}" for ln in comment.splitlines())
    out.append("Minimize")
    out.append(f" obj: {_expr(model.c, model.names)}")
    out.append("Subject To")
    for r in range(model.A_ub.shape[0]):
        nm = model.row_names_ub[r] if model.row_names_ub else f"u{r}"
        out.append(f" {nm}: {_expr(model.A_ub[r], model.names)} <= {_num(model.b_ub[r])}")
    for r in range(model.A_eq.shape[0]):
        nm = model.row_names_eq[r] if model.row_names_eq else f"e{r}"
        out.append(f" {nm}: {_expr(model.A_eq[r], model.names)} = {_num(model.b_eq[r])}")
    out.append("Bounds")
    for k, nm in enumerate(model.names):
        if model.integer[k]:
            continue
        lo, hi = model.lb[k], model.ub[k]
        if not np.isfinite(lo) and not np.isfinite(hi):
            out.append(f" {nm} free")
        elif lo == 0 and not np.isfinite(hi):
            continue
        else:
            slo = _num(lo) if np.isfinite(lo) else "-inf"
            shi = _num(hi) if np.isfinite(hi) else "+inf"
            out.append(f" {slo} <= {nm} <= {shi}")
    bins = [nm for k, nm in enumerate(model.names) if model.integer[k]]
    if bins:
        out.append("Binaries")
        for k in range(0, len(bins), 8):
            out.append(" " + " ".join(bins[k:k + 8]))
    out.append("End")
    return "\n".join(out) + "\n"


_SECTIONS = {
    "minimize": "obj", "minimum": "obj", "min": "obj",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "generals": "gen", "general": "gen", "end": "end",
}
_TERM = re.compile(r"([+-]?)\s*([0-9.eE+-]*\d[0-9.eE+-]*|)\s*([A-Za-z_][\w.\[\]]*)")


def _parse_terms(s: str) -> dict[str, float]:
    terms: dict[str, float] = {}
    s = s.strip()
    pos = 0
    for m in _TERM.finditer(s):
        sign, num, name = m.groups()
        coef = float(num) if num else 1.0
        if sign == "-":
            coef = -coef
        terms[name] = terms.get(name, 0.0) + coef
        pos = m.end()
    return terms


def read_lp(text: str) -> MilpModel:
    """Parse the subset of the LP format produced by :func:`write_lp`."""
    section = None
    chunks: dict[str, list[str]] = {"obj": [], "st": [], "bounds": [], "bin": [], "gen": []}
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in _SECTIONS:
            section = _SECTIONS[key]
            continue
        if section is None or section == "end":
            raise ConfigurationError(f"unexpected LP line {raw!r}")
        chunks[section].append(line)

    def statements(lines):
        stmts = []
        for ln in lines:
            if re.match(r"^[A-Za-z_][\w.]*\s*:", ln) or not stmts:
                stmts.append(ln)
            else:
                stmts[-1] += " " + ln
        return stmts

    b = ModelBuilder()
    seen: dict[str, None] = {}

    def touch(names):
        for nm in names:
            if nm not in seen:
                seen[nm] = None

    obj_terms = {}
    for st in statements(chunks["obj"]):
        body = st.split(":", 1)[1] if ":" in st else st
        obj_terms.update(_parse_terms(body))
    rows = []
    for st in statements(chunks["st"]):
        name, body = st.split(":", 1)
        m = re.match(r"(.*?)(<=|>=|=<|=>|=)\s*([-+0-9.eE]+)\s*$", body)
        if not m:
            raise ConfigurationError(f"cannot parse constraint {st!r}")
        lhs, sense, rhs = m.groups()
        terms = _parse_terms(lhs)
        touch(terms)
        rows.append((name.strip(), terms, sense, float(rhs)))
    touch(obj_terms)
    binaries = set()
    for ln in chunks["bin"]:
        binaries.update(ln.split())
    touch(sorted(binaries - set(seen)))
    bounds = {}
    for ln in chunks["bounds"]:
        parts = ln.split()
        if len(parts) == 2 and parts[1].lower() == "free":
            bounds[parts[0]] = (-np.inf, np.inf)
        elif len(parts) == 5:
            lo, _, nm, _, hi = parts
            bounds[nm] = (float(lo.replace("inf", "inf")), float(hi))
        else:
            raise ConfigurationError(f"cannot parse bound {ln!r}")
    for nm in seen:
        if nm in binaries:
            b.var(nm, binary=True)
        else:
            lo, hi = bounds.get(nm, (0.0, np.inf))
            b.var(nm, lo, hi)
    for nm, coef in obj_terms.items():
        b.cost(nm, coef)
    for name, terms, sense, rhs in rows:
        if sense == "=":
            b.eq(name, terms, rhs)
        elif sense in ("<=", "=<"):
            b.le(name, terms, rhs)
        else:
            b.le(name, {k: -v for k, v in terms.items()}, -rhs)
    model = b.build()
    return model
