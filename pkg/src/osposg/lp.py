"""Small linear programs: a sparse-row builder and pluggable solvers.

Two backends are registered:

``highs``
    scipy's HiGHS dual simplex (the default; deterministic, fast on the
    few-hundred-variable stage games solved here).
``simplex``
    an in-repo dense two-phase tableau simplex with Bland's rule, used as a
    fallback and as an independent cross-check in the tests.

Set ``OSPOSG_LP_BACKEND`` to pick the default backend and ``OSPOSG_LP_DUMP`` to
a directory to write every solved program there in LP-style text.
"""

from __future__ import annotations

import itertools
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
BOUND_TOL = 1e-9

log = logging.getLogger(__name__)

Sense = Literal["<=", ">=", "="]


class LpNumericalError(RuntimeError):
    """The solver could not meet the feasibility/optimality tolerances."""


@dataclass
class LpSolution:
    status: Literal["optimal", "infeasible", "unbounded"]
    objective: float
    x: np.ndarray
    iterations: int = 0
    duals: dict | None = None          # sense -> d objective / d rhs per inequality row

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class LinearProgram:
    """Variables with bounds, sparse constraint rows and a linear objective."""

    def __init__(self, sense: Literal["max", "min"] = "max"):
        if sense not in ("max", "min"):
            raise ValueError(sense)
        self.sense = sense
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._names: list[tuple[str, int, int]] = []
        self.n_vars = 0
        self._rows = {"<=": [], ">=": [], "=": []}  # lists of (row, col, val) arrays
        self._rhs = {"<=": [], ">=": [], "=": []}
        self._n_rows = {"<=": 0, ">=": 0, "=": 0}
        self._obj_cols: list[np.ndarray] = []
        self._obj_vals: list[np.ndarray] = []

    def add_variables(self, n: int, lb: float | np.ndarray = 0.0, ub: float | np.ndarray = np.inf,
                      name: str = "x") -> np.ndarray:
        idx = np.arange(self.n_vars, self.n_vars + n)
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (n,)).copy()
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (n,)).copy()
        if np.any(np.isnan(lb)) or np.any(lb == np.inf) or np.any(ub == -np.inf):
            raise ValueError("invalid variable bounds")
        self._lb.append(lb)
        self._ub.append(ub)
        self._names.append((name, self.n_vars, n))
        self.n_vars += n
        return idx

    def add_constraint(self, cols, vals, sense: Sense, rhs: float) -> int:
        cols = np.asarray(cols, dtype=np.int64)
        return int(self.add_constraints(np.zeros(len(cols), dtype=np.int64), cols, vals, sense, [rhs])[0])

    def add_constraints(self, rows, cols, vals, sense: Sense, rhs) -> np.ndarray:
        """Add a block of rows given in coordinate form; ``rows`` are 0-based within the block.

        Returns the indices of the new rows among all rows of the same sense.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        if len(cols) and (cols.min() < 0 or cols.max() >= self.n_vars):
            raise ValueError("constraint references an undeclared variable")
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(rhs))):
            raise ValueError("non-finite coefficient")
        off = self._n_rows[sense]
        self._rows[sense].append((rows + off, cols, vals))
        self._rhs[sense].append(rhs)
        self._n_rows[sense] += len(rhs)
        return np.arange(off, off + len(rhs))

    def add_objective(self, cols, vals) -> None:
        self._obj_cols.append(np.atleast_1d(np.asarray(cols, dtype=np.int64)))
        self._obj_vals.append(np.atleast_1d(np.asarray(vals, dtype=float)))

    # -- assembly ------------------------------------------------------------
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._lb:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(self._lb), np.concatenate(self._ub)

    def objective(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for cols, vals in zip(self._obj_cols, self._obj_vals):
            np.add.at(c, cols, vals)
        return c

    def matrix(self, sense: Sense) -> tuple[sparse.csr_array, np.ndarray]:
        m = self._n_rows[sense]
        if m == 0:
            return sparse.csr_array((0, self.n_vars)), np.zeros(0)
        r = np.concatenate([t[0] for t in self._rows[sense]])
        c = np.concatenate([t[1] for t in self._rows[sense]])
        v = np.concatenate([t[2] for t in self._rows[sense]])
        a = sparse.coo_array((v, (r, c)), shape=(m, self.n_vars)).tocsr()
        a.sum_duplicates()
        return a, np.concatenate(self._rhs[sense])

    def var_name(self, j: int) -> str:
        for name, start, n in self._names:
            if start <= j < start + n:
                return f"{name}[{j - start}]" if n > 1 else name
        raise IndexError(j)

    def to_text(self) -> str:
        """LP-format-style dump for debugging."""
        def term(coef, j):
            return f"{'+' if coef >= 0 else '-'} {abs(coef):.17g} {self.var_name(j)}"

        c = self.objective()
        lines = ["Maximize" if self.sense == "max" else "Minimize",
                 " obj: " + " ".join(term(c[j], j) for j in np.flatnonzero(c)),
                 "Subject To"]
        k = 0
        for sense in ("<=", ">=", "="):
            a, b = self.matrix(sense)
            for i in range(a.shape[0]):
                row = a[[i], :].tocoo()
                body = " ".join(term(v, j) for j, v in zip(row.col, row.data)) or "0"
                lines.append(f" c{k}: {body} {sense} {b[i]:.17g}")
                k += 1
        lines.append("Bounds")
        lb, ub = self.bounds()
        for j in range(self.n_vars):
            lo = "-inf" if lb[j] == -np.inf else f"{lb[j]:.17g}"
            hi = "+inf" if ub[j] == np.inf else f"{ub[j]:.17g}"
            lines.append(f" {lo} <= {self.var_name(j)} <= {hi}")
        lines.append("End")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# backends: minimise c @ x  s.t.  A_ub x <= b_ub, A_eq x = b_eq, lb <= x <= ub
# ---------------------------------------------------------------------------

# a backend returns (status, x, iterations, d objective / d b_ub or None)
Backend = Callable[..., tuple]


def _highs(c, a_ub, b_ub, a_eq, b_eq, lb, ub):
    bounds = np.column_stack([np.where(np.isinf(lb), None, lb), np.where(np.isinf(ub), None, ub)])
    # tight tolerances first; HiGHS' defaults when that stalls on a degenerate program
    for options in ({"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9}, {}):
        res = linprog(
            c,
            A_ub=a_ub if a_ub.shape[0] else None, b_ub=b_ub if a_ub.shape[0] else None,
            A_eq=a_eq if a_eq.shape[0] else None, b_eq=b_eq if a_eq.shape[0] else None,
            bounds=bounds, method="highs-ds", options=options,
        )
        status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status)
        if status is not None:
            break
    else:
        raise LpNumericalError(f"HiGHS status {res.status}: {res.message}")
    if status != "optimal":
        return status, np.full(len(c), np.nan), int(res.nit), None
    marg = res.ineqlin.marginals if a_ub.shape[0] else np.zeros(0)
    return status, res.x, int(res.nit), np.asarray(marg, dtype=float)


def _dense_simplex(c, a_ub, b_ub, a_eq, b_eq, lb, ub, tol=1e-9, max_iter=50_000):
    """Two-phase tableau simplex with Bland's rule."""
    a_ub = a_ub.toarray() if sparse.issparse(a_ub) else np.asarray(a_ub, dtype=float)
    a_eq = a_eq.toarray() if sparse.issparse(a_eq) else np.asarray(a_eq, dtype=float)
    n = len(c)
    # x = lb + y (finite lb) or x = y+ - y- (free); finite ub becomes a row
    cols, shift = [], np.zeros(n)
    for j in range(n):
        if np.isfinite(lb[j]):
            shift[j] = lb[j]
            cols.append((j, 1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    m_cols = len(cols)
    t = np.zeros((n, m_cols))
    for k, (j, s) in enumerate(cols):
        t[j, k] = s
    c2 = c @ t
    ub_rows = [j for j in range(n) if np.isfinite(ub[j])]
    a1 = np.vstack([a_ub @ t, t[ub_rows]]) if ub_rows else a_ub @ t
    b1 = np.concatenate([b_ub - a_ub @ shift, ub[ub_rows] - shift[ub_rows]])
    a2, b2 = a_eq @ t, b_eq - a_eq @ shift
    m1, m2 = a1.shape[0], a2.shape[0]
    m = m1 + m2
    # columns: structural | slacks (m1) | artificials (m)
    n_tot = m_cols + m1 + m
    tab = np.zeros((m, n_tot + 1))
    tab[:m1, :m_cols] = a1
    tab[:m1, m_cols:m_cols + m1] = np.eye(m1)
    tab[m1:, :m_cols] = a2
    tab[:, -1] = np.concatenate([b1, b2])
    neg = tab[:, -1] < 0
    tab[neg] *= -1
    basis = np.empty(m, dtype=np.int64)
    art = m_cols + m1
    n_art = 0
    for i in range(m):
        if i < m1 and not neg[i]:
            basis[i] = m_cols + i
        else:
            tab[i, art + i] = 1.0
            basis[i] = art + i
            n_art += 1
    iters = 0

    def pivot(r, col):
        tab[r] /= tab[r, col]
        for i in range(m):
            if i != r and tab[i, col] != 0.0:
                tab[i] -= tab[i, col] * tab[r]
        basis[r] = col

    def run(cost, allowed):
        nonlocal iters
        while True:
            cb = cost[basis]
            reduced = cost[:n_tot] - cb @ tab[:, :n_tot]
            enter = next((j for j in range(n_tot) if allowed[j] and reduced[j] < -tol), None)
            if enter is None:
                return "optimal"
            colv = tab[:, enter]
            pos = colv > tol
            if not np.any(pos):
                return "unbounded"
            ratios = np.full(m, np.inf)
            ratios[pos] = tab[pos, -1] / colv[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
            leave = ties[np.argmin(basis[ties])]
            pivot(leave, enter)
            iters += 1
            if iters > max_iter:
                raise LpNumericalError("simplex iteration limit")

    allowed = np.ones(n_tot, dtype=bool)
    if n_art:
        cost1 = np.zeros(n_tot)
        cost1[art:] = 1.0
        run(cost1, allowed)
        if tab[:, -1] @ cost1[basis] > 1e-7 * max(1.0, np.abs(tab[:, -1]).max()):
            return "infeasible", np.full(n, np.nan), iters, None
        # drive remaining artificials out of the basis
        for i in range(m):
            if basis[i] >= art:
                nz = np.flatnonzero(np.abs(tab[i, :art]) > tol)
                if len(nz):
                    pivot(i, nz[0])
    allowed[art:] = False
    cost2 = np.zeros(n_tot)
    cost2[:m_cols] = c2
    status = run(cost2, allowed)
    if status == "unbounded":
        return "unbounded", np.full(n, np.nan), iters, None
    y = np.zeros(n_tot)
    y[basis] = tab[:, -1]
    # row duals c_B B^-1 e_i, read off the slack columns (row negation cancels out)
    marg = cost2[basis] @ tab[:, m_cols:m_cols + a_ub.shape[0]]
    return "optimal", t @ y[:m_cols] + shift, iters, marg


_BACKENDS: dict[str, Backend] = {"highs": _highs, "simplex": _dense_simplex}
_dump_counter = itertools.count()


def register_backend(name: str, fn: Backend) -> None:
    _BACKENDS[name] = fn


def default_backend() -> str:
    return os.environ.get("OSPOSG_LP_BACKEND", "highs")


def solve(lp: LinearProgram, backend: str | None = None) -> LpSolution:
    """Solve ``lp``; an optimal answer is checked against the repo-wide tolerances.

    A numerical failure of ``highs`` is retried once with the dense simplex.
    """
    backend = backend or default_backend()
    dump = os.environ.get("OSPOSG_LP_DUMP")
    if dump:
        Path(dump).mkdir(parents=True, exist_ok=True)
        (Path(dump) / f"lp_{os.getpid()}_{next(_dump_counter):06d}.lp").write_text(lp.to_text())
    try:
        return _solve_with(lp, backend)
    except LpNumericalError as exc:
        if backend != "highs":
            raise
        log.warning("highs failed (%s); retrying with the dense simplex", exc)
        return _solve_with(lp, "simplex")


def _solve_with(lp: LinearProgram, backend: str) -> LpSolution:
    c = lp.objective()
    sign = -1.0 if lp.sense == "max" else 1.0
    a_le, b_le = lp.matrix("<=")
    a_ge, b_ge = lp.matrix(">=")
    a_eq, b_eq = lp.matrix("=")
    a_ub = sparse.vstack([a_le, -a_ge]).tocsr()
    b_ub = np.concatenate([b_le, -b_ge])
    lb, ub = lp.bounds()
    status, x, iters, marg = _BACKENDS[backend](sign * c, a_ub, b_ub, a_eq, b_eq, lb, ub)
    if status != "optimal":
        return LpSolution(status, np.nan, x, iters)
    # snap tiny bound violations, then verify feasibility
    viol_bound = np.maximum(lb - x, x - ub)
    if np.any(viol_bound > max(BOUND_TOL, FEAS_TOL)):
        raise LpNumericalError(f"bound violation {viol_bound.max():.3g}")
    x = np.clip(x, lb, ub)
    for a, b, kind in ((a_ub, b_ub, "<="), (a_eq, b_eq, "=")):
        if a.shape[0] == 0:
            continue
        lhs = a @ x
        scale = np.maximum(1.0, abs(a) @ np.abs(x))
        r = (lhs - b) if kind == "<=" else np.abs(lhs - b)
        if np.any(r > FEAS_TOL * scale):
            raise LpNumericalError(f"constraint violation {float((r / scale).max()):.3g} ({kind})")
    duals = None
    if marg is not None:
        n_le = a_le.shape[0]
        duals = {"<=": sign * marg[:n_le], ">=": -sign * marg[n_le:]}
    return LpSolution("optimal", float(c @ x), x, iters, duals)


def solve_matrix_game(payoff: np.ndarray, backend: str | None = None) -> tuple[float, np.ndarray]:
    """Value and maximin row strategy of the zero-sum game ``payoff`` (row player maximises)."""
    payoff = np.asarray(payoff, dtype=float)
    m, n = payoff.shape
    lp = LinearProgram("max")
    v = lp.add_variables(1, lb=-np.inf, name="v")
    p = lp.add_variables(m, name="p")
    # v - sum_i p_i M_ij <= 0 for every column j
    rows = np.repeat(np.arange(n), m + 1)
    cols = np.tile(np.concatenate([v, p]), n)
    vals = np.column_stack([np.ones(n), -payoff.T]).ravel()
    lp.add_constraints(rows, cols, vals, "<=", np.zeros(n))
    lp.add_constraint(p, np.ones(m), "=", 1.0)
    lp.add_objective(v, [1.0])
    sol = solve(lp, backend)
    if not sol.optimal:
        raise LpNumericalError(f"matrix game LP returned {sol.status}")
    probs = np.clip(sol.x[p], 0.0, None)
    return float(sol.x[v[0]]), probs / probs.sum()
