"""Lower bound as piecewise-constant alpha tables, upper bound as belief-value pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from osposg import lp as lpmod
from osposg.belief import WeightedBelief
from osposg.model import GameModel


class AlphaSet:
    """Finite set of alpha tables, each of shape ``(n_s1, n_regions)``.

    Index 0 is always the constant table at ``L``.
    """

    def __init__(self, model: GameModel, L: float):
        self.model = model
        self.L = L
        self._values = np.full((1, model.n_s1, model.n_regions), L)
        self._n = 1
        self.provenance: list[str] = ["initial"]
        self._slice_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def __len__(self) -> int:
        return self._n

    @property
    def values(self) -> np.ndarray:
        return self._values[: self._n]

    def __getitem__(self, k: int) -> np.ndarray:
        return self._values[k]

    def append(self, table: np.ndarray, provenance: str = "backup") -> int:
        """Add a table unless an identical one is present; return its index."""
        table = np.asarray(table, dtype=float)
        same = np.flatnonzero(np.all(self.values == table, axis=(1, 2)))
        if len(same):
            return int(same[0])
        if self._n == len(self._values):
            grown = np.empty((2 * self._n, *self._values.shape[1:]))
            grown[: self._n] = self._values
            self._values = grown
        self._values[self._n] = table
        self._n += 1
        self.provenance.append(provenance)
        self._slice_cache.clear()
        return self._n - 1

    def unique_slices(self, s1: int) -> tuple[np.ndarray, np.ndarray]:
        """Representative indices of distinct slices at ``s1`` and their values."""
        hit = self._slice_cache.get(s1)
        if hit is None:
            sl = self.values[:, s1, :]
            _, first = np.unique(sl, axis=0, return_index=True)
            first = np.sort(first)
            hit = (first, sl[first])
            self._slice_cache[s1] = hit
        return hit


@dataclass
class BeliefValuePair:
    belief: WeightedBelief
    y: float


class UpsilonSet:
    """Belief-value pairs with a Lipschitz constant for interpolation."""

    def __init__(self, model: GameModel, lipschitz: float, U: float):
        self.model = model
        self.lipschitz = lipschitz
        self.U = U
        self.pairs: list[BeliefValuePair] = []
        self._by_state: dict[int, list[int]] = {}
        self._dense: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self.pairs)

    def append(self, belief: WeightedBelief, y: float) -> bool:
        """Add a pair; a pair whose belief is already stored with a value ``<= y`` is skipped."""
        for j in self._by_state.get(belief.s1, ()):
            if self.pairs[j].belief == belief and self.pairs[j].y <= y:
                return False
        self._by_state.setdefault(belief.s1, []).append(len(self.pairs))
        self.pairs.append(BeliefValuePair(belief, float(y)))
        self._dense.pop(belief.s1, None)
        return True

    def at_state(self, s1: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(pair indices, y values, belief matrix restricted to its support, support)``."""
        hit = self._dense.get(s1)
        if hit is None:
            idx = np.array(self._by_state.get(s1, []), dtype=np.int64)
            ys = np.array([self.pairs[j].y for j in idx])
            mat = np.zeros((len(idx), self.model.n_points))
            for r, j in enumerate(idx):
                b = self.pairs[j].belief
                mat[r, b.points] = b.weights
            hit = (idx, ys, mat)
            self._dense[s1] = hit
        return hit


def init_bounds(model: GameModel, point_values: dict | None = None
                ) -> tuple[AlphaSet, UpsilonSet, float, float]:
    """Initial bound sets ``{alpha = L}`` and ``{(b_init, U)}``.

    :param point_values: optional upper values for point beliefs, keyed by
        ``(s1, e)``; each becomes an extra belief-value pair.  Values of the
        perfect-information game are valid here.
    """
    beta = model.beta
    rmin, rmax = model.reward_bounds
    L, U = rmin / (1.0 - beta), rmax / (1.0 - beta)
    gamma = AlphaSet(model, L)
    upsilon = UpsilonSet(model, (U - L) / 2.0, U)
    upsilon.append(model.init_belief, U)
    for (s1, e), y in sorted((point_values or {}).items()):
        upsilon.append(WeightedBelief.point_mass(s1, e), min(y, U))
    return gamma, upsilon, L, U


def alpha_dot(model: GameModel, table: np.ndarray, b: WeightedBelief) -> float:
    return float(table[b.s1, model.region_of[b.points]] @ b.weights)


def eval_lower(gamma: AlphaSet, b: WeightedBelief) -> tuple[float, int]:
    """Max over alpha tables of the particle-weighted sum; ties go to the lowest index."""
    vals = gamma.values[:, b.s1, gamma.model.region_of[b.points]] @ b.weights
    k = int(np.argmax(vals))
    return float(vals[k]), k


def k_ub(b1: WeightedBelief, b2: WeightedBelief, lipschitz: float) -> float:
    """``lipschitz * ||b1 - b2||_1`` over the union of supports."""
    pts = np.union1d(b1.points, b2.points)
    d = np.zeros(len(pts))
    d[np.searchsorted(pts, b1.points)] += b1.weights
    d[np.searchsorted(pts, b2.points)] -= b2.weights
    return lipschitz * float(np.abs(d).sum())


def add_continuation(lp: lpmod.LinearProgram, upsilon: UpsilonSet, s1: int,
                     tau_pts: np.ndarray, tau_mat: sparse.csr_array | None,
                     tau_const: np.ndarray | None):
    """Encode the mass-scaled upper bound ``P * V_ub(tau / P)`` at agent state ``s1``.

    ``tau(e) = tau_const[k] + tau_mat[k] @ x`` for ``e = tau_pts[k]``, linear in
    existing variables ``x``.  ``tau`` is split into a part charged at ``U``
    and a part interpolated between stored pairs with an L1 penalty.  Returns
    the cost as ``(cols, coefs, constant)`` and the index arrays of the
    interpolation weights.
    """
    m = len(tau_pts)
    if tau_const is None:
        tau_const = np.zeros(m)
    if tau_mat is None:
        tau_mat = sparse.csr_array((m, lp.n_vars))
    U = upsilon.U
    idx, ys, mat = upsilon.at_state(s1)
    t = tau_mat.tocoo()
    if len(idx) == 0:
        colsum = np.asarray(tau_mat.sum(axis=0)).ravel()
        nz = np.flatnonzero(colsum)
        return (nz, U * colsum[nz], U * float(tau_const.sum())), np.zeros(0, dtype=np.int64)
    support = np.flatnonzero(mat.any(axis=0))
    E = np.union1d(support, tau_pts)
    pos = np.searchsorted(E, tau_pts)          # tau row k -> position in E
    nE, J = len(E), len(idx)
    tau0 = lp.add_variables(m, name=f"tau0_{s1}")
    lam = lp.add_variables(J, name=f"lam_{s1}")
    d = lp.add_variables(nE, name=f"d_{s1}")
    # tau - tau0 >= 0
    lp.add_constraints(
        np.concatenate([t.row, np.arange(m)]),
        np.concatenate([t.col, tau0]),
        np.concatenate([t.data, -np.ones(m)]),
        ">=", -tau_const,
    )
    # sum(lam) - sum(tau) + sum(tau0) = sum(tau_const)
    lp.add_constraints(
        np.zeros(J + len(t.data) + m, dtype=np.int64),
        np.concatenate([lam, t.col, tau0]),
        np.concatenate([np.ones(J), -t.data, np.ones(m)]),
        "=", [float(tau_const.sum())],
    )
    bsub = mat[:, E]                            # (J, nE)
    br, bc = np.nonzero(bsub.T)                 # rows over E, cols over pairs
    bv = bsub.T[br, bc]
    const_e = np.zeros(nE)
    const_e[pos] = tau_const
    for sign in (1.0, -1.0):
        # d_e + sign * (tau_e - tau0_e - B_e lam) >= 0
        lp.add_constraints(
            np.concatenate([np.arange(nE), pos[t.row], pos, br]),
            np.concatenate([d, t.col, tau0, lam[bc]]),
            np.concatenate([np.ones(nE), sign * t.data, -sign * np.ones(m), -sign * bv]),
            ">=", -sign * const_e,
        )
    cols = np.concatenate([tau0, lam, d])
    coefs = np.concatenate([np.full(m, U), ys, np.full(nE, upsilon.lipschitz)])
    return (cols, coefs, 0.0), lam


def eval_upper(upsilon: UpsilonSet, b: WeightedBelief) -> tuple[float, dict[int, float]]:
    """Upper-bound value at ``b`` and the interpolation weights (pair index -> weight)."""
    idx, _, _ = upsilon.at_state(b.s1)
    if len(idx) == 0:
        return upsilon.U, {}
    prog = lpmod.LinearProgram("min")
    (cols, coefs, const), lam = add_continuation(prog, upsilon, b.s1, b.points, None, b.weights)
    prog.add_objective(cols, coefs)
    sol = lpmod.solve(prog)
    if not sol.optimal:
        raise lpmod.LpNumericalError(f"upper-bound LP returned {sol.status}")
    weights = {int(j): float(w) for j, w in zip(idx, sol.x[lam]) if w > 1e-12}
    return min(sol.objective + const, upsilon.U), weights


# ---------------------------------------------------------------------------
# serialisation helpers
# ---------------------------------------------------------------------------

def gamma_to_json(gamma: AlphaSet) -> list:
    return [{"provenance": p, "values": v.tolist()} for p, v in zip(gamma.provenance, gamma.values)]


def upsilon_to_json(upsilon: UpsilonSet) -> list:
    return [{"belief": pr.belief.to_json(upsilon.model), "y": pr.y} for pr in upsilon.pairs]


def gamma_from_json(model: GameModel, L: float, doc: list) -> AlphaSet:
    gamma = AlphaSet(model, L)
    for k, entry in enumerate(doc):
        table = np.asarray(entry["values"], dtype=float)
        if k == 0:
            gamma._values[0] = table
            gamma.provenance[0] = entry["provenance"]
        else:
            # bypass duplicate suppression so indices survive the round trip
            if gamma._n == len(gamma._values):
                grown = np.empty((2 * gamma._n, *gamma._values.shape[1:]))
                grown[: gamma._n] = gamma._values
                gamma._values = grown
            gamma._values[gamma._n] = table
            gamma._n += 1
            gamma.provenance.append(entry["provenance"])
    return gamma


def upsilon_from_json(model: GameModel, lipschitz: float, U: float, doc: list) -> UpsilonSet:
    ups = UpsilonSet(model, lipschitz, U)
    for entry in doc:
        b = WeightedBelief.from_json(model, entry["belief"])
        ups._by_state.setdefault(b.s1, []).append(len(ups.pairs))
        ups.pairs.append(BeliefValuePair(b, float(entry["y"])))
    return ups
