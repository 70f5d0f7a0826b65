"""Dense two-phase simplex with Bland's anti-cycling rule.

Solves ``min (or max) c @ x`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq``
and ``x >= 0``. Before a verdict is returned the tableau is rebuilt from the
original data and re-checked, which keeps badly scaled problems (founder joints
with entries near 1e-11) from drifting into false infeasibility. Rebuilds are
capped per phase so they cannot defeat Bland's termination guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
MAX_REFRESH = 8
TIE_PIVOT_FRAC = 1e-3


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: np.ndarray | None = None
    value: float | None = None
    iterations: int = 0


def _pivot(T: np.ndarray, i: int, j: int) -> None:
    T[i] /= T[i, j]
    col = T[:, j].copy()
    col[i] = 0.0
    nz = np.nonzero(col)[0]
    if nz.size:
        T[nz] -= np.outer(col[nz], T[i])


class _Tableau:
    """Simplex tableau over ``A x = b`` whose rows can be refactored from ``A``."""

    def __init__(self, A, b, cost, basis):
        self.A, self.b, self.cost = A, b, cost
        self.basis = np.array(basis)
        self.T = None
        if not self.refresh():
            raise NumericalError("singular initial simplex basis")

    def refresh(self) -> bool:
        B = self.A[:, self.basis]
        try:
            rows = np.linalg.solve(B, np.column_stack([self.A, self.b]))
        except np.linalg.LinAlgError:
            return False
        # reject a refactorization that disagrees badly with the basis identity
        if not np.allclose(rows[:, self.basis], np.eye(len(self.basis)), atol=1e-6):
            return False
        T = np.empty((rows.shape[0] + 1, rows.shape[1]))
        T[:-1] = rows
        T[:-1, -1] = np.maximum(T[:-1, -1], 0.0)
        cb = self.cost[self.basis]
        T[-1, :-1] = self.cost - cb @ rows[:, :-1]
        T[-1, -1] = -cb @ rows[:, -1]
        self.T = T
        return True

    @property
    def value(self) -> float:
        return -self.T[-1, -1]


def _run(tab: _Tableau, allowed: int, max_iter: int, tol: float):
    T = tab.T
    m = T.shape[0] - 1
    it = since = refreshes = 0

    def recheck() -> bool:
        nonlocal T, since, refreshes
        if not since or refreshes >= MAX_REFRESH:
            return False
        refreshes += 1
        since = 0
        if tab.refresh():
            T = tab.T
            return True
        return False

    while True:
        if it >= max_iter:
            raise NumericalError("simplex iteration limit reached")
        red = T[-1, :allowed]
        cand = np.nonzero(red < -tol)[0]
        if cand.size == 0:
            if recheck():
                continue
            return "optimal", it
        j = int(cand[0])
        col = T[:m, j]
        pos = col > tol
        if not pos.any():
            if recheck():
                continue
            return "unbounded", it
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        rmin = ratios.min()
        ties = np.nonzero(ratios <= rmin + 1e-12 * max(1.0, abs(rmin)))[0]
        # among tied rows only well-sized pivots are eligible; Bland's index rule picks from those
        big = col[ties] >= TIE_PIVOT_FRAC * col[ties].max()
        ties = ties[big]
        i = int(ties[np.argmin(tab.basis[ties])])
        _pivot(T, i, j)
        tab.basis[i] = j
        it += 1
        since += 1


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, maximize: bool = False,
             tol: float = PIVOT_TOL, max_iter: int = 200_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    if A_ub.shape[0] != b_ub.size or A_eq.shape[0] != b_eq.size:
        raise ValueError("constraint rows and right-hand sides disagree")
    for arr in (c, A_ub, b_ub, A_eq, b_eq):
        if not np.all(np.isfinite(arr)):
            raise ValueError("LP coefficients must be finite")
    obj = -c if maximize else c

    mu, me = A_ub.shape[0], A_eq.shape[0]
    m = mu + me
    ns = n + mu
    # standard form columns: x (n), slacks (mu), artificials (m)
    A = np.zeros((m, ns + m))
    A[:mu, :n] = A_ub
    A[:mu, n:ns] = np.eye(mu)
    A[mu:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    A[:, ns:] = np.eye(m)

    if m == 0:
        if np.any(obj < -tol):
            return LPResult("unbounded")
        return LPResult("optimal", np.zeros(n), 0.0)

    cost1 = np.zeros(ns + m)
    cost1[ns:] = 1.0
    tab = _Tableau(A, b, cost1, np.arange(ns, ns + m))
    _, it1 = _run(tab, ns, max_iter, tol)
    if tab.value > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
        return LPResult("infeasible", iterations=it1)

    # drive remaining artificials out of the basis, dropping redundant rows
    T = tab.T
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if tab.basis[i] >= ns:
            row = T[i, :ns]
            nz = np.nonzero(np.abs(row) > tol)[0]
            if nz.size:
                j = int(nz[np.argmax(np.abs(row[nz]))])
                _pivot(T, i, j)
                tab.basis[i] = j
            else:
                keep[i] = False
    rows = np.nonzero(keep)[0]
    cost2 = np.zeros(ns)
    cost2[:n] = obj
    tab2 = _Tableau(A[rows][:, :ns], b[rows], cost2, tab.basis[rows])
    status, it2 = _run(tab2, ns, max_iter, tol)
    if status == "unbounded":
        return LPResult("unbounded", iterations=it1 + it2)
    x = np.zeros(ns)
    x[tab2.basis] = tab2.T[:-1, -1]
    x = np.clip(x[:n], 0.0, None)
    return LPResult("optimal", x, float(c @ x), it1 + it2)
