"""Dense two-phase primal simplex with Bland's anti-cycling rule.

Solves ``min c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0`` for the
small programs produced by the force-closure check.  Rows are scaled to unit
infinity norm before solving, and feasibility is decided with an absolute
tolerance on the scaled phase-one objective.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import SolverFailure

FEAS_TOL = 1e-8
PIVOT_TOL = 1e-11


@dataclass
class LPResult:
    feasible: bool
    x: np.ndarray | None
    objective: float
    infeasibility: float  # scaled phase-one optimum
    iterations: int


def solve_lp(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, *, feas_tol=FEAS_TOL,
             max_iter=None, impl=None) -> LPResult:
    c = np.asarray(c, dtype=np.float64)
    n = c.size
    rows, rhs = [], []
    n_ub = 0
    if A_ub is not None and len(A_ub):
        A_ub = np.atleast_2d(np.asarray(A_ub, dtype=np.float64))
        n_ub = A_ub.shape[0]
    # slack columns for inequalities
    n_tot = n + n_ub
    if A_eq is not None and len(A_eq):
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=np.float64))
        rows.append(np.hstack([A_eq, np.zeros((A_eq.shape[0], n_ub))]))
        rhs.append(np.asarray(b_eq, dtype=np.float64).reshape(-1))
    if n_ub:
        rows.append(np.hstack([A_ub, np.eye(n_ub)]))
        rhs.append(np.asarray(b_ub, dtype=np.float64).reshape(-1))
    if not rows:
        return LPResult(True, np.zeros(n), 0.0, 0.0, 0)
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    m = A.shape[0]

    scale = np.maximum(np.abs(A).max(axis=1), np.abs(b))
    scale[scale == 0] = 1.0
    A = A / scale[:, None]
    b = b / scale
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    if max_iter is None:
        max_iter = 50 * (m + n_tot) + 100

    # phase one: artificial basis
    tab = np.zeros((m + 1, n_tot + m + 1))
    tab[:m, :n_tot] = A
    tab[:m, n_tot:n_tot + m] = np.eye(m)
    tab[:m, -1] = b
    tab[m, :n_tot] = -A.sum(axis=0)
    tab[m, -1] = -b.sum()
    basis = np.arange(n_tot, n_tot + m, dtype=np.intp)
    status, it1 = kernels.simplex_iterate(tab, basis, n_tot, PIVOT_TOL, max_iter, impl=impl)
    if status != 0:
        raise SolverFailure(f"phase one stopped with status {status} after {it1} pivots")
    infeas = float(-tab[m, -1])
    if infeas > feas_tol:
        return LPResult(False, None, float("nan"), infeas, it1)

    # drive remaining artificials out of the basis; drop redundant rows
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] < n_tot:
            continue
        row = tab[r, :n_tot]
        cand = np.flatnonzero(np.abs(row) > 1e-9)
        if cand.size == 0:
            keep[r] = False
            continue
        j = int(cand[0])
        tab[r] /= tab[r, j]
        for i in range(m + 1):
            if i != r and tab[i, j] != 0.0:
                tab[i] -= tab[i, j] * tab[r]
        basis[r] = j

    # phase two on original columns
    tab2 = np.zeros((int(keep.sum()) + 1, n_tot + 1))
    tab2[:-1, :n_tot] = tab[:m][keep, :n_tot]
    tab2[:-1, -1] = np.maximum(tab[:m][keep, -1], 0.0)
    basis2 = np.ascontiguousarray(basis[keep])
    cost = np.concatenate([c, np.zeros(n_ub)])
    tab2[-1, :n_tot] = cost
    for r, j in enumerate(basis2):
        tab2[-1] -= cost[j] * tab2[r]
    status, it2 = kernels.simplex_iterate(tab2, basis2, n_tot, PIVOT_TOL, max_iter, impl=impl)
    if status == 2:
        raise SolverFailure(f"phase two hit the iteration cap ({max_iter})")
    if status == 1:
        return LPResult(True, None, float("-inf"), infeas, it1 + it2)
    x = np.zeros(n_tot)
    x[basis2] = tab2[:-1, -1]
    return LPResult(True, x[:n], float(c @ x[:n]), infeas, it1 + it2)
