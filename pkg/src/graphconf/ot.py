"""Exact linear optimal transport (earth mover's distance).

The solver is a transportation simplex: northwest-corner start, node
potentials computed on the basis spanning tree, and Bland's rule (lowest
flat index ``i * m + j``) for both the entering and the leaving cell. Degenerate
bases are kept explicitly, zero-flow cells included, so the basis always
has ``n + m - 1`` cells and Bland's rule rules out cycling. Problem sizes here
are at most a few dozen nodes per side, so nothing is vectorized beyond
the reduced-cost scan.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from .errors import MarginalMismatch, NonFiniteCost, TooLarge

MARGINAL_TOL = 1e-9
BRUTE_FORCE_LIMIT = 7


@dataclass
class Coupling:
    """Transport plan ``pi`` with its prescribed marginals."""

    pi: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    def check(self, tol: float = MARGINAL_TOL) -> bool:
        return bool(
            np.all(self.pi >= 0)
            and np.allclose(self.pi.sum(axis=1), self.row_marginal, rtol=0, atol=tol)
            and np.allclose(self.pi.sum(axis=0), self.col_marginal, rtol=0, atol=tol)
        )


def _check_inputs(cost, a, b):
    cost = np.asarray(cost, dtype=float)
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if cost.shape != (a.shape[0], b.shape[0]):
        raise MarginalMismatch(f"cost has shape {cost.shape}, marginals have sizes {a.shape[0]} and {b.shape[0]}")
    if not np.all(np.isfinite(cost)):
        raise NonFiniteCost("cost matrix has non-finite entries")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))) or np.any(a < 0) or np.any(b < 0):
        raise MarginalMismatch("marginals must be finite and nonnegative")
    if abs(a.sum() - b.sum()) > MARGINAL_TOL:
        raise MarginalMismatch(f"marginal masses differ: {a.sum()!r} vs {b.sum()!r}")
    return cost, a, b


def northwest_corner(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """Initial basic feasible solution and its ``n + m - 1`` basic cells."""
    n, m = a.shape[0], b.shape[0]
    s, d = a.copy(), b.copy()
    x = np.zeros((n, m))
    basis = []
    i = j = 0
    while True:
        f = min(s[i], d[j])
        x[i, j] = f
        basis.append((i, j))
        s[i] -= f
        d[j] -= f
        if i == n - 1 and j == m - 1:
            break
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif s[i] <= d[j]:
            i += 1
        else:
            j += 1
    return x, basis


def _tree(basis, n, m):
    adj = [[] for _ in range(n + m)]
    for i, j in basis:
        adj[i].append(n + j)
        adj[n + j].append(i)
    return adj


def _potentials(cost, basis, n, m):
    adj = _tree(basis, n, m)
    u = np.zeros(n)
    v = np.zeros(m)
    done = [False] * (n + m)
    done[0] = True
    stack = [0]
    while stack:
        node = stack.pop()
        for nb in adj[node]:
            if done[nb]:
                continue
            done[nb] = True
            if node < n:
                v[nb - n] = cost[node, nb - n] - u[node]
            else:
                u[nb] = cost[nb, node - n] - v[node - n]
            stack.append(nb)
    return u, v, adj


def _tree_path(adj, start, goal):
    parent = {start: None}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                stack.append(nb)
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def solve_exact_ot(cost, a, b, max_pivots: int = 100_000) -> Tuple[Coupling, float]:
    """Exact minimizer of ``<cost, pi>`` over couplings with marginals ``a`` and ``b``.

    Parameters
    ----------
    cost : array-like of shape (n, m)
    a : array-like of shape (n,)
    b : array-like of shape (m,)
        Nonnegative marginals with equal total mass.

    Returns
    -------
    coupling : Coupling
        An optimal basic (vertex) solution.
    objective : float
        ``<cost, pi>``.
    """
    cost, a, b = _check_inputs(cost, a, b)
    n, m = cost.shape
    x, basis = northwest_corner(a, b)
    is_basic = np.zeros((n, m), dtype=bool)
    for cell in basis:
        is_basic[cell] = True
    eps = 1e-12 * max(1.0, float(np.abs(cost).max(initial=0.0)))

    for _ in range(max_pivots):
        u, v, adj = _potentials(cost, basis, n, m)
        reduced = cost - u[:, None] - v[None, :]
        candidates = np.flatnonzero((reduced.reshape(-1) < -eps) & ~is_basic.reshape(-1))
        if candidates.size == 0:
            break
        ie, je = divmod(int(candidates[0]), m)
        path = _tree_path(adj, ie, n + je)
        cells = []
        for k in range(len(path) - 1):
            p, q = path[k], path[k + 1]
            cells.append((p, q - n) if p < n else (q, p - n))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(x[c] for c in minus)
        leaving = min((c for c in minus if x[c] == theta), key=lambda c: c[0] * m + c[1])
        for c in minus:
            x[c] -= theta
        for c in plus:
            x[c] += theta
        x[ie, je] += theta
        x[leaving] = 0.0
        is_basic[leaving] = False
        is_basic[ie, je] = True
        basis[basis.index(leaving)] = (ie, je)

    np.maximum(x, 0.0, out=x)
    return Coupling(x, a, b), float(np.sum(cost * x))


@lru_cache(maxsize=None)
def all_permutations(n: int) -> np.ndarray:
    """Every permutation of ``range(n)`` in lexicographic order, shape ``(n!, n)``."""
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)
    perms.setflags(write=False)
    return perms


def brute_force_assignment(cost) -> Tuple[float, np.ndarray]:
    """Minimum of ``<cost, P/n>`` over all permutation matrices, with the lexicographically first argmin."""
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise MarginalMismatch(f"assignment needs a square cost, got {cost.shape}")
    if n > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"brute force over {n}! permutations is disabled above n={BRUTE_FORCE_LIMIT}")
    perms = all_permutations(n)
    vals = cost[np.arange(n), perms].sum(axis=1) / n
    best = int(np.argmin(vals))
    return float(vals[best]), perms[best].copy()


def assignment_lower_bound_check(cost, coupling) -> bool:
    """True iff ``<cost, coupling>`` is no worse than the best scaled permutation matrix (+1e-9)."""
    pi = coupling.pi if isinstance(coupling, Coupling) else np.asarray(coupling, dtype=float)
    cost = np.asarray(cost, dtype=float)
    best, _ = brute_force_assignment(cost)
    return bool(np.sum(cost * pi) <= best + 1e-9)
