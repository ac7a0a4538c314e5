"""Exact linear assignment by the Hungarian method (shortest augmenting
paths with potentials, O(n^3))."""
from __future__ import annotations

import numpy as np


def _min_cost_assignment(cost: np.ndarray):
    """Row-to-column assignment minimising total cost.

    Returns ``(col_of_row, u, v)`` with dual potentials satisfying
    ``cost[i, j] - u[i] - v[j] >= 0`` and equality on the chosen entries.
    """
    n = cost.shape[0]
    inf = np.inf
    # 1-indexed arrays with a virtual row/column 0
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of_col = np.zeros(n + 1, dtype=int)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[row_of_col[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=int)
    col_of_row[row_of_col[1:] - 1] = np.arange(n)
    return col_of_row, u[1:], v[1:]


def _lexicographic_min(tight: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Lexicographically smallest perfect matching inside ``tight``.

    ``perm`` is any perfect matching of the tight graph. Rows are fixed in
    order; row i may take column j if the row currently holding j can be
    rerouted, along an alternating path over unfixed rows, to i's column.
    """
    n = perm.size
    perm = perm.copy()
    row_of = np.empty(n, dtype=int)
    row_of[perm] = np.arange(n)
    for i in range(n):
        target = perm[i]
        # reverse BFS: rows (other than i, unfixed) that can move and free `target`
        parent = np.full(n, -1)  # parent[r] = next row in the chain towards target
        reach = np.zeros(n, dtype=bool)
        frontier = [r for r in range(i + 1, n) if tight[r, target]]
        for r in frontier:
            reach[r] = True
            parent[r] = n  # sentinel: moves straight onto `target`
        while frontier:
            nxt = []
            for r in frontier:
                col = perm[r]
                cand = np.flatnonzero(tight[i + 1:, col] & ~reach[i + 1:]) + i + 1
                for r2 in cand:
                    reach[r2] = True
                    parent[r2] = r
                    nxt.append(r2)
            frontier = nxt
        options = [j for j in np.flatnonzero(tight[i]) if j == target or (row_of[j] > i and reach[row_of[j]])]
        j = min(options)
        if j == target:
            continue
        r = row_of[j]
        perm[i] = j
        row_of[j] = i
        while True:
            nxt_row = parent[r]
            col = target if nxt_row == n else perm[nxt_row]
            perm[r] = col
            row_of[col] = r
            if nxt_row == n:
                break
            r = nxt_row
    return perm


def hungarian(utility, tol: float = 1e-9) -> np.ndarray:
    """Permutation ``p`` maximising ``sum(utility[i, p[i]])``.

    Ties between optimal permutations are broken towards the lexicographically
    smallest one; entries whose reduced cost is within ``tol`` (relative to
    the matrix scale) count as tied.
    """
    U = np.asarray(utility, dtype=float)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValueError(f"utility must be a square matrix, got shape {U.shape}")
    if not np.isfinite(U).all():
        raise ValueError("utility entries must be finite")
    n = U.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    cost = U.max() - U
    perm, u, v = _min_cost_assignment(cost)
    scale = max(1.0, float(np.abs(cost).max()))
    tight = cost - u[:, None] - v[None, :] <= tol * scale
    return _lexicographic_min(tight, perm)
