"""Kuhn-Munkres assignment with potentials (shortest augmenting path form).

``solve_square`` returns the optimal row->column permutation of a square cost
matrix. Among equal-cost optima it returns the lexicographically smallest
assignment (row 0 takes the smallest feasible column, then row 1, ...), so
results do not depend on solver internals.
"""
import math


def _augment(a, n):
    """Classic O(n^3) potentials algorithm on 1-indexed padding. Returns the
    column assigned to each row plus the row and column potentials."""
    INF = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # p[j]: row matched to column j
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = a[i0 - 1]
            ui0 = u[i0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of = [0] * n
    for j in range(1, n + 1):
        if p[j]:
            col_of[p[j] - 1] = j - 1
    return col_of, u[1:], v[1:]


def _lexicographic(a, col_of, u, v, tol):
    """Move to the lexicographically smallest optimum using only tight edges
    (zero reduced cost) of the optimal dual solution."""
    n = len(col_of)
    tight = [[j for j in range(n) if a[i][j] - u[i] - v[j] <= tol] for i in range(n)]
    row_of = [0] * n
    for i, j in enumerate(col_of):
        row_of[j] = i
    fixed_col = [False] * n

    def find_path(r, target, seen, start_row):
        # alternating path: row r takes a free tight column, evicting its row
        for c in tight[r]:
            if fixed_col[c] or seen[c]:
                continue
            seen[c] = True
            if c == target:
                return [(r, c)]
            nxt = row_of[c]
            if nxt == start_row:
                continue
            sub = find_path(nxt, target, seen, start_row)
            if sub is not None:
                return [(r, c)] + sub
        return None

    for i in range(n):
        for j in tight[i]:
            if fixed_col[j]:
                continue
            if j == col_of[i]:
                break
            r0 = row_of[j]
            seen = [False] * n
            seen[j] = True
            path = find_path(r0, col_of[i], seen, i)
            if path is None:
                continue
            moves = [(i, j)] + path
            for r, c in moves:
                col_of[r] = c
                row_of[c] = r
            break
        fixed_col[col_of[i]] = True
    return col_of


def solve_square(costs):
    """Optimal assignment for a square matrix given as nested sequences.

    Returns ``col_of`` where row ``i`` is assigned column ``col_of[i]``."""
    a = [list(map(float, row)) for row in costs]
    n = len(a)
    if n == 0:
        return []
    if any(len(row) != n for row in a):
        raise ValueError("solve_square needs a square matrix")
    col_of, u, v = _augment(a, n)
    scale = max(abs(x) for row in a for x in row)
    return _lexicographic(a, col_of, u, v, 1e-9 * (1.0 + scale))
