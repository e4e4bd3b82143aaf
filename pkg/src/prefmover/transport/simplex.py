"""Exact transportation simplex for balanced problems.

The basis is kept as a spanning tree over the bipartite graph of supply rows
(nodes ``0..m-1``) and demand columns (nodes ``m..m+n-1``), with exactly
``m + n - 1`` basic cells. Each pivot

1. prices a block of cells against the dual potentials and takes the most
   negative reduced cost,
2. walks the tree path that closes the cycle and runs the ratio test,
3. swaps the leaving cell for the entering one and re-hangs only the subtree
   cut off by the leaving cell, shifting its potentials.

The start basis comes from the matrix-minimum (least cost) rule. Pricing
switches permanently to Bland's rule after a long run of degenerate pivots,
which rules out cycling.
"""

import numpy as np
from numba import njit

STATUS_OPTIMAL = 0
STATUS_MAX_ITER = 1


@njit(cache=True)
def _initial_basis(a, b, C, brow, bcol, bflow):
    m, n = C.shape
    s = a.copy()
    d = b.copy()
    row_open = np.ones(m, np.bool_)
    col_open = np.ones(n, np.bool_)
    rows_left = m
    cols_left = n
    k = 0
    order = np.argsort(C.ravel(), kind="mergesort")
    for idx in order:
        r = idx // n
        c = idx % n
        if not row_open[r] or not col_open[c]:
            continue
        x = min(s[r], d[c])
        brow[k] = r
        bcol[k] = c
        bflow[k] = x
        k += 1
        s[r] -= x
        d[c] -= x
        if rows_left == 1 and cols_left == 1:
            break
        # close exactly one line per allocation so the basis stays a tree
        if rows_left == 1:
            close_row = False
        elif cols_left == 1:
            close_row = True
        else:
            close_row = s[r] <= d[c]
        if close_row:
            row_open[r] = False
            rows_left -= 1
        else:
            col_open[c] = False
            cols_left -= 1
    return k


@njit(cache=True, inline="always")
def _he_node(h, brow, bcol, m):
    k = h >> 1
    return brow[k] if (h & 1) == 0 else m + bcol[k]


@njit(cache=True)
def _link(h, node, head, nxt, prv):
    nxt[h] = head[node]
    prv[h] = -1
    if head[node] >= 0:
        prv[head[node]] = h
    head[node] = h


@njit(cache=True)
def _unlink(h, node, head, nxt, prv):
    if prv[h] >= 0:
        nxt[prv[h]] = nxt[h]
    else:
        head[node] = nxt[h]
    if nxt[h] >= 0:
        prv[nxt[h]] = prv[h]


@njit(cache=True)
def _hang(root, root_parent, root_arc, brow, bcol, m, C, head, nxt, pot, parent,
          parent_arc, depth, queue):
    """Re-root the component of ``root`` under ``root_parent`` via ``root_arc``.

    Recomputes parents, depths and potentials of every node in the component.
    ``root_parent = -1`` marks the global root.
    """
    parent[root] = root_parent
    parent_arc[root] = root_arc
    if root_parent < 0:
        depth[root] = 0
        pot[root] = 0.0
    else:
        depth[root] = depth[root_parent] + 1
        k = root_arc
        pot[root] = C[brow[k], bcol[k]] - pot[root_parent]
    queue[0] = root
    qh = 0
    qt = 1
    while qh < qt:
        v = queue[qh]
        qh += 1
        h = head[v]
        while h >= 0:
            k = h >> 1
            if k != parent_arc[v]:
                w = _he_node(h ^ 1, brow, bcol, m)
                parent[w] = v
                parent_arc[w] = k
                depth[w] = depth[v] + 1
                # u_r + v_c = C[r, c] on basic cells
                pot[w] = C[brow[k], bcol[k]] - pot[v]
                queue[qt] = w
                qt += 1
            h = nxt[h]
    return qt


@njit(cache=True)
def _price_all(C, pot, m, n, tol):
    best = -tol
    enter = -1
    for r in range(m):
        pr = pot[r]
        for c in range(n):
            rc = C[r, c] - pr - pot[m + c]
            if rc < best:
                best = rc
                enter = r * n + c
    return enter


@njit(cache=True)
def transport_simplex(a, b, C, max_iter, tol):
    """Solve ``min <W, C>`` s.t. ``W 1 = a``, ``W^T 1 = b``, ``W >= 0``.

    Returns ``(brow, bcol, bflow, iterations, status)`` describing the optimal
    basic cells. ``a`` and ``b`` must have equal sums.
    """
    m, n = C.shape
    nn = m + n
    nb = nn - 1
    brow = np.empty(nb, np.int64)
    bcol = np.empty(nb, np.int64)
    bflow = np.empty(nb, np.float64)
    _initial_basis(a, b, C, brow, bcol, bflow)

    head = np.full(nn, -1, np.int64)
    nxt = np.empty(2 * nb, np.int64)
    prv = np.empty(2 * nb, np.int64)
    for k in range(nb):
        _link(2 * k, brow[k], head, nxt, prv)
        _link(2 * k + 1, m + bcol[k], head, nxt, prv)

    pot = np.empty(nn, np.float64)
    parent = np.empty(nn, np.int64)
    parent_arc = np.empty(nn, np.int64)
    depth = np.empty(nn, np.int64)
    queue = np.empty(nn, np.int64)
    path_a = np.empty(nn, np.int64)
    path_b = np.empty(nn, np.int64)
    _hang(0, -1, -1, brow, bcol, m, C, head, nxt, pot, parent, parent_arc, depth, queue)

    total = m * n
    block = max(int(np.sqrt(total)), 8)
    if block > total:
        block = total
    pr = 0
    pc = 0
    bland = False
    degenerate_run = 0
    degenerate_limit = 2 * nn + 10

    it = 0
    status = STATUS_OPTIMAL
    while True:
        enter = -1
        if bland:
            for idx in range(total):
                r = idx // n
                c = idx % n
                if C[r, c] - pot[r] - pot[m + c] < -tol:
                    enter = idx
                    break
        else:
            best = -tol
            cnt = 0
            r = pr
            c = pc
            for _ in range(total):
                rc = C[r, c] - pot[r] - pot[m + c]
                if rc < best:
                    best = rc
                    enter = r * n + c
                c += 1
                if c == n:
                    c = 0
                    r += 1
                    if r == m:
                        r = 0
                cnt += 1
                if cnt == block:
                    if enter >= 0:
                        break
                    cnt = 0
            pr = r
            pc = c
        if enter < 0:
            # potentials are updated incrementally; confirm with fresh ones
            _hang(0, -1, -1, brow, bcol, m, C, head, nxt, pot, parent, parent_arc,
                  depth, queue)
            enter = _price_all(C, pot, m, n, tol)
            if enter < 0:
                break
        if it >= max_iter:
            status = STATUS_MAX_ITER
            break
        it += 1

        er = enter // n
        ec = enter % n
        # tree path row er -> col ec; odd-numbered arcs from either end lose flow
        x = er
        y = m + ec
        la = 0
        lb = 0
        while depth[x] > depth[y]:
            path_a[la] = parent_arc[x]
            la += 1
            x = parent[x]
        while depth[y] > depth[x]:
            path_b[lb] = parent_arc[y]
            lb += 1
            y = parent[y]
        while x != y:
            path_a[la] = parent_arc[x]
            la += 1
            x = parent[x]
            path_b[lb] = parent_arc[y]
            lb += 1
            y = parent[y]

        theta = np.inf
        leave = -1
        leave_key = total
        leave_side_a = True
        for t in range(0, la, 2):
            k = path_a[t]
            f = bflow[k]
            key = brow[k] * n + bcol[k]
            if f < theta or (bland and f == theta and key < leave_key):
                theta = f
                leave = k
                leave_key = key
                leave_side_a = True
        for t in range(0, lb, 2):
            k = path_b[t]
            f = bflow[k]
            key = brow[k] * n + bcol[k]
            if f < theta or (bland and f == theta and key < leave_key):
                theta = f
                leave = k
                leave_key = key
                leave_side_a = False

        for t in range(la):
            k = path_a[t]
            if t % 2 == 0:
                bflow[k] -= theta
                if bflow[k] < 0.0:
                    bflow[k] = 0.0
            else:
                bflow[k] += theta
        for t in range(lb):
            k = path_b[t]
            if t % 2 == 0:
                bflow[k] -= theta
                if bflow[k] < 0.0:
                    bflow[k] = 0.0
            else:
                bflow[k] += theta

        # swap arcs; the endpoint of the entering cell that sat below the
        # leaving cell roots the detached subtree
        _unlink(2 * leave, brow[leave], head, nxt, prv)
        _unlink(2 * leave + 1, m + bcol[leave], head, nxt, prv)
        brow[leave] = er
        bcol[leave] = ec
        bflow[leave] = theta
        _link(2 * leave, er, head, nxt, prv)
        _link(2 * leave + 1, m + ec, head, nxt, prv)
        if leave_side_a:
            _hang(er, m + ec, leave, brow, bcol, m, C, head, nxt, pot, parent,
                  parent_arc, depth, queue)
        else:
            _hang(m + ec, er, leave, brow, bcol, m, C, head, nxt, pot, parent,
                  parent_arc, depth, queue)

        if theta <= 1e-15:
            degenerate_run += 1
            if degenerate_run > degenerate_limit:
                bland = True
        else:
            degenerate_run = 0

    return brow, bcol, bflow, it, status


@njit(cache=True)
def basis_cost(brow, bcol, bflow, C):
    total = 0.0
    for k in range(len(brow)):
        total += bflow[k] * C[brow[k], bcol[k]]
    return total
