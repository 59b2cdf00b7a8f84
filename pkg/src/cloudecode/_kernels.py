"""Hot inner loops: pixel labeling and min-cost assignment.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy version.
The numba path is used when numba imports and ``CLOUDECODE_NO_NUMBA`` is unset
(or "0"); both paths return identical results and are tested against each
other.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

USE_NUMBA = numba is not None and os.environ.get("CLOUDECODE_NO_NUMBA", "0") in ("", "0")

# neighbour offsets (dy, dx) already visited by a top-to-bottom, left-to-right scan
_BACK4 = np.array([[0, -1], [-1, 0]], dtype=np.int64)
_BACK8 = np.array([[0, -1], [-1, -1], [-1, 0], [-1, 1]], dtype=np.int64)


def back_offsets(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return _BACK4
    if connectivity == 8:
        return _BACK8
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


# --------------------------------------------------------------------------
# labeling


def _label_numba_impl(img, fg, offsets, tol):
    h, w = fg.shape
    parent = np.arange(h * w, dtype=np.int64)
    for y in range(h):
        for x in range(w):
            if not fg[y, x]:
                continue
            p = y * w + x
            for k in range(offsets.shape[0]):
                ny = y + offsets[k, 0]
                nx = x + offsets[k, 1]
                if ny < 0 or nx < 0 or nx >= w or not fg[ny, nx]:
                    continue
                d = 0
                for c in range(3):
                    # signed cast: under numba int() of a uint8 stays unsigned and wraps
                    v = abs(np.int64(img[y, x, c]) - np.int64(img[ny, nx, c]))
                    if v > d:
                        d = v
                if d > tol:
                    continue
                # union by smaller root so roots are raster-first pixels
                a = p
                while parent[a] != a:
                    parent[a] = parent[parent[a]]
                    a = parent[a]
                b = ny * w + nx
                while parent[b] != b:
                    parent[b] = parent[parent[b]]
                    b = parent[b]
                if a < b:
                    parent[b] = a
                elif b < a:
                    parent[a] = b
    labels = np.full(h * w, -1, dtype=np.int64)
    n = 0
    for p in range(h * w):
        if not fg[p // w, p % w]:
            continue
        r = p
        while parent[r] != r:
            r = parent[r]
        if r == p:
            labels[p] = n
            n += 1
        else:
            labels[p] = labels[r]
    return labels.reshape(h, w), n


def _label_numpy(img, fg, offsets, tol):
    """Min-label propagation with pointer jumping, fully vectorised."""
    h, w = fg.shape
    idx = np.arange(h * w, dtype=np.int64).reshape(h, w)
    signed = img.astype(np.int16)
    # union edges, each stored once as (pixel, earlier neighbour)
    src_list, dst_list = [], []
    for dy, dx in offsets:
        ys = slice(-dy, h)
        if dx < 0:
            xs_a, xs_b = slice(-dx, w), slice(0, w + dx)
        elif dx > 0:
            xs_a, xs_b = slice(0, w - dx), slice(dx, w)
        else:
            xs_a = xs_b = slice(0, w)
        yb = slice(0, h + dy)
        a_fg, b_fg = fg[ys, xs_a], fg[yb, xs_b]
        dist = np.abs(signed[ys, xs_a] - signed[yb, xs_b]).max(axis=-1)
        ok = a_fg & b_fg & (dist <= tol)
        src_list.append(idx[ys, xs_a][ok])
        dst_list.append(idx[yb, xs_b][ok])
    src = np.concatenate(src_list)
    dst = np.concatenate(dst_list)

    lab = idx.ravel().copy()
    while True:
        prev = lab
        m = np.minimum(lab[src], lab[dst])
        lab = lab.copy()
        np.minimum.at(lab, src, m)
        np.minimum.at(lab, dst, m)
        # pointer jumping: follow labels to their own labels until stable
        while True:
            jumped = lab[lab]
            if np.array_equal(jumped, lab):
                break
            lab = jumped
        if np.array_equal(lab, prev):
            break

    flat_fg = fg.ravel()
    out = np.full(h * w, -1, dtype=np.int64)
    roots = np.flatnonzero(flat_fg & (lab == np.arange(h * w)))
    remap = np.full(h * w, -1, dtype=np.int64)
    remap[roots] = np.arange(roots.size)
    out[flat_fg] = remap[lab[flat_fg]]
    return out.reshape(h, w), int(roots.size)


if numba is not None:
    _label_numba = numba.njit(cache=True)(_label_numba_impl)
else:  # pragma: no cover
    _label_numba = None


def label_pixels(img: np.ndarray, fg: np.ndarray, connectivity: int, tol: float,
                 use_numba: bool | None = None) -> tuple[np.ndarray, int]:
    """Label foreground pixels into colour-coherent connected groups.

    Two foreground pixels are joined when adjacent under `connectivity` and
    their max-channel colour distance is <= `tol`. Returns (labels, n) with
    labels -1 on background and 0..n-1 numbered by first pixel in raster order.
    """
    offsets = back_offsets(connectivity)
    img = np.ascontiguousarray(img, dtype=np.uint8)
    fg = np.ascontiguousarray(fg, dtype=np.bool_)
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba and _label_numba is not None:
        return _label_numba(img, fg, offsets, float(tol))
    return _label_numpy(img, fg, offsets, float(tol))


# --------------------------------------------------------------------------
# assignment (shortest augmenting path Hungarian, rows <= cols)


def _assign_numba_impl(cost):
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=np.bool_)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = -1
            for j in range(1, m + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
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
    col_of_row = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j] != 0:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row


def _assign_numpy(cost):
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    c = np.zeros((n + 1, m + 1))
    c[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = c[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = np.full(n, -1, dtype=np.int64)
    rows = p[1:]
    assigned = np.flatnonzero(rows)
    col_of_row[rows[assigned] - 1] = assigned
    return col_of_row


if numba is not None:
    _assign_numba = numba.njit(cache=True)(_assign_numba_impl)
else:  # pragma: no cover
    _assign_numba = None


def assign_rows(cost: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    """Minimum-cost assignment of every row of a finite (n x m, n <= m) matrix.

    Returns col_of_row, the column assigned to each row.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    n, m = cost.shape
    if n > m:
        raise ValueError("assign_rows needs rows <= cols")
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba and _assign_numba is not None:
        return _assign_numba(cost)
    return _assign_numpy(cost)
