"""Compiled event loops for the ring simulators.

State lives in flat numpy arrays.  Per-site total rates sit in the leaves of
a binary sum tree whose internal nodes are always recomputed as
``left + right``; an incremental update therefore yields exactly the value a
full rebuild would, which is what the debug check relies on.

Status codes returned by the loops: 0 reached the time horizon or the event
budget with no time horizon, 1 event budget exhausted before the time
horizon, 2 cache mismatch in debug mode.
"""

from __future__ import annotations

import numpy as np
from numba import njit

OK, BUDGET, MISMATCH = 0, 1, 2


@njit(cache=True, nogil=True)
def tree_size(n):
    size = 1
    while size < n:
        size *= 2
    return size


@njit(cache=True, nogil=True)
def tree_build(tree, size, vals):
    tree[:] = 0.0
    for i in range(vals.shape[0]):
        tree[size + i] = vals[i]
    for i in range(size - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]


@njit(cache=True, nogil=True)
def tree_set(tree, size, i, val):
    j = size + i
    tree[j] = val
    j //= 2
    while j >= 1:
        tree[j] = tree[2 * j] + tree[2 * j + 1]
        j //= 2


@njit(cache=True, nogil=True)
def tree_find(tree, size, u):
    """Leaf index with cumulative weight covering ``u``; never a zero leaf."""
    j = 1
    while j < size:
        left = tree[2 * j]
        if (u < left and left > 0.0) or tree[2 * j + 1] <= 0.0:
            j = 2 * j
        else:
            u -= left
            j = 2 * j + 1
    return j - size


@njit(cache=True, nogil=True)
def draw_displacement(ks, kcum, rng):
    u = rng.random() * kcum[kcum.shape[0] - 1]
    for i in range(kcum.shape[0]):
        if u < kcum[i]:
            return ks[i]
    return ks[kcum.shape[0] - 1]


@njit(cache=True, nogil=True)
def rotate_arc(arr, n, x, k):
    """In-place cut-and-paste: the value at ``x`` moves ``k`` steps."""
    if k > 0:
        tmp = arr[x]
        z = x
        for _ in range(k):
            nz = z + 1
            if nz == n:
                nz = 0
            arr[z] = arr[nz]
            z = nz
        arr[z] = tmp
    else:
        tmp = arr[x]
        z = x
        for _ in range(-k):
            nz = z - 1
            if nz < 0:
                nz = n - 1
            arr[z] = arr[nz]
            z = nz
        arr[z] = tmp


@njit(cache=True, nogil=True)
def site_rate(tot, cells, n, x):
    left = x - 1 if x > 0 else n - 1
    right = x + 1 if x < n - 1 else 0
    return tot[cells[left], cells[x], cells[right]]


@njit(cache=True, nogil=True)
def record_single(cells, n, out, row):
    for c in range(20):
        out[row, c] = 0.0
    for x in range(n):
        a = cells[x]
        b = cells[x + 1] if x < n - 1 else cells[0]
        out[row, a] += 1.0
        out[row, 4 + 4 * a + b] += 1.0
    for c in range(20):
        out[row, c] /= n


@njit(cache=True, nogil=True)
def check_single(tree, size, tot, cells, n):
    scratch = np.zeros(tree.shape[0])
    vals = np.empty(n)
    for x in range(n):
        vals[x] = site_rate(tot, cells, n, x)
    tree_build(scratch, size, vals)
    for i in range(1, tree.shape[0]):
        if scratch[i] != tree[i]:
            return False
    return True


@njit(cache=True, nogil=True)
def run_single(
    cells, table, tot, ks, kcum, cp_rate, rng, t_end, max_events,
    sample_times, samples, counts, debug_every,
):
    """Simulate one trajectory in place; returns (status, time, events, samples taken)."""
    n = cells.shape[0]
    size = tree_size(n)
    tree = np.zeros(2 * size)
    vals = np.empty(n)
    for x in range(n):
        vals[x] = site_rate(tot, cells, n, x)
    tree_build(tree, size, vals)
    ns = sample_times.shape[0]
    si = 0
    t = 0.0
    ev = 0
    status = OK
    while True:
        total = tree[1] + cp_rate
        if total > 0.0:
            t_next = t + rng.exponential(1.0 / total)
        else:
            t_next = np.inf
        while si < ns and sample_times[si] < t_next and sample_times[si] <= t_end:
            record_single(cells, n, samples, si)
            si += 1
        if t_next > t_end:
            if t_end < np.inf:
                t = t_end
            break
        if ev >= max_events:
            if t_end < np.inf:
                status = BUDGET
            break
        t = t_next
        ev += 1
        u = rng.random() * total
        if u < tree[1]:
            x = tree_find(tree, size, u)
            left = x - 1 if x > 0 else n - 1
            right = x + 1 if x < n - 1 else 0
            cl, cc, cr = cells[left], cells[x], cells[right]
            w = rng.random() * tot[cl, cc, cr]
            b = -1
            for cand in range(4):
                rate = table[cand, cl, cc, cr]
                if rate > 0.0:
                    b = cand
                    if w < rate:
                        break
                    w -= rate
            cells[x] = b
            counts[b] += 1
            tree_set(tree, size, left, site_rate(tot, cells, n, left))
            tree_set(tree, size, x, site_rate(tot, cells, n, x))
            tree_set(tree, size, right, site_rate(tot, cells, n, right))
        else:
            x = int(rng.random() * n)
            if x >= n:
                x = n - 1
            k = draw_displacement(ks, kcum, rng)
            rotate_arc(cells, n, x, k)
            counts[4] += 1
            span = abs(k) + 3
            if span >= n:
                for z in range(n):
                    tree_set(tree, size, z, site_rate(tot, cells, n, z))
            else:
                start = x - 1 if k > 0 else x + k - 1
                for i in range(span):
                    z = (start + i) % n
                    tree_set(tree, size, z, site_rate(tot, cells, n, z))
        if debug_every > 0 and ev % debug_every == 0:
            if not check_single(tree, size, tot, cells, n):
                status = MISMATCH
                break
    return status, t, ev, si


# -- coupled copies ------------------------------------------------------------


@njit(cache=True, nogil=True)
def coupled_moves(table, rk, a0, a1, a2, b0, b1, b2, out):
    """Fill ``out[target] = (joint, lower only, upper only)`` rates at one site.

    Returns True when the pair is out of order and the copies move independently.
    """
    independent = rk[a1] > rk[b1]
    for b in range(4):
        p = table[b, a0, a1, a2]
        q = table[b, b0, b1, b2]
        joint = 0.0 if independent else (p if p < q else q)
        out[b, 0] = joint
        out[b, 1] = p - joint
        out[b, 2] = q - joint
    return independent


@njit(cache=True, nogil=True)
def coupled_site_rate(table, lo, up, rk, n, x):
    left = x - 1 if x > 0 else n - 1
    right = x + 1 if x < n - 1 else 0
    a0, a1, a2 = lo[left], lo[x], lo[right]
    b0, b1, b2 = up[left], up[x], up[right]
    independent = rk[a1] > rk[b1]
    total = 0.0
    for b in range(4):
        p = table[b, a0, a1, a2]
        q = table[b, b0, b1, b2]
        if independent:
            total += p + q
        else:
            total += p if p > q else q
    return total


@njit(cache=True, nogil=True)
def record_coupled(lo, up, rk, n, s_lo, s_up, s_cross, s_misc, row):
    for c in range(20):
        s_lo[row, c] = 0.0
        s_up[row, c] = 0.0
    for c in range(16):
        s_cross[row, c] = 0.0
    viol = 0
    disc = 0
    for x in range(n):
        nx = x + 1 if x < n - 1 else 0
        a, b = lo[x], up[x]
        s_lo[row, a] += 1.0
        s_lo[row, 4 + 4 * a + lo[nx]] += 1.0
        s_up[row, b] += 1.0
        s_up[row, 4 + 4 * b + up[nx]] += 1.0
        s_cross[row, 4 * a + b] += 1.0
        if rk[a] > rk[b]:
            viol += 1
        if a != b:
            disc += 1
    for c in range(20):
        s_lo[row, c] /= n
        s_up[row, c] /= n
    for c in range(16):
        s_cross[row, c] /= n
    s_misc[row, 0] = viol
    s_misc[row, 1] = disc / n


@njit(cache=True, nogil=True)
def check_coupled(tree, size, table, lo, up, rk, n):
    scratch = np.zeros(tree.shape[0])
    vals = np.empty(n)
    for x in range(n):
        vals[x] = coupled_site_rate(table, lo, up, rk, n, x)
    tree_build(scratch, size, vals)
    for i in range(1, tree.shape[0]):
        if scratch[i] != tree[i]:
            return False
    return True


@njit(cache=True, nogil=True)
def run_coupled(
    lo, up, table, rk, ks, kcum, cp_rate, rng, t_end, max_events, integ_from,
    sample_times, s_lo, s_up, s_cross, s_misc, counts, pair_integral, debug_every,
):
    """Basic coupling of two copies.

    Returns (status, time, events, samples taken, new violations,
    coalescence time or -1).  ``pair_integral[i, j]`` accumulates the time
    integral over ``[integ_from, t]`` of the number of sites with lower
    letter ``i`` and upper letter ``j``.
    """
    n = lo.shape[0]
    size = tree_size(n)
    tree = np.zeros(2 * size)
    vals = np.empty(n)
    pc = np.zeros((4, 4))
    disc = 0
    for x in range(n):
        vals[x] = coupled_site_rate(table, lo, up, rk, n, x)
        pc[lo[x], up[x]] += 1.0
        if lo[x] != up[x]:
            disc += 1
    tree_build(tree, size, vals)
    coal = 0.0 if disc == 0 else -1.0
    ns = sample_times.shape[0]
    si = 0
    t = 0.0
    ev = 0
    violations = 0
    status = OK
    mv = np.zeros((4, 3))
    while True:
        total = tree[1] + cp_rate
        if total > 0.0:
            t_next = t + rng.exponential(1.0 / total)
        else:
            t_next = np.inf
        while si < ns and sample_times[si] < t_next and sample_times[si] <= t_end:
            record_coupled(lo, up, rk, n, s_lo, s_up, s_cross, s_misc, si)
            si += 1
        stop = t_next > t_end or ev >= max_events
        seg_end = t_end if t_next > t_end else t_next
        if ev >= max_events and t_next <= t_end:
            seg_end = t
        lo_t = t if t > integ_from else integ_from
        if seg_end > lo_t and seg_end < np.inf:
            dt = seg_end - lo_t
            for i in range(4):
                for j in range(4):
                    if pc[i, j] != 0.0:
                        pair_integral[i, j] += pc[i, j] * dt
        if stop:
            if t_next > t_end:
                if t_end < np.inf:
                    t = t_end
            elif t_end < np.inf:
                status = BUDGET
            break
        t = t_next
        ev += 1
        u = rng.random() * total
        if u < tree[1]:
            x = tree_find(tree, size, u)
            left = x - 1 if x > 0 else n - 1
            right = x + 1 if x < n - 1 else 0
            a1, b1 = lo[x], up[x]
            independent = coupled_moves(
                table, rk, lo[left], a1, lo[right], up[left], b1, up[right], mv
            )
            w = rng.random() * mv.sum()
            new_lo, new_up = a1, b1
            done = False
            last_lo, last_up = a1, b1
            for b in range(4):
                if mv[b, 0] > 0.0:
                    last_lo, last_up = b, b
                    if w < mv[b, 0]:
                        new_lo, new_up = b, b
                        done = True
                        break
                    w -= mv[b, 0]
                if mv[b, 1] > 0.0:
                    last_lo, last_up = b, b1
                    if w < mv[b, 1]:
                        new_lo = b
                        done = True
                        break
                    w -= mv[b, 1]
                if mv[b, 2] > 0.0:
                    last_lo, last_up = a1, b
                    if w < mv[b, 2]:
                        new_up = b
                        done = True
                        break
                    w -= mv[b, 2]
            if not done:
                new_lo, new_up = last_lo, last_up
            if new_lo != a1:
                counts[new_lo] += 1
            if new_up != b1:
                counts[5 + new_up] += 1
            pc[a1, b1] -= 1.0
            pc[new_lo, new_up] += 1.0
            if a1 != b1:
                disc -= 1
            if new_lo != new_up:
                disc += 1
            if rk[new_lo] > rk[new_up] and not independent:
                violations += 1
            lo[x] = new_lo
            up[x] = new_up
            tree_set(tree, size, left, coupled_site_rate(table, lo, up, rk, n, left))
            tree_set(tree, size, x, coupled_site_rate(table, lo, up, rk, n, x))
            tree_set(tree, size, right, coupled_site_rate(table, lo, up, rk, n, right))
            if disc == 0 and coal < 0.0:
                coal = t
        else:
            x = int(rng.random() * n)
            if x >= n:
                x = n - 1
            k = draw_displacement(ks, kcum, rng)
            rotate_arc(lo, n, x, k)
            rotate_arc(up, n, x, k)
            counts[4] += 1
            span = abs(k) + 3
            if span >= n:
                for z in range(n):
                    tree_set(tree, size, z, coupled_site_rate(table, lo, up, rk, n, z))
            else:
                start = x - 1 if k > 0 else x + k - 1
                for i in range(span):
                    z = (start + i) % n
                    tree_set(tree, size, z, coupled_site_rate(table, lo, up, rk, n, z))
        if debug_every > 0 and ev % debug_every == 0:
            if not check_coupled(tree, size, table, lo, up, rk, n):
                status = MISMATCH
                break
    return status, t, ev, si, violations, coal
