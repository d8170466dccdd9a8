"""Numba kernel for successive-cancellation list decoding of polar codes.

Layout follows the lazy-copy scheme of Tal and Vardy: every tree level keeps
``L`` slots of LLR memory and ``L`` slots of partial-sum memory, and each
path holds a per-level slot index. Cloning a path copies only the index
tables; a slot shared by several paths is swapped for a free one right
before it is overwritten. Writes always replace a whole slot, so no data
copy is ever needed.

Level ``s`` stores nodes of length ``2**s`` at offset ``2**s`` of a
``2 * N`` buffer. Level ``n`` is the channel and is never written.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _private_slot(refc, smap, s, path):
    slot = smap[s, path]
    if refc[s, slot] == 1:
        return slot
    refc[s, slot] -= 1
    for cand in range(refc.shape[1]):
        if refc[s, cand] == 0:
            refc[s, cand] = 1
            smap[s, path] = cand
            return cand
    return -1


@njit(cache=True)
def _trailing_zeros(i, n):
    if i == 0:
        return n
    t = 0
    while (i >> t) & 1 == 0:
        t += 1
    return t


@njit(cache=True)
def scl_decode(llr, frozen, list_size):
    """Return the estimated ``u`` vector (length N) for channel ``llr``.

    ``frozen`` is a boolean mask over ``u``; frozen bits are zero. Min-sum
    node updates and the max-log path metric are used.
    """
    N = llr.shape[0]
    n = 0
    while (1 << n) < N:
        n += 1
    L = list_size

    alpha = np.zeros((L, 2 * N))
    beta = np.zeros((L, 2 * N), dtype=np.uint8)
    amap = np.zeros((n, L), dtype=np.int64)
    bmap = np.zeros((n, L), dtype=np.int64)
    arefc = np.zeros((n, L), dtype=np.int64)
    brefc = np.zeros((n, L), dtype=np.int64)
    for s in range(n):
        arefc[s, 0] = 1
        brefc[s, 0] = 1

    pm = np.zeros(L)
    n_paths = 1
    hist_bit = np.zeros((N, L), dtype=np.uint8)
    hist_parent = np.zeros((N, L), dtype=np.int64)

    leaf = np.zeros(L)
    cand_pm = np.zeros(2 * L)
    taken = np.zeros(2 * L, dtype=np.bool_)
    new_amap = np.zeros((n, L), dtype=np.int64)
    new_bmap = np.zeros((n, L), dtype=np.int64)
    new_pm = np.zeros(L)
    parent = np.zeros(L, dtype=np.int64)
    bit = np.zeros(L, dtype=np.uint8)
    work = np.zeros(N, dtype=np.uint8)
    work2 = np.zeros(N, dtype=np.uint8)

    for i in range(N):
        top = min(_trailing_zeros(i, n), n - 1)
        for l in range(n_paths):
            for s in range(top, -1, -1):
                h = 1 << s
                src_off = 2 * h
                dst_slot = _private_slot(arefc, amap, s, l)
                dst = alpha[dst_slot]
                if (i >> s) & 1 == 0:
                    for j in range(h):
                        if s + 1 == n:
                            a = llr[j]
                            b = llr[j + h]
                        else:
                            a = alpha[amap[s + 1, l], src_off + j]
                            b = alpha[amap[s + 1, l], src_off + j + h]
                        mag = min(abs(a), abs(b))
                        if (a < 0.0) != (b < 0.0):
                            mag = -mag
                        dst[h + j] = mag
                else:
                    brow = beta[bmap[s, l]]
                    for j in range(h):
                        if s + 1 == n:
                            a = llr[j]
                            b = llr[j + h]
                        else:
                            a = alpha[amap[s + 1, l], src_off + j]
                            b = alpha[amap[s + 1, l], src_off + j + h]
                        if brow[h + j]:
                            dst[h + j] = b - a
                        else:
                            dst[h + j] = b + a
            leaf[l] = alpha[amap[0, l], 1]

        if frozen[i]:
            for l in range(n_paths):
                if leaf[l] < 0.0:
                    pm[l] += -leaf[l]
                parent[l] = l
                bit[l] = 0
            new_count = n_paths
        else:
            for l in range(n_paths):
                lam = leaf[l]
                cand_pm[2 * l] = pm[l] + (-lam if lam < 0.0 else 0.0)
                cand_pm[2 * l + 1] = pm[l] + (lam if lam > 0.0 else 0.0)
            n_cand = 2 * n_paths
            new_count = min(n_cand, L)
            for c in range(n_cand):
                taken[c] = False
            # stable partial selection of the new_count smallest metrics
            for j in range(new_count):
                best_c = -1
                for c in range(n_cand):
                    if not taken[c] and (best_c < 0 or cand_pm[c] < cand_pm[best_c]):
                        best_c = c
                taken[best_c] = True
                parent[j] = best_c // 2
                bit[j] = best_c % 2
                new_pm[j] = cand_pm[best_c]
            for j in range(new_count):
                pm[j] = new_pm[j]

        for j in range(new_count):
            hist_bit[i, j] = bit[j]
            hist_parent[i, j] = parent[j]

        if not frozen[i]:
            for s in range(n):
                for j in range(new_count):
                    new_amap[s, j] = amap[s, parent[j]]
                    new_bmap[s, j] = bmap[s, parent[j]]
                for c in range(L):
                    arefc[s, c] = 0
                    brefc[s, c] = 0
                for j in range(new_count):
                    amap[s, j] = new_amap[s, j]
                    bmap[s, j] = new_bmap[s, j]
                    arefc[s, amap[s, j]] += 1
                    brefc[s, bmap[s, j]] += 1
        n_paths = new_count

        # partial sums
        if i == N - 1:
            break
        for l in range(n_paths):
            work[0] = bit[l]
            s = 0
            while True:
                h = 1 << s
                if (i >> s) & 1 == 0:
                    dst_slot = _private_slot(brefc, bmap, s, l)
                    drow = beta[dst_slot]
                    for j in range(h):
                        drow[h + j] = work[j]
                    break
                brow = beta[bmap[s, l]]
                for j in range(h):
                    work2[j] = brow[h + j] ^ work[j]
                    work2[h + j] = work[j]
                for j in range(2 * h):
                    work[j] = work2[j]
                s += 1
                if s == n:
                    break

    best = 0
    for l in range(1, n_paths):
        if pm[l] < pm[best]:
            best = l
    u = np.zeros(N, dtype=np.uint8)
    p = best
    for i in range(N - 1, -1, -1):
        u[i] = hist_bit[i, p]
        p = hist_parent[i, p]
    return u
