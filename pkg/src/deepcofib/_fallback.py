"""Pure NumPy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def match_patches(field, refs, half, d):
    prows, pcols, L = field.shape
    k = d - 1
    idx = np.empty((len(refs), d), dtype=np.intp)
    dist = np.zeros((len(refs), d), dtype=np.float64)
    for q, (r, c) in enumerate(refs):
        r0, r1 = max(r - half, 0), min(r + half + 1, prows)
        c0, c1 = max(c - half, 0), min(c + half + 1, pcols)
        window = field[r0:r1, c0:c1]
        ref = field[r, c]
        acc = np.zeros(window.shape[:2])
        for p in range(L):
            diff = window[:, :, p] - ref[p]
            acc += diff * diff
        dst = np.sqrt(acc.ravel())
        dst[(r - r0) * (c1 - c0) + (c - c0)] = np.inf
        found = min(k, dst.size - 1)
        best = np.argsort(dst, kind="stable")[:found]
        rows, cols = np.divmod(best, c1 - c0)
        pad = k - found
        idx[q, : pad + 1] = r * pcols + c
        idx[q, pad + 1 :] = (rows + r0) * pcols + (cols + c0)
        dist[q, pad + 1 :] = dst[best]
    return idx, dist


def accumulate(values, coords, n, height, width):
    sums = np.zeros((height, width), dtype=np.float64)
    counts = np.zeros((height, width), dtype=np.int64)
    for v, (r, c) in zip(values, coords):
        sums[r : r + n, c : c + n] += v.reshape(n, n)
        counts[r : r + n, c : c + n] += 1
    return sums, counts
