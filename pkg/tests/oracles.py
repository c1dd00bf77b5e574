"""Independent reference implementations used only by the tests.

These deliberately avoid the code paths under test: loops instead of
vectorized windows, Jacobi rotations instead of LAPACK, brute force
instead of clever search.
"""
import math

import numpy as np


def jacobi_eigh(sym, sweeps=100, tol=1e-15):
    """Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations (descending)."""
    a = np.array(sym, dtype=np.float64)
    n = a.shape[0]
    for _ in range(sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol * max(1.0, float(np.abs(a).max())):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))[::-1]


def singular_values(matrix):
    """Singular values via Jacobi on the small Gram matrix."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    gram = matrix.T @ matrix if matrix.shape[0] >= matrix.shape[1] else matrix @ matrix.T
    return np.sqrt(np.clip(jacobi_eigh(gram), 0.0, None))


def best_integer_shift(prev, cur, search=8, margin=10):
    """Shift (u, v) minimizing the interior SSD between cur(p) and prev(p + (u, v))."""
    h, w = cur.shape
    best = None
    for v in range(-search, search + 1):
        for u in range(-search, search + 1):
            a = cur[margin:h - margin, margin:w - margin]
            b = prev[margin + v:h - margin + v, margin + u:w - margin + u]
            ssd = float(np.sum((a - b) ** 2))
            if best is None or ssd < best[0]:
                best = (ssd, u, v)
    return best[1], best[2]


def histogram_mode(us, vs):
    """Most frequent integer (u, v) pair; ties to the smallest norm, then u, then v."""
    counts = {}
    for u, v in zip(us, vs):
        counts[(int(u), int(v))] = counts.get((int(u), int(v)), 0) + 1
    top = max(counts.values())
    return min((u * u + v * v, u, v) for (u, v), c in counts.items() if c == top)[1:]


def ssim_loop(a, b, window=8, C1=0.01 ** 2, C2=0.03 ** 2):
    """Direct per-window SSIM with population moments."""
    h, w = a.shape
    total, count = 0.0, 0
    n = window * window
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            pa = a[i:i + window, j:j + window].ravel()
            pb = b[i:i + window, j:j + window].ravel()
            ma, mb = sum(pa) / n, sum(pb) / n
            va = sum((x - ma) ** 2 for x in pa) / n
            vb = sum((x - mb) ** 2 for x in pb) / n
            cov = sum((x - ma) * (y - mb) for x, y in zip(pa, pb)) / n
            total += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2))
            count += 1
    return total / count


def convolve_direct(image, kernel):
    """True 2-D convolution with periodic border, by explicit summation."""
    h, w = image.shape
    r = kernel.shape[0] // 2
    out = np.zeros_like(image, dtype=np.float64)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(-r, r + 1):
                for b in range(-r, r + 1):
                    ii, jj = (i - a) % h, (j - b) % w
                    acc += kernel[a + r, b + r] * image[ii, jj]
            out[i, j] = acc
    return out


def disk_count(radius):
    return sum(1 for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)
               if dx * dx + dy * dy <= radius * radius)


def shift_image(image, u, v):
    """out(p) = image(p + (u, v)) with replicate border (integer shift)."""
    h, w = image.shape
    rows = np.clip(np.arange(h) + v, 0, h - 1)
    cols = np.clip(np.arange(w) + u, 0, w - 1)
    return image[np.ix_(rows, cols)]
