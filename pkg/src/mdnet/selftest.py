"""Quick brute-force cross-checks of the numerical kernels.

Each check compares a fast implementation with a slow, obviously-correct
one on small random inputs. Used by ``mdnet selftest``.
"""

from __future__ import annotations

import itertools
from collections import deque

import numpy as np

from . import metrics, postprocess, preprocess, uncertainty
from .train import lr_schedule


def _brute_median(a):
    out = np.empty_like(a)
    n = a.shape
    for idx in np.ndindex(*n):
        vals = [a[tuple(min(max(i + d, 0), s - 1) for i, d, s in zip(idx, off, n))]
                for off in itertools.product((-1, 0, 1), repeat=3)]
        out[idx] = sorted(vals)[13]
    return out


def _brute_gaussian(a, sigma=0.5):
    w1 = np.exp(-0.5 * (np.arange(-1, 2) / sigma) ** 2)
    w = np.einsum("i,j,k->ijk", w1, w1, w1)
    w /= w.sum()
    out = np.zeros(a.shape)
    n = a.shape
    for idx in np.ndindex(*n):
        for off in itertools.product((-1, 0, 1), repeat=3):
            src = tuple(min(max(i + d, 0), s - 1) for i, d, s in zip(idx, off, n))
            out[idx] += w[tuple(d + 1 for d in off)] * a[src]
    return out


def _brute_boundary(m):
    out = np.zeros_like(m)
    for idx in zip(*np.nonzero(m)):
        for axis in range(3):
            for d in (-1, 1):
                j = list(idx)
                j[axis] += d
                if not (0 <= j[axis] < m.shape[axis]) or not m[tuple(j)]:
                    out[idx] = True
    return out


def _brute_hd95(u, v):
    pu = np.argwhere(_brute_boundary(u)).astype(float)
    pv = np.argwhere(_brute_boundary(v)).astype(float)
    d = np.sqrt(((pu[:, None] - pv[None]) ** 2).sum(-1))
    return max(np.percentile(d.min(1), 95), np.percentile(d.min(0), 95))


def _bfs_count(m):
    seen = np.zeros_like(m)
    count = 0
    offs = [o for o in itertools.product((-1, 0, 1), repeat=3) if any(o)]
    for start in zip(*np.nonzero(m)):
        if seen[start]:
            continue
        count += 1
        seen[start] = True
        queue = deque([start])
        while queue:
            p = queue.popleft()
            for o in offs:
                q = tuple(a + b for a, b in zip(p, o))
                if all(0 <= c < s for c, s in zip(q, m.shape)) and m[q] and not seen[q]:
                    seen[q] = True
                    queue.append(q)
    return count


def run(seed: int = 0, trials: int = 5):
    """Return a list of ``(name, passed, detail)`` tuples."""
    rng = np.random.default_rng(seed)
    results = []

    err = max(np.abs(preprocess.median_denoise(a) - _brute_median(a)).max()
              for a in (rng.normal(size=(5, 5, 5)) for _ in range(trials)))
    results.append(("median filter", err <= 1e-12, f"max abs err {err:.2e}"))

    err = max(np.abs(preprocess.gaussian_denoise(a) - _brute_gaussian(a)).max()
              for a in (rng.normal(size=(5, 5, 5)) for _ in range(trials)))
    results.append(("gaussian filter", err <= 1e-10, f"max abs err {err:.2e}"))

    err = 0.0
    for _ in range(trials):
        u, v = rng.random((2, 8, 8, 8)) < 0.3
        err = max(err, abs(metrics.hd95(u, v) - _brute_hd95(u, v)))
    results.append(("hd95", err <= 1e-9, f"max abs err {err:.2e}"))

    ok = True
    for _ in range(trials):
        m = rng.random((8, 8, 8)) < 0.2
        ok &= len(postprocess.connected_components(m, 26)[1]) == _bfs_count(m)
    results.append(("connected components", bool(ok), "component counts vs BFS"))

    p = rng.random(1000)
    u = uncertainty.uncertainty_score(p)
    ok = np.allclose(u, uncertainty.uncertainty_score(1 - p), atol=1e-9) and u.min() >= 0 and u.max() <= 100
    results.append(("uncertainty symmetry", bool(ok), "u(p) == u(1-p), range [0, 100]"))

    ok = lr_schedule(0) == 1e-4 and abs(lr_schedule(100) - 1.25e-5) < 1e-12 and lr_schedule(200) == 0
    results.append(("lr schedule", bool(ok), "alpha_0, alpha_100, alpha_200"))
    return results
