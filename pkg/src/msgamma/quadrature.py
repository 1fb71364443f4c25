"""Direction-radius quadrature about an interior point, plus the batch
Monte Carlo driver shared by the integral evaluators."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Callable

import numpy as np

GL_POINTS = 16
THREADS_ENV = "MSGAMMA_THREADS"


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@lru_cache(maxsize=None)
def sphere_rule(n: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Directions and weights integrating over the unit sphere S^{n-1}.

    n=1: the two points +-1.  n=2: trapezoid in the angle.
    n=3: Gauss-Legendre in cos(theta) times trapezoid in phi.
    """
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        m = 16 * 2 ** level
        th = 2 * np.pi * (np.arange(m) + 0.5) / m
        return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(m, 2 * np.pi / m)
    if n == 3:
        mu = 8 * 2 ** level
        u, wu = np.polynomial.legendre.leggauss(mu)
        mp = 2 * mu
        ph = 2 * np.pi * (np.arange(mp) + 0.5) / mp
        uu, pp = np.meshgrid(u, ph, indexing="ij")
        rho = np.sqrt(1 - uu ** 2)
        dirs = np.stack([rho * np.cos(pp), rho * np.sin(pp), uu], axis=-1).reshape(-1, 3)
        w = np.outer(wu, np.full(mp, 2 * np.pi / mp)).ravel()
        return dirs, w
    raise ValueError("deterministic sphere rule only for n <= 3")


def sphere_area(n: int) -> float:
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


@lru_cache(maxsize=None)
def radial_rule(panels: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(GL_POINTS)
    edges = np.linspace(0.0, 1.0, panels + 1)
    h = np.diff(edges)
    nodes = (edges[:-1, None] + h[:, None] * (x[None, :] + 1) / 2).ravel()
    weights = (h[:, None] * w[None, :] / 2).ravel()
    return nodes, weights


def ray_roots(fun: Callable[[np.ndarray], np.ndarray], centre: np.ndarray, dirs: np.ndarray,
              level: float | np.ndarray, r_max: float = 1e4, iters: int = 100) -> np.ndarray:
    """Radius where the convex function fun(centre + r*dir) first reaches ``level``.

    fun(centre) must be below the level.  Returns inf where no crossing
    occurs before r_max.
    """
    k = len(dirs)
    level = np.broadcast_to(np.asarray(level, dtype=float), (k,))
    lo = np.zeros(k)
    hi = np.ones(k)
    active = np.ones(k, dtype=bool)
    while True:
        vals = fun(centre + hi[:, None] * dirs)
        below = (vals < level) & active
        if not below.any():
            break
        lo = np.where(below, hi, lo)
        hi = np.where(below, hi * 2, hi)
        active = below & (hi <= r_max)
        if not active.any():
            break
    unbounded = fun(centre + hi[:, None] * dirs) < level
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        vals = fun(centre + mid[:, None] * dirs)
        below = vals < level
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(hi, 1e-300)):
            break
    out = 0.5 * (lo + hi)
    out[unbounded] = np.inf
    return out


def radial_integral(n: int, centre: np.ndarray, dirs: np.ndarray, wdir: np.ndarray, R: np.ndarray,
                    integrand: Callable[[np.ndarray], np.ndarray], panels: int,
                    chunk: int = 1 << 18) -> complex:
    """sum_w int_0^R integrand(centre + r w) r^{n-1} dr over the given directions."""
    x, wx = radial_rule(panels)
    q = len(x)
    per = max(1, chunk // q)
    total = 0.0 + 0.0j
    for a in range(0, len(dirs), per):
        d = dirs[a:a + per]
        rr = R[a:a + per, None] * x[None, :]
        pts = centre[None, None, :] + rr[..., None] * d[:, None, :]
        f = integrand(pts.reshape(-1, n)).reshape(rr.shape) * rr ** (n - 1)
        total += np.sum(wdir[a:a + per] * R[a:a + per] * (f @ wx))
    return complex(total)


def mc_batches(batch_fn: Callable[[np.random.Generator, int], tuple[float | complex, float, int]],
               seed: int, tol: float, atol: float = 0.0, batch: int = 1 << 15,
               max_samples: int = 1 << 22, min_batches: int = 8):
    """Run seeded Monte Carlo batches until the standard error meets tolerance.

    batch_fn(rng, size) returns (sum, sum of squared moduli, count).  The batch
    seeds are spawned from ``seed`` and reductions happen in batch order, so the
    result does not depend on the thread count.
    Returns (mean, standard error, samples, converged).
    """
    root = np.random.SeedSequence(seed)
    s1, s2, cnt = 0.0 + 0.0j, 0.0, 0
    max_batches = max(min_batches, max_samples // batch)
    workers = thread_count()
    done = 0
    mean, se = 0.0 + 0.0j, math.inf
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while done < max_batches:
            step = min(min_batches, max_batches - done)
            seqs = root.spawn(step)
            results = list(pool.map(lambda ss: batch_fn(np.random.default_rng(ss), batch), seqs))
            for a, b, c in results:
                s1 += a
                s2 += b
                cnt += c
            done += step
            mean = s1 / cnt
            var = max(s2 / cnt - abs(mean) ** 2, 0.0)
            se = math.sqrt(var / cnt)
            if se <= max(tol * abs(mean), atol):
                return mean, se, cnt, True
    return mean, se, cnt, False
