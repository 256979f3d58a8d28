"""Hot numeric kernels: ray-grid depth rendering.

Two equivalent implementations are provided: a numba @njit scalar-loop
kernel and a vectorized pure-numpy fallback. Selection:

  * TACTNAV_NO_NUMBA=1 in the environment forces the numpy path;
  * the numpy path is also used when numba is not importable.

`benchmarks/bench_kernels.py` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("TACTNAV_NO_NUMBA", "") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False


def _ray_depth_numpy(origin, dirs, lo, hi, background):
    """Vectorized slab-method ray vs axis-aligned boxes.

    origin: (3,), dirs: (P, 3) unit rays, lo/hi: (N, 3) box bounds.
    Returns (P,) Euclidean distance to the nearest box surface, or
    `background` where no box is hit.
    """
    n_rays = dirs.shape[0]
    if lo.shape[0] == 0:
        return np.full(n_rays, background, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs  # (P, 3); inf on axis-parallel components is fine
        t1 = (lo[None, :, :] - origin[None, None, :]) * inv[:, None, :]
        t2 = (hi[None, :, :] - origin[None, None, :]) * inv[:, None, :]
    t_near = np.minimum(t1, t2).max(axis=2)  # (P, N)
    t_far = np.maximum(t1, t2).min(axis=2)
    hit = (t_far >= t_near) & (t_far > 0.0)
    t_enter = np.where(t_near > 0.0, t_near, t_far)  # origin inside box -> exit
    t_enter = np.where(hit, t_enter, np.inf)
    best = t_enter.min(axis=1)
    return np.where(np.isfinite(best), best, background)


def _ray_depth_scalar(origin, dirs, lo, hi, background):
    n_rays = dirs.shape[0]
    n_boxes = lo.shape[0]
    out = np.empty(n_rays, dtype=np.float64)
    for p in range(n_rays):
        best = np.inf
        for b in range(n_boxes):
            t_near = -np.inf
            t_far = np.inf
            ok = True
            for ax in range(3):
                d = dirs[p, ax]
                o = origin[ax]
                if d == 0.0:
                    if o < lo[b, ax] or o > hi[b, ax]:
                        ok = False
                        break
                else:
                    ta = (lo[b, ax] - o) / d
                    tb = (hi[b, ax] - o) / d
                    if ta > tb:
                        ta, tb = tb, ta
                    if ta > t_near:
                        t_near = ta
                    if tb < t_far:
                        t_far = tb
            if not ok or t_far < t_near or t_far <= 0.0:
                continue
            t_enter = t_near if t_near > 0.0 else t_far
            if t_enter < best:
                best = t_enter
        out[p] = best if np.isfinite(best) else background
    return out


if USE_NUMBA:
    _ray_depth_jit = njit(cache=True)(_ray_depth_scalar)

    def ray_depth(origin, dirs, lo, hi, background):
        return _ray_depth_jit(
            np.ascontiguousarray(origin, dtype=np.float64),
            np.ascontiguousarray(dirs, dtype=np.float64),
            np.ascontiguousarray(lo, dtype=np.float64),
            np.ascontiguousarray(hi, dtype=np.float64),
            float(background),
        )

else:

    def ray_depth(origin, dirs, lo, hi, background):
        return _ray_depth_numpy(
            np.asarray(origin, dtype=np.float64),
            np.asarray(dirs, dtype=np.float64),
            np.asarray(lo, dtype=np.float64),
            np.asarray(hi, dtype=np.float64),
            float(background),
        )
