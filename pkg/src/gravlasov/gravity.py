"""Softened self-gravity of a weighted ensemble.

All sums run in ascending particle index with Neumaier compensation, and each
query (or each row of the pair sum) is owned by exactly one worker, so results
are bitwise identical for any thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

__all__ = [
    "SofteningParams",
    "default_softening",
    "field_direct",
    "field_tree",
    "potential_energy",
    "build_octree",
    "self_gravity",
    "set_threads",
]

_JIT = dict(cache=True, error_model="numpy")

# TBB in this ecosystem is often too old for numba; avoid the noisy probe.
if numba.config.THREADING_LAYER == "default":
    numba.config.THREADING_LAYER = "workqueue"


@dataclass(frozen=True)
class SofteningParams:
    eps: float = 0.0

    def __post_init__(self):
        if not self.eps >= 0:
            raise ValueError(f"softening length must be >= 0, got {self.eps}")


def default_softening(spacing: float, factor: float = 0.02) -> SofteningParams:
    return SofteningParams(factor * spacing)


@njit(inline="always")
def _nadd(s, c, x):
    # branch-free TwoSum; same result as Neumaier's update
    t = s + x
    bp = t - s
    c += (s - (t - bp)) + (x - bp)
    return t, c


@njit(parallel=True, **_JIT)
def _direct_kernel(pos, w, q, eps2, skip_self, out):
    n = pos.shape[0]
    for k in prange(q.shape[0]):
        qx, qy, qz = q[k, 0], q[k, 1], q[k, 2]
        sx = sy = sz = 0.0
        cx = cy = cz = 0.0
        for i in range(n):
            if skip_self and i == k:
                continue
            dx = qx - pos[i, 0]
            dy = qy - pos[i, 1]
            dz = qz - pos[i, 2]
            r2 = dx * dx + dy * dy + dz * dz + eps2
            f = w[i] / (r2 * math.sqrt(r2))
            sx, cx = _nadd(sx, cx, -dx * f)
            sy, cy = _nadd(sy, cy, -dy * f)
            sz, cz = _nadd(sz, cz, -dz * f)
        out[k, 0] = sx + cx
        out[k, 1] = sy + cy
        out[k, 2] = sz + cz


def _check_inputs(x, w, queries):
    x = np.ascontiguousarray(x, dtype=np.float64).reshape(-1, 3)
    w = np.ascontiguousarray(w, dtype=np.float64).reshape(-1)
    q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(q)):
        raise ValueError("query positions must be finite")
    return x, w, q


def field_direct(ens, queries, s: SofteningParams) -> np.ndarray:
    """Exact softened field ``-sum_i w_i (q - x_i) / (|q - x_i|^2 + eps^2)^(3/2)``.

    Returns an ``(nq, 3)`` array. At ``eps = 0`` a query sitting on a source
    yields NaN components; callers treat that as a collision.
    """
    x, w, q = _check_inputs(ens.x, ens.w, queries)
    out = np.empty_like(q)
    _direct_kernel(x, w, q, float(s.eps) ** 2, False, out)
    return out


# ---------------------------------------------------------------- octree

LEAF_SIZE = 8
MAX_DEPTH = 48


@njit(**_JIT)
def _build(pos, w, lo, hi, leaf_size):
    n = pos.shape[0]
    perm = np.arange(n)
    cap = 2 * n // max(leaf_size // 2, 1) + 64
    center = np.empty((cap, 3))
    half = np.empty(cap)
    start = np.empty(cap, np.int64)
    count = np.empty(cap, np.int64)
    child0 = np.full(cap, -1, np.int64)
    nchild = np.zeros(cap, np.int64)
    mass = np.zeros(cap)
    com = np.zeros((cap, 3))
    depth = np.zeros(cap, np.int64)

    for d in range(3):
        center[0, d] = 0.5 * (lo[d] + hi[d])
    h = 0.5 * max(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2])
    half[0] = h * (1.0 + 1e-12) + 1e-300
    start[0] = 0
    count[0] = n
    nnodes = 1

    octant = np.empty(n, np.int64)
    tmp = np.empty(n, np.int64)
    stack = np.empty(cap, np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        a, m = start[node], count[node]
        if m <= leaf_size or depth[node] >= MAX_DEPTH:
            continue
        cnt = np.zeros(8, np.int64)
        for j in range(a, a + m):
            p = perm[j]
            o = 0
            if pos[p, 0] >= center[node, 0]:
                o |= 1
            if pos[p, 1] >= center[node, 1]:
                o |= 2
            if pos[p, 2] >= center[node, 2]:
                o |= 4
            octant[j] = o
            cnt[o] += 1
        offs = np.zeros(8, np.int64)
        for o in range(1, 8):
            offs[o] = offs[o - 1] + cnt[o - 1]
        fill = offs.copy()
        for j in range(a, a + m):
            o = octant[j]
            tmp[a + fill[o]] = perm[j]
            fill[o] += 1
        for j in range(a, a + m):
            perm[j] = tmp[j]
        if nnodes + 8 > cap:
            raise MemoryError("octree node capacity exceeded")
        child0[node] = nnodes
        hh = 0.5 * half[node]
        for o in range(8):
            if cnt[o] == 0:
                continue
            c = nnodes
            nnodes += 1
            nchild[node] += 1
            center[c, 0] = center[node, 0] + (hh if o & 1 else -hh)
            center[c, 1] = center[node, 1] + (hh if o & 2 else -hh)
            center[c, 2] = center[node, 2] + (hh if o & 4 else -hh)
            half[c] = hh
            start[c] = a + offs[o]
            count[c] = cnt[o]
            depth[c] = depth[node] + 1
            stack[sp] = c
            sp += 1

    # children always have larger ids than parents: accumulate moments bottom-up
    for node in range(nnodes - 1, -1, -1):
        if nchild[node] == 0:
            mt = 0.0
            mx = my = mz = 0.0
            for j in range(start[node], start[node] + count[node]):
                p = perm[j]
                mt += w[p]
                mx += w[p] * pos[p, 0]
                my += w[p] * pos[p, 1]
                mz += w[p] * pos[p, 2]
        else:
            mt = 0.0
            mx = my = mz = 0.0
            for c in range(child0[node], child0[node] + nchild[node]):
                mt += mass[c]
                mx += mass[c] * com[c, 0]
                my += mass[c] * com[c, 1]
                mz += mass[c] * com[c, 2]
        mass[node] = mt
        if mt > 0:
            com[node, 0] = mx / mt
            com[node, 1] = my / mt
            com[node, 2] = mz / mt
        else:
            com[node, 0] = center[node, 0]
            com[node, 1] = center[node, 1]
            com[node, 2] = center[node, 2]
    return (perm, center[:nnodes].copy(), half[:nnodes].copy(), start[:nnodes].copy(),
            count[:nnodes].copy(), child0[:nnodes].copy(), nchild[:nnodes].copy(),
            mass[:nnodes].copy(), com[:nnodes].copy())


@njit(parallel=True, **_JIT)
def _tree_kernel(pos, w, q, eps2, theta, skip_self, perm, center, half, start, count, child0, nchild,
                 mass, com, out):
    nnodes = center.shape[0]
    for k in prange(q.shape[0]):
        qx, qy, qz = q[k, 0], q[k, 1], q[k, 2]
        stack = np.empty(nnodes, np.int64)
        sp = 1
        stack[0] = 0
        sx = sy = sz = 0.0
        cx = cy = cz = 0.0
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if nchild[node] == 0:
                for j in range(start[node], start[node] + count[node]):
                    i = perm[j]
                    if skip_self and i == k:
                        continue
                    dx = qx - pos[i, 0]
                    dy = qy - pos[i, 1]
                    dz = qz - pos[i, 2]
                    r2 = dx * dx + dy * dy + dz * dz + eps2
                    f = w[i] / (r2 * math.sqrt(r2))
                    sx, cx = _nadd(sx, cx, -dx * f)
                    sy, cy = _nadd(sy, cy, -dy * f)
                    sz, cz = _nadd(sz, cz, -dz * f)
                continue
            dx = qx - com[node, 0]
            dy = qy - com[node, 1]
            dz = qz - com[node, 2]
            d2 = dx * dx + dy * dy + dz * dz
            h = half[node]
            inside = (abs(qx - center[node, 0]) <= h and abs(qy - center[node, 1]) <= h
                      and abs(qz - center[node, 2]) <= h)
            # offset of the centre of mass from the cell centre widens the criterion
            ox = com[node, 0] - center[node, 0]
            oy = com[node, 1] - center[node, 1]
            oz = com[node, 2] - center[node, 2]
            reach = 2.0 * h + theta * math.sqrt(ox * ox + oy * oy + oz * oz)
            if (not inside) and reach * reach < theta * theta * d2:
                r2 = d2 + eps2
                f = mass[node] / (r2 * math.sqrt(r2))
                sx, cx = _nadd(sx, cx, -dx * f)
                sy, cy = _nadd(sy, cy, -dy * f)
                sz, cz = _nadd(sz, cz, -dz * f)
            else:
                for c in range(child0[node], child0[node] + nchild[node]):
                    stack[sp] = c
                    sp += 1
        out[k, 0] = sx + cx
        out[k, 1] = sy + cy
        out[k, 2] = sz + cz


def build_octree(x, w, leaf_size: int = LEAF_SIZE):
    x = np.ascontiguousarray(x, dtype=np.float64).reshape(-1, 3)
    w = np.ascontiguousarray(w, dtype=np.float64).reshape(-1)
    if x.shape[0] == 0:
        raise ValueError("cannot build an octree over zero particles")
    return _build(x, w, x.min(axis=0), x.max(axis=0), leaf_size)


def field_tree(ens, queries, s: SofteningParams, theta: float = 0.5) -> np.ndarray:
    """Barnes-Hut field with monopole nodes.

    A node of side ``s`` whose centre of mass sits ``delta`` from its cell centre
    is accepted when ``d > s / theta + delta``. Terms are accumulated in a fixed
    depth-first walk order. At ``theta = 0`` no node is ever accepted, every
    term is a particle term, and the evaluation is the direct sum itself.
    """
    if not theta >= 0:
        raise ValueError(f"opening angle must be >= 0, got {theta}")
    if theta == 0:
        return field_direct(ens, queries, s)
    x, w, q = _check_inputs(ens.x, ens.w, queries)
    out = np.empty_like(q)
    if x.shape[0] == 0:
        out[:] = 0.0
        return out
    tree = build_octree(x, w)
    _tree_kernel(x, w, q, float(s.eps) ** 2, float(theta), False, *tree, out)
    return out


DIRECT_LIMIT = 4096
DYNAMICS_THETA = 0.4


def self_gravity(ens, s: SofteningParams, method: str = "auto", theta: float = DYNAMICS_THETA,
                 direct_limit: int = DIRECT_LIMIT) -> np.ndarray:
    """Field at every particle due to all the others.

    The self term is skipped, which lets ``eps = 0`` dynamics run for
    non-coincident particles; for ``eps > 0`` it contributes exactly zero
    anyway. ``method`` is ``"direct"``, ``"tree"`` or ``"auto"`` (direct up to
    ``direct_limit`` particles, tree with ``theta`` above).
    """
    x = np.ascontiguousarray(ens.x, dtype=np.float64)
    w = np.ascontiguousarray(ens.w, dtype=np.float64)
    out = np.empty_like(x)
    if method == "auto":
        method = "direct" if x.shape[0] <= direct_limit else "tree"
    eps2 = float(s.eps) ** 2
    if method == "direct" or (method == "tree" and theta == 0):
        _direct_kernel(x, w, x, eps2, True, out)
    elif method == "tree":
        _tree_kernel(x, w, x, eps2, float(theta), True, *build_octree(x, w), out)
    else:
        raise ValueError(f"unknown field method {method!r}")
    return out


# ---------------------------------------------------------------- energy

@njit(parallel=True, **_JIT)
def _pair_rows(pos, w, eps2, rows):
    n = pos.shape[0]
    for i in prange(n):
        s = 0.0
        c = 0.0
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            s, c = _nadd(s, c, w[j] / math.sqrt(dx * dx + dy * dy + dz * dz + eps2))
        rows[i] = w[i] * (s + c)


@njit(**_JIT)
def _ordered_sum(a):
    s = 0.0
    c = 0.0
    for i in range(a.shape[0]):
        s, c = _nadd(s, c, a[i])
    return s + c


def potential_energy(ens, s: SofteningParams) -> float:
    """``-(1/2) sum_{i != j} w_i w_j (|x_i - x_j|^2 + eps^2)^(-1/2)``, i.e. minus the sum over pairs."""
    x = np.ascontiguousarray(ens.x, dtype=np.float64)
    w = np.ascontiguousarray(ens.w, dtype=np.float64)
    if x.shape[0] < 2:
        return 0.0
    rows = np.empty(x.shape[0])
    _pair_rows(x, w, float(s.eps) ** 2, rows)
    return -float(_ordered_sum(rows))


def set_threads(n: int | None) -> None:
    if n:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))
