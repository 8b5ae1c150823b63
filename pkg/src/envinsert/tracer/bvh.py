"""Axis-aligned BVH built with a binned surface-area heuristic.

The result is flat arrays consumed by the traversal kernel:

* ``bounds`` (N, 6): min xyz, max xyz per node
* ``nodes`` (N, 4) int32: left child, right child, first primitive, primitive count
  (count > 0 marks a leaf; children are -1 there)
* ``order``: permutation putting each leaf's triangles in a contiguous run
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF_SIZE = 4
MAX_LEAF = 16
N_BINS = 16


@dataclass
class Bvh:
    bounds: np.ndarray
    nodes: np.ndarray
    order: np.ndarray


def _area(lo, hi):
    e = np.maximum(hi - lo, 0.0)
    return 2.0 * (e[..., 0] * e[..., 1] + e[..., 1] * e[..., 2] + e[..., 2] * e[..., 0])


def _bins(cent, axis):
    cmin, cmax = cent[:, axis].min(), cent[:, axis].max()
    extent = cmax - cmin
    return np.minimum(((cent[:, axis] - cmin) / extent * N_BINS).astype(np.int64), N_BINS - 1)


def _sah_split(cent, lo, hi):
    """Return (axis, last left bin) of the cheapest binned split, or None."""
    n = len(cent)
    cmin, cmax = cent.min(axis=0), cent.max(axis=0)
    best = None
    best_cost = np.inf
    for axis in range(3):
        extent = cmax[axis] - cmin[axis]
        if extent <= 1e-12:
            continue
        b = _bins(cent, axis)
        counts = np.bincount(b, minlength=N_BINS)
        blo = np.full((N_BINS, 3), np.inf)
        bhi = np.full((N_BINS, 3), -np.inf)
        np.minimum.at(blo, b, lo)
        np.maximum.at(bhi, b, hi)
        left_lo = np.minimum.accumulate(blo, axis=0)[:-1]
        left_hi = np.maximum.accumulate(bhi, axis=0)[:-1]
        right_lo = np.minimum.accumulate(blo[::-1], axis=0)[::-1][1:]
        right_hi = np.maximum.accumulate(bhi[::-1], axis=0)[::-1][1:]
        nl = np.cumsum(counts)[:-1]
        nr = n - nl
        with np.errstate(invalid="ignore"):
            cost = np.where((nl > 0) & (nr > 0),
                            nl * _area(left_lo, left_hi) + nr * _area(right_lo, right_hi), np.inf)
        k = int(np.argmin(cost))
        if cost[k] < best_cost:
            best_cost = cost[k]
            best = (axis, k)
    if best is None:
        return None
    parent = _area(lo.min(axis=0), hi.max(axis=0))
    if n <= MAX_LEAF and best_cost >= n * parent:
        return None
    return best


def build_bvh(v0: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> Bvh:
    tri_lo = np.minimum(np.minimum(v0, v1), v2)
    tri_hi = np.maximum(np.maximum(v0, v1), v2)
    cent = (tri_lo + tri_hi) * 0.5
    n_tri = len(v0)
    bounds: list[np.ndarray] = []
    nodes: list[list[int]] = []
    order: list[int] = []
    if n_tri == 0:
        return Bvh(np.zeros((0, 6)), np.zeros((0, 4), dtype=np.int32), np.zeros(0, dtype=np.int64))

    def new_node(idx):
        bounds.append(np.r_[tri_lo[idx].min(axis=0), tri_hi[idx].max(axis=0)])
        nodes.append([-1, -1, 0, 0])
        return len(nodes) - 1

    stack = [(new_node(np.arange(n_tri)), np.arange(n_tri))]
    while stack:
        node, idx = stack.pop()
        split = None if len(idx) <= LEAF_SIZE else _sah_split(cent[idx], tri_lo[idx], tri_hi[idx])
        if split is not None:
            axis, k = split
            mask = _bins(cent[idx], axis) <= k
            left, right = idx[mask], idx[~mask]
        elif len(idx) > MAX_LEAF:
            # degenerate centroids: median split by index
            half = len(idx) // 2
            left, right = idx[:half], idx[half:]
        else:
            nodes[node][2] = len(order)
            nodes[node][3] = len(idx)
            order.extend(idx.tolist())
            continue
        li, ri = new_node(left), new_node(right)
        nodes[node][0], nodes[node][1] = li, ri
        stack.append((ri, right))
        stack.append((li, left))
    return Bvh(np.array(bounds, dtype=np.float64), np.array(nodes, dtype=np.int32),
               np.array(order, dtype=np.int64))
