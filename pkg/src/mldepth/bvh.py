"""Axis-aligned BVH over triangle soups, flattened for the jit kernels.

Nodes split at the box middle of the longest centroid axis, falling back to
a positional half split whenever one side would end up with less than an
eighth of the range (so the tree depth stays logarithmic on any input).
Arrays instead of node objects so traversal kernels can run without boxing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

LEAF_SIZE = 4


@dataclass
class FlatBVH:
    bounds_min: np.ndarray  # (n_nodes, 3)
    bounds_max: np.ndarray  # (n_nodes, 3)
    left: np.ndarray  # (n_nodes,) int32, -1 for leaves (right child = left + 1)
    start: np.ndarray  # (n_nodes,) int32 leaf range start into tri_order
    count: np.ndarray  # (n_nodes,) int32 leaf triangle count, 0 for internal
    tri_order: np.ndarray  # (n_tris,) int32


@njit(cache=True)
def _build_kernel(tri_min, tri_max, centroids, order, b_min, b_max, left,
                  start, count, stack):
    n_nodes = 1
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = tri_min.shape[0]
    top = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        lo = stack[top, 1]
        hi = stack[top, 2]
        for axis in range(3):
            mn = tri_min[order[lo], axis]
            mx = tri_max[order[lo], axis]
            for i in range(lo + 1, hi):
                t = order[i]
                if tri_min[t, axis] < mn:
                    mn = tri_min[t, axis]
                if tri_max[t, axis] > mx:
                    mx = tri_max[t, axis]
            b_min[node, axis] = mn
            b_max[node, axis] = mx
        if hi - lo <= LEAF_SIZE:
            left[node] = -1
            start[node] = lo
            count[node] = hi - lo
            continue
        # longest axis of the centroid box
        best_axis = 0
        best_ext = -1.0
        split = 0.0
        for axis in range(3):
            c_lo = centroids[order[lo], axis]
            c_hi = c_lo
            for i in range(lo + 1, hi):
                c = centroids[order[i], axis]
                if c < c_lo:
                    c_lo = c
                if c > c_hi:
                    c_hi = c
            if c_hi - c_lo > best_ext:
                best_ext = c_hi - c_lo
                best_axis = axis
                split = 0.5 * (c_lo + c_hi)
        i = lo
        j = hi - 1
        while i <= j:
            if centroids[order[i], best_axis] <= split:
                i += 1
            else:
                tmp = order[i]
                order[i] = order[j]
                order[j] = tmp
                j -= 1
        min_side = (hi - lo) // 8
        if i - lo <= min_side or hi - i <= min_side:
            i = lo + (hi - lo) // 2
        child = n_nodes
        n_nodes += 2
        left[node] = child
        start[node] = 0
        count[node] = 0
        stack[top, 0] = child
        stack[top, 1] = lo
        stack[top, 2] = i
        top += 1
        stack[top, 0] = child + 1
        stack[top, 1] = i
        stack[top, 2] = hi
        top += 1
    return n_nodes


def build_bvh(vertices: np.ndarray, triangles: np.ndarray) -> FlatBVH:
    n_tris = len(triangles)
    if n_tris == 0:
        return FlatBVH(
            bounds_min=np.zeros((1, 3)),
            bounds_max=np.zeros((1, 3)),
            left=np.array([-1], dtype=np.int32),
            start=np.array([0], dtype=np.int32),
            count=np.array([0], dtype=np.int32),
            tri_order=np.zeros(0, dtype=np.int32),
        )
    tv = np.ascontiguousarray(vertices, dtype=np.float64)[triangles]  # (T, 3, 3)
    tri_min = np.ascontiguousarray(tv.min(axis=1))
    tri_max = np.ascontiguousarray(tv.max(axis=1))
    centroids = np.ascontiguousarray((tri_min + tri_max) * 0.5)

    max_nodes = 2 * n_tris
    order = np.arange(n_tris, dtype=np.int32)
    b_min = np.empty((max_nodes, 3))
    b_max = np.empty((max_nodes, 3))
    left = np.empty(max_nodes, dtype=np.int32)
    start = np.empty(max_nodes, dtype=np.int32)
    count = np.empty(max_nodes, dtype=np.int32)
    # the half-split fallback keeps recursion logarithmic; 512 is far deeper
    stack = np.empty((512, 3), dtype=np.int64)
    n_nodes = _build_kernel(tri_min, tri_max, centroids, order, b_min, b_max,
                            left, start, count, stack)
    return FlatBVH(
        bounds_min=np.ascontiguousarray(b_min[:n_nodes]),
        bounds_max=np.ascontiguousarray(b_max[:n_nodes]),
        left=np.ascontiguousarray(left[:n_nodes]),
        start=np.ascontiguousarray(start[:n_nodes]),
        count=np.ascontiguousarray(count[:n_nodes]),
        tri_order=order,
    )
