"""Pure-Python/NumPy implementation of the placement geometry kernels.

This is the fallback backend for :mod:`r2pack.kernels`; the compiled
extension in ``_kernels_cy.pyx`` implements the same four functions with
identical semantics and output ordering.

Conventions shared by both backends:

* a placed box is a row ``(x, y, z, dx, dy, dz)`` of int64,
* 2D problems keep ``z = 0`` and ``dz = 1``; gravity acts along y,
* 3D gravity acts along z,
* overlap is tested on open intervals (touching faces do not overlap),
* support holds when the base sits on the floor or the footprint center
  lies inside (closed region) the top face of a single placed box whose
  top is exactly at the base height.
"""

import numpy as np

NAME = "python"


def candidate_positions_arr(boxes: np.ndarray, dim: int) -> np.ndarray:
    """Event-point positions for the next placement, sorted lexicographically.

    Per axis the coordinate set is {0} plus the far coordinate (corner +
    extent) of every placed box; the full set is the per-axis Cartesian
    product.  The empty state yields exactly the origin.
    """
    if len(boxes) == 0:
        return np.zeros((1, 3), dtype=np.int64)
    xs = np.unique(np.concatenate(([0], boxes[:, 0] + boxes[:, 3])))
    ys = np.unique(np.concatenate(([0], boxes[:, 1] + boxes[:, 4])))
    if dim == 2:
        zs = np.zeros(1, dtype=np.int64)
    else:
        zs = np.unique(np.concatenate(([0], boxes[:, 2] + boxes[:, 5])))
    grid = np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1)
    return np.ascontiguousarray(grid.reshape(-1, 3).astype(np.int64))


def overlaps_any(boxes: np.ndarray, box) -> bool:
    """True iff ``box`` (x, y, z, dx, dy, dz) intersects any placed box."""
    if len(boxes) == 0:
        return False
    x, y, z, dx, dy, dz = (int(v) for v in box)
    ox = (boxes[:, 0] < x + dx) & (x < boxes[:, 0] + boxes[:, 3])
    oy = (boxes[:, 1] < y + dy) & (y < boxes[:, 1] + boxes[:, 4])
    oz = (boxes[:, 2] < z + dz) & (z < boxes[:, 2] + boxes[:, 5])
    return bool(np.any(ox & oy & oz))


def box_supported(boxes: np.ndarray, box, dim: int) -> bool:
    """Support predicate for one box against the placed set."""
    x, y, z, dx, dy, dz = (int(v) for v in box)
    if dim == 2:
        if y == 0:
            return True
        if len(boxes) == 0:
            return False
        tops = boxes[:, 1] + boxes[:, 4]
        cx2 = 2 * x + dx  # doubled center avoids fractions
        ok = (
            (tops == y)
            & (2 * boxes[:, 0] <= cx2)
            & (cx2 <= 2 * (boxes[:, 0] + boxes[:, 3]))
        )
        return bool(ok.any())
    if z == 0:
        return True
    if len(boxes) == 0:
        return False
    tops = boxes[:, 2] + boxes[:, 5]
    cx2 = 2 * x + dx
    cy2 = 2 * y + dy
    ok = (
        (tops == z)
        & (2 * boxes[:, 0] <= cx2)
        & (cx2 <= 2 * (boxes[:, 0] + boxes[:, 3]))
        & (2 * boxes[:, 1] <= cy2)
        & (cy2 <= 2 * (boxes[:, 1] + boxes[:, 4]))
    )
    return bool(ok.any())


def enumerate_legal(
    boxes: np.ndarray, orient_rows: np.ndarray, cands: np.ndarray, dim: int
) -> np.ndarray:
    """All legal (item, orientation, position) placements.

    ``orient_rows`` holds one row ``(item_id, orient, dx, dy, dz)`` per
    deduplicated item orientation, sorted by (item_id, orient);
    ``cands`` holds candidate positions sorted lexicographically.  The
    output rows ``(item_id, orient, x, y, z, dx, dy, dz)`` therefore come
    out ordered by (item id, orientation code, position).
    """
    if len(orient_rows) == 0:
        return np.zeros((0, 8), dtype=np.int64)
    X, Y, Z = cands[:, 0], cands[:, 1], cands[:, 2]
    k = len(boxes)
    if k:
        bx0, by0, bz0 = boxes[:, 0], boxes[:, 1], boxes[:, 2]
        bx1 = bx0 + boxes[:, 3]
        by1 = by0 + boxes[:, 4]
        bz1 = bz0 + boxes[:, 5]
        tops = bz1 if dim == 3 else by1
    chunks = []
    for item, code, dx, dy, dz in orient_rows:
        if k:
            ox = (X[:, None] < bx1) & (bx0 < (X + dx)[:, None])
            oy = (Y[:, None] < by1) & (by0 < (Y + dy)[:, None])
            oz = (Z[:, None] < bz1) & (bz0 < (Z + dz)[:, None])
            free = ~np.any(ox & oy & oz, axis=1)
            if dim == 2:
                cx2 = 2 * X + dx
                over = (
                    (tops == Y[:, None])
                    & (2 * bx0 <= cx2[:, None])
                    & (cx2[:, None] <= 2 * bx1)
                )
                supported = (Y == 0) | np.any(over, axis=1)
            else:
                cx2 = 2 * X + dx
                cy2 = 2 * Y + dy
                over = (
                    (tops == Z[:, None])
                    & (2 * bx0 <= cx2[:, None])
                    & (cx2[:, None] <= 2 * bx1)
                    & (2 * by0 <= cy2[:, None])
                    & (cy2[:, None] <= 2 * by1)
                )
                supported = (Z == 0) | np.any(over, axis=1)
            sel = free & supported
        else:
            sel = (Y == 0) if dim == 2 else (Z == 0)
        pos = cands[sel]
        if len(pos):
            rows = np.empty((len(pos), 8), dtype=np.int64)
            rows[:, 0] = item
            rows[:, 1] = code
            rows[:, 2:5] = pos
            rows[:, 5] = dx
            rows[:, 6] = dy
            rows[:, 7] = dz
            chunks.append(rows)
    if not chunks:
        return np.zeros((0, 8), dtype=np.int64)
    return np.concatenate(chunks, axis=0)
