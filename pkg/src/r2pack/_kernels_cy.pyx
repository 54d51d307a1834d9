# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled placement geometry kernels.

Twin of ``_kernels_py``: same functions, same semantics, same output
ordering.  See that module's docstring for the geometry conventions.
"""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int64_t

cnp.import_array()

NAME = "cython"


def candidate_positions_arr(cnp.ndarray boxes_in, int dim):
    cdef cnp.ndarray[int64_t, ndim=2] boxes = np.ascontiguousarray(
        boxes_in, dtype=np.int64
    )
    cdef Py_ssize_t k = boxes.shape[0]
    if k == 0:
        return np.zeros((1, 3), dtype=np.int64)
    cdef cnp.ndarray[int64_t, ndim=1] xs = np.unique(
        np.concatenate(([0], boxes_in[:, 0] + boxes_in[:, 3]))
    )
    cdef cnp.ndarray[int64_t, ndim=1] ys = np.unique(
        np.concatenate(([0], boxes_in[:, 1] + boxes_in[:, 4]))
    )
    cdef cnp.ndarray[int64_t, ndim=1] zs
    if dim == 2:
        zs = np.zeros(1, dtype=np.int64)
    else:
        zs = np.unique(np.concatenate(([0], boxes_in[:, 2] + boxes_in[:, 5])))
    cdef Py_ssize_t nx = xs.shape[0], ny = ys.shape[0], nz = zs.shape[0]
    cdef cnp.ndarray[int64_t, ndim=2] out = np.empty((nx * ny * nz, 3), dtype=np.int64)
    cdef Py_ssize_t i, j, l, r = 0
    for i in range(nx):
        for j in range(ny):
            for l in range(nz):
                out[r, 0] = xs[i]
                out[r, 1] = ys[j]
                out[r, 2] = zs[l]
                r += 1
    return out


cdef bint _overlaps_any(int64_t[:, ::1] boxes, int64_t x, int64_t y, int64_t z,
                        int64_t dx, int64_t dy, int64_t dz) nogil:
    cdef Py_ssize_t i
    for i in range(boxes.shape[0]):
        if (boxes[i, 0] < x + dx and x < boxes[i, 0] + boxes[i, 3]
                and boxes[i, 1] < y + dy and y < boxes[i, 1] + boxes[i, 4]
                and boxes[i, 2] < z + dz and z < boxes[i, 2] + boxes[i, 5]):
            return True
    return False


cdef bint _supported(int64_t[:, ::1] boxes, int64_t x, int64_t y, int64_t z,
                     int64_t dx, int64_t dy, int dim) nogil:
    cdef Py_ssize_t i
    cdef int64_t cx2 = 2 * x + dx
    cdef int64_t cy2 = 2 * y + dy
    if dim == 2:
        if y == 0:
            return True
        for i in range(boxes.shape[0]):
            if (boxes[i, 1] + boxes[i, 4] == y
                    and 2 * boxes[i, 0] <= cx2
                    and cx2 <= 2 * (boxes[i, 0] + boxes[i, 3])):
                return True
        return False
    if z == 0:
        return True
    for i in range(boxes.shape[0]):
        if (boxes[i, 2] + boxes[i, 5] == z
                and 2 * boxes[i, 0] <= cx2
                and cx2 <= 2 * (boxes[i, 0] + boxes[i, 3])
                and 2 * boxes[i, 1] <= cy2
                and cy2 <= 2 * (boxes[i, 1] + boxes[i, 4])):
            return True
    return False


def overlaps_any(boxes_in, box):
    cdef cnp.ndarray[int64_t, ndim=2, mode="c"] boxes = np.ascontiguousarray(
        boxes_in, dtype=np.int64
    )
    if boxes.shape[0] == 0:
        return False
    return bool(_overlaps_any(boxes, box[0], box[1], box[2], box[3], box[4], box[5]))


def box_supported(boxes_in, box, int dim):
    cdef cnp.ndarray[int64_t, ndim=2, mode="c"] boxes = np.ascontiguousarray(
        boxes_in, dtype=np.int64
    )
    return bool(_supported(boxes, box[0], box[1], box[2], box[3], box[4], dim))


def enumerate_legal(boxes_in, orient_rows_in, cands_in, int dim):
    cdef cnp.ndarray[int64_t, ndim=2, mode="c"] boxes = np.ascontiguousarray(
        boxes_in, dtype=np.int64
    )
    cdef cnp.ndarray[int64_t, ndim=2, mode="c"] orient_rows = np.ascontiguousarray(
        orient_rows_in, dtype=np.int64
    )
    cdef cnp.ndarray[int64_t, ndim=2, mode="c"] cands = np.ascontiguousarray(
        cands_in, dtype=np.int64
    )
    cdef Py_ssize_t m = orient_rows.shape[0]
    cdef Py_ssize_t p = cands.shape[0]
    if m == 0:
        return np.zeros((0, 8), dtype=np.int64)
    cdef cnp.ndarray[int64_t, ndim=2] out = np.empty((m * p, 8), dtype=np.int64)
    cdef int64_t[:, ::1] bv = boxes
    cdef int64_t[:, ::1] ov = orient_rows
    cdef int64_t[:, ::1] cv = cands
    cdef int64_t[:, :] outv = out
    cdef Py_ssize_t i, j, r = 0
    cdef int64_t item, code, dx, dy, dz, x, y, z
    with nogil:
        for i in range(m):
            item = ov[i, 0]
            code = ov[i, 1]
            dx = ov[i, 2]
            dy = ov[i, 3]
            dz = ov[i, 4]
            for j in range(p):
                x = cv[j, 0]
                y = cv[j, 1]
                z = cv[j, 2]
                if _overlaps_any(bv, x, y, z, dx, dy, dz):
                    continue
                if not _supported(bv, x, y, z, dx, dy, dim):
                    continue
                outv[r, 0] = item
                outv[r, 1] = code
                outv[r, 2] = x
                outv[r, 3] = y
                outv[r, 4] = z
                outv[r, 5] = dx
                outv[r, 6] = dy
                outv[r, 7] = dz
                r += 1
    return np.ascontiguousarray(out[:r])
