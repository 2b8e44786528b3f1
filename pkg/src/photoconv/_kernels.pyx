# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled ray-propagation kernels.

Same two routines as ``photoconv._kernels_py`` (see that module for the
full contract); ``photoconv._backend`` imports whichever is available.
The compiled path walks each ray once and accumulates the weighted
propagation rows in place, so the dense per-chunk matrices of the numpy
fallback are never materialised.
"""

import numpy as np


def ray_sweep(f, decay, w_start, w_end, n_up, init_down=None):
    """March every ray through the layer for a concrete source field."""
    out_dtype = np.result_type(np.asarray(f), np.asarray(decay))
    f_c = np.ascontiguousarray(f, dtype=np.complex128)
    d_c = np.ascontiguousarray(decay, dtype=np.complex128)
    ws_c = np.ascontiguousarray(w_start, dtype=np.complex128)
    we_c = np.ascontiguousarray(w_end, dtype=np.complex128)
    cdef Py_ssize_t n_rays = f_c.shape[0]
    cdef Py_ssize_t n_z = f_c.shape[1]
    cdef Py_ssize_t nu = n_up
    out_arr = np.zeros((n_rays, n_z), dtype=np.complex128)
    if init_down is not None:
        out_arr[nu:, n_z - 1] = init_down

    cdef double complex[:, ::1] fv = f_c
    cdef double complex[:, ::1] dv = d_c
    cdef double complex[:, ::1] wsv = ws_c
    cdef double complex[:, ::1] wev = we_c
    cdef double complex[:, ::1] out = out_arr
    cdef Py_ssize_t r, j

    with nogil:
        for r in range(nu):
            for j in range(n_z - 1):
                out[r, j + 1] = (dv[r, j] * out[r, j]
                                 + wsv[r, j] * fv[r, j]
                                 + wev[r, j] * fv[r, j + 1])
        for r in range(nu, n_rays):
            for j in range(n_z - 2, -1, -1):
                out[r, j] = (dv[r, j] * out[r, j + 1]
                             + wsv[r, j] * fv[r, j + 1]
                             + wev[r, j] * fv[r, j])
    if not np.issubdtype(out_dtype, np.complexfloating):
        return out_arr.real.copy()
    return out_arr


def fold_propagation(decay, w_start, w_end, left_weights, coefs, n_up,
                     chunk=64):
    """Accumulate angular moments of the ray propagation operators.

    ``chunk`` is accepted for signature compatibility with the numpy
    fallback and ignored: the compiled path is strictly per ray.
    """
    d_c = np.ascontiguousarray(decay, dtype=np.complex128)
    ws_c = np.ascontiguousarray(w_start, dtype=np.complex128)
    we_c = np.ascontiguousarray(w_end, dtype=np.complex128)
    lw_c = np.ascontiguousarray(left_weights, dtype=np.float64)
    co_c = np.ascontiguousarray(coefs, dtype=np.complex128)

    cdef Py_ssize_t n_rays = d_c.shape[0]
    cdef Py_ssize_t n_seg = d_c.shape[1]
    cdef Py_ssize_t n_z = n_seg + 1
    cdef Py_ssize_t n_g = lw_c.shape[0]
    cdef Py_ssize_t n_c = co_c.shape[0]
    cdef Py_ssize_t nu = n_up

    out_arr = np.zeros((n_g, n_c, n_z, n_z), dtype=np.complex128)
    row_arr = np.empty(n_z, dtype=np.complex128)
    tmp_arr = np.empty(n_z, dtype=np.complex128)

    cdef double complex[:, ::1] dv = d_c
    cdef double complex[:, ::1] wsv = ws_c
    cdef double complex[:, ::1] wev = we_c
    cdef double[:, ::1] lw = lw_c
    cdef double complex[:, :, ::1] co = co_c
    cdef double complex[:, :, :, ::1] out = out_arr
    cdef double complex[::1] row = row_arr
    cdef double complex[::1] tmp = tmp_arr

    cdef Py_ssize_t r, i, j, g, c, lo, hi
    cdef double complex dj, s

    with nogil:
        for r in range(n_rays):
            for j in range(n_z):
                row[j] = 0.0
            if r < nu:
                # upward march: T[i, j] populated for j <= i
                for i in range(n_seg):
                    dj = dv[r, i]
                    for j in range(i + 1):
                        row[j] = dj * row[j]
                    row[i] = row[i] + wsv[r, i]
                    row[i + 1] = wev[r, i]
                    lo = 0
                    hi = i + 2
                    for c in range(n_c):
                        for j in range(lo, hi):
                            tmp[j] = row[j] * co[c, r, j]
                        for g in range(n_g):
                            s = lw[g, r]
                            for j in range(lo, hi):
                                out[g, c, i + 1, j] = out[g, c, i + 1, j] + s * tmp[j]
            else:
                # downward march: T[i, j] populated for j >= i
                for i in range(n_seg - 1, -1, -1):
                    dj = dv[r, i]
                    for j in range(i + 1, n_z):
                        row[j] = dj * row[j]
                    row[i + 1] = row[i + 1] + wsv[r, i]
                    row[i] = wev[r, i]
                    lo = i
                    hi = n_z
                    for c in range(n_c):
                        for j in range(lo, hi):
                            tmp[j] = row[j] * co[c, r, j]
                        for g in range(n_g):
                            s = lw[g, r]
                            for j in range(lo, hi):
                                out[g, c, i, j] = out[g, c, i, j] + s * tmp[j]
    return out_arr
