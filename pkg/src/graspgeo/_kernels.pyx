# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: trilinear gather/scatter and ray compositing.

Semantics and floating-point evaluation order match _kernels_np exactly;
see that module for the contract.  Built with -ffp-contract=off so the
compiler cannot fuse multiply-adds and change rounding.
"""

import numpy as np

cimport cython


def gather_plan(double[::1] values_flat, long long[:, ::1] idx, double[:, ::1] w):
    cdef Py_ssize_t n = idx.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef double acc
    with nogil:
        for i in range(n):
            acc = values_flat[idx[i, 0]] * w[i, 0]
            for k in range(1, 8):
                acc = acc + values_flat[idx[i, k]] * w[i, k]
            out[i] = acc
    return out_arr


def scatter_plan(double[::1] grad_flat, long long[:, ::1] idx, double[:, ::1] w,
                 double[::1] upstream):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t i, k
    with nogil:
        for i in range(n):
            for k in range(8):
                grad_flat[idx[i, k]] += upstream[i] * w[i, k]


def composite_exact(double[:, ::1] u, double[::1] depth_table, double z_near,
                    double z_far, double threshold=0.5):
    cdef Py_ssize_t p = u.shape[0]
    cdef Py_ssize_t dp = u.shape[1]
    mask_arr = np.empty(p, dtype=np.float64)
    depth_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] mask = mask_arr
    cdef double[::1] depth = depth_arr
    cdef Py_ssize_t i, l
    cdef double mx, v
    cdef Py_ssize_t first
    with nogil:
        for i in range(p):
            mx = u[i, 0]
            first = -1
            for l in range(dp):
                v = u[i, l]
                if v > mx:
                    mx = v
                if first < 0 and v > threshold:
                    first = l
            mask[i] = mx
            if mx < threshold:
                depth[i] = z_far
            elif first >= 0:
                depth[i] = depth_table[first]
            else:
                depth[i] = z_near
    return mask_arr, depth_arr


def composite_soft_forward(double[:, ::1] u, double[::1] depth_table, double z_far):
    cdef Py_ssize_t p = u.shape[0]
    cdef Py_ssize_t dp = u.shape[1]
    mask_arr = np.empty(p, dtype=np.float64)
    depth_arr = np.empty(p, dtype=np.float64)
    trans_arr = np.empty((p, dp + 1), dtype=np.float64)
    cdef double[::1] mask = mask_arr
    cdef double[::1] depth = depth_arr
    cdef double[:, ::1] trans = trans_arr
    cdef Py_ssize_t i, l
    cdef double acc
    with nogil:
        for i in range(p):
            trans[i, 0] = 1.0
            for l in range(dp):
                trans[i, l + 1] = trans[i, l] * (1.0 - u[i, l])
            mask[i] = 1.0 - trans[i, dp]
            acc = (u[i, 0] * trans[i, 0]) * depth_table[0]
            for l in range(1, dp):
                acc = acc + (u[i, l] * trans[i, l]) * depth_table[l]
            depth[i] = acc + trans[i, dp] * z_far
    return mask_arr, depth_arr, trans_arr


def composite_soft_backward(double[:, ::1] u, double[:, ::1] trans,
                            double[::1] depth_table, double z_far,
                            double[::1] d_mask, double[::1] d_depth):
    cdef Py_ssize_t p = u.shape[0]
    cdef Py_ssize_t dp = u.shape[1]
    du_arr = np.empty((p, dp), dtype=np.float64)
    cdef double[:, ::1] du = du_arr
    cdef Py_ssize_t i, l
    cdef double tbar, wbar
    with nogil:
        for i in range(p):
            tbar = d_depth[i] * z_far - d_mask[i]
            for l in range(dp - 1, -1, -1):
                wbar = d_depth[i] * depth_table[l]
                du[i, l] = wbar * trans[i, l] - tbar * trans[i, l]
                tbar = wbar * u[i, l] + tbar * (1.0 - u[i, l])
    return du_arr
