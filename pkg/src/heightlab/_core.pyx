# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: bilinear gather, bilinear splat and its adjoint.

Arithmetic order matches ``_core_py`` term for term so both backends agree
bit-for-bit on the same inputs.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport floor, isfinite

cnp.import_array()


cdef inline void _corner_weights(double fu, double fv, double* w) noexcept nogil:
    w[0] = (1.0 - fu) * (1.0 - fv)
    w[1] = fu * (1.0 - fv)
    w[2] = (1.0 - fu) * fv
    w[3] = fu * fv


cdef inline void _gather_one(const double[:, :, ::1] field, double x, double y,
                             double[:, ::1] out, unsigned char[::1] valid, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t H = field.shape[0], W = field.shape[1], C = field.shape[2]
    cdef Py_ssize_t c, k, u0, v0, u1, v1
    cdef double fu, fv, acc, a
    cdef double w[4]
    cdef Py_ssize_t ru[4]
    cdef Py_ssize_t rv[4]
    if not (x >= 0.0 and x <= W - 1 and y >= 0.0 and y <= H - 1):
        return
    u0 = <Py_ssize_t>floor(x)
    v0 = <Py_ssize_t>floor(y)
    if u0 > W - 2:
        u0 = W - 2
    if u0 < 0:
        u0 = 0
    if v0 > H - 2:
        v0 = H - 2
    if v0 < 0:
        v0 = 0
    u1 = u0 + 1
    v1 = v0 + 1
    if u1 > W - 1:
        u1 = W - 1
    if v1 > H - 1:
        v1 = H - 1
    fu = x - u0
    fv = y - v0
    _corner_weights(fu, fv, w)
    ru[0] = u0; rv[0] = v0
    ru[1] = u1; rv[1] = v0
    ru[2] = u0; rv[2] = v1
    ru[3] = u1; rv[3] = v1
    for k in range(4):
        if w[k] != 0.0:
            for c in range(C):
                if not isfinite(field[rv[k], ru[k], c]):
                    return
    for c in range(C):
        acc = 0.0
        for k in range(4):
            if w[k] != 0.0:
                a = field[rv[k], ru[k], c]
            else:
                a = 0.0
            acc = acc + a * w[k]
        out[i, c] = acc
    valid[i] = 1


def bilinear_gather(const double[:, :, ::1] field, const double[::1] u, const double[::1] v, int nthreads=1):
    cdef Py_ssize_t N = u.shape[0]
    out_arr = np.zeros((N, field.shape[2]), dtype=np.float64)
    valid_arr = np.zeros(N, dtype=np.uint8)
    cdef double[:, ::1] out = out_arr
    cdef unsigned char[::1] valid = valid_arr
    cdef Py_ssize_t i
    if N == 0:
        return out_arr, valid_arr.astype(bool)
    if nthreads < 1:
        nthreads = 1
    for i in prange(N, nogil=True, num_threads=nthreads, schedule="static"):
        _gather_one(field, u[i], v[i], out, valid, i)
    return out_arr, valid_arr.astype(bool)


def bilinear_splat(const double[::1] u, const double[::1] v, const double[::1] mass, Py_ssize_t H, Py_ssize_t W):
    cdef Py_ssize_t N = u.shape[0]
    raster_arr = np.zeros((H, W), dtype=np.float64)
    cdef double[:, ::1] raster = raster_arr
    cdef Py_ssize_t i, k, u0, v0, pu, pv
    cdef double fu, fv, x, y
    cdef double w[4]
    with nogil:
        for i in range(N):
            x = u[i]
            y = v[i]
            if not (x > -1.0 and x < W and y > -1.0 and y < H):
                continue
            u0 = <Py_ssize_t>floor(x)
            v0 = <Py_ssize_t>floor(y)
            fu = x - u0
            fv = y - v0
            _corner_weights(fu, fv, w)
            for k in range(4):
                pu = u0 + (k & 1)
                pv = v0 + (k >> 1)
                if pu >= 0 and pu < W and pv >= 0 and pv < H:
                    raster[pv, pu] += mass[i] * w[k]
    return raster_arr


cdef inline void _adjoint_one(double x, double y, double m, const double[:, ::1] grad,
                              double[::1] dm, double[::1] du, double[::1] dv, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t H = grad.shape[0], W = grad.shape[1]
    cdef Py_ssize_t k, u0, v0, pu, pv
    cdef double fu, fv, g, sm, su, sv
    cdef double w[4]
    cdef double wu[4]
    cdef double wv[4]
    if not (x > -1.0 and x < W and y > -1.0 and y < H):
        return
    u0 = <Py_ssize_t>floor(x)
    v0 = <Py_ssize_t>floor(y)
    fu = x - u0
    fv = y - v0
    _corner_weights(fu, fv, w)
    wu[0] = -(1.0 - fv)
    wu[1] = 1.0 - fv
    wu[2] = -fv
    wu[3] = fv
    wv[0] = -(1.0 - fu)
    wv[1] = -fu
    wv[2] = 1.0 - fu
    wv[3] = fu
    sm = 0.0
    su = 0.0
    sv = 0.0
    for k in range(4):
        pu = u0 + (k & 1)
        pv = v0 + (k >> 1)
        if pu >= 0 and pu < W and pv >= 0 and pv < H:
            g = grad[pv, pu]
        else:
            g = 0.0
        sm = sm + w[k] * g
        su = su + wu[k] * g
        sv = sv + wv[k] * g
    dm[i] = sm
    du[i] = m * su
    dv[i] = m * sv


def bilinear_splat_adjoint(const double[::1] u, const double[::1] v, const double[::1] mass,
                           const double[:, ::1] grad, int nthreads=1):
    cdef Py_ssize_t N = u.shape[0]
    dm_arr = np.zeros(N, dtype=np.float64)
    du_arr = np.zeros(N, dtype=np.float64)
    dv_arr = np.zeros(N, dtype=np.float64)
    cdef double[::1] dm = dm_arr
    cdef double[::1] du = du_arr
    cdef double[::1] dv = dv_arr
    cdef Py_ssize_t i
    if N == 0:
        return dm_arr, du_arr, dv_arr
    if nthreads < 1:
        nthreads = 1
    for i in prange(N, nogil=True, num_threads=nthreads, schedule="static"):
        _adjoint_one(u[i], v[i], mass[i], grad, dm, du, dv, i)
    return dm_arr, du_arr, dv_arr
