"""Pure-numpy implementations of the compiled kernels in ``_core.pyx``.

Same contracts and the same floating-point operation order, so results are
bit-identical to the compiled backend. ``nthreads`` is accepted and ignored.
"""

from __future__ import annotations

import numpy as np


def _corner_weights(fu, fv):
    return ((1.0 - fu) * (1.0 - fv), fu * (1.0 - fv), (1.0 - fu) * fv, fu * fv)


def bilinear_gather(field, u, v, nthreads=1):
    field = np.ascontiguousarray(field, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    H, W, C = field.shape
    N = u.shape[0]
    out = np.zeros((N, C))
    inb = (u >= 0.0) & (u <= W - 1) & (v >= 0.0) & (v <= H - 1)
    idx = np.flatnonzero(inb)
    if idx.size == 0:
        return out, np.zeros(N, dtype=bool)
    x, y = u[idx], v[idx]
    u0 = np.clip(np.minimum(np.floor(x).astype(np.intp), W - 2), 0, None)
    v0 = np.clip(np.minimum(np.floor(y).astype(np.intp), H - 2), 0, None)
    u1 = np.minimum(u0 + 1, W - 1)
    v1 = np.minimum(v0 + 1, H - 1)
    fu = x - u0
    fv = y - v0
    w = _corner_weights(fu, fv)
    corners = ((v0, u0), (v0, u1), (v1, u0), (v1, u1))
    ok = np.ones(idx.size, dtype=bool)
    vals = []
    for (rv, ru), wk in zip(corners, w):
        a = field[rv, ru]  # (n, C)
        live = wk != 0.0
        ok &= ~(live[:, None] & ~np.isfinite(a)).any(axis=1)
        vals.append(np.where(live[:, None], a, 0.0))
    acc = np.zeros((idx.size, C))
    for a, wk in zip(vals, w):
        acc = acc + a * wk[:, None]
    good = idx[ok]
    out[good] = acc[ok]
    valid = np.zeros(N, dtype=bool)
    valid[good] = True
    return out, valid


def _splat_corners(u, v, H, W):
    live = (u > -1.0) & (u < W) & (v > -1.0) & (v < H)
    idx = np.flatnonzero(live)
    x, y = u[idx], v[idx]
    u0 = np.floor(x).astype(np.intp)
    v0 = np.floor(y).astype(np.intp)
    fu = x - u0
    fv = y - v0
    pu = np.stack([u0, u0 + 1, u0, u0 + 1], axis=1)
    pv = np.stack([v0, v0, v0 + 1, v0 + 1], axis=1)
    inside = (pu >= 0) & (pu < W) & (pv >= 0) & (pv < H)
    return idx, fu, fv, pu, pv, inside


def bilinear_splat(u, v, mass, H, W):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    mass = np.asarray(mass, dtype=np.float64)
    idx, fu, fv, pu, pv, inside = _splat_corners(u, v, H, W)
    w = np.stack(_corner_weights(fu, fv), axis=1)
    contrib = mass[idx][:, None] * w
    # row-major ravel keeps the point-major, corner-minor accumulation order
    flat = (pv * W + pu)[inside]
    raster = np.bincount(flat, weights=contrib[inside], minlength=H * W)
    return raster.reshape(H, W)


def bilinear_splat_adjoint(u, v, mass, grad, nthreads=1):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    mass = np.asarray(mass, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    H, W = grad.shape
    N = u.shape[0]
    dm, du, dv = np.zeros(N), np.zeros(N), np.zeros(N)
    idx, fu, fv, pu, pv, inside = _splat_corners(u, v, H, W)
    g = np.where(inside, grad[np.clip(pv, 0, H - 1), np.clip(pu, 0, W - 1)], 0.0)
    w = _corner_weights(fu, fv)
    wu = (-(1.0 - fv), 1.0 - fv, -fv, fv)
    wv = (-(1.0 - fu), -fu, 1.0 - fu, fu)
    sm = np.zeros(idx.size)
    su = np.zeros(idx.size)
    sv = np.zeros(idx.size)
    for k in range(4):
        sm = sm + w[k] * g[:, k]
        su = su + wu[k] * g[:, k]
        sv = sv + wv[k] * g[:, k]
    dm[idx] = sm
    du[idx] = mass[idx] * su
    dv[idx] = mass[idx] * sv
    return dm, du, dv
