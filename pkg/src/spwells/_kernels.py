"""Stencil and summation kernels with a numba path and a pure-numpy path.

Fields are C-ordered ``(n, n, n)`` arrays indexed ``[z, y, x]``. Points
outside the box act as zero-valued ghosts (homogeneous Dirichlet).

The numba path is used unless ``SPWELLS_PURE_NUMPY`` is set to a truthy
value before import. Both implementations stay importable as
``numpy_impl`` and ``numba_impl`` so they can be compared directly.
"""
from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

PURE_NUMPY = os.environ.get("SPWELLS_PURE_NUMPY", "").lower() in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _np_laplacian(u, h):
    out = -6.0 * u
    out[1:, :, :] += u[:-1, :, :]
    out[:-1, :, :] += u[1:, :, :]
    out[:, 1:, :] += u[:, :-1, :]
    out[:, :-1, :] += u[:, 1:, :]
    out[:, :, 1:] += u[:, :, :-1]
    out[:, :, :-1] += u[:, :, 1:]
    return out / (h * h)


def _np_neumann_laplacian(u, mask, h):
    um = np.where(mask, u, 0.0)
    m = mask.astype(np.float64)
    nbr_sum = np.zeros_like(um)
    nbr_cnt = np.zeros_like(um)
    for ax in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        nbr_sum[lo] += um[hi]
        nbr_cnt[lo] += m[hi]
        nbr_sum[hi] += um[lo]
        nbr_cnt[hi] += m[lo]
    out = (nbr_sum - nbr_cnt * um) / (h * h)
    return np.where(mask, out, 0.0)


def _np_grad_density(u, h):
    # interior edges are split half/half between endpoints, ghost edges
    # belong wholly to the inside endpoint, so the density sums to the
    # full edge energy.
    out = np.zeros_like(u)
    for ax in range(3):
        d = np.diff(u, axis=ax)
        half = 0.5 * d * d
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        out[tuple(lo)] += half
        out[tuple(hi)] += half
        first = [slice(None)] * 3
        last = [slice(None)] * 3
        first[ax] = 0
        last[ax] = -1
        out[tuple(first)] += u[tuple(first)] ** 2
        out[tuple(last)] += u[tuple(last)] ** 2
    return out / (h * h)


def _np_neumann_grad_density(u, mask, h):
    out = np.zeros_like(u)
    for ax in range(3):
        d = np.diff(u, axis=ax)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        both = mask[lo] & mask[hi]
        half = np.where(both, 0.5 * d * d, 0.0)
        out[lo] += half
        out[hi] += half
    return np.where(mask, out, 0.0) / (h * h)


def _np_direct_convolve(rho, table):
    n0, n1, n2 = rho.shape
    iz, iy, ix = np.indices(rho.shape)
    src = np.nonzero(rho)
    vals = rho[src]
    out = np.zeros(rho.shape)
    if vals.size == 0:
        return out
    for k in range(n0):
        for j in range(n1):
            for i in range(n2):
                w = table[np.abs(src[0] - k), np.abs(src[1] - j), np.abs(src[2] - i)]
                out[k, j, i] = np.dot(w, vals)
    return out


numpy_impl = SimpleNamespace(
    laplacian=_np_laplacian,
    neumann_laplacian=_np_neumann_laplacian,
    grad_density=_np_grad_density,
    neumann_grad_density=_np_neumann_grad_density,
    direct_convolve=_np_direct_convolve,
)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _nb_laplacian(u, h):
    n0, n1, n2 = u.shape
    out = np.empty_like(u)
    inv = 1.0 / (h * h)
    for k in range(n0):
        for j in range(n1):
            for i in range(n2):
                s = -6.0 * u[k, j, i]
                if k > 0:
                    s += u[k - 1, j, i]
                if k < n0 - 1:
                    s += u[k + 1, j, i]
                if j > 0:
                    s += u[k, j - 1, i]
                if j < n1 - 1:
                    s += u[k, j + 1, i]
                if i > 0:
                    s += u[k, j, i - 1]
                if i < n2 - 1:
                    s += u[k, j, i + 1]
                out[k, j, i] = s * inv
    return out


def _nb_neumann_laplacian(u, mask, h):
    n0, n1, n2 = u.shape
    out = np.zeros_like(u)
    inv = 1.0 / (h * h)
    for k in range(n0):
        for j in range(n1):
            for i in range(n2):
                if not mask[k, j, i]:
                    continue
                c = u[k, j, i]
                s = 0.0
                if k > 0 and mask[k - 1, j, i]:
                    s += u[k - 1, j, i] - c
                if k < n0 - 1 and mask[k + 1, j, i]:
                    s += u[k + 1, j, i] - c
                if j > 0 and mask[k, j - 1, i]:
                    s += u[k, j - 1, i] - c
                if j < n1 - 1 and mask[k, j + 1, i]:
                    s += u[k, j + 1, i] - c
                if i > 0 and mask[k, j, i - 1]:
                    s += u[k, j, i - 1] - c
                if i < n2 - 1 and mask[k, j, i + 1]:
                    s += u[k, j, i + 1] - c
                out[k, j, i] = s * inv
    return out


def _nb_grad_density(u, h):
    n0, n1, n2 = u.shape
    out = np.empty_like(u)
    inv = 1.0 / (h * h)
    for k in range(n0):
        for j in range(n1):
            for i in range(n2):
                c = u[k, j, i]
                s = 0.0
                if k > 0:
                    d = u[k - 1, j, i] - c
                    s += 0.5 * d * d
                else:
                    s += c * c
                if k < n0 - 1:
                    d = u[k + 1, j, i] - c
                    s += 0.5 * d * d
                else:
                    s += c * c
                if j > 0:
                    d = u[k, j - 1, i] - c
                    s += 0.5 * d * d
                else:
                    s += c * c
                if j < n1 - 1:
                    d = u[k, j + 1, i] - c
                    s += 0.5 * d * d
                else:
                    s += c * c
                if i > 0:
                    d = u[k, j, i - 1] - c
                    s += 0.5 * d * d
                else:
                    s += c * c
                if i < n2 - 1:
                    d = u[k, j, i + 1] - c
                    s += 0.5 * d * d
                else:
                    s += c * c
                out[k, j, i] = s * inv
    return out


def _nb_neumann_grad_density(u, mask, h):
    n0, n1, n2 = u.shape
    out = np.zeros_like(u)
    inv = 1.0 / (h * h)
    for k in range(n0):
        for j in range(n1):
            for i in range(n2):
                if not mask[k, j, i]:
                    continue
                c = u[k, j, i]
                s = 0.0
                if k > 0 and mask[k - 1, j, i]:
                    d = u[k - 1, j, i] - c
                    s += 0.5 * d * d
                if k < n0 - 1 and mask[k + 1, j, i]:
                    d = u[k + 1, j, i] - c
                    s += 0.5 * d * d
                if j > 0 and mask[k, j - 1, i]:
                    d = u[k, j - 1, i] - c
                    s += 0.5 * d * d
                if j < n1 - 1 and mask[k, j + 1, i]:
                    d = u[k, j + 1, i] - c
                    s += 0.5 * d * d
                if i > 0 and mask[k, j, i - 1]:
                    d = u[k, j, i - 1] - c
                    s += 0.5 * d * d
                if i < n2 - 1 and mask[k, j, i + 1]:
                    d = u[k, j, i + 1] - c
                    s += 0.5 * d * d
                out[k, j, i] = s * inv
    return out


def _nb_direct_convolve(rho, table):
    n0, n1, n2 = rho.shape
    out = np.zeros_like(rho)
    for k in range(n0):
        for j in range(n1):
            for i in range(n2):
                acc = 0.0
                for kk in range(n0):
                    dk = abs(kk - k)
                    for jj in range(n1):
                        dj = abs(jj - j)
                        for ii in range(n2):
                            r = rho[kk, jj, ii]
                            if r != 0.0:
                                acc += table[dk, dj, abs(ii - i)] * r
                out[k, j, i] = acc
    return out


if numba is not None:
    _jit = numba.njit(cache=True)
    numba_impl = SimpleNamespace(
        laplacian=_jit(_nb_laplacian),
        neumann_laplacian=_jit(_nb_neumann_laplacian),
        grad_density=_jit(_nb_grad_density),
        neumann_grad_density=_jit(_nb_neumann_grad_density),
        direct_convolve=_jit(_nb_direct_convolve),
    )
else:  # pragma: no cover
    numba_impl = None

active = numpy_impl if (PURE_NUMPY or numba_impl is None) else numba_impl
BACKEND = "numpy" if active is numpy_impl else "numba"


def laplacian(u, h):
    return active.laplacian(np.ascontiguousarray(u, dtype=np.float64), float(h))


def neumann_laplacian(u, mask, h):
    return active.neumann_laplacian(
        np.ascontiguousarray(u, dtype=np.float64), np.ascontiguousarray(mask, dtype=np.bool_), float(h)
    )


def grad_density(u, h):
    return active.grad_density(np.ascontiguousarray(u, dtype=np.float64), float(h))


def neumann_grad_density(u, mask, h):
    return active.neumann_grad_density(
        np.ascontiguousarray(u, dtype=np.float64), np.ascontiguousarray(mask, dtype=np.bool_), float(h)
    )


def direct_convolve(rho, table):
    return active.direct_convolve(
        np.ascontiguousarray(rho, dtype=np.float64), np.ascontiguousarray(table, dtype=np.float64)
    )
