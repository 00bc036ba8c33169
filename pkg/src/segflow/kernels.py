"""Low-level numeric kernels: numba fast path with a pure-numpy fallback.

The hot loops of the solver (5-point stencil application, batched tridiagonal
sweeps, staggered-difference reductions) live here in two interchangeable
implementations.  The numba path is used when numba imports cleanly and the
environment variable SEGFLOW_DISABLE_NUMBA is unset (or not "1"); otherwise the
vectorized numpy versions are bound to the same public names.

Both paths use identical summation orders so results are bit-for-bit
reproducible for a given build, which the run manifests rely on.
"""

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("SEGFLOW_DISABLE_NUMBA", "0") != "1"


def using_numba() -> bool:
    """True when the njit kernel set is active."""
    return USE_NUMBA


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------
# Field layout: values[j, m] with j = 0..nx the x-column index and m = 0..ny-1
# the periodic y index.  Kernels touch rows j_lo..j_hi inclusive; rows outside
# are zeroed in the output.  mirror_left=True imposes the even (Neumann) ghost
# u[-1] = u[1] at j = 0.


def _lap5_np(p, hx2i, hy2i, j_lo, j_hi, mirror_left, out):
    out[:j_lo] = 0.0
    out[j_hi + 1 :] = 0.0
    q = p[j_lo : j_hi + 1]
    lap = (np.roll(q, 1, axis=1) - 2.0 * q + np.roll(q, -1, axis=1)) * hy2i
    up = p[j_lo + 1 : j_hi + 2]
    if j_lo == 0:
        down = np.empty_like(q)
        down[1:] = p[0:j_hi]
        down[0] = p[1] if mirror_left else 0.0
    else:
        down = p[j_lo - 1 : j_hi]
    lap += (up - 2.0 * q + down) * hx2i
    out[j_lo : j_hi + 1] = lap
    return out


def _apply_helmholtz_np(p, c, dt, hx2i, hy2i, j_lo, j_hi, mirror_left, out):
    _lap5_np(p, hx2i, hy2i, j_lo, j_hi, mirror_left, out)
    q = p[j_lo : j_hi + 1]
    out[j_lo : j_hi + 1] = q - dt * out[j_lo : j_hi + 1] + dt * c[j_lo : j_hi + 1] * q
    return out


def _thomas_solve_np(cp, pv, e, rhs, out):
    n = rhs.shape[1]
    out[:, 0] = rhs[:, 0] * pv[:, 0]
    for j in range(1, n):
        out[:, j] = (rhs[:, j] - e * out[:, j - 1]) * pv[:, j]
    for j in range(n - 2, -1, -1):
        out[:, j] -= cp[:, j] * out[:, j + 1]
    return out


def _grad_y_sq_cols_np(v, hy, stride):
    # per-column staggered y-derivative energy, averaged over the `stride`
    # interleaved coarse lattices: sum_m (v[j,m+s]-v[j,m])^2 / (s^2 * hy)
    rolled = np.roll(v, -stride, axis=1)
    d = rolled - v
    return np.sum(d * d, axis=1) / (stride * stride * hy)


def _grad_x_sq_cells_np(v, hx, hy):
    # per-x-cell gradient energy: hy * sum_m ((v[j+1,m]-v[j,m])/hx)^2
    d = v[1:] - v[:-1]
    return np.sum(d * d, axis=1) * (hy / (hx * hx))


def _weighted_dot_np(a, b, w):
    # w: per-row weights (nx+1,)
    return float(np.dot(w, np.sum(a * b, axis=1)))


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if USE_NUMBA:

    @njit(cache=True)
    def _lap5_nb(p, hx2i, hy2i, j_lo, j_hi, mirror_left, out):
        nrows, ny = p.shape
        for j in range(j_lo):
            for m in range(ny):
                out[j, m] = 0.0
        for j in range(j_hi + 1, nrows):
            for m in range(ny):
                out[j, m] = 0.0
        for j in range(j_lo, j_hi + 1):
            for m in range(ny):
                mm = m - 1 if m > 0 else ny - 1
                mp = m + 1 if m < ny - 1 else 0
                lap = (p[j, mm] - 2.0 * p[j, m] + p[j, mp]) * hy2i
                if j > 0:
                    down = p[j - 1, m]
                elif mirror_left:
                    down = p[1, m]
                else:
                    down = 0.0
                lap += (down - 2.0 * p[j, m] + p[j + 1, m]) * hx2i
                out[j, m] = lap
        return out

    @njit(cache=True)
    def _apply_helmholtz_nb(p, c, dt, hx2i, hy2i, j_lo, j_hi, mirror_left, out):
        nrows, ny = p.shape
        for j in range(j_lo):
            for m in range(ny):
                out[j, m] = 0.0
        for j in range(j_hi + 1, nrows):
            for m in range(ny):
                out[j, m] = 0.0
        for j in range(j_lo, j_hi + 1):
            for m in range(ny):
                mm = m - 1 if m > 0 else ny - 1
                mp = m + 1 if m < ny - 1 else 0
                lap = (p[j, mm] - 2.0 * p[j, m] + p[j, mp]) * hy2i
                if j > 0:
                    down = p[j - 1, m]
                elif mirror_left:
                    down = p[1, m]
                else:
                    down = 0.0
                lap += (down - 2.0 * p[j, m] + p[j + 1, m]) * hx2i
                out[j, m] = p[j, m] - dt * lap + dt * c[j, m] * p[j, m]
        return out

    @njit(cache=True)
    def _thomas_factor_nb(diag, e, sup0, n):
        nm = diag.shape[0]
        cp = np.empty((nm, n))
        pv = np.empty((nm, n))
        for m in range(nm):
            pv[m, 0] = 1.0 / diag[m]
            cp[m, 0] = sup0[m] * pv[m, 0]
            for j in range(1, n):
                pv[m, j] = 1.0 / (diag[m] - e * cp[m, j - 1])
                cp[m, j] = e * pv[m, j]
        return cp, pv

    @njit(cache=True)
    def _thomas_factor_profile_nb(diag, prof, e, sup0):
        nm = diag.shape[0]
        n = prof.shape[0]
        cp = np.empty((nm, n))
        pv = np.empty((nm, n))
        for m in range(nm):
            pv[m, 0] = 1.0 / (diag[m] + prof[0])
            cp[m, 0] = sup0[m] * pv[m, 0]
            for j in range(1, n):
                pv[m, j] = 1.0 / (diag[m] + prof[j] - e * cp[m, j - 1])
                cp[m, j] = e * pv[m, j]
        return cp, pv

    @njit(cache=True)
    def _thomas_solve_nb(cp, pv, e, rhs, out):
        nm, n = rhs.shape
        for m in range(nm):
            out[m, 0] = rhs[m, 0] * pv[m, 0]
            for j in range(1, n):
                out[m, j] = (rhs[m, j] - e * out[m, j - 1]) * pv[m, j]
            for j in range(n - 2, -1, -1):
                out[m, j] = out[m, j] - cp[m, j] * out[m, j + 1]
        return out

    @njit(cache=True)
    def _grad_y_sq_cols_nb(v, hy, stride):
        nrows, ny = v.shape
        res = np.empty(nrows)
        inv = 1.0 / (stride * stride * hy)
        for j in range(nrows):
            acc = 0.0
            for m in range(ny):
                mp = m + stride
                if mp >= ny:
                    mp -= ny
                d = v[j, mp] - v[j, m]
                acc += d * d
            res[j] = acc * inv
        return res

    @njit(cache=True)
    def _grad_x_sq_cells_nb(v, hx, hy):
        nrows, ny = v.shape
        res = np.empty(nrows - 1)
        fac = hy / (hx * hx)
        for j in range(nrows - 1):
            acc = 0.0
            for m in range(ny):
                d = v[j + 1, m] - v[j, m]
                acc += d * d
            res[j] = acc * fac
        return res

    @njit(cache=True)
    def _weighted_dot_nb(a, b, w):
        nrows, ny = a.shape
        total = 0.0
        for j in range(nrows):
            acc = 0.0
            for m in range(ny):
                acc += a[j, m] * b[j, m]
            total += w[j] * acc
        return total

    lap5 = _lap5_nb
    apply_helmholtz = _apply_helmholtz_nb
    thomas_solve = _thomas_solve_nb
    _thomas_factor_profile_impl = _thomas_factor_profile_nb
    grad_y_sq_cols = _grad_y_sq_cols_nb
    grad_x_sq_cells = _grad_x_sq_cells_nb
    weighted_dot = _weighted_dot_nb
else:
    lap5 = _lap5_np
    apply_helmholtz = _apply_helmholtz_np
    thomas_solve = _thomas_solve_np
    _thomas_factor_profile_impl = None
    grad_y_sq_cols = _grad_y_sq_cols_np
    grad_x_sq_cells = _grad_x_sq_cells_np
    weighted_dot = _weighted_dot_np


def thomas_factor(diag, e, sup0, n):
    """Factor the batched constant-coefficient tridiagonal systems.

    Mode m solves the n-by-n system with constant diagonal diag[m], constant
    sub/super off-diagonal e, except the first-row super-diagonal sup0[m]
    (doubled under the Neumann mirror).  Returns (cp, pv) sweep coefficients.
    """
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    sup0 = np.ascontiguousarray(sup0, dtype=np.float64)
    if USE_NUMBA:
        return _thomas_factor_nb(diag, float(e), sup0, int(n))
    nm = diag.shape[0]
    cp = np.empty((nm, n))
    pv = np.empty((nm, n))
    pv[:, 0] = 1.0 / diag
    cp[:, 0] = sup0 * pv[:, 0]
    for j in range(1, n):
        pv[:, j] = 1.0 / (diag - e * cp[:, j - 1])
        cp[:, j] = e * pv[:, j]
    return cp, pv


def thomas_factor_profile(diag, prof, e, sup0):
    """Factor tridiagonal systems whose diagonal also carries an x profile.

    Mode m, row j has diagonal diag[m] + prof[j]; off-diagonals as in
    thomas_factor.  Used for the screened solve with a per-column reaction
    shift, refreshed whenever the profile changes.
    """
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    prof = np.ascontiguousarray(prof, dtype=np.float64)
    sup0 = np.ascontiguousarray(sup0, dtype=np.float64)
    if USE_NUMBA:
        return _thomas_factor_profile_impl(diag, prof, float(e), sup0)
    nm, n = diag.shape[0], prof.shape[0]
    cp = np.empty((nm, n))
    pv = np.empty((nm, n))
    pv[:, 0] = 1.0 / (diag + prof[0])
    cp[:, 0] = sup0 * pv[:, 0]
    for j in range(1, n):
        pv[:, j] = 1.0 / (diag + prof[j] - e * cp[:, j - 1])
        cp[:, j] = e * pv[:, j]
    return cp, pv
