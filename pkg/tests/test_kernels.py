"""Kernel twins: the jit implementations must match the numpy fallbacks
bitwise-or-close, and the stencils must reproduce closed forms."""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from segflow import kernels

PI = math.pi


def rand(shape, seed):
    return np.random.default_rng(seed).standard_normal(shape)


def test_lap5_matches_numpy_twin():
    p = rand((17, 12), 1)
    out_a = np.empty_like(p)
    out_b = np.empty_like(p)
    for mirror, j_lo in ((False, 1), (True, 0)):
        kernels.lap5(p, 3.7, 1.9, j_lo, 15, mirror, out_a)
        kernels._lap5_np(p, 3.7, 1.9, j_lo, 15, mirror, out_b)
        np.testing.assert_allclose(out_a, out_b, rtol=0, atol=1e-14)


def test_lap5_quadratic_is_exact():
    # v = x^2: three-point second difference is exactly 2, and the mirror
    # ghost at an even wall keeps it exact at j = 0
    nx, ny = 16, 8
    hx, hy = 0.25, 0.5
    x = hx * np.arange(nx + 1)
    p = np.repeat((x * x)[:, None], ny, axis=1)
    out = np.empty_like(p)
    kernels.lap5(p, 1.0 / hx**2, 1.0 / hy**2, 0, nx - 1, True, out)
    np.testing.assert_allclose(out[: nx - 1], 2.0, rtol=0, atol=1e-12)
    assert np.all(out[nx] == 0.0)


def test_apply_helmholtz_matches_numpy_twin():
    p = rand((11, 8), 2)
    c = np.abs(rand((11, 8), 3))
    out_a = np.empty_like(p)
    out_b = np.empty_like(p)
    kernels.apply_helmholtz(p, c, 0.01, 2.0, 3.0, 1, 9, False, out_a)
    kernels._apply_helmholtz_np(p, c, 0.01, 2.0, 3.0, 1, 9, False, out_b)
    np.testing.assert_allclose(out_a, out_b, rtol=0, atol=1e-14)


def test_thomas_solves_batched_tridiagonal():
    rng = np.random.default_rng(4)
    nm, n = 5, 12
    diag = 2.0 + np.abs(rng.standard_normal(nm))
    e = -0.3
    sup0 = np.full(nm, 2.0 * e)  # mirrored first row
    cp, pv = kernels.thomas_factor(diag, e, sup0, n)
    rhs = rng.standard_normal((nm, n))
    out = np.empty_like(rhs)
    kernels.thomas_solve(cp, pv, e, rhs, out)
    for m in range(nm):
        A = (
            np.diag(np.full(n, diag[m]))
            + np.diag(np.full(n - 1, e), -1)
            + np.diag(np.full(n - 1, e), 1)
        )
        A[0, 1] = sup0[m]
        np.testing.assert_allclose(A @ out[m], rhs[m], rtol=0, atol=1e-12)


def test_grad_y_sq_cols_closed_form():
    # unit sine on the circle: stride-s staggered energy is
    # pi * (sin(s h/2)/(s h/2))^2, which pins the 1/(s^2 h) normalization
    ny = 64
    hy = 2.0 * PI / ny
    v = np.sin(hy * np.arange(ny))[None, :].repeat(3, axis=0)
    for stride in (1, 2):
        got = kernels.grad_y_sq_cols(v, hy, stride)
        th = 0.5 * stride * hy
        expect = PI * (math.sin(th) / th) ** 2
        np.testing.assert_allclose(got, expect, rtol=1e-12)


def test_grad_y_sq_cols_matches_numpy_twin():
    v = rand((9, 16), 5)
    for stride in (1, 2, 4):
        np.testing.assert_allclose(
            kernels.grad_y_sq_cols(v, 0.37, stride),
            kernels._grad_y_sq_cols_np(v, 0.37, stride),
            rtol=1e-13,
        )


def test_grad_x_sq_cells_matches_manual():
    v = rand((7, 6), 6)
    hx, hy = 0.21, 0.34
    got = kernels.grad_x_sq_cells(v, hx, hy)
    manual = (hy / hx**2) * np.sum((v[1:] - v[:-1]) ** 2, axis=1)
    np.testing.assert_allclose(got, manual, rtol=1e-13)
    np.testing.assert_allclose(
        got, kernels._grad_x_sq_cells_np(v, hx, hy), rtol=1e-13
    )


def test_weighted_dot_matches_einsum():
    a = rand((8, 5), 7)
    b = rand((8, 5), 8)
    w = np.abs(rand(8, 9))
    got = kernels.weighted_dot(a, b, w)
    assert got == pytest.approx(float(np.einsum("jm,jm,j->", a, b, w)), rel=1e-13)
    assert got == pytest.approx(kernels._weighted_dot_np(a, b, w), rel=1e-13)


def test_disable_flag_selects_fallback():
    env = dict(os.environ, SEGFLOW_DISABLE_NUMBA="1")
    code = (
        "from segflow import kernels; "
        "assert not kernels.using_numba(); "
        "assert kernels.lap5 is kernels._lap5_np"
    )
    subprocess.run([sys.executable, "-c", code], check=True, env=env)
