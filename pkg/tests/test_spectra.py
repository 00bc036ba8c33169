"""Circle minimization: closed-form limits, cross-optimizer oracle, sweep band.

Expected values established up front:

* The segregated half-wave bump cos(k(t-pi)/2) on |t-pi| <= pi/k has zero
  coupling (supports of the shifted tuple are disjoint) and Rayleigh
  quotient exactly (k/2)^2, so every minimum lies at or below (k/2)^2 up to
  quadrature error.
* lvalue(2, 1e6) must land within 5e-2 of 1.0: the large-coupling deficit
  scales like lam^{-1/4}.
* A constant generator has coupling energy lam*(k-1)/(4*pi*k), linear in
  lam, so it cannot stay competitive.
* Independent check: an SLSQP minimization over the even half-vector with an
  explicit norm constraint must agree with the projected-descent value.
"""

import math

import numpy as np
import pytest

from segflow.grid import CylinderGrid
from segflow.models import gamma, sample_split
from segflow.almgren import compute_series, unb_variant
from segflow.spectra import (
    CircleProblem,
    DescentDivergenceError,
    LValueCache,
    audit_column_inequality,
    bump_generator,
    discrete_energy,
    lambda_sweep,
    minimize_l,
    write_lmin_csv,
)

PI = math.pi


def lam_values():
    return [10.0, 100.0, 1000.0, 10000.0]


# ---------------------------------------------------------------------------
# minimize_l
# ---------------------------------------------------------------------------


def test_value_below_half_k_squared():
    for k in (2, 3, 4):
        res = minimize_l(CircleProblem(k=k, lam=100.0, m=480))
        assert res.value <= (k / 2.0) ** 2 + 2e-3
        assert res.converged


def test_generator_is_normalized_symmetric_nonnegative():
    res = minimize_l(CircleProblem(k=3, lam=50.0, m=480))
    f = res.generator
    m = f.size
    h = 2.0 * PI / m
    assert abs(3.0 * h * float(f @ f) - 1.0) <= 1e-12
    refl = f[(m - np.arange(m)) % m]
    np.testing.assert_array_equal(f, refl)
    assert float(np.min(f)) >= 0.0


def test_value_recomputes_from_generator():
    prob = CircleProblem(k=2, lam=30.0, m=240)
    res = minimize_l(prob)
    assert discrete_energy(prob, res.generator) == pytest.approx(
        res.value, rel=1e-13
    )


def test_large_lambda_approaches_one():
    res = minimize_l(CircleProblem(k=2, lam=1e6, m=1024))
    assert abs(res.value - 1.0) <= 5e-2
    assert res.value <= 1.0 + 2e-3


def test_monotone_in_lambda():
    v10 = minimize_l(CircleProblem(k=2, lam=10.0, m=480)).value
    v100 = minimize_l(CircleProblem(k=2, lam=100.0, m=480)).value
    assert v10 <= v100 + 1e-9


def test_bump_energy_is_half_k_squared_at_zero_coupling():
    # with the coupling switched off entirely the bump is already the
    # normalized test profile with Rayleigh quotient (k/2)^2
    for k in (2, 4):
        prob = CircleProblem(k=k, lam=2.0, m=480)
        f = bump_generator(prob)
        d = np.roll(f, -1) - f
        h = 2.0 * PI / prob.m
        edir = k * float(d @ d) / h
        assert edir <= (k / 2.0) ** 2 + 2e-3
        assert edir >= (k / 2.0) ** 2 * (1.0 - 2e-3)


def test_constant_generator_coupling_grows_linearly():
    for k, lam in ((2, 100.0), (3, 1000.0)):
        prob = CircleProblem(k=k, lam=lam, m=480)
        m = prob.m
        h = 2.0 * PI / m
        c = np.full(m, 1.0 / math.sqrt(k * h * m))
        e = discrete_energy(prob, c)
        assert e == pytest.approx(lam * (k - 1) / (4.0 * PI * k), rel=1e-12)
        assert e > minimize_l(prob).value


def test_refinement_stability():
    coarse = minimize_l(CircleProblem(k=2, lam=100.0, m=240)).value
    fine = minimize_l(CircleProblem(k=2, lam=100.0, m=480)).value
    h = 2.0 * PI / 240
    assert abs(coarse - fine) <= 2.0 * h * h


def test_slsqp_cross_check():
    # independent optimizer and parametrization: even half-vector with an
    # explicit equality constraint
    from scipy.optimize import minimize as scipy_minimize

    k, lam, m = 2, 25.0, 48
    h = 2.0 * PI / m
    prob = CircleProblem(k=k, lam=lam, m=m)

    def unfold(half):
        return np.concatenate([half, half[m // 2 - 1:0:-1]])

    def obj(half):
        return discrete_energy(prob, unfold(half))

    def norm_c(half):
        f = unfold(half)
        return k * h * float(f @ f) - 1.0

    half0 = unfold(bump_generator(prob))[: m // 2 + 1]
    best = math.inf
    for shrink in (1.0, 0.8):
        res = scipy_minimize(
            obj,
            half0 * shrink + 1e-3,
            method="SLSQP",
            constraints=[{"type": "eq", "fun": norm_c}],
            options={"maxiter": 800, "ftol": 1e-14},
        )
        if res.fun < best:
            best = float(res.fun)
    mine = minimize_l(prob).value
    assert mine == pytest.approx(best, rel=1e-5, abs=1e-7)


def test_nonconvergence_reported():
    # unreachable tolerance: the step cap trips and the result says so
    prob = CircleProblem(k=2, lam=10.0, m=48, tol=0.0, max_steps=5)
    res = minimize_l(prob, restarts=1)
    assert not res.converged


def test_divergence_error_type():
    assert issubclass(DescentDivergenceError, RuntimeError)


def test_rejects_bad_problem():
    with pytest.raises(ValueError):
        CircleProblem(k=1, lam=10.0, m=480)
    with pytest.raises(ValueError):
        CircleProblem(k=2, lam=0.5, m=480)
    with pytest.raises(ValueError):
        CircleProblem(k=3, lam=10.0, m=512)  # 512 not divisible by 2k


# ---------------------------------------------------------------------------
# lambda_sweep
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def sweep_k2():
    return lambda_sweep(2, lam_values(), m=480)


def test_sweep_gaps_nonnegative_nonincreasing(sweep_k2):
    gaps = [row.gap for row in sweep_k2.rows]
    assert all(g >= -2e-3 for g in gaps)
    for lo, hi in zip(gaps[1:], gaps[:-1]):
        assert lo <= hi + 2e-3


def test_sweep_band_within_3x(sweep_k2):
    scaled = [row.gap_lambda_quarter for row in sweep_k2.rows]
    assert min(scaled) > 0.0
    assert max(scaled) / min(scaled) <= 3.0


def test_sweep_reports_empirical_constant(sweep_k2):
    assert sweep_k2.empirical_c == pytest.approx(
        max(r.gap_lambda_quarter for r in sweep_k2.rows)
    )
    assert not sweep_k2.flagged


def test_sweep_k3_below_upper_bound():
    sweep = lambda_sweep(3, [10.0, 1000.0], m=480)
    assert all(row.value <= 2.25 + 2e-3 for row in sweep.rows)


def test_sweep_requires_increasing_lambdas():
    with pytest.raises(ValueError):
        lambda_sweep(2, [100.0, 10.0], m=480)
    with pytest.raises(ValueError):
        lambda_sweep(2, [0.5, 10.0], m=480)


def test_lmin_csv_layout(tmp_path, sweep_k2):
    path = tmp_path / "lmin.csv"
    write_lmin_csv(path, sweep_k2.rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,lambda,value,gap,gapLambdaQuarter,restarts"
    assert len(lines) == 1 + len(sweep_k2.rows)
    first = lines[1].split(",")
    assert int(first[0]) == 2
    assert float(first[1]) == 10.0
    assert int(first[5]) == 5


# ---------------------------------------------------------------------------
# cached values and the per-column inequality
# ---------------------------------------------------------------------------


def test_cache_interpolates_between_grid_points():
    cache = LValueCache(k=2, m=240)
    direct = minimize_l(CircleProblem(k=2, lam=70.0, m=240)).value
    assert cache.value(70.0) == pytest.approx(direct, abs=2e-4)
    # second query hits the cache, no drift
    assert cache.value(70.0) == cache.value(70.0)


def test_cache_rejects_small_lambda():
    cache = LValueCache(k=2, m=240)
    with pytest.raises(ValueError):
        cache.value(0.9)


def test_column_inequality_on_gamma():
    g = CylinderGrid(-7.0, 3.0, 2, 500, 128)
    state = sample_split(gamma(), g)
    series = compute_series(state, unb_variant(-7.0), beta=1.0)
    cache = LValueCache(k=2, m=240)
    report = audit_column_inequality(series, 2, cache)
    assert report.passed
    assert report.checked > 0
    assert report.skipped > 0  # left columns have k*H <= 1
    assert report.worst_margin >= -1e-3


def test_column_inequality_detects_deficit():
    import dataclasses

    g = CylinderGrid(-7.0, 3.0, 2, 500, 128)
    state = sample_split(gamma(), g)
    series = compute_series(state, unb_variant(-7.0), beta=1.0)
    starved = dataclasses.replace(series, py=0.5 * series.py)
    cache = LValueCache(k=2, m=240)
    report = audit_column_inequality(starved, 2, cache)
    assert not report.passed
    assert report.worst_margin < -1e-3
