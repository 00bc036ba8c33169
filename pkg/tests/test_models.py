"""Model catalogue: grammar, sampling, and closed-form diagnostics."""

import math

import numpy as np
import pytest

from segflow.grid import CylinderGrid
from segflow.models import (
    HarmonicModel,
    analytic_diagnostics,
    format_model,
    gamma,
    natural_grid,
    parse_model,
    peak_value,
    phi,
    phi_r,
    pohozaev_oracle,
    psi,
    sample,
    sample_split,
    sample_split_k,
    scaled,
)

PI = math.pi


def test_grammar_round_trip():
    specs = [
        "phi",
        "gamma",
        "phiR:R=4",
        "psi:d=2,c1=0.6,c2=-0.8",
        "scaled:phi,lambda=2",
        "scaled:psi:d=3,c1=0,c2=1,lambda=0.5",
        "scaled:scaled:gamma,lambda=2,lambda=3",
    ]
    for s in specs:
        m = parse_model(s)
        assert format_model(m) == s
        assert parse_model(format_model(m)) == m


def test_grammar_rejections():
    for bad in ("phj", "phiR", "phiR:R=-1", "psi:d=0,c1=1,c2=0",
                "psi:d=1,c1=0,c2=0", "scaled:phi", "scaled:phi,lambda=0"):
        with pytest.raises(ValueError):
            parse_model(bad)


def test_pointwise_values():
    assert phi().evaluate(0.7, PI / 2) == pytest.approx(math.cosh(0.7))
    assert gamma().evaluate(-1.0, PI / 2) == pytest.approx(math.exp(-1.0))
    assert phi_r(3.0).evaluate(-3.0, PI / 2) == pytest.approx(2.0 * math.exp(-3.0))
    assert psi(2, 1.0, 0.0).evaluate(0.0, 0.0) == pytest.approx(1.0)
    # scaled: lam * base(lam x, lam y)
    m = scaled(phi(), 2.0)
    assert m.evaluate(0.3, PI / 4) == pytest.approx(2.0 * math.cosh(0.6) * math.sin(PI / 2))


def test_phir_matches_its_own_limit_shape():
    # 2 e^{-R} cosh(x+R) -> e^x as R grows, at fixed x
    x = np.linspace(-1.0, 1.0, 5)
    big = phi_r(20.0).evaluate(x, PI / 2)
    np.testing.assert_allclose(big, np.exp(x), rtol=1e-15)


def test_natural_grid_plain_and_scaled():
    g = natural_grid(phi(), 0.0, 3.0, 2, 64, 32)
    assert (g.a, g.b, g.period_scale) == (0.0, 3.0, 1.0)
    gs = natural_grid(scaled(phi(), 2.0), 0.0, 3.0, 2, 64, 32)
    assert (gs.a, gs.b) == (0.0, 1.5)
    assert gs.period_scale == 2.0
    assert gs.period == pytest.approx(PI)


def test_sample_split_partitions_sign():
    g = CylinderGrid(-1.0, 1.0, 2, 8, 32)
    s = sample_split(phi(), g)
    u, v = s.value_arrays()
    assert float(np.max(u * v)) == 0.0  # disjoint supports
    full = sample(phi(), g).values
    np.testing.assert_array_equal(u - v, full)
    assert float(np.min(u)) >= 0.0 and float(np.min(v)) >= 0.0


def test_sample_split_k_shift_structure():
    g = CylinderGrid(-1.0, 1.0, 3, 8, 48)
    s = sample_split_k(gamma(), g)
    assert s.k == 3
    u0, u1, u2 = s.value_arrays()
    sn = g.shift_nodes
    np.testing.assert_allclose(u1, np.roll(u0, sn, axis=1), atol=1e-14)
    np.testing.assert_allclose(u2, np.roll(u0, 2 * sn, axis=1), atol=1e-14)
    # cells tile the circle: total mass equals the unsplit |model| mass
    total = sum(np.sum(c) for c in s.value_arrays())
    assert total == pytest.approx(float(np.sum(np.abs(sample(gamma(), g).values))), rel=1e-12)


def test_analytic_diagnostics_closed_forms():
    r = np.array([0.5, 1.0, 2.0])
    d = analytic_diagnostics(phi(), "sym", r)
    np.testing.assert_allclose(d["H"], PI * np.cosh(r) ** 2, rtol=1e-15)
    np.testing.assert_allclose(d["N"], np.tanh(r), rtol=1e-15)
    d = analytic_diagnostics(gamma(), "unb", r)
    np.testing.assert_allclose(d["E"], PI * np.exp(2 * r), rtol=1e-15)
    np.testing.assert_allclose(d["N"], 1.0)
    d = analytic_diagnostics(phi_r(2.0), "unb", r)
    np.testing.assert_allclose(d["N"], np.tanh(r + 2.0), rtol=1e-15)
    d = analytic_diagnostics(psi(3, 0.6, 0.8), "unb", r)
    np.testing.assert_allclose(d["H"], PI * np.exp(6 * r), rtol=1e-14)
    np.testing.assert_allclose(d["N"], 3.0)


def test_analytic_diagnostics_scaled_reduction():
    r = np.array([0.25, 0.75])
    lam = 2.0
    got = analytic_diagnostics(scaled(phi(), lam), "sym", r)
    base = analytic_diagnostics(phi(), "sym", lam * r)
    np.testing.assert_allclose(got["H"], lam * base["H"], rtol=1e-15)
    np.testing.assert_allclose(got["E"], lam**2 * base["E"], rtol=1e-15)
    np.testing.assert_allclose(got["N"], lam * base["N"], rtol=1e-15)


def test_variant_mismatch_rejected():
    with pytest.raises(ValueError):
        analytic_diagnostics(phi(), "unb", 1.0)
    with pytest.raises(ValueError):
        analytic_diagnostics(gamma(), "sym", 1.0)


def test_pohozaev_oracle_values():
    assert pohozaev_oracle(phi()) == PI
    assert pohozaev_oracle(gamma()) == 0.0
    assert pohozaev_oracle(psi(2, 0.6, -0.8)) == 0.0
    assert pohozaev_oracle(phi_r(3.0)) == pytest.approx(4.0 * PI * math.exp(-6.0))
    assert pohozaev_oracle(scaled(phi(), 2.0)) == pytest.approx(8.0 * PI)


def test_peak_values():
    assert peak_value(phi()) == 1.0
    assert peak_value(scaled(phi(), 3.0)) == pytest.approx(3.0)


def test_model_validation():
    with pytest.raises(ValueError):
        HarmonicModel("nope")
    with pytest.raises(ValueError):
        psi(0, 1.0, 0.0)
    with pytest.raises(ValueError):
        phi_r(0.0)
    with pytest.raises(ValueError):
        scaled(phi(), -1.0)
