"""Section-diagnostics tests against the closed forms of the harmonic models.

Every expected value below comes straight from the model formulas, never from
the code under test:

    phi = cosh x sin y:    H = pi cosh^2 r,  E = pi sinh r cosh r,  N = tanh r
    gamma = e^x sin y:     H = E = pi e^{2r},  N == 1,  P == 0
    phiR:  2e^{-R} cosh(x+R) sin y, amp = 4 pi e^{-2R}:
                           H = amp cosh^2(r+R),  N = tanh(r+R),  P = amp
    psi:   e^{dx}(c1 cos dy + c2 sin dy):  H = pi (c1^2+c2^2) e^{2dr},  N == d
    Pohozaev column for a split harmonic pair:  P = pi (phi), 0 (gamma/psi)
    phi-integral for gamma:  int_0^r (pi e^{2s})^{-1/4} ds
                           = (2/pi^{1/4}) (1 - e^{-r/2}),  limit 2/pi^{1/4}
"""

import math

import numpy as np
import pytest

from segflow.almgren import (
    SERIES_COLUMNS,
    AlmgrenVariant,
    VariantPreconditionError,
    audit_monotonicity,
    compute_series,
    coupling_accumulation,
    derivative_identity_residual,
    doubling_envelope,
    empirical_energy_constant,
    growth_fit,
    phi_bound_check,
    pohozaev_audit,
    read_series_csv,
    sym_variant,
    unb_variant,
    write_series_csv,
)
from segflow.grid import (
    CylinderGrid,
    Field,
    StateK,
    column_grad_y_rich,
    dirichlet_energy,
)
from segflow.models import (
    gamma,
    natural_grid,
    phi,
    phi_r,
    psi,
    sample_split,
    scaled,
)

PI = math.pi


@pytest.fixture(scope="module")
def phi_series():
    g = CylinderGrid(0.0, 3.0, 2, 512, 128)
    state = sample_split(phi(), g, bc_kind="neumann_left")
    return compute_series(state, sym_variant(0.0), beta=1.0)


@pytest.fixture(scope="module")
def gamma_series():
    # hx = 0.02 puts r = 0 exactly on a column, which the phi-integral
    # closed-form check relies on
    g = CylinderGrid(-7.0, 3.0, 2, 500, 128)
    state = sample_split(gamma(), g)
    return compute_series(state, unb_variant(-7.0), beta=1.0)


# ---------------------------------------------------------------------------
# computeSeries against the closed forms
# ---------------------------------------------------------------------------


def test_phi_frequency_matches_tanh(phi_series):
    s = phi_series
    sel = s.r >= 0.5
    err = np.abs(s.N[sel] - np.tanh(s.r[sel])) / np.tanh(s.r[sel])
    assert float(np.max(err)) <= 2e-3


def test_phi_mass_and_energy_closed_forms(phi_series):
    s = phi_series
    h_exact = PI * np.cosh(s.r) ** 2
    assert float(np.max(np.abs(s.H - h_exact) / h_exact)) <= 1e-3
    sel = s.r >= 0.5
    e_exact = PI * np.sinh(s.r[sel]) * np.cosh(s.r[sel])
    assert float(np.max(np.abs(s.E2[sel] - e_exact) / e_exact)) <= 2e-3


def test_phi_pohozaev_column_is_pi(phi_series):
    s = phi_series
    err = np.abs(s.pohozaev - PI) / PI
    assert float(np.max(err[s.audited])) <= 2e-3


def test_phi_coupling_free_energies_coincide(phi_series):
    # the split pair has disjoint supports: E1 and E2 differ only by the
    # coupling term, which vanishes identically
    np.testing.assert_array_equal(phi_series.E1, phi_series.E2)
    assert float(np.max(phi_series.coupling_boundary)) == 0.0


def test_gamma_frequency_is_one(gamma_series):
    s = gamma_series
    assert np.all(np.isfinite(s.N))
    assert float(np.max(np.abs(s.N - 1.0))) <= 2e-3


def test_gamma_mass_is_exact(gamma_series):
    # hy-rectangle quadrature of sin^2 over the full circle is exact, so H
    # carries only rounding error
    s = gamma_series
    h_exact = PI * np.exp(2.0 * s.r)
    assert float(np.max(np.abs(s.H - h_exact) / h_exact)) <= 1e-12


def test_gamma_pohozaev_vanishes(gamma_series):
    s = gamma_series
    audit = pohozaev_audit(s)
    assert audit.identity_residual <= 2e-3
    assert audit.constancy_deviation <= 2e-3 * audit.scale


def test_phi_pohozaev_identity_against_wall(phi_series):
    audit = pohozaev_audit(phi_series)
    # wall value pi recovered and constant along the cylinder
    assert abs(audit.mean - PI) / PI <= 2e-3
    assert audit.identity_residual <= 2e-3
    assert audit.constancy_deviation <= 2e-3 * audit.scale


def test_psi_frequency_and_pohozaev():
    # pure sin phase keeps the nodal set on grid rows, like the other models
    g = CylinderGrid(-6.0, 2.0, 2, 512, 128)
    state = sample_split(psi(2, 0.0, 1.0), g)
    s = compute_series(state, unb_variant(-6.0), beta=1.0)
    h_exact = PI * np.exp(4.0 * s.r)
    assert float(np.max(np.abs(s.H - h_exact) / h_exact)) <= 1e-12
    assert float(np.max(np.abs(s.N - 2.0))) <= 4e-3
    audit = pohozaev_audit(s)
    assert audit.identity_residual <= 2e-3


def test_psi_generic_phase_bias_is_first_order():
    # a generic rotation puts the kinks strictly between rows; sampled
    # quadrature then misses the fractional kink cells, an O(hy) bias that
    # no node-based rule can remove.  It must stay bounded and shrink with
    # refinement, not meet the aligned-case tolerance.
    errs = []
    for ny in (128, 256):
        g = CylinderGrid(-6.0, 2.0, 2, 512, ny)
        state = sample_split(psi(2, 0.6, -0.8), g)
        s = compute_series(state, unb_variant(-6.0), beta=1.0)
        h_exact = PI * (0.6**2 + 0.8**2) * np.exp(4.0 * s.r)
        assert float(np.max(np.abs(s.H - h_exact) / h_exact)) <= 1e-12
        errs.append(float(np.max(np.abs(s.N[s.audited] - 2.0))))
    assert errs[0] <= 5e-2
    assert errs[1] <= 0.75 * errs[0]


def test_scaled_phi_reduced_period_diagnostics():
    mdl = scaled(phi(), 2.0)
    g = natural_grid(mdl, 0.0, 3.0, 2, 512, 128)
    assert g.b == 1.5 and abs(g.period - PI) < 1e-15
    state = sample_split(mdl, g, bc_kind="neumann_left")
    s = compute_series(state, sym_variant(0.0), beta=1.0)
    sel = s.r >= 0.25
    n_exact = 2.0 * np.tanh(2.0 * s.r[sel])
    err = np.abs(s.N[sel] - n_exact) / n_exact
    assert float(np.max(err)) <= 2e-3
    h_exact = 2.0 * PI * np.cosh(2.0 * s.r) ** 2
    assert float(np.max(np.abs(s.H - h_exact) / h_exact)) <= 1e-3


def test_zero_coupling_weight_collapses_energies():
    # domain long enough that e^{2a}/e^{2b} clears the 1e-8 decay gate
    g = CylinderGrid(-8.0, 2.0, 2, 64, 32)
    X, Y = g.mesh()
    state = StateK(g, (Field(g, np.exp(X) * np.sin(Y)),))
    s = compute_series(state, unb_variant(-8.0), beta=0.0)
    np.testing.assert_array_equal(s.E2, s.E1)


def test_unb_requires_left_decay():
    # 1/cosh^2(2R) at R=2 is ~1.3e-3, far above the 1e-8 gate
    g = CylinderGrid(-2.0, 2.0, 2, 256, 64)
    state = sample_split(phi_r(2.0), g, bc_kind="neumann_left")
    with pytest.raises(VariantPreconditionError) as exc:
        compute_series(state, unb_variant(-2.0), beta=1.0)
    expected = 1.0 / math.cosh(4.0) ** 2
    assert exc.value.ratio == pytest.approx(expected, rel=1e-2)


def test_sym_requires_neumann_wall():
    g = CylinderGrid(-2.0, 2.0, 2, 64, 32)
    state = sample_split(phi(), g)  # dirichlet state
    with pytest.raises(VariantPreconditionError):
        compute_series(state, sym_variant(-2.0), beta=1.0)


def test_sym_anchor_must_sit_on_the_wall():
    g = CylinderGrid(0.0, 2.0, 2, 64, 32)
    state = sample_split(phi(), g, bc_kind="neumann_left")
    with pytest.raises(VariantPreconditionError):
        compute_series(state, sym_variant(0.5), beta=1.0)


def test_phir_sym_series_matches_shifted_closed_form():
    R = 2.0
    g = CylinderGrid(-R, R, 2, 512, 128)
    state = sample_split(phi_r(R), g, bc_kind="neumann_left")
    s = compute_series(state, sym_variant(-R), beta=1.0)
    amp = 4.0 * PI * math.exp(-2.0 * R)
    h_exact = amp * np.cosh(s.r + R) ** 2
    assert float(np.max(np.abs(s.H - h_exact) / h_exact)) <= 1e-3
    sel = s.r >= -R + 0.5
    n_exact = np.tanh(s.r[sel] + R)
    assert float(np.max(np.abs(s.N[sel] - n_exact) / n_exact)) <= 2e-3
    audit = pohozaev_audit(s)
    assert abs(audit.mean - amp) / amp <= 2e-3


# ---------------------------------------------------------------------------
# cumulative-energy consistency
# ---------------------------------------------------------------------------


def test_series_energy_is_additive_partial_sum(phi_series):
    g = CylinderGrid(0.0, 3.0, 2, 512, 128)
    state = sample_split(phi(), g, bc_kind="neumann_left")
    for j in (0, 1, 17, 256, 512):
        direct = dirichlet_energy(state, j, coupling_weight=2.0)
        assert phi_series.E2[j] == pytest.approx(direct, rel=1e-12, abs=1e-13)


def test_richardson_column_grad_y_accuracy():
    # sin y at ny=64: stride pair cancels the h^2 term, leaving ~h^4/90
    g = CylinderGrid(0.0, 1.0, 2, 4, 64)
    X, Y = g.mesh()
    state = StateK(g, (Field(g, np.sin(Y) * np.ones_like(X)),))
    rich = column_grad_y_rich(state)
    assert float(np.max(np.abs(rich - PI) / PI)) <= 2e-6


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------


def test_monotonicity_clean_on_models(phi_series, gamma_series):
    for s in (phi_series, gamma_series):
        audit = audit_monotonicity(s)
        assert audit.violations["N"] == []
        assert audit.violations["frakN"] == []
        assert audit.violations["H"] == []
        assert audit.violations["E2"] == []


def test_monotonicity_detects_injected_dip(gamma_series):
    s = gamma_series
    slack = 1e-6
    bent = np.array(s.N)
    j = int(np.nonzero(s.audited)[0][len(s.r) // 2])
    bent[j + 1] = bent[j] - 10.0 * slack
    import dataclasses

    dipped = dataclasses.replace(s, N=bent)
    audit = audit_monotonicity(dipped, slack=slack)
    assert audit.violations["N"] == [j]
    # the next pair recovers upward, so exactly one index is reported
    assert len(audit.violations["N"]) == 1


def test_derivative_identity_on_models(phi_series, gamma_series):
    assert derivative_identity_residual(gamma_series) <= 1e-3
    assert derivative_identity_residual(phi_series) <= 1e-3


def test_derivative_identity_constant_state():
    g = CylinderGrid(0.0, 1.0, 2, 16, 16)
    state = StateK(g, (Field(g, np.full((17, 16), 0.7), "neumann_left"),))
    s = compute_series(state, sym_variant(0.0), beta=0.0)
    assert derivative_identity_residual(s) <= 1e-13


def test_doubling_envelope_gamma_flat(gamma_series):
    res = doubling_envelope(gamma_series, 1.0, 1.0, (-2.0, 2.0))
    assert res.precondition_ok
    assert res.low_ok and res.high_ok
    assert res.passed()


def test_doubling_envelope_psi_flat():
    g = CylinderGrid(-6.0, 2.0, 2, 512, 128)
    state = sample_split(psi(2, 0.0, 1.0), g)
    s = compute_series(state, unb_variant(-6.0), beta=1.0)
    res = doubling_envelope(s, 2.0, 2.0, (-2.0, 1.0))
    assert res.precondition_ok
    assert res.passed()


def test_doubling_envelope_separates_precondition_from_envelope():
    # generic-phase psi: H is still exactly pi e^{4r} (a  flat envelope) but
    # the measured N carries the sampling bias, so only the precondition may
    # fail
    g = CylinderGrid(-6.0, 2.0, 2, 512, 128)
    state = sample_split(psi(2, 0.6, -0.8), g)
    s = compute_series(state, unb_variant(-6.0), beta=1.0)
    res = doubling_envelope(s, 2.0, 2.0, (-2.0, 1.0))
    assert not res.precondition_ok
    assert res.low_ok and res.high_ok
    assert not res.passed()


def test_doubling_envelope_reports_bad_precondition(phi_series):
    # N = tanh r < 0.9 on [0.5, 1]; demanding N >= 1.5 must flag the
    # precondition, not an envelope failure
    res = doubling_envelope(phi_series, 1.5, 2.0, (0.5, 1.0))
    assert not res.precondition_ok
    assert not res.passed()


def test_growth_fit_gamma_exact(gamma_series):
    fit = growth_fit(gamma_series, 1.0, (-2.0, 2.0))
    assert fit.limit_estimate == pytest.approx(PI, rel=1e-12)
    assert fit.plateau_flatness <= 1e-10


def test_growth_fit_phi_approaches_quarter_pi(phi_series):
    # pi cosh^2 r ~ (pi/4) e^{2r}: the window mean must drift toward pi/4
    near = growth_fit(phi_series, 1.0, (1.0, 1.5))
    far = growth_fit(phi_series, 1.0, (2.2, 2.7))
    assert abs(far.limit_estimate - PI / 4) < abs(near.limit_estimate - PI / 4)
    assert far.limit_estimate == pytest.approx(PI / 4, rel=2e-2)


def test_growth_fit_needs_enough_columns(gamma_series):
    hx = gamma_series.r[1] - gamma_series.r[0]
    with pytest.raises(ValueError):
        growth_fit(gamma_series, 1.0, (0.0, 3.0 * hx))


def test_phi_integral_gamma_closed_form(gamma_series):
    s = gamma_series
    j0 = int(np.argmin(np.abs(s.r)))
    assert abs(s.r[j0]) < 1e-12
    sel = s.r > 0
    exact = (2.0 / PI**0.25) * (1.0 - np.exp(-0.5 * s.r[sel]))
    got = s.phi[sel] - s.phi[j0]
    assert float(np.max(np.abs(got - exact))) <= 1e-5


def test_phi_bound_gamma_tight(gamma_series):
    res = phi_bound_check(gamma_series, 0.0)
    assert res.increasing
    assert res.passed
    # the limiting bound is 2/pi^{1/4} ~ 1.5022
    assert res.bound_limit == pytest.approx(2.0 / PI**0.25, rel=1e-3)
    assert res.phi_limit <= res.bound_limit + 1e-3


def test_phi_bound_phi_model(phi_series):
    res = phi_bound_check(phi_series, 0.5)
    assert res.passed


def test_phi_bound_rejects_zero_frequency(phi_series):
    # N(0) = tanh 0 = 0 at the wall
    with pytest.raises(ValueError):
        phi_bound_check(phi_series, 0.0)


def test_coupling_accumulation_models(phi_series, gamma_series):
    for s in (phi_series, gamma_series):
        res = coupling_accumulation(s)
        assert res.passed
        assert float(np.max(res.accumulated)) == 0.0


def test_empirical_energy_constant_gamma(gamma_series):
    # E2 ~ pi e^{2r}: log E2 - 2r is already nondecreasing up to left-tail
    # truncation, so a small constant suffices
    c = empirical_energy_constant(gamma_series)
    assert np.isfinite(c)
    assert c <= 0.1


# ---------------------------------------------------------------------------
# csv round trip
# ---------------------------------------------------------------------------


def test_series_csv_round_trip(tmp_path, gamma_series):
    path = tmp_path / "almgren.csv"
    write_series_csv(path, gamma_series)
    head = path.read_text().splitlines()[0]
    assert head == "r,H,E2,E1,N,frakN,phi,pohozaev,couplingBoundary"
    table = read_series_csv(path)
    assert set(table) == set(SERIES_COLUMNS)
    np.testing.assert_array_equal(table["r"], gamma_series.r)
    np.testing.assert_array_equal(table["H"], gamma_series.H)
    np.testing.assert_array_equal(table["N"], gamma_series.N)
    np.testing.assert_array_equal(table["pohozaev"], gamma_series.pohozaev)
    np.testing.assert_array_equal(
        table["couplingBoundary"], gamma_series.coupling_boundary
    )


def test_series_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("r,H,E2\n0,1,2\n")
    with pytest.raises(ValueError):
        read_series_csv(path)


def test_variant_constructor_validation():
    with pytest.raises(ValueError):
        AlmgrenVariant("weird", 0.0)
