"""Symmetry groups: closure sizes, exact projection, invariance of samples."""

import math

import numpy as np
import pytest

from segflow.grid import CylinderGrid, Field, StateK
from segflow.models import gamma, phi, sample_split, sample_split_k
from segflow.symmetry import (
    SymmetryGroup,
    cycle_group,
    generator_group,
    pair_group,
    symmetrize,
)

PI = math.pi


def test_group_orders():
    g = CylinderGrid(0.0, 1.0, 2, 4, 16)
    assert len(pair_group(g)) == 4  # shift-swap x reflection
    assert len(pair_group(g, even_x=True)) == 8
    assert len(generator_group(g)) == 2
    g3 = CylinderGrid(0.0, 1.0, 3, 4, 24)
    assert len(cycle_group(g3)) == 6  # dihedral on three cells


def test_orbit_average_is_projection():
    g = CylinderGrid(0.0, 1.0, 2, 6, 16)
    grp = pair_group(g)
    rng = np.random.default_rng(11)
    arrays = [rng.standard_normal((7, 16)) for _ in range(2)]
    once = grp.orbit_average(arrays)
    twice = grp.orbit_average(once)
    for a, b in zip(once, twice):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)
    assert grp.defect(once) <= 1e-14


def test_orbit_average_preserves_total_mass():
    g = CylinderGrid(0.0, 1.0, 2, 6, 16)
    grp = pair_group(g, even_x=True)
    rng = np.random.default_rng(12)
    arrays = [rng.standard_normal((7, 16)) for _ in range(2)]
    before = sum(float(np.sum(a)) for a in arrays)
    after = sum(float(np.sum(a)) for a in grp.orbit_average(arrays))
    assert after == pytest.approx(before, rel=1e-12)


def test_sampled_split_is_invariant():
    g = CylinderGrid(-1.0, 1.0, 2, 8, 64)
    state = sample_split(phi(), g)
    grp = pair_group(g)
    defect = grp.defect([f.values for f in state.components])
    assert defect <= 1e-14 * state.max_abs()


def test_k3_cell_split_is_invariant():
    g = CylinderGrid(-1.0, 1.0, 3, 8, 48)
    state = sample_split_k(gamma(), g)
    grp = cycle_group(g)
    defect = grp.defect([f.values for f in state.components])
    assert defect <= 1e-13 * state.max_abs()


def test_projection_kills_asymmetric_noise():
    g = CylinderGrid(-1.0, 1.0, 2, 8, 32)
    state = sample_split(phi(), g)
    rng = np.random.default_rng(13)
    noisy = [
        f.values + 1e-3 * rng.standard_normal(f.values.shape)
        for f in state.components
    ]
    grp = pair_group(g)
    assert grp.defect(noisy) > 1e-4
    assert grp.defect(grp.orbit_average(noisy)) <= 1e-15


def test_reflect_centre_must_be_on_node():
    g = CylinderGrid(0.0, 1.0, 2, 4, 16)
    with pytest.raises(ValueError):
        SymmetryGroup(g, 2, reflect_y0=g.hy / 3.0)


def test_cycle_needs_matching_components():
    g = CylinderGrid(0.0, 1.0, 3, 4, 24)
    with pytest.raises(ValueError):
        SymmetryGroup(g, 2, cycle_shift=True)


def test_symmetrize_state_wrapper():
    g = CylinderGrid(-1.0, 1.0, 2, 8, 32)
    state = sample_split(phi(), g)
    out = symmetrize(state, pair_group(g))
    assert out.bc_kind == state.bc_kind
    assert out.t == state.t
    np.testing.assert_allclose(
        out.components[0].values, state.components[0].values, atol=1e-14
    )


def test_symmetrize_rejects_grid_mismatch():
    g1 = CylinderGrid(-1.0, 1.0, 2, 8, 32)
    g2 = CylinderGrid(-1.0, 1.0, 2, 8, 16)
    state = sample_split(phi(), g1)
    with pytest.raises(ValueError):
        symmetrize(state, pair_group(g2))
