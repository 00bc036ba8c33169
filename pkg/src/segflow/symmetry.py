"""Discrete symmetry groups on periodic-cylinder states.

A group element acts on a k-tuple of node arrays by

    (g u)_i[j, m] = u_{perm[i]}[ xmap[j], ymap_i[m] ]

with a component permutation, one x index map shared by all components, and
a per-component y index map (reflections have component-dependent centres).
All maps are node permutations, so every element preserves line masses and
traces of symmetric data exactly, and the orbit average is an exact
projection: averaging twice changes nothing.

Groups are built by breadth-first closure over generator elements; the
generators available are

    even_x        reflection about the x midpoint, j -> nx - j
    cycle_shift   y-shift by pi with the component cycle i -> i+1
    reflect_y     per-component reflection about y0 + (i-1) pi

Node alignment is structural: shifts move by ny/k nodes (ny is a multiple
of 2k) and reflect_y requires 2*y0 to be an even multiple of hy.
"""

from dataclasses import dataclass

import numpy as np

from .grid import CylinderGrid, StateK

_MAX_ELEMENTS = 256


@dataclass(frozen=True)
class _Element:
    perm: tuple
    xmap: bytes
    ymaps: tuple  # one bytes blob per output component

    def arrays(self, nx1, ny):
        xm = np.frombuffer(self.xmap, dtype=np.int64)
        yms = [np.frombuffer(b, dtype=np.int64) for b in self.ymaps]
        return xm, yms


def _identity(n_comp, nx1, ny):
    xm = np.arange(nx1, dtype=np.int64).tobytes()
    ym = np.arange(ny, dtype=np.int64).tobytes()
    return _Element(tuple(range(n_comp)), xm, (ym,) * n_comp)


def _compose(g, h, nx1, ny):
    # (g h) u = g (h u):  perm = h.perm[g.perm[i]],  ymap_i = h.ymap[g.perm[i]] o g.ymap_i
    gx = np.frombuffer(g.xmap, dtype=np.int64)
    hx = np.frombuffer(h.xmap, dtype=np.int64)
    xm = hx[gx].tobytes()
    perm = tuple(h.perm[p] for p in g.perm)
    yms = []
    for i in range(len(g.perm)):
        gy = np.frombuffer(g.ymaps[i], dtype=np.int64)
        hy = np.frombuffer(h.ymaps[g.perm[i]], dtype=np.int64)
        yms.append(hy[gy].tobytes())
    return _Element(perm, xm, tuple(yms))


class SymmetryGroup:
    """Finite symmetry group with an exact orbit-average projector."""

    def __init__(self, grid: CylinderGrid, n_components: int,
                 even_x: bool = False, cycle_shift: bool = False,
                 reflect_y0: float | None = None):
        self.grid = grid
        self.n_components = int(n_components)
        nx1, ny = grid.nx + 1, grid.ny
        gens = []
        if even_x:
            xm = np.arange(grid.nx, -1, -1, dtype=np.int64).tobytes()
            ym = np.arange(ny, dtype=np.int64).tobytes()
            gens.append(_Element(tuple(range(self.n_components)), xm, (ym,) * self.n_components))
        if cycle_shift:
            if self.n_components != grid.k:
                raise ValueError("cycle_shift needs one component per period cell")
            sn = grid.shift_nodes
            xm = np.arange(nx1, dtype=np.int64).tobytes()
            ym = ((np.arange(ny, dtype=np.int64) - sn) % ny).tobytes()
            perm = tuple((i - 1) % self.n_components for i in range(self.n_components))
            gens.append(_Element(perm, xm, (ym,) * self.n_components))
        if reflect_y0 is not None:
            two_m0 = 2.0 * reflect_y0 / grid.hy
            if abs(two_m0 - round(two_m0)) > 1e-9 or round(two_m0) % 2 != 0:
                raise ValueError("reflect_y centre must sit on a grid node")
            m0 = int(round(two_m0)) // 2
            sn = grid.shift_nodes
            xm = np.arange(nx1, dtype=np.int64).tobytes()
            yms = []
            for i in range(self.n_components):
                ci = m0 + i * sn
                yms.append(((2 * ci - np.arange(ny, dtype=np.int64)) % ny).tobytes())
            gens.append(_Element(tuple(range(self.n_components)), xm, tuple(yms)))
        self.elements = self._close(gens, nx1, ny)

    def _close(self, gens, nx1, ny):
        ident = _identity(self.n_components, nx1, ny)
        seen = {ident}
        frontier = [ident]
        while frontier:
            nxt = []
            for e in frontier:
                for g in gens:
                    c = _compose(g, e, nx1, ny)
                    if c not in seen:
                        seen.add(c)
                        nxt.append(c)
            frontier = nxt
            if len(seen) > _MAX_ELEMENTS:
                raise RuntimeError("symmetry group closure exceeded element cap")
        return tuple(sorted(seen, key=lambda e: (e.perm, e.xmap, e.ymaps)))

    def __len__(self):
        return len(self.elements)

    def orbit_average(self, arrays):
        """Average the component arrays over the group; returns new arrays."""
        nx1, ny = self.grid.nx + 1, self.grid.ny
        if len(arrays) != self.n_components:
            raise ValueError("component count mismatch")
        acc = [np.zeros((nx1, ny)) for _ in range(self.n_components)]
        for e in self.elements:
            xm, yms = e.arrays(nx1, ny)
            for i in range(self.n_components):
                src = arrays[e.perm[i]]
                acc[i] += src[np.ix_(xm, yms[i])]
        inv = 1.0 / len(self.elements)
        for a in acc:
            a *= inv
        return acc

    def defect(self, arrays) -> float:
        """Sup-norm distance from the symmetric subspace."""
        avg = self.orbit_average(arrays)
        worst = 0.0
        for a, s in zip(arrays, avg):
            worst = max(worst, float(np.max(np.abs(a - s))))
        return worst


def pair_group(grid: CylinderGrid, even_x: bool = False) -> SymmetryGroup:
    """Two-component group: shift-by-pi swap plus reflection about pi/2."""
    if grid.k != 2:
        raise ValueError("pair_group needs k = 2")
    return SymmetryGroup(grid, 2, even_x=even_x, cycle_shift=True,
                         reflect_y0=np.pi / 2.0 / grid.period_scale)


def cycle_group(grid: CylinderGrid, even_x: bool = False) -> SymmetryGroup:
    """k-component group: pi-shift cycle plus reflection about pi/2."""
    return SymmetryGroup(grid, grid.k, even_x=even_x, cycle_shift=True,
                         reflect_y0=np.pi / 2.0 / grid.period_scale)


def generator_group(grid: CylinderGrid, even_x: bool = False) -> SymmetryGroup:
    """Single-component group for generator-mode states: reflection about
    pi/2 only (the shift cycle is implicit in the generator reduction)."""
    return SymmetryGroup(grid, 1, even_x=even_x,
                         reflect_y0=np.pi / 2.0 / grid.period_scale)


def symmetrize(state: StateK, group: SymmetryGroup) -> StateK:
    """Project a state onto the group-symmetric subspace."""
    if group.grid != state.grid:
        raise ValueError("group and state live on different grids")
    arrays = group.orbit_average([f.values for f in state.components])
    return state.with_values(arrays, state.t)
