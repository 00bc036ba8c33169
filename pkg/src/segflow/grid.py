"""Periodic-cylinder grids, nodal fields and quadrature.

The computational domain is the flat cylinder (a, b) x R/(k pi Z), sampled on
a tensor grid: x_j = a + j*hx for j = 0..nx (both end columns present), and
y_m = m*hy for m = 0..ny-1 with no duplicated seam node.  Node counts satisfy
ny = 0 mod 2k so that the half-period shift, the quarter-period reflection and
the nodal lines of the reference profiles all land exactly on grid nodes.

Quadrature conventions: rectangle rule in y (spectrally exact for trigonometric
polynomials of degree < ny/2), trapezoid in x.  Gradient energies are summed
over staggered cells, i.e. forward differences evaluated at cell midpoints;
this is the quadratic form whose gradient is the 5-point Laplacian, and it
remains second-order accurate for fields whose kinks lie on grid nodes.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels

DIRICHLET = "dirichlet"
NEUMANN_LEFT = "neumann_left"

_FLD_MAGIC_KEYS = ("a", "b", "k", "nx", "ny", "xbc", "component", "t")


@dataclass(frozen=True)
class CylinderGrid:
    """Tensor grid on (a, b) x R/(period Z) with period = k*pi/period_scale."""

    a: float
    b: float
    k: int
    nx: int
    ny: int
    period_scale: float = 1.0

    def __post_init__(self):
        if not (self.b > self.a):
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if self.k < 2:
            raise ValueError(f"need k >= 2, got k={self.k}")
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid too small: nx={self.nx}, ny={self.ny}")
        if self.ny % (2 * self.k) != 0:
            raise ValueError(
                f"ny must be divisible by 2k (node-aligned symmetries): "
                f"ny={self.ny}, k={self.k}"
            )
        if not (self.period_scale > 0.0):
            raise ValueError("period_scale must be positive")

    @property
    def period(self) -> float:
        return self.k * math.pi / self.period_scale

    @property
    def hx(self) -> float:
        return (self.b - self.a) / self.nx

    @property
    def hy(self) -> float:
        return self.period / self.ny

    @property
    def shift_nodes(self) -> int:
        """Nodes per pi/period_scale, the half-cell y-shift of the k-tuple."""
        return self.ny // self.k

    def x(self) -> np.ndarray:
        return self.a + self.hx * np.arange(self.nx + 1)

    def y(self) -> np.ndarray:
        return self.hy * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.x(), self.y(), indexing="ij")

    def x_weights(self) -> np.ndarray:
        """Trapezoid weights along x (0.5 at both end columns)."""
        w = np.ones(self.nx + 1)
        w[0] = 0.5
        w[-1] = 0.5
        return w


class Field:
    """One scalar component on a CylinderGrid.

    values has shape (nx+1, ny); the end columns j=0 and j=nx hold the trace
    data.  bc_kind is "dirichlet" (both end columns pinned) or "neumann_left"
    (left column is an unknown with even mirror ghost, right column pinned).
    Values are immutable; use with_values to derive a modified field.
    """

    __slots__ = ("grid", "values", "bc_kind")

    def __init__(self, grid: CylinderGrid, values: np.ndarray, bc_kind: str = DIRICHLET):
        if bc_kind not in (DIRICHLET, NEUMANN_LEFT):
            raise ValueError(f"unknown bc_kind {bc_kind!r}")
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != (grid.nx + 1, grid.ny):
            raise ValueError(
                f"values shape {values.shape} != {(grid.nx + 1, grid.ny)}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values = values.copy()
        values.flags.writeable = False
        self.grid = grid
        self.values = values
        self.bc_kind = bc_kind

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values, self.bc_kind)

    @property
    def left_trace(self) -> np.ndarray:
        if self.bc_kind != DIRICHLET:
            raise ValueError("left trace only defined for dirichlet bc")
        return self.values[0]

    @property
    def right_trace(self) -> np.ndarray:
        return self.values[-1]

    def interior_row_range(self):
        """(j_lo, j_hi) inclusive range of non-pinned columns."""
        j_lo = 0 if self.bc_kind == NEUMANN_LEFT else 1
        return j_lo, self.grid.nx - 1


@dataclass
class StateK:
    """Tuple of components sharing one grid, tagged with flow time t.

    Normally len(components) == grid.k.  A single stored component is also
    allowed: the reaction-free heat tests and the generator-only evolution of
    the k-component runs use it (the remaining components are y-shifted copies
    of the generator and are materialized on demand).
    """

    grid: CylinderGrid
    components: tuple
    t: float = 0.0

    def __post_init__(self):
        self.components = tuple(self.components)
        if len(self.components) < 1:
            raise ValueError("need at least one component")
        for f in self.components:
            if f.grid != self.grid:
                raise ValueError("all components must share the state grid")
            if f.bc_kind != self.components[0].bc_kind:
                raise ValueError("all components must share the bc kind")

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def bc_kind(self) -> str:
        return self.components[0].bc_kind

    def value_arrays(self):
        return [f.values for f in self.components]

    def with_values(self, arrays, t=None) -> "StateK":
        comps = tuple(f.with_values(v) for f, v in zip(self.components, arrays))
        return StateK(self.grid, comps, self.t if t is None else t)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(f.values))) for f in self.components)


# ---------------------------------------------------------------------------
# differential / quadrature operators
# ---------------------------------------------------------------------------


def laplacian(field: Field) -> np.ndarray:
    """5-point discrete Laplacian on the non-pinned columns.

    Returns a full-shape (nx+1, ny) array; pinned trace rows are zero.  Under
    neumann_left the j=0 row uses the even mirror ghost.
    """
    g = field.grid
    j_lo, j_hi = field.interior_row_range()
    out = np.empty_like(field.values)
    kernels.lap5(
        field.values,
        1.0 / g.hx**2,
        1.0 / g.hy**2,
        j_lo,
        j_hi,
        field.bc_kind == NEUMANN_LEFT,
        out,
    )
    return out


def line_mass(f: Field, g: Field, j: int) -> float:
    """Rectangle-rule integral of f*g over the circle section at column j."""
    if f.grid != g.grid:
        raise ValueError("line_mass requires fields on the same grid")
    if not (0 <= j <= f.grid.nx):
        raise IndexError(f"column index {j} out of range 0..{f.grid.nx}")
    return float(f.grid.hy * np.dot(f.values[j], g.values[j]))


def column_mass(state: StateK) -> np.ndarray:
    """H(x_j) = rectangle integral of sum_i u_i^2 per column; shape (nx+1,)."""
    hy = state.grid.hy
    acc = np.zeros(state.grid.nx + 1)
    for v in state.value_arrays():
        acc += np.sum(v * v, axis=1)
    return hy * acc


def column_grad_y(state: StateK, stride: int = 1) -> np.ndarray:
    """Staggered y-derivative energy per column: int (d_y u)^2 dy, shape (nx+1,).

    stride=2 evaluates the same sum on the y-coarsened lattice; the pair
    (stride 1, stride 2) feeds the Richardson-extrapolated column values used
    where the O(hy^2) term must cancel.
    """
    acc = np.zeros(state.grid.nx + 1)
    for v in state.value_arrays():
        acc += kernels.grad_y_sq_cols(v, state.grid.hy, stride)
    return acc


def column_grad_y_rich(state: StateK) -> np.ndarray:
    """Extrapolated staggered y-energy per column, safe across node kinks.

    The stride-1/stride-2 pair cancels the h^2 term, but a stride-2 cell
    straddling a support-boundary node averages the one-sided slope and
    loses an order.  Each column therefore takes its stride-2 sum on the
    coarse lattice whose nodes contain the column's vanishing-set boundary;
    columns whose boundary nodes land on both parities keep the plain
    stride-1 value instead of extrapolating across a straddled kink.
    """
    g = state.grid
    hy = g.hy
    total = np.zeros(g.nx + 1)
    for v in state.value_arrays():
        s1 = kernels.grad_y_sq_cols(v, hy, 1)
        b = np.roll(v, -2, axis=1) - v
        b *= b
        s2e = b[:, 0::2].sum(axis=1) / (2.0 * hy)
        s2o = b[:, 1::2].sum(axis=1) / (2.0 * hy)
        tol = 1e-12 * float(np.max(np.abs(v)))
        live = np.abs(v) > tol
        kink = ~live & (np.roll(live, 1, axis=1) | np.roll(live, -1, axis=1))
        has_e = kink[:, 0::2].any(axis=1)
        has_o = kink[:, 1::2].any(axis=1)
        s2 = 0.5 * (s2e + s2o)
        s2 = np.where(has_e & ~has_o, s2e, s2)
        s2 = np.where(has_o & ~has_e, s2o, s2)
        rich = (4.0 * s1 - s2) / 3.0
        total += np.where(has_e & has_o, s1, rich)
    return total


def cell_grad_x(state: StateK) -> np.ndarray:
    """x-derivative energy per x-cell (midpoint staggered), shape (nx,)."""
    acc = np.zeros(state.grid.nx)
    for v in state.value_arrays():
        acc += kernels.grad_x_sq_cells(v, state.grid.hx, state.grid.hy)
    return acc


def column_coupling(state: StateK) -> np.ndarray:
    """Rectangle integral of sum_{i<j} u_i^2 u_j^2 per column, shape (nx+1,)."""
    vals = state.value_arrays()
    hy = state.grid.hy
    acc = np.zeros(state.grid.nx + 1)
    for i in range(len(vals)):
        vi2 = vals[i] * vals[i]
        for j in range(i + 1, len(vals)):
            acc += np.sum(vi2 * (vals[j] * vals[j]), axis=1)
    return hy * acc


def column_grad_x_nodal(state: StateK, order: int = 4):
    """Nodal x-derivative energy per column: int (d_x u)^2 dy, shape (nx+1,).

    order=4 uses five-point centered differences in the interior and one-sided
    five-point stencils at the end columns (mirror-even at a neumann_left
    wall, where the derivative vanishes identically).
    """
    g = state.grid
    hx = g.hx
    nx = g.nx
    acc = np.zeros(nx + 1)
    mirror = state.bc_kind == NEUMANN_LEFT
    for v in state.value_arrays():
        dv = _x_derivative_nodal(v, hx, order, mirror)
        acc += np.sum(dv * dv, axis=1)
    return g.hy * acc


def _x_derivative_nodal(v, hx, order, mirror_left):
    nx1 = v.shape[0]
    dv = np.empty_like(v)
    if order == 2:
        dv[1:-1] = (v[2:] - v[:-2]) / (2 * hx)
        if mirror_left:
            dv[0] = 0.0
        else:
            dv[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * hx)
        dv[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * hx)
        return dv
    if order != 4:
        raise ValueError("order must be 2 or 4")
    if nx1 < 5:
        return _x_derivative_nodal(v, hx, 2, mirror_left)
    dv[2:-2] = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * hx)
    if mirror_left:
        dv[0] = 0.0
        # centered with even ghosts v[-1]=v[1], v[-2]=v[2]
        dv[1] = (-v[3] + 8 * v[2] - 8 * v[0] + v[1]) / (12 * hx)
    else:
        dv[0] = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * hx)
        dv[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12 * hx)
    dv[-1] = (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12 * hx)
    dv[-2] = (3 * v[-1] + 10 * v[-2] - 18 * v[-3] + 6 * v[-4] - v[-5]) / (12 * hx)
    return dv


def dirichlet_energy(state: StateK, up_to: int, coupling_weight: float = 2.0) -> float:
    """Energy of the state over (a, x_{up_to}): gradients plus weighted coupling.

    integral of sum_i |grad u_i|^2 + coupling_weight * sum_{i<j} u_i^2 u_j^2,
    accumulated over staggered x-cells (exactly additive over column ranges).
    """
    if coupling_weight < 0:
        raise ValueError("coupling_weight must be nonnegative")
    g = state.grid
    if not (0 <= up_to <= g.nx):
        raise IndexError(f"up_to {up_to} out of range 0..{g.nx}")
    if up_to == 0:
        return 0.0
    gx = cell_grad_x(state)
    gy = column_grad_y(state)
    if coupling_weight != 0.0:
        gy = gy + coupling_weight * column_coupling(state)
    hx = g.hx
    cells = gx[:up_to] + 0.5 * (gy[:up_to] + gy[1 : up_to + 1])
    return float(hx * np.sum(cells))


# ---------------------------------------------------------------------------
# snapshot format
# ---------------------------------------------------------------------------


def write_fld(path, field: Field, component: int, t: float) -> None:
    """Write the binary snapshot: one-line JSON header then row-major float64."""
    g = field.grid
    if g.period_scale != 1.0:
        raise ValueError("snapshots are defined for unit period_scale grids")
    header = {
        "a": g.a,
        "b": g.b,
        "k": g.k,
        "nx": g.nx,
        "ny": g.ny,
        "xbc": field.bc_kind,
        "component": int(component),
        "t": float(t),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_fld(path):
    """Read a snapshot; returns (Field, component, t)."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    header = json.loads(header_line.decode("utf-8"))
    missing = [key for key in _FLD_MAGIC_KEYS if key not in header]
    if missing:
        raise ValueError(f"snapshot header missing keys {missing}")
    grid = CylinderGrid(header["a"], header["b"], int(header["k"]), int(header["nx"]), int(header["ny"]))
    expected = (grid.nx + 1) * grid.ny * 8
    if len(payload) != expected:
        raise ValueError(
            f"snapshot payload has {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype="<f8").reshape(grid.nx + 1, grid.ny)
    fld = Field(grid, values, header["xbc"])
    return fld, int(header["component"]), float(header["t"])
