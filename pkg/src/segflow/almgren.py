"""Section diagnostics along the cylinder axis and their audits.

For a state (u_1, ..., u_k) on C_(a,b) the series collects, column by column,

    H(r)   = int_{Sigma_r} sum_i u_i^2
    E2(r)  = int over (anchor, r) of sum_i |grad u_i|^2 + 2 beta sum_{i<j} u_i^2 u_j^2
    E1(r)  = same with coupling weight beta
    N(r)   = E2/H          (the frequency whose limit fixes the growth rate)
    frakN  = E1/H          (the variant controlling the coupling column)
    phi(r) = int_anchor^r H(s)^{-1/4} ds
    P(r)   = int_{Sigma_r} sum_i (d_y u_i)^2 - sum_i (d_x u_i)^2
             + beta sum_{i<j} u_i^2 u_j^2

plus the raw coupling column.  P is the combination that is constant in r
for equilibria: with coupling weight beta it is conserved for every beta,
and at beta = 1 it equals grad^2 + coupling - 2 (d_x)^2 columnwise.

Two anchor conventions exist.  "sym" anchors the cumulative integrals at a
Neumann wall sitting at x = a; "unb" treats x = a as a stand-in for
-infinity, admissible only when the left section mass has decayed to 1e-8
of the right one.  The audits below (monotonicity of N, frakN, H; the
derivative identity H' = 2E; Pohozaev constancy; doubling envelopes;
growth-rate plateaus; the phi barrier) all operate on a computed series and
return plain results that the experiment layer turns into verdict lines.
"""

import csv
import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    NEUMANN_LEFT,
    StateK,
    cell_grad_x,
    column_coupling,
    column_grad_x_nodal,
    column_grad_y,
    column_grad_y_rich,
    column_mass,
)

SYM = "sym"
UNB = "unb"

H_FLOOR = 1e-300        # sections with less mass than this report no quotient
DECAY_RATIO = 1e-8      # admissible left-tail mass for the unb anchor
EDGE_FRACTION = 0.1     # columns dropped beside each Dirichlet end in audits
PRECONDITION_TOL = 5e-3  # discretization tolerance on measured-N gates

SERIES_COLUMNS = (
    "r", "H", "E2", "E1", "N", "frakN", "phi", "pohozaev", "couplingBoundary",
)


class VariantPreconditionError(ValueError):
    """The state does not satisfy the variant's anchoring assumption."""

    def __init__(self, message: str, ratio: float | None = None):
        super().__init__(message)
        self.ratio = ratio


@dataclass(frozen=True)
class AlmgrenVariant:
    kind: str     # SYM | UNB
    anchor: float  # the Neumann wall (sym) or the -infinity surrogate (unb)

    def __post_init__(self):
        if self.kind not in (SYM, UNB):
            raise ValueError(f"unknown variant kind {self.kind!r}")


def sym_variant(anchor: float) -> AlmgrenVariant:
    return AlmgrenVariant(SYM, float(anchor))


def unb_variant(surrogate: float) -> AlmgrenVariant:
    return AlmgrenVariant(UNB, float(surrogate))


@dataclass
class AlmgrenSeries:
    r: np.ndarray
    H: np.ndarray
    E2: np.ndarray
    E1: np.ndarray
    N: np.ndarray
    frakN: np.ndarray
    phi: np.ndarray
    pohozaev: np.ndarray
    coupling_boundary: np.ndarray
    py: np.ndarray        # section integral of (d_y u)^2, staggered cells
    px: np.ndarray        # section integral of (d_x u)^2, nodal derivatives
    audited: np.ndarray   # audit-window mask; Dirichlet-adjacent columns off
    beta: float
    variant: AlmgrenVariant
    bc_kind: str

    @property
    def hx(self) -> float:
        return float(self.r[1] - self.r[0])


def _audited_mask(nx: int, bc_kind: str) -> np.ndarray:
    mask = np.ones(nx + 1, dtype=bool)
    drop = int(EDGE_FRACTION * (nx + 1))
    if drop > 0:
        mask[nx + 1 - drop:] = False
        if bc_kind != NEUMANN_LEFT:
            mask[:drop] = False
    return mask


def compute_series(state: StateK, variant: AlmgrenVariant, beta: float = 1.0) -> AlmgrenSeries:
    """Single-pass column diagnostics for the given anchor convention.

    Rejects states that violate the variant precondition: sym needs the
    state's left boundary to be the Neumann wall named by the anchor, unb
    needs the measured left decay H(a) <= 1e-8 * H(b).
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    g = state.grid
    r = g.x()
    H = column_mass(state)

    anchor_ok = math.isclose(
        variant.anchor, g.a, rel_tol=0.0, abs_tol=1e-9 * max(1.0, abs(g.a))
    )
    if variant.kind == SYM:
        if state.bc_kind != NEUMANN_LEFT:
            raise VariantPreconditionError(
                "sym anchoring requires a neumann_left state"
            )
        if not anchor_ok:
            raise VariantPreconditionError(
                f"sym anchor {variant.anchor:g} is not the wall a = {g.a:g}"
            )
    else:
        if not anchor_ok:
            raise VariantPreconditionError(
                f"unb surrogate {variant.anchor:g} is not the left edge a = {g.a:g}"
            )
        h_left, h_right = float(H[0]), float(H[-1])
        if not h_left <= DECAY_RATIO * h_right:
            ratio = h_left / h_right if h_right > 0.0 else math.inf
            raise VariantPreconditionError(
                "unb anchoring needs H(a) <= 1e-8 * H(b); measured ratio "
                f"{ratio:.3e}",
                ratio=ratio,
            )

    gy = column_grad_y(state, 1)
    gx_cells = cell_grad_x(state)
    coup = column_coupling(state)

    def cumulative(weight: float) -> np.ndarray:
        q = gy + weight * coup if weight != 0.0 else gy
        cells = g.hx * (gx_cells + 0.5 * (q[:-1] + q[1:]))
        out = np.zeros(g.nx + 1)
        np.cumsum(cells, out=out[1:])
        return out

    E2 = cumulative(2.0 * beta)
    E1 = cumulative(beta)

    if variant.kind == UNB:
        # the decayed-tail identity H' = 2E supplies the energy below the
        # surrogate anchor; without it N(a) would read 0 instead of the
        # frequency carried in from -infinity.  One-sided fourth-order
        # difference; the coupling part of the tail is negligible under the
        # decay gate, so both cumulative energies share the seed.
        dh = (
            -25.0 * H[0] + 48.0 * H[1] - 36.0 * H[2] + 16.0 * H[3] - 3.0 * H[4]
        ) / (12.0 * g.hx)
        seed = max(0.0, 0.5 * dh)
        E2 = E2 + seed
        E1 = E1 + seed

    reported = H > H_FLOOR
    N = np.full(g.nx + 1, np.nan)
    frakN = np.full(g.nx + 1, np.nan)
    N[reported] = E2[reported] / H[reported]
    frakN[reported] = E1[reported] / H[reported]

    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(reported, H, np.nan) ** -0.25
    phi = np.zeros(g.nx + 1)
    phi[1:] = np.cumsum(0.5 * g.hx * (integrand[:-1] + integrand[1:]))

    # the balance column is a small difference of two terms that grow like H,
    # so the y-energy needs the kink-aware extrapolant (O(hy^4) on smooth and
    # node-kinked columns alike); the plain staggered gy above feeds the
    # cumulative energies, keeping them additive with the flow's Lyapunov sum
    py = column_grad_y_rich(state)
    px = column_grad_x_nodal(state, order=4)
    pohozaev = py - px + beta * coup

    return AlmgrenSeries(
        r=r, H=H, E2=E2, E1=E1, N=N, frakN=frakN, phi=phi,
        pohozaev=pohozaev, coupling_boundary=coup, py=py, px=px,
        audited=_audited_mask(g.nx, state.bc_kind),
        beta=beta, variant=variant, bc_kind=state.bc_kind,
    )


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

_AUDITED_QUANTITIES = ("N", "frakN", "H", "E2")


@dataclass
class MonotonicityAudit:
    violations: dict
    slack: dict

    def clean(self, *names) -> bool:
        names = names or tuple(self.violations)
        return all(not self.violations[n] for n in names)


def audit_monotonicity(series: AlmgrenSeries, slack: float | None = None) -> MonotonicityAudit:
    """Indices j where a tracked quantity drops below value[j] - slack.

    slack given: used absolutely for every quantity.  slack None: each
    quantity gets 1e-6 of its own magnitude over the audit window.  An empty
    list for every quantity is a pass.
    """
    m = series.audited
    violations, slacks = {}, {}
    for name in _AUDITED_QUANTITIES:
        q = getattr(series, name)
        if slack is None:
            vals = q[m]
            vals = vals[np.isfinite(vals)]
            scale = float(np.max(np.abs(vals))) if vals.size else 0.0
            s = max(1e-12, 1e-6 * scale)
        else:
            s = float(slack)
        ok = m[:-1] & m[1:] & np.isfinite(q[:-1]) & np.isfinite(q[1:])
        idx = np.nonzero(ok & (q[1:] < q[:-1] - s))[0]
        violations[name] = idx.tolist()
        slacks[name] = s
    return MonotonicityAudit(violations, slacks)


def derivative_identity_residual(series: AlmgrenSeries) -> float:
    """Max over interior audited columns of |dH/dr - 2 E2| / max(1, |2 E2|)."""
    if len(series.r) < 3:
        raise ValueError("need at least 3 columns for the centered difference")
    H, E2, m = series.H, series.E2, series.audited
    hx = series.hx
    dh = (H[2:] - H[:-2]) / (2.0 * hx)
    twice_e = 2.0 * E2[1:-1]
    res = np.abs(dh - twice_e) / np.maximum(1.0, np.abs(twice_e))
    sel = m[1:-1] & m[2:] & m[:-2]
    if not np.any(sel):
        return math.nan
    return float(np.max(res[sel]))


@dataclass
class PohozaevAudit:
    constancy_deviation: float   # max - min over the audit window
    identity_residual: float     # anchored-value defect, relative to scale
    mean: float
    scale: float                 # max of py + px + beta * coupling


def pohozaev_audit(series: AlmgrenSeries) -> PohozaevAudit:
    """Constancy of the Pohozaev column plus its anchored identity.

    sym: the column must equal its wall value (where the x-derivative term
    vanishes identically).  unb: the decayed tail forces the constant to be
    zero.  Both defects are reported relative to the magnitude of the terms
    being cancelled, so exact cancellations near zero are not penalized.
    """
    m = series.audited
    p = series.pohozaev[m]
    magnitude = series.py[m] + series.px[m] + series.beta * series.coupling_boundary[m]
    scale = max(float(np.max(magnitude)), 1e-300)
    mean = float(np.mean(p))
    deviation = float(np.max(p) - np.min(p))
    if series.variant.kind == SYM:
        target = float(series.pohozaev[0])
    else:
        target = 0.0
    return PohozaevAudit(
        constancy_deviation=deviation,
        identity_residual=abs(mean - target) / scale,
        mean=mean,
        scale=scale,
    )


@dataclass
class DoublingEnvelope:
    precondition_ok: bool
    n_min: float
    n_max: float
    low_ok: bool
    high_ok: bool
    worst_low: float     # most negative step of H e^{-2 d_low r}, / scale
    worst_high: float    # most positive step of H e^{-2 d_high r}, / scale

    def passed(self) -> bool:
        return self.precondition_ok and self.low_ok and self.high_ok


def doubling_envelope(series: AlmgrenSeries, d_low: float, d_high: float,
                      window: tuple) -> DoublingEnvelope:
    """Two-sided doubling control on a window where d_low <= N <= d_high.

    The measured-N gate carries a small discretization tolerance; if the
    series' N leaves the stated band beyond that, the result flags the
    precondition instead of judging the envelopes.  Envelope slack is 1e-6
    relative to the envelope's own magnitude.
    """
    lo, hi = window
    m = series.audited & (series.r >= lo - 1e-12) & (series.r <= hi + 1e-12)
    if np.count_nonzero(m) < 2:
        raise ValueError("doubling window covers fewer than 2 audited columns")
    n_vals = series.N[m]
    if not np.all(np.isfinite(n_vals)):
        raise ValueError("N is not reported everywhere on the doubling window")
    n_min, n_max = float(np.min(n_vals)), float(np.max(n_vals))
    tol = PRECONDITION_TOL * max(1.0, abs(d_low), abs(d_high))
    pre_ok = (n_min >= d_low - tol) and (n_max <= d_high + tol)

    r = series.r[m]
    h = series.H[m]
    g_low = h * np.exp(-2.0 * d_low * r)
    g_high = h * np.exp(-2.0 * d_high * r)
    s_low = float(np.max(np.abs(g_low)))
    s_high = float(np.max(np.abs(g_high)))
    worst_low = float(np.min(np.diff(g_low))) / max(s_low, 1e-300)
    worst_high = float(np.max(np.diff(g_high))) / max(s_high, 1e-300)
    return DoublingEnvelope(
        precondition_ok=pre_ok,
        n_min=n_min,
        n_max=n_max,
        low_ok=worst_low >= -1e-6,
        high_ok=worst_high <= 1e-6,
        worst_low=worst_low,
        worst_high=worst_high,
    )


@dataclass
class GrowthFit:
    limit_estimate: float     # mean of H e^{-2 rate r} over the window
    plateau_flatness: float   # (max - min) / mean over the window
    n_columns: int
    window: tuple


def growth_fit(series: AlmgrenSeries, rate: float, window: tuple) -> GrowthFit:
    """Plateau statistics of H(r) e^{-2 rate r} over an audited window."""
    lo, hi = window
    m = series.audited & (series.r >= lo - 1e-12) & (series.r <= hi + 1e-12)
    count = int(np.count_nonzero(m))
    if count < 8:
        raise ValueError(
            f"growth window [{lo:g}, {hi:g}] holds {count} audited columns; need >= 8"
        )
    h = series.H[m]
    if np.any(h <= H_FLOOR):
        raise ValueError("section mass underflows inside the growth window")
    g = h * np.exp(-2.0 * rate * series.r[m])
    mean = float(np.mean(g))
    flat = float((np.max(g) - np.min(g)) / mean)
    return GrowthFit(mean, flat, count, (float(lo), float(hi)))


@dataclass
class PhiBound:
    passed: bool
    n0: float
    h0: float
    worst_margin: float   # min over r > r0 of bound + allowance - phi
    phi_limit: float      # phi(last audited column; r0)
    bound_limit: float    # 2 / (H0^{1/4} N0), the r -> infinity bound
    increasing: bool


def phi_bound_check(series: AlmgrenSeries, r0: float) -> PhiBound:
    """The barrier phi(r; r0) <= (2 / (H0^{1/4} N0)) (1 - e^{-N0 (r-r0)/2}).

    H0 and N0 are the measured series values at the column nearest r0
    (required to sit within half a spacing).  The check adds the trapezoid
    quadrature allowance of the phi integral, estimated from second
    differences of the integrand, on top of a 1e-9 slack; the bound itself
    is exactly tight for the one-ended harmonic profile, so the allowance is
    what keeps the comparison meaningful at finite resolution.
    """
    r = series.r
    hx = series.hx
    j0 = int(round((r0 - r[0]) / hx))
    if not (0 <= j0 < len(r)) or abs(r[j0] - r0) > 0.5 * hx + 1e-12:
        raise ValueError(f"r0 = {r0:g} does not sit on a series column")
    n0 = float(series.N[j0])
    if not math.isfinite(n0) or n0 <= 0.0:
        raise ValueError(f"phi bound needs N(r0) > 0; measured {n0:g}")
    h0 = float(series.H[j0])

    sel = series.audited & (np.arange(len(r)) > j0)
    if not np.any(sel):
        raise ValueError("no audited columns to the right of r0")

    bound_limit = 2.0 / (h0**0.25 * n0)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(series.H > H_FLOOR, series.H, np.nan) ** -0.25
    fdd = np.zeros_like(f)
    fdd[1:-1] = np.abs(f[2:] - 2.0 * f[1:-1] + f[:-2]) / hx**2
    fdd[0], fdd[-1] = fdd[1], fdd[-2]
    cell_err = (hx**3 / 12.0) * np.maximum(fdd[:-1], fdd[1:])
    allowance = np.zeros_like(f)
    np.cumsum(cell_err, out=allowance[1:])

    idx = np.nonzero(sel)[0]
    lhs = series.phi[idx] - series.phi[j0]
    bound = bound_limit * (1.0 - np.exp(-0.5 * n0 * (r[idx] - r[j0])))
    slack = 1e-9 * max(1.0, bound_limit)
    margins = bound + slack + (allowance[idx] - allowance[j0]) - lhs
    worst = float(np.min(margins))

    dphi = np.diff(series.phi[series.audited])
    increasing = bool(np.all(dphi >= -1e-15 * max(1.0, float(series.phi[idx[-1]]))))
    return PhiBound(
        passed=bool(worst >= 0.0 and increasing),
        n0=n0,
        h0=h0,
        worst_margin=worst,
        phi_limit=float(lhs[-1]),
        bound_limit=bound_limit,
        increasing=increasing,
    )


@dataclass
class CouplingAccumulation:
    passed: bool
    max_excess: float
    slack: float
    accumulated: np.ndarray


def coupling_accumulation(series: AlmgrenSeries, slack: float | None = None) -> CouplingAccumulation:
    """Checks int_anchor^r coupling/H ds <= N(r) + slack columnwise."""
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(series.H > H_FLOOR,
                             series.coupling_boundary / series.H, np.nan)
    acc = np.zeros_like(integrand)
    acc[1:] = np.cumsum(0.5 * series.hx * (integrand[:-1] + integrand[1:]))
    sel = series.audited & np.isfinite(series.N) & np.isfinite(acc)
    if slack is None:
        top = float(np.max(np.abs(series.N[sel]))) if np.any(sel) else 0.0
        slack = 1e-6 * max(1.0, top)
    excess = float(np.max(acc[sel] - series.N[sel])) if np.any(sel) else 0.0
    return CouplingAccumulation(
        passed=excess <= slack, max_excess=excess, slack=float(slack),
        accumulated=acc,
    )


def empirical_energy_constant(series: AlmgrenSeries) -> float:
    """Smallest C making log E2 - 2r + C phi nondecreasing on the window.

    Computed as the max over audited cells of (2 dr - dlog E2) / dphi;
    a finite, order-one value realizes the energy-monotonicity correction
    discretely.  Cells where E2 has not yet accumulated are skipped.
    """
    m = series.audited
    ok = (m[:-1] & m[1:] & (series.E2[:-1] > 0.0) & (series.E2[1:] > 0.0))
    dphi = np.diff(series.phi)
    ok &= dphi > 0.0
    if not np.any(ok):
        return math.nan
    dlog = np.diff(np.log(series.E2, where=series.E2 > 0.0,
                          out=np.full_like(series.E2, -np.inf)))
    dr = np.diff(series.r)
    needed = (2.0 * dr[ok] - dlog[ok]) / dphi[ok]
    return float(np.max(needed))


# ---------------------------------------------------------------------------
# csv io
# ---------------------------------------------------------------------------

_CSV_FIELDS = {
    "r": "r", "H": "H", "E2": "E2", "E1": "E1", "N": "N", "frakN": "frakN",
    "phi": "phi", "pohozaev": "pohozaev", "couplingBoundary": "coupling_boundary",
}


def write_series_csv(path, series: AlmgrenSeries) -> None:
    """17-significant-digit CSV with the fixed column schema."""
    cols = [getattr(series, _CSV_FIELDS[name]) for name in SERIES_COLUMNS]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SERIES_COLUMNS)
        for i in range(len(series.r)):
            writer.writerow(f"{col[i]:.17g}" for col in cols)


def read_series_csv(path) -> dict:
    """Reads a series CSV back into a dict of arrays keyed by column name."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != SERIES_COLUMNS:
            raise ValueError(
                f"unexpected series header {','.join(header)!r}"
            )
        rows = [[float(cell) for cell in row] for row in reader if row]
    data = np.asarray(rows, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != len(SERIES_COLUMNS):
        raise ValueError("malformed series table")
    return {name: data[:, i].copy() for i, name in enumerate(SERIES_COLUMNS)}


def series_from_table(table: dict, variant: AlmgrenVariant, beta: float,
                      bc_kind: str) -> AlmgrenSeries:
    """Rebuilds a series object from a read-back table.

    The derivative columns py/px are not part of the CSV schema; audits that
    need them must come from compute_series.  Here they are reconstructed
    as far as the stored columns allow (py + beta*coup - px = pohozaev with
    the x-part unknown), so both are filled with NaN.
    """
    n = len(table["r"])
    nan = np.full(n, np.nan)
    return AlmgrenSeries(
        r=np.asarray(table["r"]), H=np.asarray(table["H"]),
        E2=np.asarray(table["E2"]), E1=np.asarray(table["E1"]),
        N=np.asarray(table["N"]), frakN=np.asarray(table["frakN"]),
        phi=np.asarray(table["phi"]), pohozaev=np.asarray(table["pohozaev"]),
        coupling_boundary=np.asarray(table["couplingBoundary"]),
        py=nan, px=nan.copy(),
        audited=_audited_mask(n - 1, bc_kind),
        beta=beta, variant=variant, bc_kind=bc_kind,
    )


__all__ = [
    "SYM", "UNB", "SERIES_COLUMNS", "H_FLOOR",
    "AlmgrenVariant", "AlmgrenSeries", "VariantPreconditionError",
    "sym_variant", "unb_variant", "compute_series",
    "MonotonicityAudit", "audit_monotonicity",
    "derivative_identity_residual",
    "PohozaevAudit", "pohozaev_audit",
    "DoublingEnvelope", "doubling_envelope",
    "GrowthFit", "growth_fit",
    "PhiBound", "phi_bound_check",
    "CouplingAccumulation", "coupling_accumulation",
    "empirical_energy_constant",
    "write_series_csv", "read_series_csv", "series_from_table",
]
