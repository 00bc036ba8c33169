"""Gradient-flow relaxation to segregated equilibria.

The parabolic system

    d_t u_i = Lap u_i - beta u_i sum_{j != i} u_j^2

is advanced with an implicit-explicit step: the reaction coefficient
c_i = beta sum_{j != i} (u_j^n)^2 is frozen at the current state, the
unsplit linear system

    (I - dt Lap_h + dt c_i) w_i = u_i^n

is solved for each component, and the update u_i^n + omega (w_i - u_i^n)
is applied with damping omega = 1/2 (the undamped update has a standing
period-two interface cycle at high amplitude; see _step_imex).  Fixed
points of this map are exactly the discrete elliptic solutions for any
dt and omega, so the equilibrium residual is limited by the solver
tolerance, not the step size.  Near a fixed point the step size itself
is a free parameter, and the driver inflates dt to burn off the slowest
relaxation modes, backing out of any step that raises the Lyapunov
functional.  Each solve minimizes
the quadratic

    E_h(w) + beta <c_i w, w> + (1/dt) <w - u_i^n, w - u_i^n>

over fields with the prescribed traces, which is the source of the
energy-dissipation accounting in the report.

The linear systems are solved in increment form (delta = u^{n+1} - u^n,
zero on pinned columns) by preconditioned CG; see HelmholtzSolver.
"""

import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid import (
    NEUMANN_LEFT,
    CylinderGrid,
    Field,
    StateK,
    dirichlet_energy,
    read_fld,
    write_fld,
)

FULL = "full"
GENERATOR = "generator"

IMEX = "imex"
EXPLICIT = "explicit"

# A stalled inner iteration is still accepted at this relative residual.
# Sloppy corrections cannot fake convergence (the stopping test re-evaluates
# the PDE residual directly), they only slow the outer flow, and the
# attainable floor rises with dt * max(c): ~4e-12 at amplitude e^4 but ~8e-8
# at e^6 under an inflated endgame step.
STALL_ACCEPT_REL = 1e-6


class SolverStallError(RuntimeError):
    """The inner linear solver hit its iteration cap.

    Carries the relative residual actually reached so the failure can be
    reported with a number attached.
    """

    def __init__(self, rel_residual: float, iterations: int):
        super().__init__(
            f"linear solver stalled: relative residual {rel_residual:.3e} "
            f"after {iterations} iterations"
        )
        self.rel_residual = rel_residual
        self.iterations = iterations


def explicit_cfl_limit(grid: CylinderGrid) -> float:
    """Largest stable forward-Euler step for the 5-point Laplacian."""
    return 1.0 / (2.0 * (1.0 / grid.hx**2 + 1.0 / grid.hy**2))


@dataclass
class FlowConfig:
    dt: float
    beta: float = 1.0
    scheme: str = IMEX
    residual_tol: float | None = None
    max_steps: int = 40000
    symmetrize_every: int = 1
    solver_tol: float = 1e-12
    solver_max_iter: int = 400
    positivity_floor_rel: float = 1e-11
    energy_every: int = 1
    checkpoint_every: int = 0
    # Endgame acceleration: once the step rate is three decades above the
    # stopping tolerance the implicit step's fixed point is all that matters,
    # so dt may grow by dt_growth up to dt * dt_max_factor.  Any energy
    # uptick at an inflated dt reverts the step and shrinks dt again, which
    # keeps the recorded trace nonincreasing; a linear-solver stall at an
    # inflated dt shrinks it too and caps further growth below the level
    # that stalled.  dt_growth = 1 disables.
    dt_growth: float = 1.5
    dt_max_factor: float = 100.0
    # Update damping; 1/2 zeroes the period-two multiplier of the lagged
    # component chase (see _step_imex) without moving any fixed point.
    relax_omega: float = 0.5

    def validate(self, grid: CylinderGrid) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.scheme not in (IMEX, EXPLICIT):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == EXPLICIT:
            limit = explicit_cfl_limit(grid)
            if self.dt > limit:
                raise ValueError(
                    f"explicit step dt={self.dt:g} exceeds the diffusive "
                    f"stability limit {limit:g} for this grid"
                )
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.solver_tol <= 0 or self.solver_max_iter < 1:
            raise ValueError("bad linear solver settings")
        if self.symmetrize_every < 0 or self.energy_every < 1:
            raise ValueError("bad cadence settings")
        if self.dt_growth < 1.0 or self.dt_max_factor < 1.0:
            raise ValueError("bad dt growth settings")
        if not 0.0 < self.relax_omega <= 1.0:
            raise ValueError("relax_omega must lie in (0, 1]")

    def effective_residual_tol(self, amplitude: float) -> float:
        """Rate tolerance for sup|u^{n+1}-u^n|/dt; default 1e-8 of the trace scale."""
        if self.residual_tol is not None:
            return self.residual_tol
        return 1e-8 * max(amplitude, 1e-30)


@dataclass
class RelaxReport:
    steps: int
    converged: bool
    final_residual: float
    residual_tol: float
    residual_contract: float
    sup_rate: float
    energy_initial: float
    energy_final: float
    max_energy_increase: float
    energy_trace: np.ndarray
    positivity_violations: int
    min_value: float
    ordering_min: float
    ordering_violations: int
    max_symmetry_drift: float
    solver_iterations_total: int
    solver_iterations_max: int
    wall_time: float


class HelmholtzSolver:
    """Linear solves for the implicit step on one grid.

    K = I - dt Lap_h is inverted exactly: a real FFT in y decouples the
    periodic modes, each leaving a constant-coefficient tridiagonal system in
    x that is solved with a Thomas factorization computed once per (grid, dt,
    bc).  The reaction-shifted operator A = K + dt c is then solved by CG in
    the row-weighted inner product (weight 1/2 on the mirror column, where
    the one-sided stencil makes the plain form nonsymmetric), preconditioned
    by D^{-1/2} K^{-1} D^{-1/2} with D = diag(1 + dt c).
    """

    def __init__(self, grid: CylinderGrid, bc_kind: str, dt: float):
        self.grid = grid
        self.bc_kind = bc_kind
        self.dt = float(dt)
        self.mirror = bc_kind == NEUMANN_LEFT
        self.j_lo = 0 if self.mirror else 1
        self.j_hi = grid.nx - 1
        self.n = self.j_hi - self.j_lo + 1
        self.hx2i = 1.0 / grid.hx**2
        self.hy2i = 1.0 / grid.hy**2
        m = np.arange(grid.ny // 2 + 1)
        mu = (2.0 - 2.0 * np.cos(2.0 * np.pi * m / grid.ny)) * self.hy2i
        self.diag = 1.0 + self.dt * mu + 2.0 * self.dt * self.hx2i
        self.e = -self.dt * self.hx2i
        self.sup0 = np.full_like(self.diag, 2.0 * self.e if self.mirror else self.e)
        self.cp, self.pv = kernels.thomas_factor(self.diag, self.e, self.sup0, self.n)
        w = np.zeros(grid.nx + 1)
        w[self.j_lo : self.j_hi + 1] = 1.0
        if self.mirror:
            w[0] = 0.5
        self.weights = w

    def _solve_with(self, cp, pv, rhs: np.ndarray) -> np.ndarray:
        spec = np.fft.rfft(rhs[self.j_lo : self.j_hi + 1], axis=1)
        spec = np.ascontiguousarray(spec.T)
        sol = np.empty_like(spec)
        kernels.thomas_solve(cp, pv, self.e, spec, sol)
        rows = np.fft.irfft(sol.T, n=self.grid.ny, axis=1)
        full = np.zeros((self.grid.nx + 1, self.grid.ny))
        full[self.j_lo : self.j_hi + 1] = rows
        return full

    def solve_screened(self, rhs: np.ndarray) -> np.ndarray:
        """K^{-1} rhs; full-shape in and out, pinned columns zero."""
        return self._solve_with(self.cp, self.pv, rhs)

    def solve_reaction(self, c: np.ndarray, rhs: np.ndarray, tol: float, max_iter: int):
        """Solve (I - dt Lap_h + dt c) x = rhs with x = 0 on pinned columns.

        Conjugate gradient preconditioned by symmetric diagonal scaling with
        1/sqrt(1 + dt c) around a screened solve whose tridiagonal systems
        carry the y-average of the scaled reaction as a per-column shift.
        The scaling absorbs the pointwise stiffness (dt c reaches 1e5 and
        beyond at the amplitudes of the exponential runs); the shift mops up
        what the average leaves.  At high amplitude the relative residual
        bottoms out near the rounding floor, so a stalled iteration is
        accepted once the best residual is orders below the outer contract;
        only a real stall raises.

        Returns (x, iterations).
        """
        w = self.weights
        sl = slice(self.j_lo, self.j_hi + 1)
        rhs_norm = math.sqrt(max(kernels.weighted_dot(rhs, rhs, w), 0.0))
        x = np.zeros_like(rhs)
        if rhs_norm == 0.0:
            return x, 0
        dinv = np.ones_like(rhs)
        dinv[sl] = 1.0 / np.sqrt(1.0 + self.dt * c[sl])
        chat = np.mean(c[sl] / (1.0 + self.dt * c[sl]), axis=1)
        cp, pv = kernels.thomas_factor_profile(
            self.diag, self.dt * chat, self.e, self.sup0)

        def precon(res):
            z = self._solve_with(cp, pv, res * dinv)
            z *= dinv
            return z

        r = rhs.copy()
        z = precon(r)
        p = z.copy()
        rz = kernels.weighted_dot(r, z, w)
        target = tol * rhs_norm
        ap = np.empty_like(rhs)
        best = x.copy()
        best_res = rhs_norm
        since_gain = 0
        it = 0
        for it in range(1, max_iter + 1):
            kernels.apply_helmholtz(
                p, c, self.dt, self.hx2i, self.hy2i, self.j_lo, self.j_hi,
                self.mirror, ap,
            )
            pap = kernels.weighted_dot(p, ap, w)
            if pap <= 0.0:
                break  # rounding broke definiteness; fall back to best iterate
            alpha = rz / pap
            x += alpha * p
            r -= alpha * ap
            res_norm = math.sqrt(max(kernels.weighted_dot(r, r, w), 0.0))
            if res_norm < best_res:
                if res_norm < 0.99 * best_res:
                    since_gain = 0
                best_res = res_norm
                best[...] = x
            if res_norm <= target:
                return x, it
            since_gain += 1
            if since_gain >= 40:
                break  # no 1% gain in 40 sweeps: at the attainable floor
            z = precon(r)
            rz_new = kernels.weighted_dot(r, z, w)
            p = z + (rz_new / rz) * p
            rz = rz_new
        if best_res <= STALL_ACCEPT_REL * rhs_norm:
            return best, it
        raise SolverStallError(best_res / rhs_norm, it)


def coupling_arrays(arrays, grid: CylinderGrid, beta: float, mode: str):
    """Reaction coefficients c_i = beta sum_{j != i} u_j^2, full shape.

    In generator mode a single stored component represents the whole k-tuple;
    the missing components are its y-shifts by multiples of pi, so the sum
    runs over the shifted copies of the one array.
    """
    if mode == GENERATOR:
        if len(arrays) != 1:
            raise ValueError("generator mode stores exactly one component")
        sq = arrays[0] * arrays[0]
        acc = np.zeros_like(sq)
        sn = grid.shift_nodes
        for g in range(1, grid.k):
            acc += np.roll(sq, g * sn, axis=1)
        return [beta * acc]
    if mode != FULL:
        raise ValueError(f"unknown coupling mode {mode!r}")
    sqs = [v * v for v in arrays]
    total = np.zeros_like(sqs[0])
    for s in sqs:
        total += s
    return [beta * (total - s) for s in sqs]


def flow_energy(state: StateK, beta: float, mode: str = FULL) -> float:
    """The Lyapunov functional of the flow over the whole domain.

    full:      sum_i int |grad u_i|^2 + beta sum_{i<j} int u_i^2 u_j^2
    generator: the same functional of the materialized k-tuple, computed
               from the stored generator alone (k equal gradient terms,
               k/2 copies of the shifted-overlap coupling).
    """
    g = state.grid
    if mode == FULL:
        return dirichlet_energy(state, g.nx, coupling_weight=beta)
    if mode != GENERATOR:
        raise ValueError(f"unknown coupling mode {mode!r}")
    if state.k != 1:
        raise ValueError("generator mode stores exactly one component")
    base = dirichlet_energy(state, g.nx, coupling_weight=0.0)
    f = state.components[0].values
    sq = f * f
    cols = np.zeros(g.nx + 1)
    sn = g.shift_nodes
    for gs in range(1, g.k):
        cols += np.sum(sq * np.roll(sq, gs * sn, axis=1), axis=1)
    cols *= g.hy
    coup = g.hx * float(np.sum(0.5 * (cols[:-1] + cols[1:])))
    return g.k * base + 0.5 * g.k * beta * coup


def pde_residual(state: StateK, beta: float, mode: str = FULL) -> float:
    """Sup norm of Lap_h u_i - c_i u_i over the non-pinned columns."""
    arrays = state.value_arrays()
    cs = coupling_arrays(arrays, state.grid, beta, mode)
    j_lo, j_hi = state.components[0].interior_row_range()
    sl = slice(j_lo, j_hi + 1)
    worst = 0.0
    lap = np.empty_like(arrays[0])
    g = state.grid
    for v, c in zip(arrays, cs):
        kernels.lap5(v, 1.0 / g.hx**2, 1.0 / g.hy**2, j_lo, j_hi,
                     state.bc_kind == NEUMANN_LEFT, lap)
        res = lap[sl] - c[sl] * v[sl]
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def _step_imex(arrays, cs, solver: HelmholtzSolver, cfg: FlowConfig):
    """One damped implicit update of every component from the same frozen
    coefficients.  The full update (omega = 1) locks into a standing
    period-two interface cycle at amplitudes around e^R because each
    component chases the other's lagged interface; omega = 1/2 places that
    mode's multiplier at zero while leaving every fixed point, and the
    exchange symmetry of the pair, untouched.
    """
    dt = solver.dt
    omega = cfg.relax_omega
    sl = slice(solver.j_lo, solver.j_hi + 1)
    lap = np.empty_like(arrays[0])
    new = []
    sup_delta = 0.0
    iters = 0
    for v, c in zip(arrays, cs):
        kernels.lap5(v, solver.hx2i, solver.hy2i, solver.j_lo, solver.j_hi,
                     solver.mirror, lap)
        rhs = np.zeros_like(v)
        rhs[sl] = dt * (lap[sl] - c[sl] * v[sl])
        delta, it = solver.solve_reaction(c, rhs, cfg.solver_tol, cfg.solver_max_iter)
        iters += it
        delta *= omega
        sup_delta = max(sup_delta, float(np.max(np.abs(delta))))
        new.append(v + delta)
    return new, sup_delta, iters


def _step_explicit(arrays, cs, grid, j_lo, j_hi, mirror, dt):
    sl = slice(j_lo, j_hi + 1)
    hx2i, hy2i = 1.0 / grid.hx**2, 1.0 / grid.hy**2
    lap = np.empty_like(arrays[0])
    new = []
    sup_delta = 0.0
    for v, c in zip(arrays, cs):
        if dt * float(np.max(c)) > 1.0:
            raise ValueError("explicit step dt * max reaction exceeds 1")
        kernels.lap5(v, hx2i, hy2i, j_lo, j_hi, mirror, lap)
        out = v.copy()
        step = dt * (lap[sl] - c[sl] * v[sl])
        out[sl] += step
        sup_delta = max(sup_delta, float(np.max(np.abs(step))))
        new.append(out)
    return new, sup_delta, 0


def relax_to_equilibrium(state: StateK, cfg: FlowConfig, group=None,
                         mode: str = FULL, ordering_mask=None,
                         checkpoint_dir=None) -> tuple:
    """Run the flow until the elliptic residual drops below tolerance.

    group, when given, is a SymmetryGroup the state is projected onto every
    symmetrize_every steps; the pre-projection defect is recorded so drift
    away from the symmetric subspace is observable.  ordering_mask is an
    optional boolean y-mask: for two-component states the minimum of
    (u_1 - u_2) over the masked nodes is tracked each step.

    Returns (final_state, RelaxReport).
    """
    cfg.validate(state.grid)
    grid = state.grid
    mirror = state.bc_kind == NEUMANN_LEFT
    j_lo, j_hi = state.components[0].interior_row_range()
    amp = state.max_abs()
    tol = cfg.effective_residual_tol(amp)
    contract = tol * (1.0 + cfg.beta * amp * amp)
    floor = cfg.positivity_floor_rel * max(amp, 1e-30)

    arrays = [np.array(v) for v in state.value_arrays()]

    def project(arrs):
        # averaging is for the unknowns; pinned rows are boundary data and
        # must survive bit for bit (reflected samples differ in the last ulp)
        out = group.orbit_average(arrs)
        for o, v in zip(out, arrs):
            o[:j_lo] = v[:j_lo]
            o[j_hi + 1:] = v[j_hi + 1:]
        return out

    if group is not None and cfg.symmetrize_every > 0:
        arrays = project(arrays)

    solver = None
    cur_dt = cfg.dt
    dt_cap = cfg.dt * cfg.dt_max_factor
    if cfg.scheme == IMEX:
        solver = HelmholtzSolver(grid, state.bc_kind, cur_dt)

    if ordering_mask is not None and len(arrays) != 2:
        raise ValueError("ordering_mask applies to two-component states")

    def current_state(t):
        return state.with_values(arrays, t)

    t = state.t
    t0_wall = time.perf_counter()
    energy0 = flow_energy(current_state(t), cfg.beta, mode)
    min_value_initial = min(float(np.min(v)) for v in arrays)

    # already at equilibrium (a restart, typically): report without stepping
    res0 = pde_residual(current_state(t), cfg.beta, mode)
    if res0 <= contract:
        return current_state(t), RelaxReport(
            steps=0,
            converged=True,
            final_residual=res0,
            residual_tol=tol,
            residual_contract=contract,
            sup_rate=0.0,
            energy_initial=energy0,
            energy_final=energy0,
            max_energy_increase=0.0,
            energy_trace=np.asarray([(t, energy0)]),
            positivity_violations=0,
            min_value=min_value_initial,
            ordering_min=math.inf,
            ordering_violations=0,
            max_symmetry_drift=0.0,
            solver_iterations_total=0,
            solver_iterations_max=0,
            wall_time=time.perf_counter() - t0_wall,
        )

    energy_prev = energy0
    energy_rows = [(t, energy0)]
    max_increase = 0.0
    pos_violations = 0
    min_value = min_value_initial
    order_min = math.inf
    order_violations = 0
    max_drift = 0.0
    it_total = 0
    it_max = 0
    accepted = 0
    steps_done = 0
    converged = False
    sup_rate = math.inf
    final_res = math.nan
    next_true_check = 0
    since_grow = 0
    grow_gate = 1e3 * tol

    for _attempt in range(1, cfg.max_steps + 1):
        prev = None
        cs = coupling_arrays(arrays, grid, cfg.beta, mode)
        if cfg.scheme == IMEX:
            if cur_dt > cfg.dt:
                prev = [a.copy() for a in arrays]
            try:
                arrays, sup_delta, iters = _step_imex(arrays, cs, solver, cfg)
            except SolverStallError:
                if cur_dt <= cfg.dt:
                    raise
                # the inflated system outran the preconditioner: retreat, and
                # never regrow past the last dt level that solved cleanly
                dt_cap = max(cfg.dt, cur_dt / cfg.dt_growth)
                cur_dt = max(cfg.dt, cur_dt / 4.0)
                solver = HelmholtzSolver(grid, state.bc_kind, cur_dt)
                since_grow = 0
                continue
            it_total += iters
            it_max = max(it_max, iters)
        else:
            arrays, sup_delta, _ = _step_explicit(
                arrays, cs, grid, j_lo, j_hi, mirror, cfg.dt
            )

        drift = 0.0
        if group is not None and cfg.symmetrize_every > 0 and (accepted + 1) % cfg.symmetrize_every == 0:
            avg = project(arrays)
            drift = max(
                float(np.max(np.abs(a - s))) for a, s in zip(arrays, avg)
            )
            arrays = avg

        energy = flow_energy(current_state(t), cfg.beta, mode)
        if prev is not None and energy > energy_prev:
            # the inflated step raised the Lyapunov functional: back out
            arrays = prev
            cur_dt = max(cfg.dt, cur_dt / 4.0)
            solver = HelmholtzSolver(grid, state.bc_kind, cur_dt)
            since_grow = 0
            continue

        t += cur_dt
        accepted += 1
        steps_done = accepted
        max_drift = max(max_drift, drift)
        max_increase = max(max_increase, energy - energy_prev)
        energy_prev = energy
        if accepted % cfg.energy_every == 0:
            energy_rows.append((t, energy))

        mn = min(float(np.min(v)) for v in arrays)
        min_value = min(min_value, mn)
        if mn < -floor:
            pos_violations += int(sum(int(np.sum(v < -floor)) for v in arrays))

        if ordering_mask is not None:
            diff = arrays[0][:, ordering_mask] - arrays[1][:, ordering_mask]
            margin = float(np.min(diff))
            order_min = min(order_min, margin)
            if margin < -1e-8:
                order_violations += 1

        if checkpoint_dir is not None and cfg.checkpoint_every > 0 and accepted % cfg.checkpoint_every == 0:
            save_checkpoint(checkpoint_dir, current_state(t), accepted)

        sup_rate = sup_delta / cur_dt
        if sup_rate <= tol and accepted >= next_true_check:
            final_res = pde_residual(current_state(t), cfg.beta, mode)
            cur_amp = max(float(np.max(np.abs(v))) for v in arrays)
            contract = tol * (1.0 + cfg.beta * cur_amp * cur_amp)
            if final_res <= contract:
                converged = True
                break
            next_true_check = accepted + 25

        since_grow += 1
        if (cfg.scheme == IMEX and cfg.dt_growth > 1.0 and since_grow >= 5
                and sup_rate <= grow_gate and cur_dt < dt_cap):
            cur_dt = min(dt_cap, cur_dt * cfg.dt_growth)
            solver = HelmholtzSolver(grid, state.bc_kind, cur_dt)
            since_grow = 0

    if math.isnan(final_res):
        final_res = pde_residual(current_state(t), cfg.beta, mode)
        cur_amp = max(float(np.max(np.abs(v))) for v in arrays)
        contract = tol * (1.0 + cfg.beta * cur_amp * cur_amp)

    final = current_state(t)
    report = RelaxReport(
        steps=steps_done,
        converged=converged,
        final_residual=final_res,
        residual_tol=tol,
        residual_contract=contract,
        sup_rate=sup_rate,
        energy_initial=energy0,
        energy_final=energy_prev,
        max_energy_increase=max_increase,
        energy_trace=np.asarray(energy_rows),
        positivity_violations=pos_violations,
        min_value=min_value,
        ordering_min=order_min,
        ordering_violations=order_violations,
        max_symmetry_drift=max_drift,
        solver_iterations_total=it_total,
        solver_iterations_max=it_max,
        wall_time=time.perf_counter() - t0_wall,
    )
    return final, report


# ---------------------------------------------------------------------------
# exact rescaling and checkpoints
# ---------------------------------------------------------------------------


def rescale_solution(state: StateK, lam: int) -> StateK:
    """The scaling u -> lam * u(lam x, lam y), exact on commensurate grids.

    lam must be a positive integer dividing nx; non-integer factors would
    need interpolation, which is not provided, so they are rejected.  The
    result lives on [a/lam, b/lam] with the period reduced by lam: the x
    spacing is unchanged (stride-lam sampling of existing nodes) while the y
    nodes map one-to-one onto the shorter circle.  Time scales parabolically.
    """
    if int(lam) != lam or lam < 1:
        raise ValueError("rescale factor must be a positive integer")
    lam = int(lam)
    g = state.grid
    if g.nx % lam != 0:
        raise ValueError(f"nx={g.nx} not divisible by rescale factor {lam}")
    new_grid = CylinderGrid(
        g.a / lam, g.b / lam, g.k, g.nx // lam, g.ny,
        period_scale=g.period_scale * lam,
    )
    j_idx = lam * np.arange(new_grid.nx + 1)
    comps = []
    for f in state.components:
        vals = lam * f.values[j_idx, :]
        comps.append(Field(new_grid, vals, f.bc_kind))
    return StateK(new_grid, tuple(comps), t=state.t / (lam * lam))


def save_checkpoint(directory, state: StateK, step: int) -> None:
    """Write the components and a small progress file into directory."""
    os.makedirs(directory, exist_ok=True)
    for i, f in enumerate(state.components):
        write_fld(os.path.join(directory, f"comp{i}.fld"), f, i, state.t)
    meta = {"step": int(step), "t": float(state.t), "n_components": state.k}
    with open(os.path.join(directory, "progress.json"), "w") as fh:
        json.dump(meta, fh)


def load_checkpoint(directory) -> tuple:
    """Read a checkpoint back; returns (StateK, step)."""
    with open(os.path.join(directory, "progress.json")) as fh:
        meta = json.load(fh)
    comps = []
    grid = None
    for i in range(int(meta["n_components"])):
        fld, _, t = read_fld(os.path.join(directory, f"comp{i}.fld"))
        comps.append(fld)
        grid = fld.grid
    return StateK(grid, tuple(comps), t=float(meta["t"])), int(meta["step"])
