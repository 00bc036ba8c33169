"""Batch scenario runner: relax, diagnose, audit, persist, report.

Four pipelines plus the spectral sweep:

  cosh      split cosh-model data on (0, R) x S with a Neumann wall at 0;
            frequency anchored at the wall.
  exp       split traveling-model data on (-R, R) x S with a Neumann wall
            at -R; frequency anchored below the wall.
  kcomp     k >= 3 shifted copies of a single generator on exp geometry.
  blowdown  normalized shift family of a saved state fitted against the
            pure exponential mode of matching degree.
  lmin      coupled-circle eigenvalue sweep (see spectra).

Every run owns its output directory exclusively (lock file), writes
snapshot fields and per-R diagnostics CSVs, and finishes with a write-once
manifest plus a verdict file carrying one pass/fail line per contract
point.  Snapshots and CSVs are bit-reproducible; the manifest's content
hash covers exactly those files, never wall-clock times.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import models, symmetry
from .grid import CylinderGrid, Field, StateK, NEUMANN_LEFT
from .almgren import (
    AlmgrenSeries,
    VariantPreconditionError,
    audit_monotonicity,
    compute_series,
    doubling_envelope,
    growth_fit,
    pohozaev_audit,
    sym_variant,
    unb_variant,
    write_series_csv,
)
from .relax import (
    FlowConfig,
    flow_energy,
    load_checkpoint,
    relax_to_equilibrium,
    save_checkpoint,
)
from .spectra import lambda_sweep, write_lmin_csv

SCENARIOS = ("cosh", "exp", "kcomp", "blowdown", "lmin")

# fit window for growth and terminal-frequency readings, in units of R
WINDOW_LO = 0.5
WINDOW_HI = 0.85

TERMINAL_BAND_PAIR = (0.97, 1.03)   # two-component terminal frequency
TERMINAL_BAND_K = (0.95, 1.05)      # k-component terminal frequency
BARRIER_SLACK_REL = 1e-6            # u >= model+ minus this times max |model|
ORDERING_SLACK = 1e-8               # min of u - v over the positive set
ENERGY_SLACK_REL = 1e-12            # admissible energy-trace uptick
DRIFT_SLACK_REL = 1e-13             # symmetry defect per step over amplitude
GROWTH_FLATNESS_MAX = 0.05
GROWTH_STABILITY = 0.05             # relative drift of the estimate across R
DEGENERACY_REL = 1e-8               # interior collapse threshold vs trace
BLOWDOWN_INTEGER_TOL = 0.2
MANIFEST_NAME = "manifest.json"
LOCK_NAME = ".lock"


class SegflowConfigError(Exception):
    """Bad experiment configuration; maps to CLI exit code 2."""


class GeometryError(RuntimeError):
    """Boundary data does not match the scenario's model at its ends."""


class FitRefusedError(RuntimeError):
    """Blow-down terminal frequency is not near a positive integer."""


# ---------------------------------------------------------------------------
# experiment specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str
    k: int = 2
    r_schedule: tuple = ()
    density_x: float = 64.0
    ny: int = 128
    dt: float = 0.05
    tol: float | None = None
    beta: float = 1.0
    out_dir: str = "run"
    resume: str | None = None
    plots: bool = False
    max_steps: int = 200000

    def validate(self) -> None:
        if self.scenario not in ("cosh", "exp", "kcomp"):
            raise SegflowConfigError(
                f"scenario {self.scenario!r} is not one of cosh, exp, kcomp"
            )
        if self.scenario == "kcomp":
            if self.k < 3:
                raise SegflowConfigError("kcomp needs k >= 3")
        elif self.k != 2:
            raise SegflowConfigError(
                f"{self.scenario} is a two-component scenario; got k={self.k}"
            )
        sched = tuple(float(r) for r in self.r_schedule)
        if any(not math.isfinite(r) or r <= 0 for r in sched):
            raise SegflowConfigError("R schedule entries must be finite and positive")
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise SegflowConfigError("R schedule must be strictly increasing")
        if not (self.density_x > 0 and math.isfinite(self.density_x)):
            raise SegflowConfigError("density_x must be positive")
        if self.ny < 4 or self.ny % (2 * self.k) != 0:
            raise SegflowConfigError(
                f"ny={self.ny} must be >= 4 and divisible by 2k={2 * self.k}"
            )
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise SegflowConfigError("dt must be positive")
        if self.tol is not None and not self.tol > 0:
            raise SegflowConfigError("tol must be positive when given")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise SegflowConfigError("beta must be positive")
        if self.max_steps < 1:
            raise SegflowConfigError("max_steps must be at least 1")
        for r in sched:
            self.nx_for(r)

    def nx_for(self, R: float) -> int:
        """Column count for one schedule entry; the density must tile the
        domain exactly so that schedule grids stay x-commensurate."""
        length = R if self.scenario == "cosh" else 2.0 * R
        nx_exact = self.density_x * length
        nx = int(round(nx_exact))
        if abs(nx_exact - nx) > 1e-9 * max(1.0, nx_exact):
            raise SegflowConfigError(
                f"density {self.density_x:g} does not tile R={R:g} "
                f"(nx = {nx_exact:g} is not an integer)"
            )
        if self.scenario != "cosh" and nx % 2 != 0:
            raise SegflowConfigError(
                f"R={R:g} needs an even column count so x=0 is a node; got {nx}"
            )
        if nx < 8:
            raise SegflowConfigError(f"R={R:g} yields only {nx} columns; need >= 8")
        return nx

    def flow_config(self) -> FlowConfig:
        return FlowConfig(
            dt=self.dt,
            beta=self.beta,
            residual_tol=self.tol,
            max_steps=self.max_steps,
            checkpoint_every=1000,
        )

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "k": self.k,
            "R": [float(r) for r in self.r_schedule],
            "density_x": float(self.density_x),
            "ny": int(self.ny),
            "dt": float(self.dt),
            "tol": None if self.tol is None else float(self.tol),
            "beta": float(self.beta),
            "out": self.out_dir,
            "resume": self.resume,
            "plots": bool(self.plots),
            "max_steps": int(self.max_steps),
        }


@dataclass
class Verdict:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}  {self.detail}"


@dataclass
class RunRecord:
    """Everything one schedule entry produced; states stay in memory for
    cross-R checks and are also persisted as .fld snapshots."""

    r: float
    nx: int
    converged: bool
    flags: list
    report: object
    series: AlmgrenSeries | None
    series_kind: str           # "sym" or "unb"
    state: StateK              # evolved representation (generator for kcomp)
    full_state: StateK         # k-tuple view used for diagnostics
    metrics: dict
    files: dict
    wall_seconds: float

    def row(self) -> dict:
        rep = self.report
        out = {
            "R": self.r,
            "nx": self.nx,
            "ny": self.state.grid.ny,
            "converged": bool(self.converged),
            "failed": not bool(self.converged),
            "flags": list(self.flags),
            "steps": int(rep.steps),
            "final_residual": float(rep.final_residual),
            "residual_contract": float(rep.residual_contract),
            "energy_initial": float(rep.energy_initial),
            "energy_final": float(rep.energy_final),
            "max_energy_increase": float(rep.max_energy_increase),
            "positivity_violations": int(rep.positivity_violations),
            "ordering_min": float(rep.ordering_min),
            "max_symmetry_drift": float(rep.max_symmetry_drift),
            "solver_iterations_max": int(rep.solver_iterations_max),
            "series_kind": self.series_kind,
            "files": dict(self.files),
            "wall_seconds": float(self.wall_seconds),
        }
        out.update(self.metrics)
        return out


@dataclass
class RunManifest:
    spec: dict
    runs: list
    verdicts: list
    hashed_files: dict = field(default_factory=dict)
    content_hash: str = ""
    wall_clock_seconds: float = 0.0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "format": "segflow-manifest-1",
            "spec": self.spec,
            "runs": self.runs,
            "verdicts": [
                {"name": v.name, "passed": bool(v.passed), "detail": v.detail}
                for v in self.verdicts
            ],
            "hashed_files": self.hashed_files,
            "content_hash": self.content_hash,
            "wall_clock_seconds": self.wall_clock_seconds,
            "notes": self.notes,
        }

    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)


def exit_code(manifest: RunManifest) -> int:
    return 0 if manifest.all_passed() else 1


# ---------------------------------------------------------------------------
# run directory ownership
# ---------------------------------------------------------------------------


def _acquire_run_dir(out_dir: str) -> str:
    """Create and lock the output directory before touching any state.

    Unwritable locations and already-used directories are configuration
    errors; nothing is mutated in either case.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise SegflowConfigError(f"cannot create output directory: {exc}") from exc
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    if os.path.exists(manifest_path):
        raise SegflowConfigError(
            f"{manifest_path} already exists; manifests are write-once"
        )
    lock_path = os.path.join(out_dir, LOCK_NAME)
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise SegflowConfigError(
            f"{out_dir} is locked by another run (remove {LOCK_NAME} if stale)"
        ) from None
    except OSError as exc:
        raise SegflowConfigError(f"output directory is not writable: {exc}") from exc
    os.write(fd, f"{os.getpid()}\n".encode())
    os.close(fd)
    return lock_path


def _hash_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _content_hash(out_dir: str, rel_paths) -> tuple:
    digests = {p: _hash_file(os.path.join(out_dir, p)) for p in sorted(rel_paths)}
    rollup = hashlib.sha256()
    for p, d in digests.items():
        rollup.update(f"{p}:{d}\n".encode())
    return digests, rollup.hexdigest()


# ---------------------------------------------------------------------------
# scenario geometry
# ---------------------------------------------------------------------------


@dataclass
class _Setup:
    grid: CylinderGrid
    model: object
    state: StateK
    group: object
    mode: str
    ordering_mask: object
    variant_kind: str          # "sym" or "unb"


def _reference_state(spec: ExperimentSpec, grid: CylinderGrid, model) -> StateK:
    if spec.scenario == "kcomp":
        return models.sample_split_k(model, grid, bc_kind=NEUMANN_LEFT)
    return models.sample_split(model, grid, bc_kind=NEUMANN_LEFT)


def _setup_for(spec: ExperimentSpec, R: float) -> _Setup:
    nx = spec.nx_for(R)
    if spec.scenario == "cosh":
        grid = CylinderGrid(0.0, R, 2, nx, spec.ny)
        model = models.phi()
    else:
        grid = CylinderGrid(-R, R, spec.k, nx, spec.ny)
        model = models.phi_r(R)
    ref = _reference_state(spec, grid, model)
    if spec.scenario == "kcomp":
        state = StateK(grid, (ref.components[0],))
        group = symmetry.generator_group(grid)
        mode = "generator"
        mask = None
    else:
        state = ref
        group = symmetry.pair_group(grid)
        mode = "full"
        mask = np.sin(grid.y()) > 1e-12   # open positive set of the model
    variant = "sym" if spec.scenario == "cosh" else "unb"
    return _Setup(grid, model, state, group, mode, mask, variant)


def assert_geometry(spec: ExperimentSpec, state: StateK, model) -> None:
    """Dirichlet traces must equal the scenario model at the held end,
    bit for bit, before any flow step touches the state."""
    grid = state.grid
    if state.bc_kind != NEUMANN_LEFT:
        raise GeometryError("scenario states carry a Neumann wall on the left")
    ref = _reference_state(spec, grid, model)
    for i, comp in enumerate(state.components):
        want = ref.components[i].right_trace
        got = comp.right_trace
        if not np.array_equal(want, got):
            worst = float(np.max(np.abs(want - got)))
            raise GeometryError(
                f"component {i} right trace deviates from the model "
                f"(max |diff| = {worst:.3e})"
            )


def _materialize_k(gen_state: StateK) -> StateK:
    """k-tuple view of a generator state: component i is the generator
    shifted i cells; exact by construction."""
    grid = gen_state.grid
    u1 = gen_state.components[0].values
    comps = tuple(
        Field(grid, np.roll(u1, i * grid.shift_nodes, axis=1), gen_state.bc_kind)
        for i in range(grid.k)
    )
    return StateK(grid, comps, t=gen_state.t)


# ---------------------------------------------------------------------------
# one schedule entry
# ---------------------------------------------------------------------------


def _r_tag(R: float) -> str:
    return f"R{R:g}"


def _load_resume_state(spec: ExperimentSpec, setup: _Setup, tag: str):
    ck_dir = os.path.join(spec.resume, tag, "checkpoint")
    if not os.path.exists(os.path.join(ck_dir, "progress.json")):
        return None
    state, step = load_checkpoint(ck_dir)
    g, h = state.grid, setup.grid
    same = (
        g.nx == h.nx and g.ny == h.ny and g.k == h.k
        and math.isclose(g.a, h.a, rel_tol=0.0, abs_tol=1e-12)
        and math.isclose(g.b, h.b, rel_tol=0.0, abs_tol=1e-12)
    )
    if not same or state.k != setup.state.k:
        raise SegflowConfigError(
            f"resume checkpoint in {ck_dir} was made on a different grid"
        )
    return state


def _window(R: float) -> tuple:
    return (WINDOW_LO * R, WINDOW_HI * R)


def _window_indices(series: AlmgrenSeries, window: tuple) -> np.ndarray:
    lo, hi = window
    mask = series.audited & (series.r >= lo - 1e-12) & (series.r <= hi + 1e-12)
    return np.nonzero(mask)[0]


def _run_single(spec: ExperimentSpec, R: float, out_dir: str) -> RunRecord:
    t0 = time.perf_counter()
    tag = _r_tag(R)
    setup = _setup_for(spec, R)
    flags: list = []

    state = setup.state
    if spec.resume:
        resumed = _load_resume_state(spec, setup, tag)
        if resumed is not None:
            state = resumed
            flags.append("resumed")
    assert_geometry(spec, state, setup.model)

    r_dir = os.path.join(out_dir, tag)
    os.makedirs(r_dir, exist_ok=True)
    cfg = spec.flow_config()
    final, report = relax_to_equilibrium(
        state,
        cfg,
        group=setup.group,
        mode=setup.mode,
        ordering_mask=setup.ordering_mask,
        checkpoint_dir=os.path.join(r_dir, "checkpoint"),
    )
    if not report.converged:
        flags.append("relax_nonconverged")

    full = _materialize_k(final) if spec.scenario == "kcomp" else final
    metrics: dict = {}

    if spec.scenario == "kcomp":
        # interior collapse check: the Dirichlet row always carries the trace,
        # so measure the generator away from the right boundary layer
        trace_max = float(np.max(np.abs(final.components[0].right_trace)))
        interior = final.components[0].values[: int(0.9 * setup.grid.nx), :]
        interior_max = float(np.max(np.abs(interior)))
        metrics["generator_interior_max"] = interior_max
        metrics["trace_max"] = trace_max
        if interior_max < DEGENERACY_REL * trace_max:
            flags.append("degenerate_generator")

    series = None
    series_kind = setup.variant_kind
    if setup.variant_kind == "sym":
        series = compute_series(full, sym_variant(setup.grid.a), beta=spec.beta)
    else:
        try:
            series = compute_series(full, unb_variant(setup.grid.a), beta=spec.beta)
        except VariantPreconditionError as exc:
            # left tail carries too much mass for the below-anchor reading;
            # report wall diagnostics instead and say so
            flags.append("unb_anchor_rejected")
            metrics["decay_ratio"] = float(getattr(exc, "ratio", math.nan))
            series = compute_series(full, sym_variant(setup.grid.a), beta=spec.beta)
            series_kind = "sym"

    window = _window(R)
    idx = _window_indices(series, window)
    audit = audit_monotonicity(series)
    metrics["monotone_N"] = not audit.violations["N"]
    metrics["monotone_frakN"] = not audit.violations["frakN"]
    metrics["monotone_H"] = not audit.violations["H"]
    metrics["max_N_audited"] = float(np.max(series.N[series.audited]))
    poho = pohozaev_audit(series)
    metrics["pohozaev_deviation"] = float(poho.constancy_deviation)

    if idx.size:
        metrics["terminal_N"] = float(series.N[idx[-1]])
        n_win = series.N[idx]
        try:
            env = doubling_envelope(
                series, float(np.min(n_win)), float(np.max(n_win)), window
            )
            metrics["doubling_ok"] = bool(env.passed())
        except ValueError:
            flags.append("doubling_window_short")
    else:
        flags.append("fit_window_empty")
    try:
        fit = growth_fit(series, 1.0, window)
        metrics["growth_estimate"] = float(fit.limit_estimate)
        metrics["growth_flatness"] = float(fit.plateau_flatness)
    except ValueError:
        flags.append("growth_window_short")

    # energies: half-domain value and its full-cylinder double
    j_half = flow_energy(final, spec.beta, setup.mode)
    metrics["energy_half"] = float(j_half)
    metrics["energy_full"] = float(2.0 * j_half)
    metrics["amplitude"] = float(final.max_abs())

    if spec.scenario != "cosh":
        x = setup.grid.x()
        j_zero = int(np.argmin(np.abs(x)))
        h_mid = float(series.H[j_zero])
        metrics["H_left"] = float(series.H[0])
        metrics["H_left_over_mid"] = float(series.H[0] / h_mid) if h_mid > 0 else math.inf
        metrics["E2_at_zero"] = float(series.E2[j_zero])

    if spec.scenario != "kcomp":
        mvals = setup.model.evaluate(*setup.grid.mesh())
        model_max = float(np.max(np.abs(mvals)))
        u = full.components[0].values
        v = full.components[1].values
        metrics["model_max"] = model_max
        metrics["barrier_min"] = float(np.min(u - np.maximum(mvals, 0.0)))
        pos = mvals > 0.0
        metrics["ordering_min_final"] = float(np.min((u - v)[pos]))

    files = {}
    state_dir = os.path.join(r_dir, "state")
    save_checkpoint(state_dir, final, report.steps)
    files["state"] = [
        os.path.join(tag, "state", f"comp{i}.fld") for i in range(final.k)
    ]
    files["progress"] = os.path.join(tag, "state", "progress.json")
    csv_path = os.path.join(r_dir, "almgren.csv")
    write_series_csv(csv_path, series)
    files["series"] = os.path.join(tag, "almgren.csv")

    return RunRecord(
        r=R,
        nx=setup.grid.nx,
        converged=report.converged,
        flags=flags,
        report=report,
        series=series,
        series_kind=series_kind,
        state=final,
        full_state=full,
        metrics=metrics,
        files=files,
        wall_seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return "n/a"
    return f"{x:.6g}"


def _flow_verdicts(recs: list) -> list:
    verdicts = []
    bad = [r.r for r in recs if not r.converged]
    verdicts.append(Verdict(
        "relaxation_converged_all_R",
        not bad,
        "all schedule entries reached the elliptic contract" if not bad
        else "failed at R = " + ", ".join(f"{r:g}" for r in bad),
    ))
    worst_rel = 0.0
    for r in recs:
        scale = max(abs(r.report.energy_initial), 1e-300)
        worst_rel = max(worst_rel, r.report.max_energy_increase / scale)
    verdicts.append(Verdict(
        "energy_trace_nonincreasing",
        worst_rel <= ENERGY_SLACK_REL,
        f"worst uptick {worst_rel:.3e} of initial energy (allow {ENERGY_SLACK_REL:g})",
    ))
    pos = sum(r.report.positivity_violations for r in recs)
    verdicts.append(Verdict(
        "positivity_preserved",
        pos == 0,
        f"{pos} clipped nodes across the schedule",
    ))
    worst_drift = 0.0
    for r in recs:
        amp = max(r.state.max_abs(), 1e-300)
        worst_drift = max(worst_drift, r.report.max_symmetry_drift / amp)
    verdicts.append(Verdict(
        "symmetry_drift_per_step",
        worst_drift <= DRIFT_SLACK_REL,
        f"worst defect {worst_drift:.3e} of amplitude (allow {DRIFT_SLACK_REL:g})",
    ))
    return verdicts


def _monotone_verdicts(recs: list, include_h: bool) -> list:
    conv = [r for r in recs if r.converged]
    names = [("frequency_monotone", "monotone_N"),
             ("modified_frequency_monotone", "monotone_frakN")]
    if include_h:
        names.append(("section_mass_monotone", "monotone_H"))
    out = []
    for label, key in names:
        bad = [r.r for r in conv if not r.metrics.get(key, False)]
        out.append(Verdict(
            label,
            bool(conv) and not bad,
            ("clean on every converged state" if conv and not bad else
             "violations at R = " + ", ".join(f"{r:g}" for r in bad) if bad
             else "no converged states to audit"),
        ))
    return out


def _doubling_verdict(recs: list) -> Verdict:
    conv = [r for r in recs if r.converged]
    bad = [r.r for r in conv if not r.metrics.get("doubling_ok", False)]
    return Verdict(
        "doubling_envelope_on_window",
        bool(conv) and not bad,
        "two-sided mass envelopes hold on the fit window" if conv and not bad
        else ("broken at R = " + ", ".join(f"{r:g}" for r in bad) if bad
              else "no converged states to audit"),
    )


def _terminal_verdict(recs: list, band: tuple, unb_only: bool) -> Verdict:
    pool = [r for r in recs if r.converged]
    if unb_only:
        pool = [r for r in pool if r.series_kind == "unb"]
    if not pool:
        return Verdict("terminal_frequency_near_one", False,
                       "no admissible converged state")
    last = pool[-1]
    n = last.metrics.get("terminal_N")
    ok = n is not None and band[0] <= n <= band[1]
    return Verdict(
        "terminal_frequency_near_one",
        ok,
        f"N = {_fmt(n)} on the fit window at R = {last.r:g} "
        f"(band [{band[0]:g}, {band[1]:g}])",
    )


def _growth_verdict(recs: list) -> Verdict:
    conv = [r for r in recs if r.converged and "growth_estimate" in r.metrics]
    if not conv:
        return Verdict("growth_limit_positive_stable", False,
                       "no converged state carries a growth fit")
    last = conv[-1]
    est = last.metrics["growth_estimate"]
    flat = last.metrics["growth_flatness"]
    ok = est > 0 and flat <= GROWTH_FLATNESS_MAX
    detail = f"estimate {est:.6g}, flatness {flat:.3g} at R = {last.r:g}"
    if len(conv) >= 2:
        prev = conv[-2].metrics["growth_estimate"]
        drift = abs(est - prev) / max(abs(est), 1e-300)
        ok = ok and drift <= GROWTH_STABILITY
        detail += f", drift {drift:.3g} from R = {conv[-2].r:g}"
    return Verdict("growth_limit_positive_stable", ok, detail)


def _barrier_verdicts(recs: list) -> list:
    conv = [r for r in recs if r.converged]
    out = []
    worst_bar, worst_ord, allow = 0.0, 0.0, 0.0
    for r in conv:
        allow = max(allow, BARRIER_SLACK_REL * r.metrics["model_max"])
        worst_bar = min(worst_bar, r.metrics["barrier_min"])
        worst_ord = min(worst_ord, r.metrics["ordering_min_final"])
    out.append(Verdict(
        "barrier_from_below",
        bool(conv) and worst_bar >= -allow,
        f"min of u - model+ is {worst_bar:.3e} (allow {-allow:.3e})"
        if conv else "no converged states",
    ))
    out.append(Verdict(
        "ordering_on_positive_set",
        bool(conv) and worst_ord >= -ORDERING_SLACK,
        f"min of u - v over the positive set is {worst_ord:.3e} "
        f"(allow {-ORDERING_SLACK:g})" if conv else "no converged states",
    ))
    return out


def _cosh_verdicts(spec: ExperimentSpec, recs: list) -> list:
    verdicts = _flow_verdicts(recs)
    verdicts += _monotone_verdicts(recs, include_h=False)
    verdicts.append(_doubling_verdict(recs))

    conv = [r for r in recs if r.converged]
    worst_n = max((r.metrics["max_N_audited"] for r in conv), default=math.nan)
    verdicts.append(Verdict(
        "frequency_below_two",
        bool(conv) and worst_n <= 2.0 + 1e-3,
        f"max N over audited columns {_fmt(worst_n)} (allow 2.001)",
    ))
    bad_energy = [
        r.r for r in conv
        if r.metrics["energy_full"] > math.pi * math.sinh(2.0 * r.r)
    ]
    verdicts.append(Verdict(
        "energy_below_split_model",
        bool(conv) and not bad_energy,
        "doubled half-domain energy under pi*sinh(2R) for every converged R"
        if conv and not bad_energy else
        ("exceeded at R = " + ", ".join(f"{r:g}" for r in bad_energy)
         if bad_energy else "no converged states"),
    ))
    verdicts.append(_terminal_verdict(recs, TERMINAL_BAND_PAIR, unb_only=False))
    verdicts.append(_growth_verdict(recs))
    verdicts += _barrier_verdicts(recs)
    verdicts.append(_cauchy_verdict(spec, recs))
    return verdicts


def _cauchy_verdict(spec: ExperimentSpec, recs: list) -> Verdict:
    """Sup-norm differences of consecutive equilibria on the common window
    [0, R_min/2]; the sequence must not grow."""
    conv = [r for r in recs if r.converged]
    if len(conv) < 3:
        return Verdict("equilibria_cauchy_decreasing", True,
                       "fewer than three converged entries; nothing to compare")
    r_min = conv[0].r
    hx = conv[0].state.grid.hx
    for r in conv[1:]:
        if abs(r.state.grid.hx - hx) > 1e-12 * hx:
            return Verdict("equilibria_cauchy_decreasing", False,
                           "schedule grids are not x-commensurate")
    n_cols = int(round((0.5 * r_min) / hx)) + 1
    diffs = []
    for a, b in zip(conv, conv[1:]):
        d = 0.0
        for fa, fb in zip(a.full_state.components, b.full_state.components):
            d = max(d, float(np.max(np.abs(
                fa.values[:n_cols, :] - fb.values[:n_cols, :]
            ))))
        diffs.append(d)
    ok = all(d2 <= d1 * (1.0 + 1e-9) for d1, d2 in zip(diffs, diffs[1:]))
    return Verdict(
        "equilibria_cauchy_decreasing",
        ok,
        "sup differences on [0, R_min/2]: "
        + ", ".join(f"{d:.3e}" for d in diffs),
    )


def _left_mass_verdict(recs: list) -> Verdict:
    conv = [r for r in recs if r.converged]
    ratios = [r.metrics["H_left_over_mid"] for r in conv]
    if not ratios:
        return Verdict("left_mass_vanishing", False, "no converged states")
    decreasing = all(b <= a * (1.0 + 1e-9) for a, b in zip(ratios, ratios[1:]))
    ok = decreasing and ratios[-1] <= 1e-6
    return Verdict(
        "left_mass_vanishing",
        ok,
        "H(left)/H(0) along the schedule: "
        + ", ".join(f"{q:.3e}" for q in ratios) + " (final must be <= 1e-06)",
    )


def _tail_energy_verdict(recs: list) -> Verdict:
    conv = [r for r in recs if r.converged]
    vals = [r.metrics["E2_at_zero"] for r in conv]
    if not vals:
        return Verdict("tail_energy_plateau", False, "no converged states")
    if len(vals) == 1:
        return Verdict("tail_energy_plateau", True,
                       f"single entry, E(0) = {vals[0]:.6g}")
    drift = abs(vals[-1] - vals[-2]) / max(abs(vals[-1]), 1e-300)
    return Verdict(
        "tail_energy_plateau",
        drift <= 0.05,
        f"below-axis energy {vals[-2]:.6g} -> {vals[-1]:.6g} "
        f"(drift {drift:.3g}, allow 0.05)",
    )


def _exp_verdicts(spec: ExperimentSpec, recs: list) -> list:
    verdicts = _flow_verdicts(recs)
    verdicts += _monotone_verdicts(recs, include_h=True)
    verdicts.append(_doubling_verdict(recs))
    verdicts.append(_left_mass_verdict(recs))
    verdicts.append(_tail_energy_verdict(recs))
    verdicts.append(_terminal_verdict(recs, TERMINAL_BAND_PAIR, unb_only=True))
    verdicts.append(_growth_verdict(recs))
    verdicts += _barrier_verdicts(recs)
    return verdicts


def _kcomp_verdicts(spec: ExperimentSpec, recs: list) -> list:
    verdicts = _flow_verdicts(recs)

    worst_shift = 0.0
    for r in recs:
        grid = r.state.grid
        u1 = r.full_state.components[0].values
        for i, comp in enumerate(r.full_state.components):
            want = np.roll(u1, i * grid.shift_nodes, axis=1)
            worst_shift = max(worst_shift, float(np.max(np.abs(comp.values - want))))
    verdicts.append(Verdict(
        "shift_structure_exact",
        worst_shift == 0.0,
        f"max deviation of component i from the shifted generator: {worst_shift:g}",
    ))
    degenerate = [r.r for r in recs if "degenerate_generator" in r.flags]
    verdicts.append(Verdict(
        "generator_nondegenerate",
        bool(recs) and not degenerate,
        "interior generator mass stayed above threshold" if recs and not degenerate
        else ("collapsed at R = " + ", ".join(f"{r:g}" for r in degenerate)
              if degenerate else "no entries"),
    ))
    verdicts += _monotone_verdicts(recs, include_h=True)
    verdicts.append(_doubling_verdict(recs))
    verdicts.append(_left_mass_verdict(recs))
    verdicts.append(_terminal_verdict(recs, TERMINAL_BAND_K, unb_only=True))
    verdicts.append(_growth_verdict(recs))
    return verdicts


# ---------------------------------------------------------------------------
# scenario drivers
# ---------------------------------------------------------------------------

_VERDICT_BUILDERS = {
    "cosh": _cosh_verdicts,
    "exp": _exp_verdicts,
    "kcomp": _kcomp_verdicts,
}


def _run_scenario(spec: ExperimentSpec) -> RunManifest:
    spec.validate()
    out_dir = spec.out_dir
    lock = _acquire_run_dir(out_dir)
    t0 = time.perf_counter()
    try:
        recs = [_run_single(spec, R, out_dir) for R in spec.r_schedule]
        verdicts = _VERDICT_BUILDERS[spec.scenario](spec, recs) if recs else []
        hashed = []
        for r in recs:
            hashed.append(r.files["series"])
            hashed.append(r.files["progress"])
            hashed.extend(r.files["state"])
        digests, rollup = _content_hash(out_dir, hashed)
        manifest = RunManifest(
            spec=spec.to_dict(),
            runs=[r.row() for r in recs],
            verdicts=verdicts,
            hashed_files=digests,
            content_hash=rollup,
            wall_clock_seconds=time.perf_counter() - t0,
            notes=[
                "computed on the half cylinder behind a Neumann wall; "
                "full-cylinder energies are reported as twice the half",
                "content_hash covers snapshots and CSVs only, never timings",
            ],
        )
        emit_report(out_dir, manifest, recs=recs, plots=spec.plots)
        return manifest
    finally:
        os.unlink(lock)


def run_cosh(spec: ExperimentSpec) -> RunManifest:
    if spec.scenario != "cosh":
        raise SegflowConfigError(f"run_cosh got scenario {spec.scenario!r}")
    return _run_scenario(spec)


def run_exp(spec: ExperimentSpec) -> RunManifest:
    if spec.scenario != "exp":
        raise SegflowConfigError(f"run_exp got scenario {spec.scenario!r}")
    return _run_scenario(spec)


def run_kcomp(spec: ExperimentSpec) -> RunManifest:
    if spec.scenario != "kcomp":
        raise SegflowConfigError(f"run_kcomp got scenario {spec.scenario!r}")
    return _run_scenario(spec)


def run_experiment(spec: ExperimentSpec) -> RunManifest:
    runners = {"cosh": run_cosh, "exp": run_exp, "kcomp": run_kcomp}
    if spec.scenario not in runners:
        raise SegflowConfigError(
            f"scenario {spec.scenario!r} does not run through run_experiment"
        )
    return runners[spec.scenario](spec)


# ---------------------------------------------------------------------------
# blow-down
# ---------------------------------------------------------------------------


@dataclass
class ShiftFit:
    shift: float
    r_snapped: float
    c1: float
    c2: float
    misfit: float


@dataclass
class BlowDownReport:
    d: int
    terminal_N: float
    fits: list
    growth_lo: float
    growth_hi: float
    refused: bool
    reason: str
    verdicts: list

    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)


def load_state_dir(path: str) -> StateK:
    """Read a saved state: a checkpoint directory or bare comp*.fld files."""
    if os.path.exists(os.path.join(path, "progress.json")):
        state, _ = load_checkpoint(path)
        return state
    from .grid import read_fld
    names = sorted(
        n for n in os.listdir(path)
        if n.startswith("comp") and n.endswith(".fld")
    )
    if not names:
        raise SegflowConfigError(f"{path} holds no comp*.fld state files")
    comps, grid, t = [], None, 0.0
    for n in names:
        fld, _, t = read_fld(os.path.join(path, n))
        comps.append(fld)
        grid = fld.grid
    return StateK(grid, tuple(comps), t=t)


def run_blowdown(state: StateK, shifts, beta: float = 1.0,
                 window: float | None = None) -> BlowDownReport:
    """Normalized shift family of a saved pair, fitted against the pure
    exponential mode whose degree is the nearest integer to the terminal
    frequency.  The shift list must increase; each shift is snapped to the
    nearest column.
    """
    if state.k != 2:
        raise SegflowConfigError("blow-down consumes a two-component state")
    shifts = [float(s) for s in shifts]
    if not shifts:
        raise SegflowConfigError("need at least one shift")
    if any(b <= a for a, b in zip(shifts, shifts[1:])):
        raise SegflowConfigError("shifts must be strictly increasing")
    grid = state.grid

    # hypothesis check is made on the state itself: a Neumann wall anchors
    # at the wall, otherwise the left tail must have decayed
    if state.bc_kind == NEUMANN_LEFT:
        variant = sym_variant(grid.a)
    else:
        variant = unb_variant(grid.a)
    try:
        series = compute_series(state, variant, beta=beta)
    except VariantPreconditionError as exc:
        raise SegflowConfigError(
            f"state does not satisfy the blow-down hypothesis: {exc}"
        ) from exc

    audited = np.nonzero(series.audited)[0]
    n_term = float(series.N[audited[-1]])
    d_guess = int(np.rint(n_term))
    if d_guess < 1 or abs(n_term - d_guess) > BLOWDOWN_INTEGER_TOL:
        raise FitRefusedError(
            f"terminal frequency {n_term:.4f} is not within "
            f"{BLOWDOWN_INTEGER_TOL:g} of a positive integer"
        )
    d = d_guess

    hx, hy = grid.hx, grid.hy
    snapped = []
    for s in shifts:
        j = int(round((s - grid.a) / hx))
        if not (0 < j <= audited[-1]):
            raise SegflowConfigError(
                f"shift {s:g} leaves the trusted window of the state"
            )
        snapped.append(j)
    if window is None:
        window = min(2.0, (snapped[0]) * hx)
    n_w = int(round(window / hx))
    if n_w < 4 or n_w >= snapped[0]:
        raise SegflowConfigError(
            f"window {window:g} does not fit below the first shift"
        )

    y = grid.y()
    cos_d, sin_d = np.cos(d * y), np.sin(d * y)
    half_norm = 0.5 * grid.period    # discrete and exact for integer degree
    u = state.components[0].values
    v = state.components[1].values

    fits = []
    for s, j in zip(shifts, snapped):
        h_here = float(series.H[j])
        if h_here <= 0.0:
            raise FitRefusedError(f"section mass vanishes at shift {s:g}")
        scale = 1.0 / math.sqrt(h_here)
        cols = slice(j - n_w, j + 1)
        ub = u[cols, :] * scale
        vb = v[cols, :] * scale
        w0 = ub[-1, :] - vb[-1, :]
        c1 = float(hy * np.dot(w0, cos_d) / half_norm)
        c2 = float(hy * np.dot(w0, sin_d) / half_norm)
        xw = grid.x()[cols] - grid.x()[j]
        target = np.exp(d * xw)[:, None] * (c1 * cos_d + c2 * sin_d)[None, :]
        misfit = max(
            float(np.max(np.abs(ub - np.maximum(target, 0.0)))),
            float(np.max(np.abs(vb - np.maximum(-target, 0.0)))),
        )
        fits.append(ShiftFit(s, float(grid.x()[j]), c1, c2, misfit))

    lo_r = grid.x()[snapped[0] - n_w]
    span = audited[(series.r[audited] >= lo_r - 1e-12)
                   & (series.r[audited] <= series.r[snapped[-1]] + 1e-12)]
    ratio = np.sqrt(series.H[span]) * np.exp(-d * series.r[span])
    growth_lo, growth_hi = float(np.min(ratio)), float(np.max(ratio))

    misfits = [f.misfit for f in fits]
    at_floor = all(m <= 1e-12 for m in misfits)
    decreasing = all(b <= a * (1.0 + 1e-9) for a, b in zip(misfits, misfits[1:]))
    verdicts = [
        Verdict(
            "terminal_frequency_near_integer",
            True,
            f"N = {n_term:.6g} fits degree d = {d}",
        ),
        Verdict(
            "profile_misfit_decreasing",
            at_floor or decreasing,
            "misfits along shifts: " + ", ".join(f"{m:.3e}" for m in misfits),
        ),
        Verdict(
            "growth_ratio_bounded",
            growth_hi <= 10.0 * max(growth_lo, 1e-300),
            f"sqrt(H) e^(-d r) ranges [{growth_lo:.6g}, {growth_hi:.6g}] "
            "on the shift window",
        ),
    ]
    return BlowDownReport(
        d=d,
        terminal_N=n_term,
        fits=fits,
        growth_lo=growth_lo,
        growth_hi=growth_hi,
        refused=False,
        reason="",
        verdicts=verdicts,
    )


def _refused_report(reason: str) -> BlowDownReport:
    return BlowDownReport(
        d=0,
        terminal_N=math.nan,
        fits=[],
        growth_lo=math.nan,
        growth_hi=math.nan,
        refused=True,
        reason=reason,
        verdicts=[Verdict("terminal_frequency_near_integer", False, reason)],
    )


def run_blowdown_dir(state_path: str, shifts, out_dir: str,
                     beta: float = 1.0, window: float | None = None) -> BlowDownReport:
    """CLI-shaped blow-down: load the state, fit, and write a report.

    A refused fit still produces a manifest and a FAIL verdict; hypothesis
    and configuration problems raise before anything is written.
    """
    state = load_state_dir(state_path)
    lock = _acquire_run_dir(out_dir)
    t0 = time.perf_counter()
    try:
        try:
            report = run_blowdown(state, shifts, beta=beta, window=window)
        except FitRefusedError as exc:
            report = _refused_report(str(exc))
        csv_path = os.path.join(out_dir, "blowdown.csv")
        with open(csv_path, "w") as fh:
            fh.write("shift,r,c1,c2,misfit\n")
            for f in report.fits:
                fh.write(f"{f.shift:.17g},{f.r_snapped:.17g},{f.c1:.17g},"
                         f"{f.c2:.17g},{f.misfit:.17g}\n")
        digests, rollup = _content_hash(out_dir, ["blowdown.csv"])
        manifest = RunManifest(
            spec={
                "scenario": "blowdown",
                "state": state_path,
                "shifts": [float(s) for s in shifts],
                "beta": float(beta),
                "out": out_dir,
            },
            runs=[{
                "d": report.d,
                "terminal_N": report.terminal_N,
                "refused": report.refused,
                "reason": report.reason,
                "fits": [
                    {"shift": f.shift, "r": f.r_snapped, "c1": f.c1,
                     "c2": f.c2, "misfit": f.misfit}
                    for f in report.fits
                ],
                "growth_lo": report.growth_lo,
                "growth_hi": report.growth_hi,
            }],
            verdicts=report.verdicts,
            hashed_files=digests,
            content_hash=rollup,
            wall_clock_seconds=time.perf_counter() - t0,
            notes=[
                "blow-down certified only for states this lab produced; "
                "the hypothesis is measured from the state itself",
            ],
        )
        emit_report(out_dir, manifest)
        return report
    finally:
        os.unlink(lock)


# ---------------------------------------------------------------------------
# spectral sweep
# ---------------------------------------------------------------------------


def run_lmin(k: int, lams, nodes: int, out_dir: str,
             restarts: int = 5) -> RunManifest:
    if k < 2:
        raise SegflowConfigError("lmin needs k >= 2")
    lams = [float(x) for x in lams]
    lock = _acquire_run_dir(out_dir)
    t0 = time.perf_counter()
    try:
        try:
            sweep = lambda_sweep(k, lams, m=nodes, restarts=restarts)
        except ValueError as exc:
            raise SegflowConfigError(str(exc)) from exc
        csv_path = os.path.join(out_dir, "lmin.csv")
        write_lmin_csv(csv_path, sweep.rows)
        free = 0.25 * k * k
        bad = [r.lam for r in sweep.rows if r.value > free + 2e-3]
        verdicts = [Verdict(
            "values_below_free_bound",
            not bad,
            f"all values <= (k/2)^2 + 2e-3 = {free + 2e-3:.6g}" if not bad
            else "exceeded at lambda = " + ", ".join(f"{x:g}" for x in bad),
        )]
        gaps = [r.gap_lambda_quarter for r in sweep.rows if r.gap > 0]
        if len(gaps) >= 2:
            band = max(gaps) / min(gaps)
            verdicts.append(Verdict(
                "gap_band_bounded",
                band <= 3.0,
                f"gap * lambda^(1/4) spans a x{band:.3g} band (allow x3)",
            ))
        verdicts.append(Verdict(
            "descent_clean",
            not sweep.flagged,
            "no flagged minimizations" if not sweep.flagged
            else f"flagged rows: {sweep.flagged}",
        ))
        digests, rollup = _content_hash(out_dir, ["lmin.csv"])
        manifest = RunManifest(
            spec={"scenario": "lmin", "k": int(k), "lambda": lams,
                  "nodes": int(nodes), "out": out_dir, "restarts": int(restarts)},
            runs=[{
                "k": r.k, "lambda": r.lam, "value": r.value, "gap": r.gap,
                "gap_lambda_quarter": r.gap_lambda_quarter,
                "restarts": r.restarts,
            } for r in sweep.rows],
            verdicts=verdicts,
            hashed_files=digests,
            content_hash=rollup,
            wall_clock_seconds=time.perf_counter() - t0,
        )
        emit_report(out_dir, manifest)
        return manifest
    finally:
        os.unlink(lock)


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def emit_report(out_dir: str, manifest: RunManifest,
                recs: list | None = None, plots: bool = False) -> None:
    """Write manifest.json, verdicts.txt and optional line plots.

    Per-R CSVs and snapshots are written by the pipeline as it runs; this
    step only assembles the run-level artifacts.  The manifest is
    write-once: a pre-existing file aborts.
    """
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    if os.path.exists(manifest_path):
        raise SegflowConfigError(
            f"{manifest_path} already exists; manifests are write-once"
        )
    with open(manifest_path, "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=False)
        fh.write("\n")
    with open(os.path.join(out_dir, "verdicts.txt"), "w") as fh:
        for v in manifest.verdicts:
            fh.write(v.line() + "\n")
    if plots and recs:
        _write_plots(out_dir, recs, manifest)


def _write_plots(out_dir: str, recs: list, manifest: RunManifest) -> None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        manifest.notes.append("plots requested but matplotlib is unavailable")
        return
    plot_dir = os.path.join(out_dir, "plots")
    os.makedirs(plot_dir, exist_ok=True)
    for rec in recs:
        tag = _r_tag(rec.r)
        s = rec.series
        if s is not None:
            m = s.audited
            fig, ax = plt.subplots(figsize=(5, 3))
            ax.plot(s.r[m], s.N[m])
            ax.set_xlabel("r")
            ax.set_ylabel("N(r)")
            fig.tight_layout()
            fig.savefig(os.path.join(plot_dir, f"{tag}_frequency.svg"))
            plt.close(fig)
            fig, ax = plt.subplots(figsize=(5, 3))
            ax.plot(s.r[m], s.H[m] * np.exp(-2.0 * s.r[m]))
            ax.set_xlabel("r")
            ax.set_ylabel("H e^{-2r}")
            fig.tight_layout()
            fig.savefig(os.path.join(plot_dir, f"{tag}_mass_scaled.svg"))
            plt.close(fig)
        trace = np.asarray(rec.report.energy_trace)
        if trace.size:
            fig, ax = plt.subplots(figsize=(5, 3))
            ax.plot(trace[:, 0], trace[:, 1])
            ax.set_xlabel("t")
            ax.set_ylabel("energy")
            fig.tight_layout()
            fig.savefig(os.path.join(plot_dir, f"{tag}_energy.svg"))
            plt.close(fig)
