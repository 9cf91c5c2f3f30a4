"""Perturbation evolution on the torus, coupled to the reference solution.

With rho = f(t) + w the governing second order equation reduces to the
first order system for (w, w0, w_i):

    dw/dt   = w0,
    dw_i/dt = d_i w0,
    dw0/dt  = gcoef * sum_i d_i w_i - (a/t) w0 + (b/t^2)(w + w^2 + 2 f w)
              + (c-k) w0^2/(1+w+f) + 2(c-k) f0 w0/(1+w+f)
              - (c-k) f0^2 w / ((1+w+f)(1+f)),

where gcoef = m^2 (f0/(1+f))^2 = m^2 q0^2 is the (flat, time dependent)
metric coefficient.  Zero perturbation is an exact fixed point.  Quadratic
and rational nonlinearities are evaluated pointwise on 2/3-dealiased
fields; 1 + w + f <= 0 anywhere means the perturbative regime was left and
the run aborts with VacuumCrossing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import OutOfRange, StepUnderflow, VacuumCrossing
from .params import DerivedConstants, ModelParams
from .reference import RefInterpolant, Trajectory
from .rk import integrate_dopri5
from .torus import NormConfig, TorusGrid, dealias, diff, sobolev_norm, winf_norm

__all__ = [
    "FieldSet",
    "ModeSpec",
    "PerturbationConfig",
    "NormRecord",
    "Snapshot",
    "PdeRun",
    "metric_coef",
    "source_F",
    "rhs_perturbation",
    "initial_fieldset",
    "integrate_pde",
    "ratio_norms",
    "residual_main_eq",
]


def _as_interp(ref) -> RefInterpolant:
    return ref.interp if isinstance(ref, Trajectory) else ref


@dataclass
class FieldSet:
    """Perturbation state (w, w0, w_i) at one time."""

    t: float
    w: np.ndarray
    w0: np.ndarray
    wi: list[np.ndarray]

    def copy(self) -> "FieldSet":
        return FieldSet(self.t, self.w.copy(), self.w0.copy(), [v.copy() for v in self.wi])


@dataclass(frozen=True)
class ModeSpec:
    """One Fourier mode of the initial profile."""

    wave: tuple[int, ...]
    amplitude: float = 1.0
    phase: float = 0.0


@dataclass(frozen=True)
class PerturbationConfig:
    grid: TorusGrid = TorusGrid()
    sigma: float = 1e-3
    modes: tuple[ModeSpec, ...] = (ModeSpec(wave=(1,)),)
    s: int = 4
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    cfl: float = 0.5
    f_stop: float = 1e4
    ratio_guard: float = 1.0       # abort if sup|w/f| exceeds this
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        if self.sigma < 0:
            raise OutOfRange(f"sigma must be >= 0, got {self.sigma}")
        NormConfig(s=self.s, dim=self.grid.dim)  # validates s >= dim/2 + 3


def metric_coef(t, ref, m: float | None = None) -> float:
    """Metric coefficient m^2 (f0/(1+f))^2 = m^2 q0^2 at time t."""
    ref = _as_interp(ref)
    m = ref.params.m if m is None else m
    q0 = ref.q0(t)
    return m * m * q0 * q0


def source_F(t, ref) -> float:
    """Forcing f0^2/(1+f) = y q0^2 of the inhomogeneous equation."""
    ref = _as_interp(ref)
    return ref.y(t) * ref.q0(t) ** 2


def _profile(grid: TorusGrid, modes: Sequence[ModeSpec]) -> np.ndarray:
    u = np.zeros(grid.shape)
    for mode in modes:
        wave = tuple(mode.wave) + (0,) * (grid.dim - len(mode.wave))
        arg = sum(wv * xi for wv, xi in zip(wave, grid.x)) + mode.phase
        u = u + mode.amplitude * np.cos(arg)
    sup = winf_norm(u)
    if sup > 0:
        u = u / sup
    return u


def initial_fieldset(cfg: PerturbationConfig, ref) -> FieldSet:
    """Initial data: rho = f_ring (1 + sigma p(x)), d_t rho likewise.

    The profile p is the configured mode sum normalized to sup 1; the
    gradient fields are its exact spectral derivatives.
    """
    ref = _as_interp(ref)
    d = ref.data
    grid = cfg.grid
    p = _profile(grid, cfg.modes)
    w = cfg.sigma * d.f_ring * p
    w0 = cfg.sigma * d.f0_ring * p
    wi = [diff(grid, w, axis) for axis in range(grid.dim)]
    return FieldSet(t=d.t0, w=w, w0=w0, wi=wi)


def _rhs_w0(t, w, w0, div_wi, ref, p: ModelParams, grid: TorusGrid, *, use_dealias: bool = True):
    """dw0/dt given the divergence of the gradient fields.

    Quadratic/rational terms are evaluated pointwise on dealiased copies of
    (w, w0); spatially constant-coefficient linear terms stay exact.
    Returns None when 1 + w + f crosses zero (caller decides whether that
    is a rejectable trial or a hard error).
    """
    f = float(ref.f(t))
    f0 = float(ref.f0(t))
    a, b, c, k = p.a, p.b, p.c, p.k
    wd = dealias(grid, w) if use_dealias else w
    w0d = dealias(grid, w0) if use_dealias else w0
    denom = 1.0 + f + wd
    if np.min(denom) <= 0.0 or np.min(1.0 + f + w) <= 0.0:
        return None
    ck = c - k
    gcoef = metric_coef(t, ref)
    lin = gcoef * div_wi - (a / t) * w0 + (b / t ** 2) * (1.0 + 2.0 * f) * w
    nonlin = (
        (b / t ** 2) * wd * wd
        + ck * w0d * w0d / denom
        + 2.0 * ck * f0 * w0d / denom
        - ck * f0 * f0 * wd / (denom * (1.0 + f))
    )
    return lin + nonlin


def rhs_perturbation(fs: FieldSet, ref, p: ModelParams) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Time derivatives (dw, dw0, dw_i) of a field set."""
    ref = _as_interp(ref)
    grid = TorusGrid(dim=len(fs.wi), N=fs.w.shape[0])
    div_wi = sum(diff(grid, fs.wi[axis], axis) for axis in range(grid.dim))
    dw0 = _rhs_w0(fs.t, fs.w, fs.w0, div_wi, ref, p, grid)
    if dw0 is None:
        raise VacuumCrossing(f"min(1 + w + f) <= 0 at t={fs.t}")
    dwi = [diff(grid, fs.w0, axis) for axis in range(grid.dim)]
    return fs.w0.copy(), dw0, dwi


@dataclass
class NormRecord:
    t: float
    hs_ratio_rho: float
    hs_ratio_rho_t: float
    hs_grad: float
    sup_ratio_rho: float
    sup_ratio_rho_t: float
    envelope_ok: bool
    hs_state: float      # H^s norm of the rescaled state (u0, u_i, u)


@dataclass
class Snapshot:
    """Field set plus its rhs-based time derivative of w0 at a checkpoint."""

    fields: FieldSet
    dw0: np.ndarray


@dataclass
class PdeRun:
    config: PerturbationConfig
    params: ModelParams
    ref: RefInterpolant
    records: list[NormRecord]
    snapshots: list[Snapshot]
    final: FieldSet
    stop_reason: str   # 'f-threshold' | 'max-time' | 'ratio-guard'
    max_sup_ratio: float = 0.0


def _pack(fs: FieldSet) -> np.ndarray:
    return np.concatenate([fs.w.ravel(), fs.w0.ravel()] + [v.ravel() for v in fs.wi])


def _unpack(t: float, v: np.ndarray, grid: TorusGrid) -> FieldSet:
    n = grid.npoints
    shape = grid.shape
    w = v[:n].reshape(shape)
    w0 = v[n : 2 * n].reshape(shape)
    wi = [v[(2 + i) * n : (3 + i) * n].reshape(shape) for i in range(grid.dim)]
    return FieldSet(t=t, w=w, w0=w0, wi=wi)


def integrate_pde(cfg: PerturbationConfig, ref, p: ModelParams, dc: DerivedConstants) -> PdeRun:
    """Method-of-lines run until the reference reaches ``f_stop``.

    The adaptive step is additionally capped by the CFL-like limit
    dt <= cfl / (sqrt(gcoef) * k_max).  Norm records are emitted at every
    accepted step; snapshots (with the rhs-based dw0) at the requested
    checkpoint times and at the final time.
    """
    ref = _as_interp(ref)
    grid = cfg.grid
    n = grid.npoints
    fs0 = initial_fieldset(cfg, ref)
    t0 = ref.data.t0
    if cfg.f_stop <= ref.traj.f[0] or cfg.f_stop > ref.traj.f[-1]:
        raise OutOfRange(f"f_stop={cfg.f_stop} not reached by the reference trajectory")
    t_end = ref.t_of_f(cfg.f_stop)
    k_max = grid.k_max

    def f_rhs(t, v):
        w = v[:n].reshape(grid.shape)
        w0 = v[n : 2 * n].reshape(grid.shape)
        wi = [v[(2 + i) * n : (3 + i) * n].reshape(grid.shape) for i in range(grid.dim)]
        div_wi = sum(diff(grid, wi[axis], axis) for axis in range(grid.dim))
        dw0 = _rhs_w0(t, w, w0, div_wi, ref, p, grid)
        if dw0 is None:
            # poison the trial so the driver rejects and shrinks the step
            return np.full_like(v, np.nan)
        dwi = [diff(grid, w0, axis) for axis in range(grid.dim)]
        return np.concatenate([w0.ravel(), dw0.ravel()] + [g.ravel() for g in dwi])

    def cap(t, v):
        gc = metric_coef(t, ref)
        if gc <= 0.0:
            return math.inf
        return cfg.cfl / (math.sqrt(gc) * k_max)

    def guard(t, v):
        return bool(np.min(1.0 + float(ref.f(t)) + v[:n]) > 0.0)

    records: list[NormRecord] = []
    snapshots: list[Snapshot] = []
    max_ratio = 0.0

    def stopper(t, v):
        nonlocal max_ratio
        fs = _unpack(t, v, grid)
        rec = _norm_record(fs, ref, cfg, p)
        records.append(rec)
        max_ratio = max(max_ratio, rec.sup_ratio_rho, rec.sup_ratio_rho_t)
        if rec.sup_ratio_rho > cfg.ratio_guard:
            return "ratio-guard"
        return None

    cps = tuple(tc for tc in cfg.snapshot_times if t0 < tc < t_end)
    res = integrate_dopri5(
        f_rhs,
        t0,
        _pack(fs0),
        t_end,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        step_cap=cap,
        checkpoints=cps,
        accept_guard=guard,
        stop=stopper,
    )
    if res.stop_reason == "step-underflow":
        last = _unpack(float(res.ts[-1]), res.ys[-1], grid)
        if np.min(1.0 + float(ref.f(last.t)) + last.w) <= 0.0:
            raise VacuumCrossing(f"vacuum crossing at t={last.t}")
        raise StepUnderflow(f"step underflow at t={last.t}")

    # initial record (stopper only fires on accepted steps)
    rec0 = _norm_record(fs0, ref, cfg, p)
    records.insert(0, rec0)
    max_ratio = max(max_ratio, rec0.sup_ratio_rho, rec0.sup_ratio_rho_t)
    want = set(res.checkpoint_hits) | {len(res.ts) - 1}
    for i in sorted(want):
        fs = _unpack(float(res.ts[i]), res.ys[i], grid)
        dw0 = res.dys[i][n : 2 * n].reshape(grid.shape)
        snapshots.append(Snapshot(fields=fs, dw0=dw0))

    reason = "ratio-guard" if res.stop_reason == "stopped:ratio-guard" else "f-threshold"
    if res.stop_reason == "reached-end":
        reason = "f-threshold"
    final = _unpack(float(res.ts[-1]), res.ys[-1], grid)
    return PdeRun(
        config=cfg,
        params=p,
        ref=ref,
        records=records,
        snapshots=snapshots,
        final=final,
        stop_reason=reason,
        max_sup_ratio=max_ratio,
    )


def _norm_record(fs: FieldSet, ref: RefInterpolant, cfg: PerturbationConfig, p: ModelParams) -> NormRecord:
    grid = cfg.grid
    f = float(ref.f(fs.t))
    f0 = float(ref.f0(fs.t))
    m = p.m
    ratio = fs.w / f
    ratio_t = fs.w0 / f0
    grads = [m * v / (1.0 + f) for v in fs.wi]
    hs = sobolev_norm(grid, ratio, cfg.s)
    hs_t = sobolev_norm(grid, ratio_t, cfg.s)
    hs_g = math.sqrt(sum(sobolev_norm(grid, gv, cfg.s) ** 2 for gv in grads))
    sup = winf_norm(ratio)
    sup_t = winf_norm(ratio_t)
    return NormRecord(
        t=fs.t,
        hs_ratio_rho=hs,
        hs_ratio_rho_t=hs_t,
        hs_grad=hs_g,
        sup_ratio_rho=sup,
        sup_ratio_rho_t=sup_t,
        envelope_ok=sup < 1.0,
        hs_state=math.sqrt(hs * hs + hs_t * hs_t + hs_g * hs_g),
    )


def ratio_norms(fs: FieldSet, ref, cfg: PerturbationConfig) -> dict:
    """Relative-deviation norms of one state against the reference.

    The envelope flag checks (1-r) f <= rho <= (1+r) f pointwise with r the
    instantaneous sup ratio.
    """
    ref = _as_interp(ref)
    rec = _norm_record(fs, ref, cfg, ref.params)
    return {
        "hs_ratio_rho": rec.hs_ratio_rho,
        "hs_ratio_rho_t": rec.hs_ratio_rho_t,
        "hs_grad": rec.hs_grad,
        "sup_ratio_rho": rec.sup_ratio_rho,
        "sup_ratio_rho_t": rec.sup_ratio_rho_t,
        "envelope_ok": rec.envelope_ok,
    }


def residual_main_eq(fs: FieldSet, ref, p: ModelParams, w0_dot: np.ndarray | None = None) -> float:
    """Sup-norm residual of the original second order equation on rho = f + w.

    Spatial derivatives are spectral (true Laplacian of w); the second time
    derivative is reconstructed as f0'(t) + dw0/dt with dw0/dt taken from
    the evolution right-hand side unless ``w0_dot`` overrides it (used by
    manufactured-solution oracles that know the exact time derivative).
    """
    ref = _as_interp(ref)
    grid = TorusGrid(dim=len(fs.wi), N=fs.w.shape[0])
    t = fs.t
    f = float(ref.f(t))
    f0 = float(ref.f0(t))
    a, b, c, k = p.a, p.b, p.c, p.k
    # d f0/dt from the homogeneous equation
    f0_dot = -(a / t) * f0 + (b / t ** 2) * f * (1.0 + f) + c * f0 * f0 / (1.0 + f)
    if w0_dot is None:
        _, w0_dot, _ = rhs_perturbation(fs, ref, p)
    rho = f + fs.w
    rho_t = f0 + fs.w0
    rho_tt = f0_dot + w0_dot
    lap = sum(diff(grid, diff(grid, fs.w, ax), ax) for ax in range(grid.dim))
    gc = metric_coef(t, ref)
    res = (
        rho_tt
        - gc * lap
        + (a / t) * rho_t
        - (b / t ** 2) * rho * (1.0 + rho)
        - (c - k) * rho_t ** 2 / (1.0 + rho)
        - k * source_F(t, ref)
    )
    return winf_norm(res)
