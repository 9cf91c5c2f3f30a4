"""Compactified-time formulation: rescaled fields, singular system, monitors.

The perturbation fields are rescaled by the reference growth,

    u = w/f,   u0 = w0/f0,   u_i = m w_i/(1+f),

and time is compactified by tau = -g(t) in [-1, 0), which maps the maximal
existence time to 0.  In tau the system is symmetric hyperbolic with a
single 1/tau coefficient:

    d_tau U + Bspat^i d_i U = (1/tau) Bsing U + Hsrc,     U = (u0, u_i, u),

where Bspat^i couples u0 and u_i through the scalar transport coefficient
m chi_ / (A B tau), Bsing is the (n+2)x(n+2) block built from chi_/B and
the rational remainders, and Hsrc = (-Lrem, 0, -Krem) collects the terms
that vanish like xi.  The zero state is an exact equilibrium.

Monitors: the positivity margin of the symmetrized singular block against
its limit eigenvalues (the sandwich condition on Bsing/kappa), and the
energy envelope ||U(tau)|| <= e^(-c2 tau0) (-tau0)^c1 ||U(tau0)||
(-tau)^(-c1) e^(c2 tau) with fitted constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import DomainError, EpsTooLarge, RDenominatorVanishes
from .params import DerivedConstants, ModelParams
from .pde import FieldSet, PdeRun, _as_interp
from .reference import RefInterpolant
from .rk import integrate_dopri5
from .torus import TorusGrid, dealias, diff, sobolev_norm, w1inf_norm, winf_norm

__all__ = [
    "FuchsianState",
    "FuchsianConfig",
    "SystemAssembly",
    "EnergyRecord",
    "EnergyReport",
    "ConditionVReport",
    "FuchsianRun",
    "to_fuchsian",
    "from_fuchsian",
    "remainders",
    "assemble",
    "integrate_fuchsian",
    "fuchsian_residual",
    "condition_v_check",
    "energy_monitor",
]

_DENOM_FLOOR = 1e-10


@dataclass
class FuchsianState:
    """Rescaled fields at one compactified time."""

    tau: float
    u0: np.ndarray
    ui: list[np.ndarray]
    u: np.ndarray

    def sup(self) -> float:
        """Sup of |(u0, u)|, the ball radius entering the region check."""
        return float(np.max(np.hypot(self.u0, self.u)))


@dataclass(frozen=True)
class FuchsianConfig:
    grid: TorusGrid = TorusGrid()
    s: int = 4
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    tau_min: float = -1e-4       # default stopping time, short of the singular point
    tau_cap: float = 0.1         # step cap dt <= tau_cap * |tau|
    cfl: float = 0.5
    snapshot_taus: tuple[float, ...] = ()


def to_fuchsian(fs: FieldSet, ref, p: ModelParams) -> FuchsianState:
    """Rescale (w, w0, w_i) at matching time (tau = -g(t))."""
    ref = _as_interp(ref)
    t = fs.t
    f = float(ref.f(t))
    f0 = float(ref.f0(t))
    tau = float(ref.tau(t))
    return FuchsianState(
        tau=tau,
        u0=fs.w0 / f0,
        ui=[p.m * wv / (1.0 + f) for wv in fs.wi],
        u=fs.w / f,
    )


def from_fuchsian(st: FuchsianState, ref, p: ModelParams) -> FieldSet:
    """Inverse rescaling; requires m != 0 to reconstruct the gradients."""
    ref = _as_interp(ref)
    if p.m == 0.0:
        raise DomainError("gradient fields cannot be reconstructed with m = 0")
    t = float(ref.t_of_tau(st.tau))
    f = float(ref.f(t))
    f0 = float(ref.f0(t))
    return FieldSet(
        t=t,
        w=f * st.u,
        w0=f0 * st.u0,
        wi=[(1.0 + f) * uv / p.m for uv in st.ui],
    )


@dataclass
class Remainders:
    R: np.ndarray
    H: np.ndarray
    F: np.ndarray
    L: np.ndarray
    K: np.ndarray


def _remainders_at(u0, u, f: float, chi: float, xi: float, p: ModelParams, B: float) -> Remainders:
    b, c, k, A = p.b, p.c, p.k, p.A
    denom = 1.0 + 1.0 / f + u
    if np.min(np.abs(denom)) <= _DENOM_FLOOR:
        raise RDenominatorVanishes(f"min |1 + 1/f + u| = {np.min(np.abs(denom)):g}")
    R = u / denom
    ck = c - k
    # The u0/u remainder signs follow from expanding the physical-time
    # system with (1+f)/(1+f+fu) = 1 - R and f/(1+f+fu) = (1-R) f/(1+f);
    # the rescaled system is consistent with the physical-time one only
    # with these signs (cross-integrator residual check enforces this).
    H = -(ck * chi / B) * (u0 - u0 * R - 2.0 * R)
    F = -b * u - ck * chi / B * R
    L = (b * xi / A) * (u * u + u) - (ck * chi * xi / (A * B)) * u * (1.0 - R)
    K = (chi * xi / (A * B)) * (1.0 + 1.0 / f) * (u - u0)
    return Remainders(R=R, H=H, F=F, L=L, K=K)


def remainders(tau: float, u0: np.ndarray, u: np.ndarray, ref) -> Remainders:
    """Pointwise rational remainders at compactified time tau.

    All five vanish at (u0, u) = 0; L and K carry a factor xi and vanish as
    tau -> 0.  Raises if the denominator 1 + 1/f + u is not bounded away
    from zero.
    """
    ref = _as_interp(ref)
    t = float(ref.t_of_tau(tau))
    return _remainders_at(
        u0, u, float(ref.f(t)), float(ref.chi(t)), float(ref.xi(t)), ref.params, ref.constants.B
    )


@dataclass
class SystemAssembly:
    """Per-grid-point singular block, transport coefficient and source."""

    tau: float
    matrix: np.ndarray         # (npoints, n+2, n+2): singular block incl. 1/A; apply as (1/tau) M U
    transport: float           # m chi_ / (A B tau)
    source_u0: np.ndarray      # -Lrem
    source_u: np.ndarray       # -Krem


def assemble(st: FuchsianState, ref, p: ModelParams, dc: DerivedConstants) -> SystemAssembly:
    """Coefficients of the singular system at one state.

    ``matrix`` is the per-grid-point zero-order block (its 1/A factor
    included; multiply by 1/tau to apply); the u0 <-> u_i transport blocks
    are the scalar ``transport`` times the identity, symmetric by
    construction.
    """
    ref = _as_interp(ref)
    tau = st.tau
    t = float(ref.t_of_tau(tau))
    chi = float(ref.chi(t))
    b, c, k, A, B = p.b, p.c, p.k, p.A, dc.B
    rem = _remainders_at(st.u0, st.u, float(ref.f(t)), chi, float(ref.xi(t)), p, B)
    n = len(st.ui)
    npts = st.u.size
    chiB = chi / B   # equals 2b/(3-2c) + frakG/B

    M = np.zeros((npts, n + 2, n + 2))
    M[:, 0, 0] = (b + (2.0 * k - c) * chiB + rem.H.ravel()) / A
    M[:, 0, n + 1] = (-2.0 * b + (c - k) * chiB + rem.F.ravel()) / A
    for i in range(n):
        M[:, 1 + i, 1 + i] = chiB / A
    M[:, n + 1, 0] = -chiB / A
    M[:, n + 1, n + 1] = chiB / A
    return SystemAssembly(
        tau=tau,
        matrix=M,
        transport=p.m * chi / (A * B * tau),
        source_u0=-rem.L,
        source_u=-rem.K,
    )


@dataclass
class EnergyRecord:
    tau: float
    hs_norm: float
    w1inf: float
    bound: float = math.nan    # filled by energy_monitor


@dataclass
class FuchsianRun:
    config: FuchsianConfig
    params: ModelParams
    constants: DerivedConstants
    ref: RefInterpolant
    records: list[EnergyRecord]
    snapshots: list[FuchsianState]
    final: FuchsianState
    stop_reason: str           # 'reached-end' | 'step-underflow'


def _state_norms(grid: TorusGrid, s: int, u0, ui, u) -> tuple[float, float]:
    fields = [u0] + list(ui) + [u]
    hs = math.sqrt(sum(sobolev_norm(grid, v, s) ** 2 for v in fields))
    return hs, w1inf_norm(grid, *fields)


def integrate_fuchsian(
    init: FuchsianState,
    ref,
    p: ModelParams,
    dc: DerivedConstants,
    tau_end: float | None = None,
    cfg: FuchsianConfig = FuchsianConfig(),
) -> FuchsianRun:
    """Method-of-lines run in compactified time from ``init.tau``.

    The 1/tau stiffness is handled by capping the step at tau_cap * |tau|
    (and by the transport CFL limit); underflow short of tau_end is an
    expected outcome near the singular point and is reported, not raised.
    """
    ref = _as_interp(ref)
    grid = cfg.grid
    n_dim = grid.dim
    npts = grid.npoints
    tau_end = cfg.tau_min if tau_end is None else tau_end
    if not (init.tau < tau_end < 0.0):
        raise DomainError(f"need tau_start < tau_end < 0, got [{init.tau}, {tau_end}]")
    covered = ref.tau_range()[1]
    if tau_end > covered:
        raise DomainError(
            f"tau_end={tau_end:g} beyond the reference coverage (ends at {covered:g}); "
            "integrate the reference further"
        )
    b, c, k, A, B = p.b, p.c, p.k, p.A, dc.B
    m = p.m

    def unpack(v):
        u0 = v[:npts].reshape(grid.shape)
        ui = [v[(1 + i) * npts : (2 + i) * npts].reshape(grid.shape) for i in range(n_dim)]
        u = v[(1 + n_dim) * npts :].reshape(grid.shape)
        return u0, ui, u

    def f_rhs(tau, v):
        u0, ui, u = unpack(v)
        t = float(ref.t_of_tau(tau))
        chi = float(ref.chi(t))
        chiB = chi / B
        u0d = dealias(grid, u0)
        ud = dealias(grid, u)
        try:
            rem = _remainders_at(u0d, ud, float(ref.f(t)), chi, float(ref.xi(t)), p, B)
        except RDenominatorVanishes:
            return np.full_like(v, np.nan)
        trans = m * chi / (A * B * tau)
        div_ui = sum(diff(grid, ui[i], i) for i in range(n_dim))
        du0 = (
            -trans * div_ui
            + ((b + (2.0 * k - c) * chiB + rem.H) * u0 + (-2.0 * b + (c - k) * chiB + rem.F) * u) / (A * tau)
            - rem.L
        )
        dui = [-trans * diff(grid, u0, i) + chiB / (A * tau) * ui[i] for i in range(n_dim)]
        du = chiB / (A * tau) * (u - u0) - rem.K
        return np.concatenate([du0.ravel()] + [g.ravel() for g in dui] + [du.ravel()])

    def cap(tau, v):
        h = cfg.tau_cap * abs(tau)
        if m != 0.0:
            t = float(ref.t_of_tau(tau))
            chi = float(ref.chi(t))
            h = min(h, cfg.cfl * A * B * abs(tau) / (abs(m) * chi * grid.k_max))
        return h

    records: list[EnergyRecord] = []

    def on_record(tau, v):
        u0, ui, u = unpack(v)
        hs, w1 = _state_norms(grid, cfg.s, u0, ui, u)
        records.append(EnergyRecord(tau=tau, hs_norm=hs, w1inf=w1))
        return None

    v0 = np.concatenate([init.u0.ravel()] + [g.ravel() for g in init.ui] + [init.u.ravel()])
    cps = tuple(tc for tc in cfg.snapshot_taus if init.tau < tc < tau_end)
    res = integrate_dopri5(
        f_rhs,
        init.tau,
        v0,
        tau_end,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        step_cap=cap,
        checkpoints=cps,
        stop=on_record,
    )
    on_record(float(res.ts[0]), res.ys[0])  # initial state record (prepended below)
    records.insert(0, records.pop())

    snapshots = []
    want = sorted(set(res.checkpoint_hits) | {0, len(res.ts) - 1})
    for i in want:
        u0, ui, u = unpack(res.ys[i])
        snapshots.append(FuchsianState(tau=float(res.ts[i]), u0=u0, ui=ui, u=u))
    u0, ui, u = unpack(res.ys[-1])
    final = FuchsianState(tau=float(res.ts[-1]), u0=u0, ui=ui, u=u)
    reason = "reached-end" if res.stop_reason == "reached-end" else res.stop_reason
    return FuchsianRun(
        config=cfg,
        params=p,
        constants=dc,
        ref=ref,
        records=records,
        snapshots=snapshots,
        final=final,
        stop_reason=reason,
    )


def fuchsian_residual(run: PdeRun, ref, p: ModelParams, dc: DerivedConstants) -> list[dict]:
    """Residual of the singular system on transformed torus-run snapshots.

    d_tau U is produced by the chain rule from the stored physical-time
    derivatives (product rule through the rescalings, then division by
    -dg/dt); the right side is evaluated from the assembled coefficients.
    Reported per snapshot: sup and L2 residual plus the size of the largest
    term, so callers can judge relative magnitude.
    """
    ref = _as_interp(ref)
    out = []
    grid = run.config.grid
    A, B, b, c = p.A, dc.B, p.b, p.c
    for snap in run.snapshots:
        fs = snap.fields
        t = fs.t
        f = float(ref.f(t))
        f0 = float(ref.f0(t))
        y = 1.0 + f
        g = float(ref.g(t))
        G = float(ref.G(t))
        st = to_fuchsian(fs, ref, p)
        tau = st.tau

        # physical-time derivatives of the rescaled fields
        f0_dot = -(p.a / t) * f0 + (p.b / t ** 2) * f * y + p.c * f0 * f0 / y
        du_dt = (f0 / f) * (st.u0 - st.u)
        du0_dt = snap.dw0 / f0 - st.u0 * (f0_dot / f0)
        dui_dt = [
            p.m * diff(grid, fs.w0, i) / y - st.ui[i] * (f0 / y) for i in range(grid.dim)
        ]
        # d tau/dt = -dg/dt; the chain-rule factor is -1/(dg/dt)
        inv_gprime = t ** (2.0 - p.a) * y ** (p.c - 1.0) * G / (A * B * g * f)

        asm = assemble(st, ref, p, dc)
        n = grid.dim
        U = [st.u0] + list(st.ui) + [st.u]
        dU_dtau = [inv_gprime * du0_dt] + [inv_gprime * d for d in dui_dt] + [inv_gprime * du_dt]
        # spatial part: transport couples u0 and u_i
        div_ui = sum(diff(grid, st.ui[i], i) for i in range(n))
        spatial = [asm.transport * div_ui] + [asm.transport * diff(grid, st.u0, i) for i in range(n)] + [np.zeros_like(st.u)]
        source = [asm.source_u0] + [np.zeros_like(st.u)] * n + [asm.source_u]

        flat = [u.ravel() for u in U]
        rows_sing = []
        for r in range(n + 2):
            acc = np.zeros(grid.npoints)
            for cidx in range(n + 2):
                acc += asm.matrix[:, r, cidx] * flat[cidx]
            rows_sing.append(acc.reshape(grid.shape) / tau)

        sup_res = 0.0
        l2_res = 0.0
        scale = 1e-300
        for r in range(n + 2):
            resid = dU_dtau[r] + spatial[r] - rows_sing[r] - source[r]
            sup_res = max(sup_res, winf_norm(resid))
            l2_res += float(np.mean(resid ** 2))
            for term in (dU_dtau[r], spatial[r], rows_sing[r], source[r]):
                scale = max(scale, winf_norm(term))
        out.append(
            {
                "tau": tau,
                "t": t,
                "sup_residual": sup_res,
                "l2_residual": math.sqrt(l2_res),
                "scale": scale,
                "rel_sup": sup_res / scale,
            }
        )
    return out


@dataclass
class ConditionVSample:
    tau: float
    lambda_worst: tuple[float, float, float]   # per-band worst sampled eigenvalue (in limit units)
    margin: float                              # eps - max band deviation; positive = pass
    in_gamma: bool
    sup_u: float


@dataclass
class ConditionVReport:
    eps: float
    lambda_tilde: tuple[float, float, float]
    samples: list[ConditionVSample]
    tau_delta: float          # largest tau below which some sample fails (-start if none)
    r_tilde: float            # measured ball radius on the passing tail
    kappa: float
    gamma2: float

    @property
    def passing_tail_nonempty(self) -> bool:
        return any(s.in_gamma for s in self.samples)


def condition_v_check(run: FuchsianRun, p: ModelParams, dc: DerivedConstants, eps: float) -> ConditionVReport:
    """Sandwich-condition margins of the symmetrized singular block.

    Per snapshot and grid point the assembled block is symmetrized
    numerically and its eigenvalues (rescaled by A to limit units) are
    required to lie within eps of the limit eigenvalues.  The report gives
    the measured admissible tail (tau_delta, r_tilde) and the implied
    (kappa, gamma2) pair.
    """
    lam = dc.lambda_tilde
    lam_min = min(lam)
    if not 0.0 < eps < lam_min:
        raise EpsTooLarge(f"eps must lie in (0, {lam_min:g}), got {eps}")
    ref = run.ref
    n = run.config.grid.dim
    targets = np.sort(np.array([lam[0]] + [lam[2]] * n + [lam[1]]))
    # map sorted slots back to band index (0, 1, 2) of lambda_tilde
    slot_band = np.argsort(np.array([lam[0]] + [lam[2]] * n + [lam[1]]))
    band_of_slot = np.empty(n + 2, dtype=int)
    for slot, orig in enumerate(slot_band):
        band_of_slot[slot] = 0 if orig == 0 else (2 if orig <= n else 1)

    samples = []
    for st in run.snapshots:
        asm = assemble(st, ref, p, dc)
        sym = 0.5 * (asm.matrix + np.transpose(asm.matrix, (0, 2, 1)))
        eigs = np.linalg.eigvalsh(sym) * p.A          # ascending per point, limit units
        dev = np.abs(eigs - targets[None, :])
        worst_dev = dev.max()
        band_worst = []
        for band in range(3):
            cols = np.where(band_of_slot == band)[0]
            sub = dev[:, cols]
            idx = np.unravel_index(np.argmax(sub), sub.shape)
            band_worst.append(float(eigs[idx[0], cols[idx[1]]]))
        samples.append(
            ConditionVSample(
                tau=st.tau,
                lambda_worst=tuple(band_worst),
                margin=float(eps - worst_dev),
                in_gamma=bool(worst_dev < eps),
                sup_u=st.sup(),
            )
        )

    # largest tau_delta such that every later sample passes
    first_pass = None
    for i in range(len(samples) - 1, -1, -1):
        if not samples[i].in_gamma:
            first_pass = i + 1
            break
    if first_pass is None:
        first_pass = 0
    if first_pass >= len(samples):
        tau_delta = 0.0          # nothing passes
        tail = []
    else:
        tail = samples[first_pass:]
        tau_delta = samples[first_pass - 1].tau if first_pass > 0 else samples[0].tau
    r_tilde = max((s.sup_u for s in tail), default=0.0) * (1.0 + 1e-12)
    for s in samples:
        s.in_gamma = s.in_gamma and (s.tau >= tau_delta) and (s.sup_u <= max(r_tilde, 1e-300))
    kappa = (lam_min - eps) / p.A
    gamma2 = (max(lam) + eps) / (kappa * p.A)
    return ConditionVReport(
        eps=eps,
        lambda_tilde=lam,
        samples=samples,
        tau_delta=tau_delta,
        r_tilde=r_tilde,
        kappa=kappa,
        gamma2=gamma2,
    )


@dataclass
class EnergyReport:
    records: list[EnergyRecord]
    c1: float
    c2: float
    envelope_ok: bool


def energy_monitor(run: FuchsianRun) -> EnergyReport:
    """Fit the smallest (c1, c2) >= 0 making the decay-envelope bound hold.

    The bound is ||U(tau)|| <= ||U(tau0)|| (tau0/tau)^c1 e^(c2 (tau-tau0)),
    taken in H^s over the run's records; existence of finite constants is
    the monitored property.  Zero data trivially satisfies it with (0, 0).
    """
    recs = run.records
    tau0 = recs[0].tau
    n0 = recs[0].hs_norm
    if n0 == 0.0:
        for r in recs:
            r.bound = 0.0
        return EnergyReport(records=recs, c1=0.0, c2=0.0, envelope_ok=all(r.hs_norm == 0.0 for r in recs))

    ps, qs, rs = [], [], []
    for r in recs[1:]:
        ps.append(math.log(-tau0) - math.log(-r.tau))
        qs.append(r.tau - tau0)
        rs.append(math.log(max(r.hs_norm, 1e-300) / n0))
    if ps:
        res = linprog(
            c=[1.0, 1.0],
            A_ub=np.column_stack([-np.array(ps), -np.array(qs)]),
            b_ub=-np.array(rs),
            bounds=[(0, None), (0, None)],
            method="highs",
        )
        c1, c2 = (float(res.x[0]), float(res.x[1])) if res.success else (math.inf, math.inf)
    else:
        c1 = c2 = 0.0
    ok = math.isfinite(c1) and math.isfinite(c2)
    for r in recs:
        r.bound = n0 * (tau0 / r.tau) ** c1 * math.exp(c2 * (r.tau - tau0)) if ok else math.inf
        if r.hs_norm > r.bound * (1.0 + 1e-9):
            ok = False
    return EnergyReport(records=recs, c1=c1, c2=c2, envelope_ok=ok)
