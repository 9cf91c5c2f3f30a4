"""Reference (spatially homogeneous) blowup solution and its diagnostics.

The second order equation for f(t) is integrated as the first order system
in (y, q0) with y = 1 + f and q0 = f0/(1+f):

    dy/dt  = y q0,
    dq0/dt = -(a/t) q0 + (b/t^2)(y - 1) - (1 - c) q0^2,

augmented with G(t) := g(t)^(-b/A), which satisfies the closed ODE

    dG/dt = b B t^(a-2) (y - 1) y^(1-c),      G(t0) = 1,

so the time-transform function g = G^(-A/b) comes out of the integration
without nested quadrature.  q0 grows much more slowly than f0 near blowup,
which keeps the error control honest deep into the run.

Derived diagnostics: the identity f0 = B^-1 t^-a G y^c, the monotone map
tau = -g in [-1, 0), the bounded ratio chi with limit 2bB/(3-2c), its
deviation frakG, and the vanishing product xi = 1/(g y).  ``check_bounds``
evaluates the two-sided growth envelopes at every accepted sample and
reports signed relative margins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import InsufficientTail, NonFiniteState, OutOfRange
from .params import DerivedConstants, ModelParams, OdeData, condition_finite_time, curve_F, curve_L
from .rk import integrate_dopri5

__all__ = [
    "OdeState",
    "StopCriteria",
    "Trajectory",
    "AuxSample",
    "BlowupEstimate",
    "BoundRecord",
    "BoundReport",
    "rhs",
    "integrate_reference",
    "estimate_blowup_time",
    "eval_aux",
    "check_bounds",
    "tau_of_t",
    "t_of_tau",
    "RefInterpolant",
]

BOUND_TOL = 1e-8  # relative tolerance band for strict-inequality checks


@dataclass(frozen=True)
class OdeState:
    """One sample of the augmented first order system."""

    t: float
    y: float
    q0: float
    G: float


@dataclass(frozen=True)
class StopCriteria:
    """Stopping rules and tolerances for the reference integration.

    ``dense_cap`` bounds h * max(q0, 1/t): it keeps accepted samples dense
    enough that cubic-Hermite interpolation between them stays within a
    1e-9 relative budget (needed by the torus and compactified-time runs).
    """

    y_max: float = 1e8
    t_max: float | None = None          # default 1e6 * t0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    dense_cap: float = 0.02


def rhs(state: OdeState, p: ModelParams, dc: DerivedConstants) -> tuple[float, float, float]:
    """Time derivatives (dy, dq0, dG) at one state."""
    t, y, q0, G = state.t, state.y, state.q0, state.G
    dy = y * q0
    dq0 = -(p.a / t) * q0 + (p.b / t ** 2) * (y - 1.0) - (1.0 - p.c) * q0 * q0
    dG = p.b * dc.B * t ** (p.a - 2.0) * (y - 1.0) * y ** (1.0 - p.c)
    if not (math.isfinite(dy) and math.isfinite(dq0) and math.isfinite(dG)):
        raise NonFiniteState(f"rhs not finite at t={t}: ({dy}, {dq0}, {dG})")
    return dy, dq0, dG


@dataclass
class Trajectory:
    """Accepted samples of the reference run plus derived quantities."""

    params: ModelParams
    data: OdeData
    constants: DerivedConstants
    t: np.ndarray
    y: np.ndarray
    q0: np.ndarray
    G: np.ndarray
    dy: np.ndarray
    dq0: np.ndarray
    dG: np.ndarray
    stop_reason: str   # 'threshold' | 'max-time' | 'step-underflow'

    @cached_property
    def f(self) -> np.ndarray:
        return self.y - 1.0

    @cached_property
    def f0(self) -> np.ndarray:
        return self.y * self.q0

    @cached_property
    def g(self) -> np.ndarray:
        return self.G ** (-self.params.A / self.params.b)

    @cached_property
    def chi(self) -> np.ndarray:
        p, B = self.params, self.constants.B
        return self.G ** 2 * self.t ** (2.0 * (1.0 - p.a)) / (
            B * (self.y - 1.0) * self.y ** (2.0 * (1.0 - p.c))
        )

    @cached_property
    def xi(self) -> np.ndarray:
        return 1.0 / (self.g * self.y)

    @cached_property
    def frakG(self) -> np.ndarray:
        return self.chi - self.chi_limit

    @property
    def chi_limit(self) -> float:
        p = self.params
        return 2.0 * p.b * self.constants.B / (3.0 - 2.0 * p.c)

    @cached_property
    def tau(self) -> np.ndarray:
        return -self.g

    def state(self, i: int) -> OdeState:
        return OdeState(t=float(self.t[i]), y=float(self.y[i]), q0=float(self.q0[i]), G=float(self.G[i]))

    def index_at_y(self, y_value: float) -> int:
        """Index of the first sample with y >= y_value."""
        i = int(np.searchsorted(self.y, y_value))
        if i >= len(self.y):
            raise OutOfRange(f"trajectory never reaches y = {y_value:g}")
        return i

    @cached_property
    def interp(self) -> "RefInterpolant":
        return RefInterpolant(self)


def integrate_reference(
    p: ModelParams,
    d: OdeData,
    dc: DerivedConstants,
    stop: StopCriteria = StopCriteria(),
) -> Trajectory:
    """Adaptive run of the (y, q0, G) system until a stopping rule hits."""
    t_max = stop.t_max if stop.t_max is not None else 1e6 * d.t0
    y0 = np.array([1.0 + d.f_ring, d.f0_ring / (1.0 + d.f_ring), 1.0])

    a, b, c = p.a, p.b, p.c
    bB = b * dc.B

    def f(t, v):
        y, q0, _ = v
        return np.array(
            [
                y * q0,
                -(a / t) * q0 + (b / t ** 2) * (y - 1.0) - (1.0 - c) * q0 * q0,
                bB * t ** (a - 2.0) * (y - 1.0) * y ** (1.0 - c),
            ]
        )

    def cap(t, v):
        return stop.dense_cap / max(v[1], 1.0 / t)

    def stopper(t, v):
        return "threshold" if v[0] >= stop.y_max else None

    res = integrate_dopri5(
        f,
        d.t0,
        y0,
        t_max,
        rtol=stop.rel_tol,
        atol=stop.abs_tol,
        step_cap=cap,
        stop=stopper,
    )
    if res.stop_reason.startswith("stopped:"):
        reason = res.stop_reason.split(":", 1)[1]
    elif res.stop_reason == "reached-end":
        reason = "max-time"
    else:
        reason = res.stop_reason
    return Trajectory(
        params=p,
        data=d,
        constants=dc,
        t=res.ts,
        y=res.ys[:, 0],
        q0=res.ys[:, 1],
        G=res.ys[:, 2],
        dy=res.dys[:, 0],
        dq0=res.dys[:, 1],
        dG=res.dys[:, 2],
        stop_reason=reason,
    )


@dataclass(frozen=True)
class BlowupEstimate:
    """Linear extrapolation of z = y^(1-c) to zero over the run's tail."""

    t_m_est: float
    window: tuple[float, float]
    fit_residual: float
    threshold_y: float


def estimate_blowup_time(traj: Trajectory, p: ModelParams, *, tail: int = 20) -> BlowupEstimate:
    """Least-squares fit of z(t) = y^(1-c) over the last ``tail`` samples.

    z is asymptotically linear near blowup (f0 ~ const * y^c once g has
    settled), so the fitted zero crossing estimates the blowup time.  A
    non-negative or vanishing slope is the diverging signature (possibly
    infinite blowup time) and reports t_m_est = inf.
    """
    if traj.stop_reason != "threshold":
        raise InsufficientTail(f"run stopped on {traj.stop_reason!r}, not on the y threshold")
    n_past = int(np.sum(traj.y > 1e4))
    if n_past < tail:
        raise InsufficientTail(f"only {n_past} samples past y=1e4, need {tail}")
    t = traj.t[-tail:]
    z = traj.y[-tail:] ** (1.0 - p.c)
    slope, intercept = np.polyfit(t, z, 1)
    fit = slope * t + intercept
    residual = float(np.sqrt(np.mean((z - fit) ** 2)))
    if slope >= 0.0 or not math.isfinite(slope):
        t_m = math.inf
    else:
        t_m = float(-intercept / slope)
    return BlowupEstimate(
        t_m_est=t_m,
        window=(float(t[0]), float(t[-1])),
        fit_residual=residual,
        threshold_y=float(traj.y[-1]),
    )


@dataclass(frozen=True)
class AuxSample:
    """Derived quantities at one accepted sample."""

    t: float
    g: float
    chi: float
    xi: float
    frakG: float
    tau: float


def eval_aux(traj: Trajectory) -> list[AuxSample]:
    """Derived (g, chi, xi, frakG, tau) at every accepted sample."""
    return [
        AuxSample(
            t=float(traj.t[i]),
            g=float(traj.g[i]),
            chi=float(traj.chi[i]),
            xi=float(traj.xi[i]),
            frakG=float(traj.frakG[i]),
            tau=float(traj.tau[i]),
        )
        for i in range(len(traj.t))
    ]


@dataclass
class BoundRecord:
    bound_id: str
    label: str
    samples_checked: int
    worst_margin: float
    violations: int


@dataclass
class BoundReport:
    records: list[BoundRecord]

    @property
    def total_violations(self) -> int:
        return sum(r.violations for r in self.records)

    def record(self, bound_id: str) -> BoundRecord:
        for r in self.records:
            if r.bound_id == bound_id:
                return r
        raise KeyError(bound_id)


def _margin_record(bound_id: str, label: str, margins: np.ndarray) -> BoundRecord:
    if margins.size == 0:
        return BoundRecord(bound_id, label, 0, math.inf, 0)
    return BoundRecord(
        bound_id,
        label,
        int(margins.size),
        float(np.min(margins)),
        int(np.sum(margins < -BOUND_TOL)),
    )


def check_bounds(traj: Trajectory, dc: DerivedConstants, d: OdeData) -> BoundReport:
    """Signed relative margins of the growth envelopes at every sample.

    Positive margin = inequality satisfied; a violation is a margin below
    -1e-8 (discretization can graze analytically strict bounds).  Checks
    apply for t > t0 only; the reciprocal barrier applies for t < t_star
    and the improved lower bound only under the finite-time data condition.
    """
    sel = traj.t > d.t0
    t = traj.t[sel]
    y = traj.y[sel]
    f0 = traj.f0[sel]

    lb = np.exp(dc.cC * t ** ((dc.abar + dc.triangle) / 2.0) + dc.cD / t)
    rec_i = _margin_record("i", "exp lower bound < 1+f", (y - lb) / lb)

    mask2 = t < dc.t_star
    ub = 1.0 / curve_F(t[mask2], dc)
    rec_ii = _margin_record("ii", "1+f < 1/F before t_star", (ub - y[mask2]) / ub)

    L = curve_L(t, dc, d)
    lhs = y ** dc.cbar
    rec_iii = _margin_record("iii", "(1+f)^cbar < L", (L - lhs) / np.abs(L))

    ub4 = -dc.cB * dc.triangle * t ** ((dc.triangle + dc.abar) / 2.0 - 1.0) * y ** 2
    m4 = np.minimum(f0 / ub4, (ub4 - f0) / ub4)
    rec_iv = _margin_record("iv", "0 < f0 < derivative envelope", m4)

    if condition_finite_time(dc, d):
        base = 1.0 - dc.cE * d.t0 ** dc.abar + dc.cE * t ** dc.abar
        lb5 = (1.0 + d.f_ring) * base ** (1.0 / dc.cbar)
        rec_v = _margin_record("v", "improved lower bound < 1+f", (y - lb5) / lb5)
    else:
        rec_v = _margin_record("v", "improved lower bound < 1+f", np.array([]))

    return BoundReport(records=[rec_i, rec_ii, rec_iii, rec_iv, rec_v])


class RefInterpolant:
    """Cubic-Hermite interpolation of the reference run, with exact nodal
    derivatives from the right-hand side (4th-order accurate between the
    densely spaced samples), plus the monotone time map tau <-> t.

    The forward map tau(t) = -g(t) is interpolated the same way; its nodal
    values are strictly increasing, and the inverse is evaluated by a
    bracketed root solve on the interpolant, so the round trip is exact to
    solver tolerance.
    """

    def __init__(self, traj: Trajectory):
        self.traj = traj
        self.params = traj.params
        self.data = traj.data
        self.constants = traj.constants
        p, dc = traj.params, traj.constants
        t = traj.t
        self._t_lo = float(t[0])
        self._t_hi = float(t[-1])
        self._y = CubicHermiteSpline(t, traj.y, traj.dy)
        self._q0 = CubicHermiteSpline(t, traj.q0, traj.dq0)
        self._G = CubicHermiteSpline(t, traj.G, traj.dG)
        # tau = -G^(-A/b); d tau/dt = (A/b) G^(-A/b-1) dG/dt
        Ab = p.A / p.b
        tau_vals = -traj.G ** (-Ab)
        dtau = Ab * traj.G ** (-Ab - 1.0) * traj.dG
        if not np.all(np.diff(tau_vals) > 0.0):
            raise NonFiniteState("tau samples are not strictly increasing")
        self._tau = CubicHermiteSpline(t, tau_vals, dtau)
        self._tau_vals = tau_vals

    # -- scalar/array accessors in t ------------------------------------
    def _check_t(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self._t_lo * (1 - 1e-12)) or np.any(t > self._t_hi * (1 + 1e-12)):
            raise OutOfRange(f"t={t} outside covered range [{self._t_lo}, {self._t_hi}]")
        return t

    def y(self, t):
        return self._y(self._check_t(t))

    def q0(self, t):
        return self._q0(self._check_t(t))

    def G(self, t):
        return self._G(self._check_t(t))

    def f(self, t):
        return self.y(t) - 1.0

    def f0(self, t):
        return self.y(t) * self.q0(t)

    def g(self, t):
        return self.G(t) ** (-self.params.A / self.params.b)

    def chi(self, t):
        p, dc = self.params, self.constants
        y = self.y(t)
        return self.G(t) ** 2 * np.asarray(t, dtype=float) ** (2.0 * (1.0 - p.a)) / (
            dc.B * (y - 1.0) * y ** (2.0 * (1.0 - p.c))
        )

    def xi(self, t):
        return 1.0 / (self.g(t) * self.y(t))

    def frakG(self, t):
        return self.chi(t) - self.traj.chi_limit

    def tau(self, t):
        return self._tau(self._check_t(t))

    def t_of_f(self, f_value: float) -> float:
        """Time at which f first reaches ``f_value`` (monotone y)."""
        if f_value < self.traj.f[0] or f_value > self.traj.f[-1]:
            raise OutOfRange(f"f={f_value} outside run range")
        i = int(np.searchsorted(self.traj.f, f_value))
        i = max(1, min(i, len(self.traj.t) - 1))
        lo, hi = self.traj.t[i - 1], self.traj.t[i]
        return float(brentq(lambda t: self._y(t) - (1.0 + f_value), lo, hi, xtol=1e-14, rtol=1e-15))

    # -- time map ---------------------------------------------------------
    def tau_range(self) -> tuple[float, float]:
        return float(self._tau_vals[0]), float(self._tau_vals[-1])

    def tau_of_t(self, t):
        return self.tau(t)

    def t_of_tau(self, tau):
        tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
        lo, hi = self.tau_range()
        if np.any(tau_arr < lo - 1e-14) or np.any(tau_arr > hi + 1e-14):
            raise OutOfRange(f"tau={tau} outside covered range [{lo}, {hi}]")
        out = np.empty_like(tau_arr)
        for j, tv in enumerate(tau_arr):
            i = int(np.searchsorted(self._tau_vals, tv))
            if i == 0:
                out[j] = self._t_lo
                continue
            if i >= len(self._tau_vals):
                out[j] = self._t_hi
                continue
            a, b = self.traj.t[i - 1], self.traj.t[i]
            if self._tau_vals[i - 1] >= tv:
                out[j] = a
                continue
            out[j] = brentq(lambda t: self._tau(t) - tv, a, b, xtol=1e-15, rtol=8.9e-16)
        return float(out[0]) if np.isscalar(tau) or np.asarray(tau).ndim == 0 else out


def tau_of_t(traj: Trajectory, t) -> float | np.ndarray:
    """Compactified time tau = -g at physical time t (interpolated)."""
    v = traj.interp.tau_of_t(t)
    return float(v) if np.asarray(v).ndim == 0 else v


def t_of_tau(traj: Trajectory, tau) -> float | np.ndarray:
    """Physical time at compactified time tau (monotone inverse)."""
    return traj.interp.t_of_tau(tau)
