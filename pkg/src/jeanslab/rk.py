"""Adaptive embedded Runge-Kutta 5(4) driver (Dormand-Prince pair).

One driver serves the reference integration, the torus evolution and the
compactified-time evolution.  Hooks:

* ``step_cap(t, y)`` -- hard upper bound on the next step (CFL limits,
  relative caps near a singular time, dense-output caps).
* ``checkpoints`` -- strictly increasing times the stepper lands on exactly
  (snapshot/comparison instants).
* ``accept_guard(t, y)`` -- invariant check on a trial state; a failing
  trial is rejected and the step halved, like an oversized error.
* ``stop(t, y)`` -- evaluated on accepted states; a non-None string ends
  the run with that reason.

The controller is a standard PI: safety 0.9, growth clamped to [0.2, 5].
Non-finite trial states are treated as infinite error.  A fixed-step
variant of the same tableau is provided for convergence-order studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = ["DriverResult", "integrate_dopri5", "dopri5_fixed"]

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# 5th-order weights equal the last A row (FSAL); error weights are b5 - b4.
_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)

_ORDER = 5
_SAFETY = 0.9
_MAX_RATIO = 5.0
_MIN_RATIO = 0.2
# PI exponents for a 5th-order pair
_ALPHA = 0.7 / _ORDER
_BETA = 0.4 / _ORDER


@dataclass
class DriverResult:
    """Accepted samples plus derivative values and the stop reason."""

    ts: np.ndarray
    ys: np.ndarray          # shape (n_samples, n_state)
    dys: np.ndarray         # rhs at each accepted sample
    stop_reason: str        # 'reached-end' | 'stopped:<reason>' | 'step-underflow'
    n_accepted: int = 0
    n_rejected: int = 0
    checkpoint_hits: list[int] = field(default_factory=list)  # indices into ts


def _err_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    r = err / scale
    return float(np.sqrt(np.mean(r * r)))


def _initial_step(t0, y0, dy0, t_end, rtol, atol) -> float:
    """Cheap starting-step heuristic: resolve the initial derivative scale."""
    scale = atol + rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((dy0 / scale) ** 2)))
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    return min(h0, 0.1 * (t_end - t0))


def integrate_dopri5(
    f: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    t_end: float,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    step_cap: Callable[[float, np.ndarray], float] | None = None,
    checkpoints: Sequence[float] = (),
    accept_guard: Callable[[float, np.ndarray], bool] | None = None,
    stop: Callable[[float, np.ndarray], str | None] | None = None,
    min_step_rel: float = 1e-14,
    max_steps: int = 5_000_000,
) -> DriverResult:
    """Integrate forward from t0 to t_end, recording every accepted step.

    Underflow (h below ``min_step_rel * |t|``) is reported as the stop
    reason ``'step-underflow'`` together with the last accepted state, not
    raised.  Works for negative time ranges (compactified time) as long as
    t_end > t0.
    """
    if not t_end > t0:
        raise ValueError(f"t_end must exceed t0, got [{t0}, {t_end}]")
    y = np.asarray(y0, dtype=float).copy()
    t = float(t0)
    k1 = np.asarray(f(t, y), dtype=float)

    ts = [t]
    ys = [y.copy()]
    dys = [k1.copy()]
    cp = [c for c in sorted(checkpoints) if t0 < c < t_end]
    cp.append(t_end)
    cp_idx = 0
    hits: list[int] = []

    h_prop = _initial_step(t, y, k1, t_end, rtol, atol)
    err_prev = 1.0
    n_acc = 0
    n_rej = 0
    reason = "reached-end"
    y_new = y

    for _ in range(max_steps):
        if cp_idx >= len(cp):
            break
        target = cp[cp_idx]
        h = h_prop
        if step_cap is not None:
            h = min(h, step_cap(t, y))
        clipped = h >= target - t
        if clipped:
            h = target - t
            if h <= 8e-16 * max(abs(t), abs(target)):
                # within roundoff of the checkpoint: snap instead of stepping
                ts[-1] = target
                t = target
                hits.append(len(ts) - 1)
                cp_idx += 1
                continue
        if h <= min_step_rel * max(abs(t), 1e-300):
            reason = "step-underflow"
            break

        ks = [k1]
        trial_bad = False
        for i in range(1, 7):
            yi = y + h * sum(aij * kj for aij, kj in zip(_A[i], ks))
            if not np.all(np.isfinite(yi)):
                trial_bad = True
                break
            ki = np.asarray(f(t + _C[i] * h, yi))
            if not np.all(np.isfinite(ki)):
                trial_bad = True
                break
            ks.append(ki)

        if trial_bad:
            err = math.inf
        else:
            y_new = yi  # 7th stage state: the 5th-order solution (FSAL)
            err_vec = h * sum(e * kj for e, kj in zip(_E, ks))
            err = _err_norm(err_vec, y, y_new, rtol, atol)
            if not math.isfinite(err):
                err = math.inf

        guard_ok = True
        if err <= 1.0 and accept_guard is not None:
            guard_ok = accept_guard(t + h, y_new)

        if err <= 1.0 and guard_ok:
            t = target if clipped else t + h
            y = y_new
            k1 = ks[6]  # FSAL: last stage is f(t_new, y_new)
            ts.append(t)
            ys.append(y.copy())
            dys.append(k1.copy())
            n_acc += 1
            if clipped:
                hits.append(len(ts) - 1)
                cp_idx += 1
            if stop is not None:
                s = stop(t, y)
                if s is not None:
                    reason = f"stopped:{s}"
                    break
            factor = _MAX_RATIO if err == 0.0 else _SAFETY * err ** (-_ALPHA) * err_prev ** _BETA
            err_prev = max(err, 1e-10)
            # grow from the controller's proposal, not from a clipped step
            base = h_prop if clipped else h
            h_prop = base * min(_MAX_RATIO, max(_MIN_RATIO, factor))
        else:
            n_rej += 1
            if math.isinf(err):
                h_prop = 0.5 * h
            else:
                h_prop = h * min(1.0, max(_MIN_RATIO, _SAFETY * err ** (-_ALPHA)))
    else:
        raise RuntimeError(f"integrator exceeded {max_steps} steps")

    return DriverResult(
        ts=np.array(ts),
        ys=np.array(ys),
        dys=np.array(dys),
        stop_reason=reason,
        n_accepted=n_acc,
        n_rejected=n_rej,
        checkpoint_hits=hits,
    )


def dopri5_fixed(
    f: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    t_end: float,
    n_steps: int,
) -> np.ndarray:
    """Fixed-step run of the 5th-order solution; used for order studies."""
    y = np.asarray(y0, dtype=float).copy()
    t = float(t0)
    h = (t_end - t0) / n_steps
    for _ in range(n_steps):
        ks = [np.asarray(f(t, y))]
        for i in range(1, 7):
            yi = y + h * sum(aij * kj for aij, kj in zip(_A[i], ks))
            ks.append(np.asarray(f(t + _C[i] * h, yi)))
        y = y + h * sum(aij * kj for aij, kj in zip(_A[6], ks))
        t += h
    return y
