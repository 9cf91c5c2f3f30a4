"""Parameter region, closed-form constants, barrier curves and critical times.

The model is the second order equation

    d2f/dt2 + (a/t) df/dt - (b/t^2) f (1+f) - c/(1+f) (df/dt)^2 = 0,
    f(t0) = f_ring > 0,   df/dt(t0) = f0_ring > 0,

posed for parameters in the region

    a > 1,  b > 0,  1 < c < 3/2,
    3c - sqrt(2) sqrt(8c-5) < k < 3c + sqrt(2) sqrt(8c-5),

together with a wave-number coupling k, a metric scale m and a gauge
constant A in (0, 2b/(3-2c)) used by the compactified-time map.

Everything here is closed form: the discriminant ``triangle``, the data
constants ``cA``..``cE``, the two barrier curves ``curve_F``/``curve_L``
whose zeros bracket the blowup time, and the limit eigenvalues
``lambda_tilde`` of the singular coefficient block.  The only numerical
step is the bracketed bisection locating the smallest zero of ``curve_F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, NoSignChange, NonPositiveEigenvalue, OutOfRegion

__all__ = [
    "ModelParams",
    "OdeData",
    "DerivedConstants",
    "validate_params",
    "k_admissible_interval",
    "derive_constants",
    "curve_F",
    "curve_L",
    "find_t_star",
    "eigenvalues_tilde",
    "lambda_tilde_values",
    "condition_finite_time",
]


@dataclass(frozen=True)
class ModelParams:
    """Equation parameters (a, b, c, k), metric scale m and gauge constant A."""

    a: float
    b: float
    c: float
    k: float
    m: float
    A: float


@dataclass(frozen=True)
class OdeData:
    """Initial time and data (f_ring, f0_ring) of the reference solution."""

    t0: float
    f_ring: float
    f0_ring: float

    def __post_init__(self):
        if not (self.t0 > 0 and self.f_ring > 0 and self.f0_ring > 0):
            raise DomainError(
                f"reference data must satisfy t0, f_ring, f0_ring > 0, got "
                f"({self.t0}, {self.f_ring}, {self.f0_ring})"
            )


@dataclass(frozen=True)
class DerivedConstants:
    """Every closed-form constant computable from (params, data).

    ``t_upper_star`` is defined only when the finite-time data condition
    holds (strictly); it is ``None`` otherwise.
    """

    abar: float
    cbar: float
    triangle: float
    B: float
    cA: float
    cB: float
    cC: float
    cD: float
    cE: float
    tri_tilde: float
    lambda_tilde: tuple[float, float, float]
    t_star: float
    t_upper_star: float | None


def validate_params(a: float, b: float, c: float, k: float, m: float, A: float) -> ModelParams:
    """Validate the six raw reals against the admissible region.

    Raises :class:`OutOfRegion` naming the violated inequality; the gauge
    constant A must additionally lie in (0, 2b/(3-2c)).
    """
    if not a > 1:
        raise OutOfRegion("a>1", f"a={a}")
    if not b > 0:
        raise OutOfRegion("b>0", f"b={b}")
    if not 1 < c < 1.5:
        raise OutOfRegion("1<c<3/2", f"c={c}")
    lo, hi = k_admissible_interval(c)
    if not k > lo:
        raise OutOfRegion("k-lower", f"k={k} <= {lo}")
    if not k < hi:
        raise OutOfRegion("k-upper", f"k={k} >= {hi}")
    if not 0 < A < 2 * b / (3 - 2 * c):
        raise OutOfRegion("A-range", f"A={A} not in (0, {2 * b / (3 - 2 * c)})")
    return ModelParams(a=a, b=b, c=c, k=k, m=m, A=A)


def k_admissible_interval(c: float) -> tuple[float, float]:
    """Open interval of admissible k for a given c in (1, 3/2).

    Endpoints are 3c -/+ sqrt(2) sqrt(8c-5); the midpoint is 3c.
    """
    if not 1 < c < 1.5:
        raise DomainError(f"c must lie in (1, 3/2), got {c}")
    half = math.sqrt(2.0) * math.sqrt(8.0 * c - 5.0)
    return 3.0 * c - half, 3.0 * c + half


def condition_finite_time(dc: DerivedConstants, d: OdeData) -> bool:
    """Strict data condition guaranteeing finite-time blowup.

    Equivalent to 1/cE < t0^abar; equality counts as *not* satisfied.
    """
    return 1.0 / dc.cE < d.t0 ** dc.abar


def derive_constants(p: ModelParams, d: OdeData) -> DerivedConstants:
    """Fill every closed-form constant, then locate t_star by bisection.

    Pure and deterministic: identical inputs give bit-identical outputs.
    """
    a, b, c = p.a, p.b, p.c
    t0, fr, f0r = d.t0, d.f_ring, d.f0_ring
    abar = 1.0 - a
    cbar = 1.0 - c
    tri = math.sqrt((1.0 - a) ** 2 + 4.0 * b)
    B = (1.0 + fr) ** c / (t0 ** a * f0r)

    yq = t0 * f0r / (1.0 + fr) ** 2          # t0 f0_ring / (1+f_ring)^2
    fq = fr / (1.0 + fr)                      # f_ring / (1+f_ring)
    cA = t0 ** (-(abar - tri) / 2.0) / tri * (yq - (abar + tri) / 2.0 * fq)
    cB = t0 ** (-(abar + tri) / 2.0) / tri * ((abar - tri) / 2.0 * fq - yq)
    cC = (
        2.0
        / (2.0 + abar + tri)
        * (math.log1p(fr) + (abar + tri) / (2.0 * b) * t0 * f0r / (1.0 + fr))
        * t0 ** (-(abar + tri) / 2.0)
    )
    cD = (abar + tri) / (2.0 + abar + tri) * (math.log1p(fr) - t0 * f0r / (b * (1.0 + fr))) * t0
    cE = cbar * f0r * t0 ** (1.0 - abar) / (abar * (1.0 + fr))

    tri_tilde, lam = lambda_tilde_values(b, c, p.k)

    dc = DerivedConstants(
        abar=abar,
        cbar=cbar,
        triangle=tri,
        B=B,
        cA=cA,
        cB=cB,
        cC=cC,
        cD=cD,
        cE=cE,
        tri_tilde=tri_tilde,
        lambda_tilde=lam,
        t_star=math.nan,
        t_upper_star=None,
    )
    t_star = find_t_star(dc, t0)
    t_upper = None
    if condition_finite_time(dc, d):
        t_upper = (t0 ** abar - 1.0 / cE) ** (1.0 / abar)
    return replace(dc, t_star=t_star, t_upper_star=t_upper)


def curve_F(t, dc: DerivedConstants):
    """Reciprocal-density barrier cA t^((abar-tri)/2) + cB t^((abar+tri)/2) + 1.

    Positive on [t0, t_star), zero at t_star, and tends to -inf as t grows.
    Accepts scalars or arrays.
    """
    t = np.asarray(t, dtype=float)
    v = (
        dc.cA * t ** ((dc.abar - dc.triangle) / 2.0)
        + dc.cB * t ** ((dc.abar + dc.triangle) / 2.0)
        + 1.0
    )
    return float(v) if v.ndim == 0 else v


def curve_L(t, dc: DerivedConstants, d: OdeData):
    """Power-law barrier (1+f_ring)^cbar (1 - cE t0^abar + cE t^abar).

    Strictly decreasing for t > t0; its zero (when it exists) is
    t_upper_star.  Accepts scalars or arrays.
    """
    t = np.asarray(t, dtype=float)
    v = (1.0 + d.f_ring) ** dc.cbar * (1.0 - dc.cE * d.t0 ** dc.abar + dc.cE * t ** dc.abar)
    return float(v) if v.ndim == 0 else v


def find_t_star(dc: DerivedConstants, t0: float, *, cap_factor: float = 1e12, rel_tol: float = 1e-13) -> float:
    """Smallest zero of ``curve_F`` in (t0, inf).

    Geometric bracket expansion (doubling from 2 t0) followed by bisection.
    Bisection is used rather than a derivative method because the curve can
    be nearly flat at the root.  Raises :class:`NoSignChange` if no sign
    change is found below ``cap_factor * t0``.
    """
    f = lambda t: curve_F(t, dc)
    lo = t0
    f_lo = f(lo)
    if f_lo <= 0.0:
        # f(t0) = 1/(1+f_ring) > 0 for any valid data; reaching here means
        # the constants are inconsistent.
        raise NoSignChange(f"curve_F({t0}) = {f_lo} is not positive")
    hi = 2.0 * t0
    while f(hi) > 0.0:
        hi *= 2.0
        if hi > cap_factor * t0:
            raise NoSignChange(f"no sign change of curve_F below {cap_factor:g} * t0")
    lo = hi / 2.0 if hi > 2.0 * t0 else t0
    # plain bisection to relative width rel_tol
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lambda_tilde_values(b: float, c: float, k: float) -> tuple[float, tuple[float, float, float]]:
    """Raw limit eigenvalues (no positivity check) and their discriminant.

    tri_tilde = sqrt(52 c^2 - 56 c k - 104 c + 20 k^2 + 40 k + 65),
    lam1,2 = b (4c - 4k - 5 -/+ tri_tilde) / (2 (2c - 3)),  lam3 = 2b/(3-2c).

    Used directly for sweeps that probe outside the admissible region.
    """
    radicand = 52.0 * c ** 2 - 56.0 * c * k - 104.0 * c + 20.0 * k ** 2 + 40.0 * k + 65.0
    if radicand < 0.0:
        raise DomainError(f"eigenvalue discriminant negative ({radicand}) at c={c}, k={k}")
    tri_tilde = math.sqrt(radicand)
    denom = 2.0 * (2.0 * c - 3.0)
    lam1 = b * (4.0 * c - 4.0 * k - 5.0 - tri_tilde) / denom
    lam2 = b * (4.0 * c - 4.0 * k - 5.0 + tri_tilde) / denom
    lam3 = 2.0 * b / (3.0 - 2.0 * c)
    return tri_tilde, (lam1, lam2, lam3)


def eigenvalues_tilde(p: ModelParams) -> tuple[float, float, float]:
    """Limit eigenvalues of the symmetrized singular block.

    All three are strictly positive inside the admissible region; a
    non-positive value signals a region bug and raises.
    """
    _, lam = lambda_tilde_values(p.b, p.c, p.k)
    if min(lam) <= 0.0:
        raise NonPositiveEigenvalue(f"lambda_tilde = {lam} for params {p}")
    return lam
