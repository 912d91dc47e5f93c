"""Semicircle integrals, the complexity exponent and the threshold energies."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, InconsistencyError


def _finite(x: float, name: str = "x") -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return x


def _check_p(p: int) -> int:
    if int(p) != p or p < 3:
        raise DomainError(f"p must be an integer >= 3, got {p!r}")
    return int(p)


def omega(x: float) -> float:
    """Logarithmic potential of the semicircle law, ``int log|l - x| dmu(l)``.

    The |x| > 2 branch is written as ``|x|/(|x|+sqrt(x^2-4)) - 1/2 + log(...)``,
    which is algebraically the textbook form but avoids cancelling the
    ``x^2/4`` term against the square root for large |x|.
    """
    x = _finite(x)
    a = abs(x)
    if a <= 2.0:
        return x * x / 4.0 - 0.5
    s = math.sqrt(a * a - 4.0)
    return a / (a + s) - 0.5 + math.log(s / 2.0 + a / 2.0)


def omega_prime(x: float) -> float:
    """Derivative of :func:`omega` outside the bulk, i.e. the Stieltjes transform."""
    x = _finite(x)
    a = abs(x)
    if a <= 2.0:
        raise DomainError("omega_prime is only defined for |x| > 2")
    return math.copysign(2.0 / (a + math.sqrt(a * a - 4.0)), x)


def theta(p: int, u: float) -> float:
    """Annealed complexity of critical points below level ``u``."""
    p = _check_p(p)
    u = _finite(u, "u")
    if u >= 0.0:
        return 0.5 * math.log(p - 1)
    # the bracket vanishes as u -> 0-, so adding log last keeps the join with u >= 0 monotone
    return 0.5 * math.log(p - 1) + ((0.5 + omega(math.sqrt(p / (p - 1)) * u)) - u * u / 2.0)


def e_inf(p: int) -> float:
    p = _check_p(p)
    return 2.0 * math.sqrt((p - 1) / p)


def u_th(p: int) -> float:
    p = _check_p(p)
    return math.sqrt(2.0 * (p - 1) / (p - 2) * math.log(p - 1))


def resolvent_s(p: int, u: float) -> float:
    """``int dmu(l) / (w l - u)`` with ``w = sqrt((p-1)/p)``, for u below the bulk edge.

    Equals ``-omega_prime(u/w)/w``, which is how it is evaluated.
    """
    p = _check_p(p)
    u = _finite(u, "u")
    if u >= -e_inf(p):
        raise DomainError("resolvent_s needs u < -E_inf(p)")
    w = math.sqrt((p - 1) / p)
    return -omega_prime(u / w) / w


@dataclass(frozen=True)
class ThresholdSet:
    p: int
    e_inf: float
    e_zero: float
    u_th: float
    e_zero_residual: float

    def as_dict(self) -> dict:
        return {
            "p": self.p,
            "e_inf": self.e_inf,
            "e_zero": self.e_zero,
            "u_th": self.u_th,
            "e_zero_residual": self.e_zero_residual,
        }


def thresholds(p: int, tol: float = 1e-12) -> ThresholdSet:
    """Compute E_inf, E_0 and u_th; E_0 is the bisection root of theta(p, -E) = 0."""
    p = _check_p(p)
    if not tol > 0:
        raise DomainError("tol must be positive")
    ei, ut = e_inf(p), u_th(p)
    lo, hi = ei + 1e-9, ut
    f_lo, f_hi = theta(p, -lo), theta(p, -hi)
    if not (f_lo > 0.0 > f_hi):
        raise InconsistencyError(
            f"theta sign condition violated at p={p}: theta(-e_inf)={f_lo}, theta(-u_th)={f_hi}"
        )
    # E -> theta(p, -E) is decreasing on the bracket.
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = theta(p, -mid)
        if f_mid == 0.0:
            lo = hi = mid
            break
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol and abs(f_mid) <= tol:
            break
    root = lo if abs(theta(p, -lo)) <= abs(theta(p, -hi)) else hi
    resid = abs(theta(p, -root))
    if not (ei < root < ut) or resid > tol:
        raise InconsistencyError(f"bisection for E_0(p={p}) ended with residual {resid}")
    return ThresholdSet(p=p, e_inf=ei, e_zero=root, u_th=ut, e_zero_residual=resid)
