"""Two-point complexity Psi, its diagonal restriction, and landscape maximization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import covariance as cv
from .errors import DomainError
from .special_functions import e_inf, omega, theta

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _check_p(p: int) -> int:
    if int(p) != p or p < 3:
        raise DomainError(f"p must be an integer >= 3, got {p!r}")
    return int(p)


def zeta(p: int, u: float) -> float:
    p = _check_p(p)
    return 1.0 + math.log(p - 1) + 2.0 * omega(math.sqrt(p / (p - 1)) * u)


def psi(p: int, r: float, u1: float, u2: float) -> float:
    """Two-point exponent from the quadratic form against Sigma_U^{-1}."""
    p, r = cv._check(p, r)
    # Sigma_U is circulant: diagonalize in the (u1 + u2, u1 - u2) basis
    e_plus, e_minus = cv.sigma_u_eigen(p, r)
    quad = 0.5 * ((u1 + u2) ** 2 / e_plus + (u1 - u2) ** 2 / e_minus)
    c = math.sqrt(p / (p - 1))
    return (
        1.0
        + math.log(p - 1)
        + 0.5 * math.log((1.0 - r * r) / (1.0 - r ** (2 * p - 2)))
        - 0.5 * quad
        + (omega(c * u1) + omega(c * u2))  # grouped so swapping u1, u2 is exact
    )


def psi_diag_ratio(p: int, r: float, u: float) -> float:
    """Diagonal exponent through the closed ratio form (second, independent path)."""
    p, r = cv._check(p, r)
    a = (p - 1) * r ** (p - 2) * (1.0 - r * r)
    num = 1.0 - r**p + a
    den = 1.0 - r ** (2 * p - 2) + a
    return zeta(p, u) + 0.5 * math.log((1.0 - r * r) / (1.0 - r ** (2 * p - 2))) - u * u * num / den


# Cancellation-free pieces, valid on (-1, 1].

def _log_ratio(p: int, r: float) -> float:
    # log((1-r^2)/(1-r^{2p-2})) with the quotient expanded as a geometric sum
    return -math.log(sum(r ** (2 * k) for k in range(p - 1)))


def _g0_stable(p: int, r: float) -> float:
    # r^p (1-r^{p-2}) / ((1-r^2)(p-1)(S + r^{p-2})), S = sum r^{2k}/(p-1)
    partial = sum(r**k for k in range(p - 2))
    s = sum(r ** (2 * k) for k in range(p - 1)) / (p - 1)
    return r**p * partial / ((1.0 + r) * (p - 1) * (s + r ** (p - 2)))


def g0(p: int, r: float) -> float:
    p = _check_p(p)
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise DomainError("g0 is defined for r in [0, 1]")
    if r == 1.0:
        return (p - 2) / (4.0 * (p - 1))
    return _g0_stable(p, r)


def _g0_polys(p: int):
    # g0 = num/den as polynomials in r; den > 0 on [0, 1]
    P = np.polynomial.Polynomial
    num = P([0.0] * p + [1.0] * (p - 2))
    s = P([1.0 if k % 2 == 0 else 0.0 for k in range(2 * p - 3)])
    den = P([1.0, 1.0]) * (s + (p - 1) * P([0.0] * (p - 2) + [1.0]))
    return num, den


def g0_prime(p: int, r: float) -> float:
    """Derivative of g0 on [0, 1]."""
    p = _check_p(p)
    num, den = _g0_polys(p)
    n, d = num(r), den(r)
    return float((num.deriv()(r) * d - n * den.deriv()(r)) / (d * d))


def q_fn(p: int, u: float, r: float) -> float:
    p = _check_p(p)
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise DomainError("q_fn is defined for r in [0, 1]")
    if r == 0.0:
        return 0.0
    if r == 1.0:
        return 0.5 * math.log(1.0 / (p - 1)) + u * u * (p - 2) / (4.0 * (p - 1))
    return 0.5 * _log_ratio(p, r) + u * u * _g0_stable(p, r)


def psi_bar(p: int, u: float, r: float) -> float:
    """Continuous extension of ``psi(p, r, u, u)`` to the closed interval [-1, 1].

    For odd p at r = -1 the limit is -inf unless u = 0: the ratio term
    has a negative numerator over a vanishing denominator there.
    """
    p = _check_p(p)
    r = float(r)
    if not -1.0 <= r <= 1.0:
        raise DomainError("psi_bar needs |r| <= 1")
    if r == -1.0:
        if p % 2 == 0:
            r = 1.0
        elif u == 0.0:
            return zeta(p, u) + 0.5 * math.log(1.0 / (p - 1))
        else:
            return -math.inf
    if r == 1.0:
        return zeta(p, u) - u * u + q_fn(p, u, 1.0)
    return zeta(p, u) - u * u + 0.5 * _log_ratio(p, r) + u * u * _g0_stable(p, r)


@dataclass(frozen=True)
class LandscapeMax:
    p: int
    u: float
    r_star: float
    psi_max: float
    margin: float
    maximizers: tuple[float, ...]


def _golden_max(f, a: float, b: float, tol: float) -> tuple[float, float]:
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def landscape_argmax(p: int, u: float, grid: int = 2001, refine_tol: float = 1e-10,
                     tie_tol: float = 1e-10) -> LandscapeMax:
    """Maximize ``psi_bar(p, u, .)`` over [-1, 1].

    Every grid-local maximum is refined by golden section. Ties within
    ``tie_tol`` are all listed in ``maximizers``; ``r_star`` is the largest of them.
    """
    p = _check_p(p)
    if grid < 101:
        raise DomainError("grid must have at least 101 points")
    rs = np.linspace(-1.0, 1.0, int(grid))
    vals = np.array([psi_bar(p, u, float(x)) for x in rs])
    f = lambda x: psi_bar(p, u, x)  # noqa: E731
    cands: list[tuple[float, float]] = []
    n = len(rs)
    for i in range(n):
        left = vals[i - 1] if i > 0 else -math.inf
        right = vals[i + 1] if i < n - 1 else -math.inf
        if not (vals[i] >= left and vals[i] >= right) or vals[i] == -math.inf:
            continue
        if 0 < i < n - 1:
            x, v = _golden_max(f, rs[i - 1], rs[i + 1], refine_tol)
            # on flat tops rounding can pull the refined point off the node
            cands.append((x, v) if v > vals[i] else (float(rs[i]), float(vals[i])))
        else:
            cands.append((float(rs[i]), float(vals[i])))
    # merge candidates that refined onto the same point
    cands.sort()
    merged: list[tuple[float, float]] = []
    for x, v in cands:
        if merged and abs(x - merged[-1][0]) < 10 * refine_tol + 1e-9:
            if v > merged[-1][1]:
                merged[-1] = (x, v)
        else:
            merged.append((x, v))
    best = max(v for _, v in merged)
    top = [(x, v) for x, v in merged if v >= best - tie_tol]
    rest = [v for _, v in merged if v < best - tie_tol]
    r_star = max(x for x, _ in top)
    margin = best - max(rest) if rest else math.inf
    return LandscapeMax(p, float(u), float(r_star), float(best), float(margin),
                        tuple(float(x) for x, _ in top))


@dataclass(frozen=True)
class OffDiagReport:
    p: int
    r: float
    box: tuple[float, float]
    grid_max: float
    diag_max: float
    max_offset: float  # |u1 - u2| at the grid maximizer
    hessian_max_eig: float
    diagonal_max: bool
    concave: bool


def sup_offdiag_check(p: int, r: float, box: tuple[float, float], grid: int = 61,
                      fd_step: float = 1e-4) -> OffDiagReport:
    """Check that the max of psi over box x box lies on the diagonal and psi is concave there."""
    p = _check_p(p)
    lo, hi = float(box[0]), float(box[1])
    if not (lo < hi < -e_inf(p)):
        raise DomainError("box must lie strictly below -E_inf(p)")
    us = np.linspace(lo, hi, int(grid))
    vals = np.array([[psi(p, r, a, b) for b in us] for a in us])
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    grid_max = float(vals[i, j])
    diag_max = float(np.max(np.diag(vals)))
    h = fd_step
    worst = -math.inf
    for a in us[1:-1]:
        for b in us[1:-1]:
            f = lambda x, y: psi(p, r, x, y)  # noqa: E731
            f0 = f(a, b)
            faa = (f(a + h, b) - 2 * f0 + f(a - h, b)) / h**2
            fbb = (f(a, b + h) - 2 * f0 + f(a, b - h)) / h**2
            fab = (f(a + h, b + h) - f(a + h, b - h) - f(a - h, b + h) + f(a - h, b - h)) / (4 * h * h)
            worst = max(worst, float(np.linalg.eigvalsh(np.array([[faa, fab], [fab, fbb]]))[-1]))
    step = (hi - lo) / (grid - 1)
    return OffDiagReport(
        p=p, r=float(r), box=(lo, hi), grid_max=grid_max, diag_max=diag_max,
        max_offset=float(abs(us[i] - us[j])), hessian_max_eig=worst,
        diagonal_max=bool(grid_max - diag_max <= 1e-12 or abs(us[i] - us[j]) <= step * 1.0001),
        concave=bool(worst <= 1e-6),
    )


# ---------------------------------------------------------------------------

def log_sphere_area(N: int) -> float:
    """log of the surface area of the unit sphere in R^N."""
    if N < 1:
        raise DomainError("N must be >= 1")
    return math.log(2.0) + 0.5 * N * math.log(math.pi) - float(gammaln(N / 2.0))


@dataclass(frozen=True)
class KrPrefactors:
    log_c_n: float
    g: float
    f: float

    def log_weight(self, N: int) -> float:
        """``log(C_N * G^N * F)``."""
        return self.log_c_n + N * math.log(self.g) + math.log(self.f)


def kr_prefactors(p: int, N: int, r: float) -> KrPrefactors:
    p, r = cv._check(p, r)
    if int(N) != N or N < 2:
        raise DomainError("N must be an integer >= 2")
    log_c = (
        log_sphere_area(N)
        + log_sphere_area(N - 1)
        + (N - 1) * math.log((N - 1) * (p - 1) / (2.0 * math.pi))
    )
    one_m = 1.0 - r ** (2 * p - 2)
    g = math.sqrt((1.0 - r * r) / one_m)
    c = cv._c(p, r)
    f = g**-3 / math.sqrt(one_m) / math.sqrt(1.0 - c * c)
    return KrPrefactors(log_c, g, f)
