"""Independent reference computations used across the test suite.

Nothing here imports the package: each oracle recomputes its quantity
from the defining integral or kernel.
"""

from __future__ import annotations

import math

import mpmath as mp
from scipy import integrate


def semicircle_density(x: float) -> float:
    return math.sqrt(max(4.0 - x * x, 0.0)) / (2.0 * math.pi)


def omega_quad(x: float) -> float:
    """int log|l - x| rho_sc(l) dl by adaptive quadrature, splitting at the log singularity."""
    f = lambda l: math.log(abs(l - x)) * semicircle_density(l)  # noqa: E731
    if -2.0 < x < 2.0:
        a = integrate.quad(f, -2.0, x, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
        b = integrate.quad(f, x, 2.0, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
        return a + b
    return integrate.quad(f, -2.0, 2.0, epsabs=1e-13, epsrel=1e-13, limit=400)[0]


def omega_mp(x) -> mp.mpf:
    """High-precision version via mpmath's tanh-sinh quadrature."""
    x = mp.mpf(x)
    f = lambda l: mp.log(abs(l - x)) * mp.sqrt(4 - l * l) / (2 * mp.pi)  # noqa: E731
    pts = [-2, x, 2] if -2 < x < 2 else [-2, 2]
    return mp.quad(f, pts)


def theta_mp(p: int, u) -> mp.mpf:
    u = mp.mpf(u)
    if u >= 0:
        return mp.log(p - 1) / 2
    return mp.mpf(1) / 2 + mp.log(p - 1) / 2 - u * u / 2 + omega_mp(mp.sqrt(mp.mpf(p) / (p - 1)) * u)


def resolvent_quad(p: int, u: float) -> float:
    w = math.sqrt((p - 1) / p)
    return integrate.quad(lambda l: semicircle_density(l) / (w * l - u), -2.0, 2.0,
                          epsabs=1e-14, epsrel=1e-13, limit=400)[0]


def chart_kernel(p: int, r, d: int):
    """Covariance kernel rho(x, y)^p in the local charts around n and sigma(r).

    x, y are tangent coordinates (d = N - 1 of them); the last one points
    along the great circle joining the two points.
    """
    r = mp.mpf(r)
    s = mp.sqrt(1 - r * r)
    L = d - 1

    def k(*v):
        x, y = v[:d], v[d:]
        sx = mp.sqrt(1 - sum(t * t for t in x))
        sy = mp.sqrt(1 - sum(t * t for t in y))
        rho = sum(x[i] * y[i] for i in range(L)) + r * x[L] * y[L] + s * x[L] * sy + r * sx * sy - s * y[L] * sx
        return rho**p

    return k


def self_kernel(p: int, d: int):
    def k(*v):
        x, y = v[:d], v[d:]
        sx = mp.sqrt(1 - sum(t * t for t in x))
        sy = mp.sqrt(1 - sum(t * t for t in y))
        return (sum(a * b for a, b in zip(x, y)) + sx * sy) ** p

    return k


def central_partial(f, nvars: int, orders: list[int], h) -> mp.mpf:
    """Mixed partial derivative at the origin by tensor-product central differences."""
    from itertools import product

    stencils = []
    for k in orders:
        if k == 0:
            stencils.append([(0, 1)])
        elif k == 1:
            stencils.append([(-1, -0.5), (1, 0.5)])
        elif k == 2:
            stencils.append([(-1, 1), (0, -2), (1, 1)])
        else:
            raise ValueError("order > 2 per variable not needed")
    total = mp.mpf(0)
    for combo in product(*stencils):
        pt = [mp.mpf(off) * h for off, _ in combo]
        wt = mp.mpf(1)
        for _, c in combo:
            wt *= c
        total += wt * f(*pt)
    return total / h ** sum(orders)


def richardson_partial(f, nvars: int, orders: list[int], h) -> mp.mpf:
    """Central differences at h and h/2 combined to cancel the O(h^2) error."""
    a = central_partial(f, nvars, orders, h)
    b = central_partial(f, nvars, orders, h / 2)
    return (4 * b - a) / 3


def abs_gauss_mean(a: float, var: float = 2.0) -> float:
    """E|Z - a| for Z ~ N(0, var)."""
    s = math.sqrt(var)
    return s * math.sqrt(2 / math.pi) * math.exp(-a * a / (2 * var)) + a * math.erf(a / (s * math.sqrt(2)))


def goe2_density(a: float, b: float) -> float:
    """Joint eigenvalue density of GOE(2) (diagonal variance 1, off-diagonal 1/2)."""
    return abs(a - b) * math.exp(-(a * a + b * b) / 2) / (4 * math.sqrt(math.pi))


# --- exact rational evaluation of the conditional-covariance definitions -------

def rational_blocks(p: int, r):
    """a_i, b_i, Sigma_U, Sigma_Z, Sigma_Q as exact Fractions, transcribed term by term.

    Terms whose integer prefactor vanishes are dropped before the power is formed.
    """
    from fractions import Fraction as F

    r = F(r)

    def pw(k):
        if k < 0:
            raise ZeroDivisionError if r == 0 else None
        return r**k

    def term(c, k):
        return F(0) if c == 0 else c * pw(k)

    s2 = 1 - r * r
    inner = r**p - (p - 1) * r ** (p - 2) * s2
    a1 = F(1) / (p * (1 - r ** (2 * p - 2)))
    a2 = F(1) / (p * (1 - inner**2))
    a3 = -(r ** (p - 1)) / (p * (1 - r ** (2 * p - 2)))
    a4 = -inner / (p * (1 - inner**2))
    b1 = -p + a2 * p**3 * r ** (2 * p - 2) * s2
    b2 = -p * r**p - a4 * p**3 * r ** (2 * p - 2) * s2
    lin = -(p - 2) + p * r * r
    b3 = a2 * p**2 * (p - 1) * r ** (2 * p - 4) * s2 * lin
    b4 = p * (p - 1) * r ** (p - 2) * s2 - a4 * p**2 * (p - 1) * r ** (2 * p - 4) * s2 * lin
    su = [[-b1 / p, -b2 / p], [-b2 / p, -b1 / p]]
    det = su[0][0] * su[1][1] - su[0][1] * su[1][0]
    inv = [[su[1][1] / det, -su[0][1] / det], [-su[1][0] / det, su[0][0] / det]]

    def qf(v, w):
        return sum(v[i] * inv[i][j] * w[j] for i in range(2) for j in range(2))

    z11 = p * (p - 1) - a1 * p**2 * (p - 1) ** 2 * r ** (2 * p - 4) * s2
    z12 = p * (p - 1) ** 2 * r ** (p - 1) - term(p * (p - 1) * (p - 2), p - 3) + a3 * p**2 * (p - 1) ** 2 * r ** (2 * p - 4) * s2
    br = term(p * (p - 1), p - 3) * (p * r * r - (p - 2))
    q11 = 2 * p * (p - 1) - a2 * s2 * br**2 - qf([b3, b4], [b3, b4])
    q12 = (p**4 * r**p - 2 * p * (p - 1) * (p * p - 2 * p + 2) * r ** (p - 2)
           + term(p * (p - 1) * (p - 2) * (p - 3), p - 4)
           + a4 * p**2 * term(1, 2 * p - 6) * s2 * (p * p * r * r - (p - 1) * (p - 2)) ** 2
           - qf([b1 + b3, b2 + b4], [b2 + b4, b1 + b3]))
    m1 = lambda u1, u2: qf([b3, b4], [F(u1), F(u2)])  # noqa: E731
    return {"a": (a1, a2, a3, a4), "b": (b1, b2, b3, b4), "sigma_u": su,
            "sigma_z": [[z11, z12], [z12, z11]], "sigma_q": [[q11, q12], [q12, q11]], "m1": m1}
