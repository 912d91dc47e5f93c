"""Two-point covariance structure of the normalized p-spin field on the unit sphere.

Points are the north pole ``n`` and ``sigma(r) = (0, ..., 0, sqrt(1-r^2), r)``.
Tangent frames are the chart frames at both points. The distinguished
tangent direction is the last one, index ``N-2`` in 0-based numbering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCovarianceError, DomainError


def _check(p: int, r: float) -> tuple[int, float]:
    if int(p) != p or p < 3:
        raise DomainError(f"p must be an integer >= 3, got {p!r}")
    r = float(r)
    if not abs(r) < 1.0:
        raise DomainError(f"overlap must satisfy |r| < 1, got {r!r}")
    return int(p), r


def _term(coef: float, r: float, k: int) -> float:
    """``coef * r**k``; a zero coefficient wins before a negative power is formed."""
    if coef == 0:
        return 0.0
    return coef * r**k


def _c(p: int, r: float) -> float:
    # r^p - (p-1) r^{p-2} (1-r^2)  ==  p r^p - (p-1) r^{p-2}
    return p * r**p - (p - 1) * r ** (p - 2)


def coefficients(p: int, r: float) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Return ``(a1..a4), (b1..b4)``."""
    p, r = _check(p, r)
    s2 = 1.0 - r * r
    c = _c(p, r)
    d1 = -math.expm1((2 * p - 2) * math.log(abs(r))) if r else 1.0
    d2 = (1.0 - c) * (1.0 + c)
    a1 = 1.0 / (p * d1)
    a2 = 1.0 / (p * d2)
    a3 = -(r ** (p - 1)) / (p * d1)
    a4 = -c / (p * d2)
    r2p2 = r ** (2 * p - 2)
    r2p4 = r ** (2 * p - 4)
    lin = -(p - 2) + p * r * r
    b1 = -p + a2 * p**3 * r2p2 * s2
    b2 = -p * r**p - a4 * p**3 * r2p2 * s2
    b3 = a2 * p * p * (p - 1) * r2p4 * s2 * lin
    b4 = p * (p - 1) * r ** (p - 2) * s2 - a4 * p * p * (p - 1) * r2p4 * s2 * lin
    return (a1, a2, a3, a4), (b1, b2, b3, b4)


def sigma_u(p: int, r: float) -> np.ndarray:
    """Covariance of the two field values given vanishing gradients."""
    _, (b1, b2, _, _) = coefficients(p, r)
    return -np.array([[b1, b2], [b2, b1]]) / p


def sigma_u_eigen(p: int, r: float) -> tuple[float, float]:
    """``(S11 + S12, S11 - S12)`` from the closed product identity, no cancellation."""
    p, r = _check(p, r)
    geo = sum(r ** (2 * k) for k in range(p - 1)) / (p - 1)
    c = _c(p, r)
    base = (1.0 - r * r) * (p - 1)
    rp2 = r ** (p - 2)
    return base * (geo + rp2) / (1.0 - c), base * (geo - rp2) / (1.0 + c)


def sigma_zq(p: int, r: float) -> tuple[np.ndarray, np.ndarray]:
    p, r = _check(p, r)
    (a1, a2, a3, a4), (b1, b2, b3, b4) = coefficients(p, r)
    s2 = 1.0 - r * r
    su_inv = np.linalg.inv(-np.array([[b1, b2], [b2, b1]]) / p)
    r2p4 = r ** (2 * p - 4)

    z11 = p * (p - 1) - a1 * p * p * (p - 1) ** 2 * r2p4 * s2
    z12 = (
        p * (p - 1) ** 2 * r ** (p - 1)
        - _term(p * (p - 1) * (p - 2), r, p - 3)
        + a3 * p * p * (p - 1) ** 2 * r2p4 * s2
    )

    inner = _term(p * (p - 1), r, p - 3) * (p * r * r - (p - 2))
    v34 = np.array([b3, b4])
    q11 = 2 * p * (p - 1) - a2 * s2 * inner**2 - v34 @ su_inv @ v34
    q12 = (
        p**4 * r**p
        - 2 * p * (p - 1) * (p * p - 2 * p + 2) * r ** (p - 2)
        + _term(p * (p - 1) * (p - 2) * (p - 3), r, p - 4)
        + a4 * p * p * _term(1.0, r, 2 * p - 6) * s2 * (p * p * r * r - (p - 1) * (p - 2)) ** 2
        - np.array([b1 + b3, b2 + b4]) @ su_inv @ np.array([b2 + b4, b1 + b3])
    )
    return np.array([[z11, z12], [z12, z11]]), np.array([[q11, q12], [q12, q11]])


def m_shift(p: int, r: float, u1: float, u2: float) -> tuple[float, float]:
    """Conditional mean corrections of the two (last, last) Hessian entries."""
    p, r = _check(p, r)
    _, (b1, b2, b3, b4) = coefficients(p, r)
    su = -np.array([[b1, b2], [b2, b1]]) / p
    w = np.linalg.solve(su, np.array([b3, b4]))  # Sigma_U is symmetric
    return float(w @ np.array([u1, u2])), float(w @ np.array([u2, u1]))


def varpi(p: int, r: float) -> float:
    return 1.0 - r ** (2 * p - 4) - (p - 2) * r ** (p - 1) + _term(p - 2, r, p - 3)


@dataclass(frozen=True)
class OverlapCovariance:
    p: int
    r: float
    a: tuple[float, float, float, float]
    b: tuple[float, float, float, float]
    sigma_u: np.ndarray
    sigma_z: np.ndarray
    sigma_q: np.ndarray

    @property
    def sigma_z_min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.sigma_z)[0])


def overlap_covariance(p: int, r: float) -> OverlapCovariance:
    a, b = coefficients(p, r)
    sz, sq = sigma_zq(p, r)
    return OverlapCovariance(int(p), float(r), a, b, sigma_u(p, r), sz, sq)


def psd_sqrt(mat: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Symmetric square root, clamping tiny negative eigenvalues to zero."""
    w, v = np.linalg.eigh(mat)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w[0] < -rtol * scale:
        raise DegenerateCovarianceError(f"matrix has eigenvalue {w[0]:.3e} < 0")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


# ---------------------------------------------------------------------------
# Joint covariance of (f, grad f, Hess f) at the two points.

def _item_labels(d: int) -> list[tuple]:
    items: list[tuple] = [("f",)]
    items += [("g", i) for i in range(d)]
    items += [("h", i, j) for i in range(d) for j in range(i, d)]
    return items


def _cross(p: int, r: float, d: int, a: tuple, b: tuple) -> float:
    """Covariance of item ``a`` at n with item ``b`` at sigma(r)."""
    L = d - 1
    s2 = 1.0 - r * r
    s = math.sqrt(s2)
    ta, tb = a[0], b[0]

    if ta == "f" and tb == "f":
        return r**p
    if ta == "f" and tb == "g":
        return -p * r ** (p - 1) * s if b[1] == L else 0.0
    if ta == "g" and tb == "f":
        return p * r ** (p - 1) * s if a[1] == L else 0.0
    if {ta, tb} == {"f", "h"}:
        k, l = b[1:] if tb == "h" else a[1:]
        v = -p * r**p if k == l else 0.0
        if k == l == L:
            v += p * (p - 1) * r ** (p - 2) * s2
        return v
    if ta == "g" and tb == "g":
        j, l = a[1], b[1]
        if j != l:
            return 0.0
        if j == L:
            return p * r**p - p * (p - 1) * r ** (p - 2) * s2
        return p * r ** (p - 1)
    if ta == "g" and tb == "h":
        return _grad_hess(p, r, L, a[1], b[1], b[2])
    if ta == "h" and tb == "g":
        return -_grad_hess(p, r, L, b[1], a[1], a[2])
    return _hess_hess(p, r, L, a[1], a[2], b[1], b[2])


def _grad_hess(p: int, r: float, L: int, j: int, k: int, l: int) -> float:
    s2 = 1.0 - r * r
    s = math.sqrt(s2)
    v = 0.0
    if j == k == l == L:
        v += _term(p * (p - 1) * (p - 2), r, p - 3) * s2 * s
    bracket = 0.0
    if l == L and j == k:
        bracket += r if j == L else 1.0
    if k == L and j == l:
        bracket += r if j == L else 1.0
    v -= p * (p - 1) * r ** (p - 2) * s * bracket
    if k == l and j == L:
        v -= p * p * r ** (p - 1) * s
    return v


def _hess_hess(p: int, r: float, L: int, i: int, j: int, k: int, l: int) -> float:
    s2 = 1.0 - r * r

    def eq(x: int, y: int) -> float:
        # delta_{x=y != L} + r * delta_{x=y=L}
        if x != y:
            return 0.0
        return r if x == L else 1.0

    def off(x: int, y: int) -> float:
        return 1.0 if (x == y and x != L) else 0.0

    all_last = i == j == k == l == L
    dij, dkl = float(i == j), float(k == l)
    v = 0.0
    if all_last:
        v += _term(p * (p - 1) * (p - 2) * (p - 3), r, p - 4) * s2 * s2
    br = (
        4 * r * all_last
        + r * dij * (k == l == L)
        + r * (i == j == L) * dkl
        + (j == l == L) * off(i, k)
        + (i == k == L) * off(j, l)
        + (i == l == L) * off(j, k)
        + (j == k == L) * off(i, l)
    )
    v -= _term(p * (p - 1) * (p - 2), r, p - 3) * s2 * br
    rp2 = r ** (p - 2)
    v += p * (p - 1) * rp2 * (
        -2 * s2 * (i == j == L) * dkl + eq(j, l) * eq(i, k) + eq(i, l) * eq(j, k)
    )
    v += p * (p - 1) * rp2 * (-s2 * dij * (k == l == L) + r * r * dij * dkl)
    v += -p * (p - 1) * rp2 * s2 * dij * (k == l == L) + p * r**p * dij * dkl
    return v


def _self(p: int, d: int, a: tuple, b: tuple) -> float:
    """Same-point covariance: the cross formulas at r = 1."""
    ta, tb = a[0], b[0]
    if ta == "f" and tb == "f":
        return 1.0
    if {ta, tb} == {"f", "g"}:
        return 0.0
    if {ta, tb} == {"f", "h"}:
        k, l = b[1:] if tb == "h" else a[1:]
        return -float(p) if k == l else 0.0
    if ta == "g" and tb == "g":
        return float(p) if a[1] == b[1] else 0.0
    if {ta, tb} == {"g", "h"}:
        return 0.0
    i, j = a[1:]
    k, l = b[1:]
    return p * (p - 1) * ((i == k) * (j == l) + (i == l) * (j == k)) + p * p * (i == j) * (k == l)


@dataclass(frozen=True)
class JointCovariance:
    """Covariance of (f, grad f, upper Hess f) at n followed by the same at sigma(r)."""

    p: int
    N: int
    r: float
    matrix: np.ndarray
    labels: list[tuple] = field(repr=False)

    def index(self, point: str, *item) -> int:
        """Position of an item; ``point`` is ``"n"`` or ``"s"``.

        Hessian items are given with i <= j.
        """
        return self.labels.index((point,) + tuple(item))


def joint_covariance(p: int, N: int, r: float) -> JointCovariance:
    p, r = _check(p, r)
    if int(N) != N or N < 3:
        raise DomainError("N must be an integer >= 3")
    d = int(N) - 1
    items = _item_labels(d)
    m = len(items)
    cov = np.empty((2 * m, 2 * m))
    for ia, a in enumerate(items):
        for ib, b in enumerate(items):
            cov[ia, ib] = cov[m + ia, m + ib] = _self(p, d, a, b)
            cov[ia, m + ib] = cov[m + ib, ia] = _cross(p, r, d, a, b)
    labels = [("n",) + it for it in items] + [("s",) + it for it in items]
    return JointCovariance(p, int(N), r, cov, labels)


def gradient_density_at_zero(p: int, N: int, r: float) -> float:
    """Log density of the gradient pair (grad f(n), grad f(sigma(r))) at the origin."""
    p, r = _check(p, r)
    if int(N) != N or N < 2:
        raise DomainError("N must be an integer >= 2")
    c = _c(p, r)
    return (
        -(N - 1) * math.log(2 * math.pi * p)
        - 0.5 * (N - 2) * math.log1p(-(r ** (2 * p - 2)))
        - 0.5 * math.log(1.0 - c * c)
    )


# ---------------------------------------------------------------------------
# Conditional Hessian law, explicit and via generic Gaussian conditioning.

@dataclass(frozen=True)
class HessianLaw:
    """Mean and covariance of the normalized Hessian pair as flat upper-triangle vectors."""

    mean: np.ndarray
    cov: np.ndarray
    labels: list[tuple]


def explicit_hessian_law(p: int, N: int, r: float, u1: float, u2: float) -> HessianLaw:
    """Law of (M1, M2) = Hess/sqrt((N-1)p(p-1)) given field values and zero gradients."""
    p, r = _check(p, r)
    d = N - 1
    L = d - 1
    scale = (N - 1) * p * (p - 1)
    oc = overlap_covariance(p, r)
    m1, m2 = m_shift(p, r, u1, u2)
    shift = math.sqrt(p / ((p - 1) * (N - 1)))
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    labels = [(w, i, j) for w in "ns" for (i, j) in pairs]
    n = len(labels)
    mean = np.zeros(n)
    cov = np.zeros((n, n))
    rp2 = r ** (p - 2)
    for a, (wa, i, j) in enumerate(labels):
        u, m = (u1, m1) if wa == "n" else (u2, m2)
        if i == j:
            mean[a] = -shift * u
        if i == j == L:
            mean[a] += m / math.sqrt(scale)
        for b, (wb, k, l) in enumerate(labels):
            if (i, j) != (k, l):
                continue
            same = wa == wb
            if j < L:  # G block
                base = (2.0 if i == j else 1.0) / (N - 1)
                cov[a, b] = base if same else base * rp2
            elif i < L:  # Z column
                cov[a, b] = oc.sigma_z[0, 0 if same else 1] / scale
            else:
                cov[a, b] = oc.sigma_q[0, 0 if same else 1] / scale
    return HessianLaw(mean, cov, labels)


def schur_hessian_law(p: int, N: int, r: float, u1: float, u2: float) -> HessianLaw:
    """Same law obtained by conditioning :func:`joint_covariance` directly."""
    jc = joint_covariance(p, N, r)
    d = N - 1
    scale = math.sqrt((N - 1) * p * (p - 1))
    lab = jc.labels
    cond = [i for i, t in enumerate(lab) if t[1] in ("f", "g")]
    hess = [i for i, t in enumerate(lab) if t[1] == "h"]
    c_cc = jc.matrix[np.ix_(cond, cond)]
    evals = np.linalg.eigvalsh(c_cc)
    if evals[0] <= 1e-12 * evals[-1]:
        raise DegenerateCovarianceError("conditioning block is singular")
    c_hc = jc.matrix[np.ix_(hess, cond)]
    gain = np.linalg.solve(c_cc, c_hc.T).T
    values = np.zeros(len(cond))
    values[cond.index(jc.index("n", "f"))] = u1
    values[cond.index(jc.index("s", "f"))] = u2
    mean = gain @ values / scale
    cov = (jc.matrix[np.ix_(hess, hess)] - gain @ c_hc.T) / scale**2
    labels = [(lab[i][0], lab[i][2], lab[i][3]) for i in hess]
    assert len(labels) == d * (d + 1)
    return HessianLaw(mean, cov, labels)


@dataclass(frozen=True)
class ConditionalCheckReport:
    p: int
    N: int
    r: float
    mean_discrepancy: float
    cov_discrepancy: float
    sigma_z_min_eig: float

    @property
    def discrepancy(self) -> float:
        return max(self.mean_discrepancy, self.cov_discrepancy)


def conditional_hessian_check(p: int, N: int, r: float, u1: float, u2: float) -> ConditionalCheckReport:
    ex = explicit_hessian_law(p, N, r, u1, u2)
    sc = schur_hessian_law(p, N, r, u1, u2)
    if ex.labels != sc.labels:
        raise AssertionError("label mismatch between explicit and conditioned laws")
    return ConditionalCheckReport(
        p=int(p),
        N=int(N),
        r=float(r),
        mean_discrepancy=float(np.max(np.abs(ex.mean - sc.mean))),
        cov_discrepancy=float(np.max(np.abs(ex.cov - sc.cov))),
        sigma_z_min_eig=overlap_covariance(p, r).sigma_z_min_eig,
    )
