"""Mesh-and-derivative negativity certificates for the overlap profile Q_p^{u_th}.

The certificates are numerical, not interval-arithmetic proofs. Every
mesh cell gets its own Lipschitz constant: 1.5 times the largest |f'|
seen on a 10x refined sampling of that cell. A node ``r_i`` with value
``v_i`` then covers its cell whenever ``v_i + L_i * eps0 / 2 < 0``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, InconsistencyError, NumericError
from .special_functions import u_th

# (p - 2) * 0.65**(p - 1) is at most 8 * 0.65**9 for p >= 10
TAU_DENOM = 1.0 + 8.0 * 0.65**9


def _check_p(p: int, lo: int = 3, hi: int | None = None) -> int:
    if int(p) != p or p < lo or (hi is not None and p > hi):
        raise DomainError(f"p={p!r} outside the supported range")
    return int(p)


# --- closed forms, vectorized, stable on [0, 1) ------------------------------

def _geo(r, p: int):
    """sum_{k=0}^{p-2} r^{2k} = (1 - r^{2p-2}) / (1 - r^2)."""
    return sum(r ** (2 * k) for k in range(p - 1))


def _geo_prime(r, p: int):
    return sum(2 * k * r ** (2 * k - 1) for k in range(1, p - 1))


def q_profile(p: int, r, u2: float | None = None):
    """Q_p^u on [0, 1) with ``u2 = u**2`` (defaults to u_th(p)**2)."""
    u2 = u_th(p) ** 2 if u2 is None else u2
    r = np.asarray(r, dtype=float)
    s = _geo(r, p)
    g0 = r**p * sum(r**k for k in range(p - 2)) / ((1.0 + r) * (p - 1) * (s / (p - 1) + r ** (p - 2)))
    return -0.5 * np.log(s) + u2 * g0


def q_profile_prime(p: int, r, u2: float | None = None):
    """d/dr of :func:`q_profile`; the double zero of g0's numerator at 1 is divided out."""
    u2 = u_th(p) ** 2 if u2 is None else u2
    r = np.asarray(r, dtype=float)
    s = _geo(r, p)
    poly = sum((k + 1) * r ** (2 * k) for k in range(p - 2))
    g0p = p * r ** (p - 1) * poly / (s + (p - 1) * r ** (p - 2)) ** 2
    return -0.5 * _geo_prime(r, p) / s + u2 * g0p


def tilde_q(p: int, r):
    """Upper envelope of Q_p^{u_th} used on [0.65, 1) for large p."""
    p = _check_p(p)
    ra = np.asarray(r, dtype=float)
    if np.any(ra < 0) or np.any(ra >= 1):
        raise DomainError("tilde_q needs r in [0, 1)")
    # (1 - r^{p-2}) / (1 - r^2) = (sum_{k<p-2} r^k) / (1 + r)
    frac = sum(ra**k for k in range(p - 2)) / (1.0 + ra)
    out = -0.5 * np.log(_geo(ra, p)) + math.log(p - 1) / (p - 2) * frac * ra**2
    return float(out) if np.ndim(r) == 0 else out


def tilde_q_prime(p: int, r):
    r = np.asarray(r, dtype=float)
    num = sum(r**k for k in range(p - 2))
    dnum = sum(k * r ** (k - 1) for k in range(1, p - 2))
    frac = num / (1.0 + r)
    dfrac = (dnum * (1.0 + r) - num) / (1.0 + r) ** 2
    c = math.log(p - 1) / (p - 2)
    return -0.5 * _geo_prime(r, p) / _geo(r, p) + c * (dfrac * r**2 + 2 * r * frac)


# --- symbolic endpoint data --------------------------------------------------

@functools.lru_cache(maxsize=None)
def _endpoint_data(kind: str, p: int) -> dict:
    import sympy as sp

    r = sp.Symbol("r", positive=True)
    ratio = sp.log((1 - r**2) / (1 - r ** (2 * p - 2))) / 2
    if kind == "q":
        u2 = sp.Rational(2 * (p - 1), p - 2) * sp.log(p - 1)
        expr = ratio + u2 * (r**p - r ** (2 * p - 2)) / (
            1 - r ** (2 * p - 2) + (p - 1) * r ** (p - 2) * (1 - r**2)
        )
    else:
        expr = ratio + sp.log(p - 1) / (p - 2) * (1 - r ** (p - 2)) / (1 - r**2) * r**2
    d1 = sp.diff(expr, r)
    d2 = sp.diff(expr, r, 2)
    out = {
        "right_value": sp.limit(expr, r, 1, "-"),
        "right_d1": sp.limit(d1, r, 1, "-"),
    }
    if kind == "q":
        out.update(left_value=sp.limit(expr, r, 0), left_d1=sp.limit(d1, r, 0),
                   left_d2=sp.limit(d2, r, 0))
        out["d2_fn"] = sp.lambdify(r, d2, "numpy")
    return out


@dataclass(frozen=True)
class EndpointReport:
    where: float  # 0 or 1
    value: float
    d1: float
    d2: float | None
    side_interval: tuple[float, float]
    side_check: str  # which derivative sign was scanned on side_interval
    side_extreme: float  # worst value of that derivative over the scan
    ok: bool

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# --- generic certificate ------------------------------------------------------

@dataclass(frozen=True)
class NegativityCertificate:
    p: int
    interval: tuple[float, float]
    mesh_spacing: float
    derivative_bound: float
    node_values: np.ndarray = field(repr=False)  # shape (n, 2): r_i, value_i
    node_bounds: np.ndarray = field(repr=False)  # per-cell Lipschitz constants
    endpoint_reports: tuple[EndpointReport, ...]
    slack: float
    global_slack: float  # slack had a single L been used everywhere
    verdict: str
    target: str = "Q"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "target": self.target,
            "interval": list(self.interval),
            "epsilon0": self.mesh_spacing,
            "L": self.derivative_bound,
            "slack": self.slack,
            "global_slack": self.global_slack,
            "verdict": self.verdict,
            "endpoints": [e.as_dict() for e in self.endpoint_reports],
            "nodes": self.node_values.tolist(),
        }


def certify_negative(
    fn: Callable[[np.ndarray], np.ndarray],
    dfn: Callable[[np.ndarray], np.ndarray],
    interval: tuple[float, float],
    mesh_points: int,
    refine: int = 10,
    safety: float = 1.5,
):
    """Node values, per-cell bounds and slacks for the claim ``fn < 0`` on ``interval``.

    Returns ``(nodes, values, bounds, eps0, slack, global_slack)``.
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b or mesh_points < 2:
        raise DomainError("need a < b and at least two mesh points")
    nodes = np.linspace(a, b, int(mesh_points))
    eps0 = (b - a) / (mesh_points - 1)
    values = np.asarray(fn(nodes), dtype=float)
    offs = eps0 * (np.arange(refine + 1) / refine - 0.5)
    cells = nodes[:, None] + offs[None, :]
    slopes = np.abs(np.asarray(dfn(np.clip(cells, a, b)), dtype=float))
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(slopes))):
        raise NumericError("non-finite value in certificate evaluation")
    bounds = safety * slopes.max(axis=1)
    slack = float(np.min(-values - bounds * eps0 / 2))
    global_slack = float(np.min(-values - bounds.max() * eps0 / 2))
    return nodes, values, bounds, eps0, slack, global_slack


def _side_scan(fn, lo: float, hi: float, n: int = 2001) -> float:
    vals = np.asarray(fn(np.linspace(lo, hi, n)), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NumericError("non-finite derivative in endpoint scan")
    return vals


def certify_q_negativity(p: int, t0: float = 0.01, mesh_points: int = 10_000) -> NegativityCertificate:
    """Certify ``Q_p^{u_th(p)} < 0`` on (0, 1) for 3 <= p <= 10.

    The mesh covers [t0, 1 - t0]. Near 0 the profile vanishes to second
    order with Q'' < 0 on [0, t0]. Near 1 it vanishes with Q' > 0 on [1 - t0, 1).
    """
    p = _check_p(p, 3, 10)
    if not 0 < t0 < 0.5:
        raise DomainError("t0 must lie in (0, 0.5)")
    if mesh_points < 1000:
        raise DomainError("mesh_points must be >= 1000")
    u2 = u_th(p) ** 2
    nodes, values, bounds, eps0, slack, gslack = certify_negative(
        lambda r: q_profile(p, r, u2), lambda r: q_profile_prime(p, r, u2), (t0, 1 - t0), mesh_points
    )
    ep = _endpoint_data("q", p)
    d2_left = _side_scan(ep["d2_fn"], 0.0, t0).max()
    d1_right = _side_scan(lambda r: q_profile_prime(p, r, u2), 1 - t0, 1.0).min()
    left = EndpointReport(
        0.0, float(ep["left_value"]), float(ep["left_d1"]), float(ep["left_d2"]), (0.0, t0),
        "d2<0", float(d2_left),
        ok=bool(ep["left_value"] == 0 and ep["left_d1"] == 0 and float(ep["left_d2"]) < 0 and d2_left < 0),
    )
    right = EndpointReport(
        1.0, float(ep["right_value"]), float(ep["right_d1"]), None, (1 - t0, 1.0),
        "d1>0", float(d1_right),
        ok=bool(abs(float(ep["right_value"])) < 1e-15 and float(ep["right_d1"]) > 0 and d1_right > 0),
    )
    ok = slack > 0 and left.ok and right.ok
    return NegativityCertificate(
        p=p, interval=(t0, 1 - t0), mesh_spacing=eps0, derivative_bound=float(bounds.max()),
        node_values=np.column_stack([nodes, values]), node_bounds=bounds,
        endpoint_reports=(left, right), slack=slack, global_slack=gslack,
        verdict="pass" if ok else "fail", target="Q",
    )


def certify_tilde_q10(mesh_points: int = 10_000, t0: float = 0.01, left: float = 0.6) -> NegativityCertificate:
    """Certify ``tilde_q(10, .) < 0`` on [left, 1).

    The profile tends to 0 at 1 from below. The last stretch [1 - t0, 1)
    is covered by the sign of the derivative.
    """
    if mesh_points < 1000:
        raise DomainError("mesh_points must be >= 1000")
    p = 10
    nodes, values, bounds, eps0, slack, gslack = certify_negative(
        lambda r: tilde_q(p, r), lambda r: tilde_q_prime(p, r), (left, 1 - t0), mesh_points
    )
    ep = _endpoint_data("tilde", p)
    d1_right = _side_scan(lambda r: tilde_q_prime(p, r), 1 - t0, 1.0).min()
    right = EndpointReport(
        1.0, float(ep["right_value"]), float(ep["right_d1"]), None, (1 - t0, 1.0),
        "d1>0", float(d1_right),
        ok=bool(abs(float(ep["right_value"])) < 1e-15 and float(ep["right_d1"]) > 0 and d1_right > 0),
    )
    ok = slack > 0 and right.ok
    return NegativityCertificate(
        p=p, interval=(left, 1 - t0), mesh_spacing=eps0, derivative_bound=float(bounds.max()),
        node_values=np.column_stack([nodes, values]), node_bounds=bounds,
        endpoint_reports=(right,), slack=slack, global_slack=gslack,
        verdict="pass" if ok else "fail", target="tilde_Q10",
    )


def tau(p: int) -> float:
    """Slope constant of the small-overlap bound ``Q <= tau_p r^{p-1}`` on (0, 0.65]."""
    p = _check_p(p, 10)
    return 0.65 * u_th(p) ** 2 - (p - 2) / (2.0 * TAU_DENOM)


def tau_chain(p_max: int) -> list[tuple[int, float]]:
    if p_max < 10:
        raise DomainError("p_max must be >= 10")
    table = [(p, tau(p)) for p in range(10, int(p_max) + 1)]
    if not table[0][1] < 0:
        raise InconsistencyError(f"tau_10 = {table[0][1]} is not negative")
    for (p, a), (_, b) in zip(table, table[1:]):
        if not b < a:
            raise InconsistencyError(f"tau not decreasing at p={p}")
    return table


@dataclass(frozen=True)
class QCurves:
    r: np.ndarray
    ps: tuple[int, ...]
    values: np.ndarray  # shape (len(ps), len(r))
    violations: list[tuple[int, float]]  # (p, r) where Q_p < Q_{p+1}

    def rows(self):
        for k, p in enumerate(self.ps):
            for x, q in zip(self.r, self.values[k]):
                yield float(x), p, float(q)


def q_curves_table(p_range: tuple[int, int] = (3, 10), points: int = 1001) -> QCurves:
    lo, hi = int(p_range[0]), int(p_range[1])
    if lo < 3 or hi > 10 or lo > hi:
        raise DomainError("p_range must lie within [3, 10]")
    if points < 101:
        raise DomainError("points must be >= 101")
    r = np.linspace(0.0, 1.0, int(points))
    ps = tuple(range(lo, hi + 1))
    vals = np.empty((len(ps), len(r)))
    for k, p in enumerate(ps):
        vals[k, :-1] = q_profile(p, r[:-1])
        vals[k, 0] = 0.0
        vals[k, -1] = 0.5 * math.log(1.0 / (p - 1)) + u_th(p) ** 2 * (p - 2) / (4.0 * (p - 1))
    viol = [
        (ps[k], float(r[j]))
        for k in range(len(ps) - 1)
        for j in np.nonzero(vals[k] < vals[k + 1] - 1e-14)[0]
    ]
    return QCurves(r, ps, vals, viol)
