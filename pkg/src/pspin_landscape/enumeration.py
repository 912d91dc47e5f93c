"""Direct critical-point enumeration for small N.

The Hamiltonian is H(x) = N^{-(p-1)/2} sum J_{i1..ip} x_{i1}..x_{ip} on the
sphere |x| = sqrt(N), with an unsymmetrized i.i.d. normal tensor J.
Derivatives go through the symmetrized tensor, which gives the same polynomial.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError
from .special_functions import thresholds
from .streams import as_generator, pmap, substreams

MAX_ENTRIES = 12**3


class ResolutionWarning(UserWarning):
    pass


# --- Hamiltonian -----------------------------------------------------------------

@dataclass(frozen=True)
class Hamiltonian:
    p: int
    N: int
    coefficients: np.ndarray
    sym: np.ndarray = field(repr=False, compare=False)

    @property
    def norm(self) -> float:
        return self.N ** (-(self.p - 1) / 2.0)

    def _contract(self, x: np.ndarray, k: int) -> np.ndarray:
        """Contract the last ``k`` slots of the symmetric tensor with a batch ``x`` (B, N)."""
        t = np.tensordot(x, self.sym, axes=([1], [self.p - 1]))
        for _ in range(k - 1):
            t = np.einsum("b...i,bi->b...", t, x)
        return t

    def value(self, x) -> np.ndarray | float:
        x = np.asarray(x, float)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        v = self.norm * self._contract(xb, self.p)
        return float(v[0]) if single else v

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        xb = np.atleast_2d(x)
        g = self.norm * self.p * self._contract(xb, self.p - 1)
        return g[0] if x.ndim == 1 else g

    def hess(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        xb = np.atleast_2d(x)
        if self.p == 2:
            h = np.broadcast_to(2 * self.norm * self.sym, (xb.shape[0], self.N, self.N)).copy()
        else:
            h = self.norm * self.p * (self.p - 1) * self._contract(xb, self.p - 2)
        return h[0] if x.ndim == 1 else h


def _symmetrize(j: np.ndarray) -> np.ndarray:
    perms = list(itertools.permutations(range(j.ndim)))
    return sum(np.transpose(j, perm) for perm in perms) / len(perms)


def sample_hamiltonian(p: int, N: int, rng, max_entries: int = MAX_ENTRIES) -> Hamiltonian:
    if int(p) != p or p < 2 or int(N) != N or N < 2:
        raise DomainError("need integers p >= 2 and N >= 2")
    if N**p > max_entries:
        raise DomainError(f"N^p = {N**p} coefficients exceeds the budget {max_entries}")
    j = as_generator(rng).standard_normal((N,) * p)
    return Hamiltonian(int(p), int(N), j, _symmetrize(j))


def riemannian_grad_hess(H: Hamiltonian, sigma) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, tangential gradient and Riemannian Hessian (as an N x N operator on the tangent space)."""
    x = np.asarray(sigma, float)
    if x.shape != (H.N,):
        raise DomainError("point has the wrong dimension")
    if abs(x @ x - H.N) > 1e-10 * H.N:
        raise DomainError("point is not on the sphere of radius sqrt(N)")
    g = H.grad(x)
    proj = np.eye(H.N) - np.outer(x, x) / H.N
    rg = proj @ g
    rh = proj @ H.hess(x) @ proj - (g @ x / H.N) * proj
    return H.value(x), rg, rh


def _riem_grad_norm(H: Hamiltonian, x: np.ndarray) -> np.ndarray:
    g = H.grad(x)
    rg = g - (np.sum(g * x, axis=1) / H.N)[:, None] * x
    return np.linalg.norm(rg, axis=1)


# --- critical point sets -------------------------------------------------------------

@dataclass
class CriticalPointSet:
    p: int
    N: int
    points: np.ndarray
    values: np.ndarray  # H / N
    residuals: np.ndarray
    antipode: np.ndarray
    n_starts: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values)

    def count_below(self, u: float) -> int:
        return int(np.sum(self.values < u))

    def to_json(self) -> dict:
        return {
            "p": self.p, "N": self.N, "count": len(self),
            "points": self.points.tolist(), "values": self.values.tolist(),
            "residuals": self.residuals.tolist(), "antipode": self.antipode.tolist(),
            "n_starts": self.n_starts, "diagnostics": self.diagnostics,
        }


def _finish(H: Hamiltonian, pts: np.ndarray, radius: float, **kw) -> CriticalPointSet:
    """Dedupe, close under x -> -x and attach values, residuals and antipode indices."""
    N = H.N
    if len(pts):
        order = np.lexsort(pts.T[::-1])
        pts = pts[order]
    kept: list[np.ndarray] = []

    def seen(y):
        # chord length: acos loses ~1e-8 of resolution next to 1
        return any(np.linalg.norm(y - z) < radius for z in kept)

    for y in pts:
        if not seen(y):
            kept.append(y)
    for y in list(kept):
        if not seen(-y):
            kept.append(-y)
    arr = np.array(kept).reshape(-1, N)
    if len(arr):
        arr = arr[np.lexsort(arr.T[::-1])]
    anti = np.full(len(arr), -1)
    for i, y in enumerate(arr):
        d = np.linalg.norm(arr + y, axis=1)
        anti[i] = int(np.argmin(d))
    vals = H.value(arr) / N if len(arr) else np.zeros(0)
    res = _riem_grad_norm(H, arr) if len(arr) else np.zeros(0)
    return CriticalPointSet(H.p, N, arr, np.asarray(vals), res, anti, **kw)


def circle_enumerate(H: Hamiltonian, resolution: int = 100_000) -> CriticalPointSet:
    """All critical points for N = 2, via sign changes of dH/dtheta on a grid plus bracketing."""
    if H.N != 2:
        raise DomainError("circle_enumerate needs N = 2")
    s2 = math.sqrt(2.0)
    th = np.linspace(0.0, 2 * math.pi, int(resolution), endpoint=False)

    def dh(t):
        t = np.atleast_1d(t)
        x = s2 * np.stack([np.cos(t), np.sin(t)], axis=1)
        dx = s2 * np.stack([-np.sin(t), np.cos(t)], axis=1)
        return np.sum(H.grad(x) * dx, axis=1)

    d = dh(th)
    nxt = np.roll(d, -1)
    roots = []
    for i in np.nonzero(np.sign(d) != np.sign(nxt))[0]:
        a = th[i]
        b = th[i + 1] if i + 1 < len(th) else 2 * math.pi
        if d[i] == 0.0:
            roots.append(a)
            continue
        roots.append(brentq(lambda t: float(dh(t)[0]), a, b, xtol=1e-15, rtol=1e-15))
    # a near-zero local minimum of |dh| without a sign change is a root pair the grid may have merged
    ad = np.abs(d)
    scale = float(ad.max())
    lows = (ad < np.roll(ad, 1)) & (ad < np.roll(ad, -1)) & (ad < 1e-3 * scale)
    lost = np.nonzero(lows & (np.sign(np.roll(d, 1)) == np.sign(np.roll(d, -1))))[0]
    if lost.size:
        warnings.warn(f"{lost.size} possible unresolved tangential roots; raise resolution", ResolutionWarning)
    pts = s2 * np.stack([np.cos(roots), np.sin(roots)], axis=1) if roots else np.zeros((0, 2))
    out = _finish(H, pts, 1e-9, n_starts=0,
                  diagnostics={"method": "circle", "resolution": int(resolution), "suspect": int(lost.size)})
    return out


def _newton(H: Hamiltonian, x: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched Newton on grad H(x) = lam x, |x|^2 = N, with backtracking on the residual norm."""
    N = H.N
    B = x.shape[0]
    lam = np.sum(H.grad(x) * x, axis=1) / N

    def resid(x, lam):
        return np.concatenate([H.grad(x) - lam[:, None] * x, 0.5 * (np.sum(x * x, axis=1) - N)[:, None]], axis=1)

    F = resid(x, lam)
    active = np.ones(B, bool)
    for _ in range(max_iter):
        gn = _riem_grad_norm(H, x)
        active &= gn > tol
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        xa, la = x[idx], lam[idx]
        J = np.zeros((idx.size, N + 1, N + 1))
        J[:, :N, :N] = H.hess(xa) - la[:, None, None] * np.eye(N)
        J[:, :N, N] = -xa
        J[:, N, :N] = xa
        try:
            step = np.linalg.solve(J, -F[idx][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(j, -f, rcond=None)[0] for j, f in zip(J, F[idx])])
        f0 = np.linalg.norm(F[idx], axis=1)
        t = np.ones(idx.size)
        xn = np.empty_like(xa)
        ln = np.empty_like(la)
        fn = np.empty_like(F[idx])
        todo = np.arange(idx.size)
        for _ in range(30):
            xt = xa[todo] + t[todo, None] * step[todo, :N]
            xt *= (math.sqrt(N) / np.linalg.norm(xt, axis=1))[:, None]
            lt = la[todo] + t[todo] * step[todo, N]
            ft = resid(xt, lt)
            xn[todo], ln[todo], fn[todo] = xt, lt, ft
            ok = np.linalg.norm(ft, axis=1) < (1 - 1e-4 * t[todo]) * f0[todo]
            todo = todo[~ok]
            if not todo.size:
                break
            t[todo] *= 0.5
        # starts whose line search collapsed are abandoned
        active[idx[t < 1e-8]] = False
        x[idx], lam[idx], F[idx] = xn, ln, fn
    return x, _riem_grad_norm(H, x)


def find_critical_points(H: Hamiltonian, n_starts: int = 1000, newton_tol: float = 1e-10,
                         dedupe_radius: float | None = None, rng=None, max_iter: int = 60) -> CriticalPointSet:
    """Multi-start projected Newton. The result is a lower bound on the true set."""
    if H.N < 3:
        raise DomainError("use circle_enumerate for N = 2")
    N = H.N
    radius = 1e-4 * math.sqrt(N) if dedupe_radius is None else dedupe_radius
    g = as_generator(rng)
    x0 = g.standard_normal((n_starts, N))
    x0 *= (math.sqrt(N) / np.linalg.norm(x0, axis=1))[:, None]
    x, res = _newton(H, x0.copy(), newton_tol, max_iter)
    ok = res <= newton_tol
    # discovery curve in start order
    found: list[np.ndarray] = []
    curve = []
    for i in range(n_starts):
        if ok[i]:
            y = x[i]
            if not any(np.linalg.norm(y - z) < radius or np.linalg.norm(y + z) < radius for z in found):
                found.append(y)
        curve.append(len(found))
    half = curve[n_starts // 2 - 1] if n_starts >= 2 else 0
    out = _finish(H, x[ok], radius, n_starts=int(n_starts), diagnostics={
        "method": "newton", "failed_starts": int((~ok).sum()),
        "discovery_curve": curve[:: max(1, n_starts // 100)] + [curve[-1]],
        "saturated": bool(curve[-1] == half),
    })
    bad = out.residuals > newton_tol
    if bad.any():
        # antipodal images inherit the residual only up to rounding; polish them
        xs, rs = _newton(H, out.points[bad].copy(), newton_tol, max_iter)
        out.points[bad], out.residuals[bad] = xs, rs
        out.values[bad] = H.value(xs) / N
    return out


def critical_points(H: Hamiltonian, n_starts: int = 1000, rng=None) -> CriticalPointSet:
    return circle_enumerate(H) if H.N == 2 else find_critical_points(H, n_starts=n_starts, rng=rng)


# --- experiments ---------------------------------------------------------------------

def concentration_experiment(p: int, N: int, u: float, reps: int, rng, n_starts: int = 300,
                             eps: float = 0.3, threads: int = 1) -> dict:
    """Moments of the count below ``u`` and the overlap histogram among those points.

    Counts for N >= 3 come from the multi-start solver and are lower bounds.
    """
    gens = substreams(rng, reps)

    def one(g):
        H = sample_hamiltonian(p, N, g)
        cps = critical_points(H, n_starts, g)
        sel = cps.points[cps.values < u]
        ov = []
        for i in range(len(sel)):
            for j in range(i + 1, len(sel)):
                ov.append(float(sel[i] @ sel[j] / N))
        return len(sel), ov

    out = pmap(one, [(g,) for g in gens], threads)
    c = np.array([k for k, _ in out], float)
    ovs = np.array([o for _, ov in out for o in ov])
    m1 = float(c.mean())
    m2 = float(np.mean(c * c))
    m2f = float(np.mean(c * (c - 1)))
    se1 = float(c.std(ddof=1) / math.sqrt(reps))
    se2 = float((c * c).std(ddof=1) / math.sqrt(reps))
    # delta-method SE of m2 / m1^2
    if m1 > 0:
        grad = np.array([1 / m1**2, -2 * m2 / m1**3])
        cov = np.cov(np.stack([c * c, c])) / reps
        ratio, ratio_se = m2 / m1**2, float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    else:
        ratio, ratio_se = math.nan, math.nan
    hist, edges = np.histogram(ovs, bins=20, range=(-1, 1))
    inside = int(np.sum(np.abs(ovs) < eps))
    return {
        "p": p, "N": N, "u": u, "reps": reps, "n_starts": n_starts,
        "mean": m1, "mean_se": se1, "second_raw": m2, "second_raw_se": se2, "second_factorial": m2f,
        "ratio": ratio, "ratio_se": ratio_se,
        "overlap_hist": hist.tolist(), "overlap_edges": edges.tolist(),
        "overlap_inside": inside, "overlap_outside": int(ovs.size - inside), "eps": eps,
        "lower_bound_counts": N >= 3,
    }


def ground_state_experiment(p: int, N_list, reps: int, rng, n_starts: int = 200, threads: int = 1) -> list[dict]:
    """Per N: mean and spread of the lowest critical value found, next to -E_0(p).

    The solver can miss the true minimum, so each GS estimate is an upper bound.
    """
    target = -thresholds(p).e_zero
    g = as_generator(rng)
    rows = []
    for N in N_list:
        gens = substreams(g, reps)
        gs = np.array(pmap(lambda gg: float(critical_points(sample_hamiltonian(p, N, gg), n_starts, gg).values.min()),
                           [(gg,) for gg in gens], threads))
        rows.append({"N": int(N), "mean": float(gs.mean()), "std": float(gs.std(ddof=1)),
                     "se": float(gs.std(ddof=1) / math.sqrt(reps)), "target": target,
                     "gap": float(gs.mean() - target), "samples": gs.tolist()})
    for a, b in zip(rows, rows[1:]):
        b["closer_than_previous"] = abs(b["gap"]) < abs(a["gap"])
    return rows
