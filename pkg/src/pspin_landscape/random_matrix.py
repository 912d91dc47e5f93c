"""GOE sampling, conditional Hessian pairs, determinant moments and spectral checks.

GOE(n) here means a real symmetric matrix with centered Gaussian entries,
variance 1/n off the diagonal and 2/n on it.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import covariance as cv
from .errors import DomainError
from .streams import as_generator, block_sizes, pmap, substreams


# --- estimates ---------------------------------------------------------------

@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    std_error: float
    n_samples: int
    log_mean: float

    @property
    def rel_error(self) -> float:
        """std_error / mean, computed in log space so it survives overflow."""
        return self._rel

    _rel: float = 0.0

    @classmethod
    def from_log_values(cls, logv: np.ndarray) -> "MomentEstimate":
        """Estimate E[exp(X)] from samples of X (``-inf`` allowed for zeros)."""
        logv = np.asarray(logv, dtype=float)
        n = logv.size
        if n < 2:
            raise DomainError("need at least two samples")
        top = float(np.max(logv))
        if top == -math.inf:
            return cls(0.0, 0.0, n, -math.inf, math.inf)
        w = np.exp(logv - top)
        mw = float(np.mean(w))
        sw = float(np.std(w, ddof=1)) / math.sqrt(n)
        log_mean = top + math.log(mw)
        with np.errstate(over="ignore"):
            mean = math.exp(log_mean) if log_mean < 709 else math.inf
            se = math.exp(top) * sw if top < 709 else math.inf
        return cls(mean, se, n, log_mean, sw / mw)

    @classmethod
    def from_values(cls, v: np.ndarray) -> "MomentEstimate":
        v = np.asarray(v, dtype=float)
        n = v.size
        if n < 2:
            raise DomainError("need at least two samples")
        m = float(np.mean(v))
        se = float(np.std(v, ddof=1)) / math.sqrt(n)
        return cls(m, se, n, math.log(m) if m > 0 else math.nan, se / abs(m) if m else math.inf)

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n_samples": self.n_samples,
                "mean_ln": self.log_mean, "rel_error": self.rel_error}


# --- sampling ----------------------------------------------------------------

def goe_batch(n: int, size: int, rng) -> np.ndarray:
    if n < 1:
        raise DomainError("n must be >= 1")
    a = as_generator(rng).standard_normal((size, n, n))
    return (a + np.swapaxes(a, -1, -2)) / math.sqrt(2.0 * n)


def goe_sample(n: int, rng) -> np.ndarray:
    return goe_batch(n, 1, rng)[0]


def correlated_goe_pair(n: int, p: int, r: float, rng, size: int | None = None):
    """Pair of GOE(n) matrices whose matched entries have correlation sgn(r)^p |r|^{p-2}.

    The shared part enters X1 with sign sgn(r)^p and X2 with sign +1.
    """
    if abs(r) > 1:
        raise DomainError("|r| must be <= 1")
    g = as_generator(rng)
    b = 1 if size is None else size
    rho = abs(r) ** (p - 2)
    sign = float(np.sign(r)) ** p if r != 0 else 1.0
    x1, x2, sh = goe_batch(n, b, g), goe_batch(n, b, g), goe_batch(n, b, g)
    own, shared = math.sqrt(1.0 - rho), math.sqrt(rho)
    y1 = own * x1 + sign * shared * sh
    y2 = own * x2 + shared * sh
    return (y1[0], y2[0]) if size is None else (y1, y2)


@functools.lru_cache(maxsize=256)
def _pair_law(p: int, N: int, r: float):
    scale2 = (N - 1) * p * (p - 1)
    oc = cv.overlap_covariance(p, r)
    _, (b1, b2, b3, b4) = cv.coefficients(p, r)
    w = np.linalg.solve(oc.sigma_u, np.array([b3, b4]))
    return (cv.psd_sqrt(oc.sigma_z / scale2), cv.psd_sqrt(oc.sigma_q / scale2), w,
            math.sqrt(scale2), math.sqrt(p / ((p - 1) * (N - 1))))


def hessian_pair_batch(p: int, N: int, r: float, u1, u2, rng) -> tuple[np.ndarray, np.ndarray]:
    """Samples of the normalized conditional Hessian pair, one per entry of ``u1``/``u2``."""
    p, r = cv._check(p, r)
    if N < 3:
        raise DomainError("N must be >= 3")
    g = as_generator(rng)
    u1 = np.atleast_1d(np.asarray(u1, dtype=float))
    u2 = np.atleast_1d(np.asarray(u2, dtype=float))
    b = u1.size
    sz, sq, w, scale, shift = _pair_law(p, N, r)
    d = N - 1
    ng = N - 2
    m1 = np.zeros((b, d, d))
    m2 = np.zeros((b, d, d))
    g1, g2 = correlated_goe_pair(ng, p, r, g, size=b)
    f = math.sqrt(ng / d)
    m1[:, :ng, :ng] = f * g1
    m2[:, :ng, :ng] = f * g2
    z = g.standard_normal((b, ng, 2)) @ sz.T
    m1[:, :ng, -1] = m1[:, -1, :ng] = z[..., 0]
    m2[:, :ng, -1] = m2[:, -1, :ng] = z[..., 1]
    q = g.standard_normal((b, 2)) @ sq.T
    m1[:, -1, -1] = q[:, 0] + (w[0] * u1 + w[1] * u2) / scale
    m2[:, -1, -1] = q[:, 1] + (w[0] * u2 + w[1] * u1) / scale
    idx = np.arange(d)
    m1[:, idx, idx] -= shift * u1[:, None]
    m2[:, idx, idx] -= shift * u2[:, None]
    return m1, m2


def hessian_pair_sample(p: int, N: int, r: float, u1: float, u2: float, rng):
    m1, m2 = hessian_pair_batch(p, N, r, [u1], [u2], rng)
    return m1[0], m2[0]


def log_abs_det(mats: np.ndarray) -> np.ndarray:
    """log|det| of a stack of symmetric matrices via their eigenvalues."""
    with np.errstate(divide="ignore"):
        return np.sum(np.log(np.abs(np.linalg.eigvalsh(mats))), axis=-1)


# --- spectral statistics -----------------------------------------------------

HINGE_CENTERS = np.linspace(-3.0, 3.0, 101)


def _hinge(x, c):
    return np.clip(np.asarray(x) - c, -1.0, 1.0)


@functools.lru_cache(maxsize=1)
def _hinge_semicircle() -> np.ndarray:
    dens = lambda x: math.sqrt(max(4.0 - x * x, 0.0)) / (2 * math.pi)  # noqa: E731
    out = []
    for c in HINGE_CENTERS:
        pts = [t for t in (c - 1, c + 1) if -2 < t < 2]
        val, _ = integrate.quad(lambda x: float(_hinge(x, c)) * dens(x), -2, 2, points=pts or None,
                                epsabs=1e-13, limit=200)
        out.append(val)
    return np.array(out)


@dataclass(frozen=True)
class SpectralSummary:
    n: int
    eigenvalues: np.ndarray
    max_abs: float
    semicircle_distance: float


def spectral_summary(matrix: np.ndarray) -> SpectralSummary:
    """Eigenvalues plus a bounded-Lipschitz distance proxy to the semicircle law.

    The proxy is the largest discrepancy over the ramps clip(x - c, -1, 1)
    with c on 101 equispaced points of [-3, 3].
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError("matrix must be square")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-12:
        raise DomainError("matrix is not symmetric")
    ev = np.linalg.eigvalsh(a)
    emp = np.array([np.mean(_hinge(ev, c)) for c in HINGE_CENTERS])
    dist = float(np.max(np.abs(emp - _hinge_semicircle())))
    return SpectralSummary(a.shape[0], ev, float(max(abs(ev[0]), abs(ev[-1]))), dist)


# --- determinant moments -----------------------------------------------------

def det_abs_moment(n: int, shift: float, power: int, samples: int, rng, threads: int = 1,
                   block: int = 4096) -> MomentEstimate:
    """Monte Carlo estimate of ``E|det(X - shift I)|^power`` for X ~ GOE(n)."""
    if power not in (1, 2):
        raise DomainError("power must be 1 or 2")
    if samples < 100:
        raise DomainError("samples must be >= 100")
    sizes = block_sizes(samples, block)
    gens = substreams(rng, len(sizes))

    def run(b, g):
        ev = np.linalg.eigvalsh(goe_batch(n, b, g))
        with np.errstate(divide="ignore"):
            return power * np.sum(np.log(np.abs(ev - shift)), axis=1)

    return MomentEstimate.from_log_values(np.concatenate(pmap(run, list(zip(sizes, gens)), threads)))


@dataclass(frozen=True)
class GhatCurve:
    rho: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    cov: np.ndarray  # covariance matrix of the mean estimates (CRN makes it non-diagonal)
    n_samples: int

    def value(self, rho: float) -> float:
        return float(self.mean[self._i(rho)])

    def _i(self, rho: float) -> int:
        hits = np.nonzero(np.isclose(self.rho, rho, atol=1e-12))[0]
        if not hits.size:
            raise KeyError(rho)
        return int(hits[0])

    def combo(self, weights: dict[float, float]) -> tuple[float, float]:
        """Value and standard error of a linear combination of curve points."""
        c = np.zeros(self.rho.size)
        for rho, wt in weights.items():
            c[self._i(rho)] += wt
        return float(c @ self.mean), float(math.sqrt(max(c @ self.cov @ c, 0.0)))

    def rows(self):
        return [(float(a), float(b), float(c)) for a, b, c in zip(self.rho, self.mean, self.se)]


def ghat_curve(n: int, shift: float, rho_grid, samples: int, rng, threads: int = 1,
               block: int = 20000) -> GhatCurve:
    """``E[det(W1/sqrt n - v I) det(W2/sqrt n - v I)]`` with Cov(W1_ij, W2_ij) = rho (1 + delta_ij).

    One replica draws A1, A2, S once; every rho reuses them through
    W1 = sqrt(1-|rho|) A1 + sqrt|rho| S and W2 = sqrt(1-|rho|) A2 + sgn(rho) sqrt|rho| S.
    """
    rho = np.asarray(list(rho_grid), dtype=float)
    if np.any(np.abs(rho) > 1):
        raise DomainError("rho values must lie in [-1, 1]")
    sizes = block_sizes(samples, block)
    gens = substreams(rng, len(sizes))
    eye = np.eye(n)

    def run(b, g):
        def wig():
            a = g.standard_normal((b, n, n))
            return (a + np.swapaxes(a, -1, -2)) / math.sqrt(2.0)
        a1, a2, s = wig(), wig(), wig()
        cols = []
        first: dict[float, np.ndarray] = {}  # W1 depends on |rho| only
        for rh in rho:
            own, sh = math.sqrt(1 - abs(rh)), math.sqrt(abs(rh))
            w2 = own * a2 + math.copysign(sh, rh) * s
            if abs(rh) not in first:
                w1 = own * a1 + sh * s
                first[abs(rh)] = np.prod(np.linalg.eigvalsh(w1 / math.sqrt(n) - shift * eye), axis=1)
            d1 = first[abs(rh)]
            d2 = np.prod(np.linalg.eigvalsh(w2 / math.sqrt(n) - shift * eye), axis=1)
            cols.append(d1 * d2)
        x = np.stack(cols, axis=1)
        return x.sum(axis=0), x.T @ x

    parts = pmap(run, list(zip(sizes, gens)), threads)
    s1 = np.sum([p_[0] for p_ in parts], axis=0)
    s2 = np.sum([p_[1] for p_ in parts], axis=0)
    mean = s1 / samples
    cov = (s2 / samples - np.outer(mean, mean)) * samples / (samples - 1) / samples
    return GhatCurve(rho, mean, np.sqrt(np.diag(cov)), cov, int(samples))


# --- bound checks --------------------------------------------------------------

@dataclass(frozen=True)
class PerturbReport:
    violations: int
    trials: int
    worst_ratio: float  # max over trials of |det(C1+C2)| / bound


def det_perturb_check(n: int, d: int, trials: int, rng) -> PerturbReport:
    """Count violations of |det(C1+C2)| <= |det C1| (1 + ||C2|| / min|eig C1|)^d."""
    if d not in (1, 2):
        raise DomainError("d must be 1 or 2")
    g = as_generator(rng)
    q, _ = np.linalg.qr(g.standard_normal((trials, n, n)))
    lam = g.uniform(1.0, 3.0, (trials, n)) * g.choice([-1.0, 1.0], (trials, n))
    c1 = np.einsum("tij,tj,tkj->tik", q, lam, q)
    v = g.standard_normal((trials, d, n))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    t = 2.0 * g.standard_normal((trials, d))
    c2 = np.einsum("tk,tki,tkj->tij", t, v, v)
    lhs = np.abs(np.linalg.det(c1 + c2))
    e1 = np.linalg.eigvalsh(c1)
    e2 = np.linalg.eigvalsh(c2)
    min1 = np.min(np.abs(e1), axis=1)
    max2 = np.max(np.abs(e2), axis=1)
    bound = np.abs(np.prod(e1, axis=1)) * (1.0 + max2 / min1) ** d
    ratio = lhs / bound
    return PerturbReport(int(np.sum(ratio > 1.0 + 1e-10)), int(trials), float(ratio.max()))


@dataclass(frozen=True)
class TailReport:
    n: int
    m: float
    samples: int
    frequency: float
    std_error: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.frequency <= self.bound + 3 * self.std_error


def tail_check(n: int, m: float, samples: int, rng, block: int = 4096) -> TailReport:
    """Empirical P(max|eig| >= m) for GOE(n) next to exp(-n m^2 / 9). Informational."""
    if m < 2.2:
        raise DomainError("m must be >= 2.2")
    gens = substreams(rng, len(block_sizes(samples, block)))
    hits = 0
    for b, g in zip(block_sizes(samples, block), gens):
        ev = np.linalg.eigvalsh(goe_batch(n, b, g))
        hits += int(np.sum(np.max(np.abs(ev), axis=1) >= m))
    f = hits / samples
    return TailReport(n, float(m), int(samples), f, math.sqrt(f * (1 - f) / samples),
                      math.exp(-n * m * m / 9.0))
