"""Finite-N first and second moments of critical-point counts.

Determinant expectations are estimated by Monte Carlo. The level-set
indicator is never sampled by rejection: U is drawn from the normal law
restricted to the level set and the restricted mass goes into the log
prefactor, so deep levels cost nothing extra.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr, logsumexp, ndtri_exp

from . import covariance as cv
from . import landscape as ls
from . import random_matrix as rm
from .errors import DomainError, EmptyEstimateError, NumericError
from .special_functions import theta
from .streams import as_generator, block_sizes, pmap, substreams

DEFAULT_PANELS = ((-0.99, -0.3), (-0.3, 0.3), (0.3, 0.99))


class ResolutionWarning(UserWarning):
    pass


# --- truncated normal ----------------------------------------------------------

def _log_interval_mass(lo, hi):
    """log P(lo < Z < hi) for standard normal Z, vectorized and tail-accurate."""
    lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
    flip = lo > 0  # work in whichever tail keeps both ends on the left
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    la, lb = log_ndtr(a), log_ndtr(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lb + np.log1p(-np.exp(la - lb))
    return np.where(b <= a, -np.inf, out)


def _sample_truncated(lo, hi, v):
    """Inverse-CDF draw from N(0,1) restricted to (lo, hi), using uniforms ``v``."""
    lo, hi, v = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float), np.asarray(v, float))
    flip = lo > 0
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    lm = _log_interval_mass(a, b)
    with np.errstate(divide="ignore"):
        lc = np.logaddexp(log_ndtr(a), np.log(v) + lm)
    z = ndtri_exp(np.minimum(lc, 0.0))
    z = np.clip(z, a, b)
    return np.where(flip, -z, z)


# --- reports -------------------------------------------------------------------

def _scaled(est: rm.MomentEstimate, log_factor: float) -> rm.MomentEstimate:
    lm = est.log_mean + log_factor
    mean = math.exp(lm) if lm < 709 else math.inf
    return rm.MomentEstimate(mean, mean * est.rel_error, est.n_samples, lm, est.rel_error)


@dataclass(frozen=True)
class MomentReport:
    kind: str
    p: int
    N: int
    level_set: tuple[float, float]
    overlap_set: tuple[float, float] | None
    estimate: rm.MomentEstimate
    log_per_n: float
    reference_exponent: float
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind, "p": self.p, "N": self.N,
            "level_set": list(self.level_set),
            "overlap_set": None if self.overlap_set is None else list(self.overlap_set),
            "estimate": self.estimate.as_dict(),
            "log_per_n": self.log_per_n,
            "reference_exponent": self.reference_exponent,
            **self.extra,
        }


def _level(B) -> tuple[float, float]:
    lo, hi = float(B[0]), float(B[1])
    if not lo < hi:
        raise DomainError("level set must be a non-empty interval")
    return lo, hi


# --- first moment --------------------------------------------------------------

def first_moment_log_prefactor(p: int, N: int) -> float:
    return ls.log_sphere_area(N) + 0.5 * (N - 1) * math.log((p - 1) * (N - 1) / (2 * math.pi))


def first_moment(p: int, N: int, u: float | tuple[float, float], samples: int, rng,
                 threads: int = 1, block: int = 4096) -> MomentReport:
    """Monte Carlo first moment of the number of critical points with H/N below ``u``.

    ``u`` may also be an interval ``(lo, hi)``.
    """
    if int(p) != p or p < 3:
        raise DomainError("p must be an integer >= 3")
    if N < 2:
        raise DomainError("N must be >= 2")
    lo, hi = _level((-math.inf, u) if np.isscalar(u) else u)
    sn = math.sqrt(N)
    log_mass = float(_log_interval_mass(sn * lo, sn * hi))
    if log_mass == -math.inf:
        raise EmptyEstimateError("level set has zero Gaussian mass; widen it")
    shift = math.sqrt(p / ((p - 1) * (N - 1)))
    sizes = block_sizes(samples, block)

    def run(b, g):
        ev = np.linalg.eigvalsh(rm.goe_batch(N - 1, b, g))
        uu = _sample_truncated(sn * lo, sn * hi, g.random(b))
        with np.errstate(divide="ignore"):
            return np.sum(np.log(np.abs(ev - shift * uu[:, None])), axis=1)

    logv = np.concatenate(pmap(run, list(zip(sizes, substreams(rng, len(sizes)))), threads))
    if not np.any(np.isfinite(logv)):
        raise EmptyEstimateError("no usable samples; increase samples")
    est = _scaled(rm.MomentEstimate.from_log_values(logv), log_mass + first_moment_log_prefactor(p, N))
    ref = theta(p, hi) if math.isfinite(hi) else 0.5 * math.log(p - 1)
    return MomentReport("first", int(p), int(N), (lo, hi), None, est, est.log_mean / N, ref)


def first_moment_exact_small(p: int, N: int, u: float, rel_tol: float = 1e-8) -> float:
    """Quadrature value of the first moment for N = 2 or 3 (H/N below ``u``)."""
    if N not in (2, 3):
        raise DomainError("N must be 2 or 3")
    c = math.sqrt(p / ((p - 1) * (N - 1)))
    top = math.sqrt(N) * u
    pref = math.exp(first_moment_log_prefactor(p, N))
    phi = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)  # noqa: E731
    opts = dict(epsabs=0.0, epsrel=rel_tol, limit=200)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if N == 2:
                # M ~ N(0, 2)
                dens = lambda m: math.exp(-m * m / 4) / math.sqrt(4 * math.pi)  # noqa: E731

                def inner(U):
                    s = c * U
                    f = lambda m: abs(m - s) * dens(m)  # noqa: E731
                    return (integrate.quad(f, -math.inf, s, **opts)[0]
                            + integrate.quad(f, s, math.inf, **opts)[0])
            else:
                # GOE(2): density |a-b| exp(-(a^2+b^2)/2) / (4 sqrt(pi)); integrate over a > b, doubled
                k = 2.0 / (4 * math.sqrt(math.pi))

                def inner(U):
                    s = c * U

                    def mid(a):
                        f = lambda b: (a - b) * abs(b - s) * math.exp(-0.5 * b * b)  # noqa: E731
                        if a <= s:
                            val = integrate.quad(f, -math.inf, a, **opts)[0]
                        else:
                            val = (integrate.quad(f, -math.inf, s, **opts)[0]
                                   + integrate.quad(f, s, a, **opts)[0])
                        return abs(a - s) * math.exp(-0.5 * a * a) * val

                    return k * (integrate.quad(mid, -math.inf, s, **opts)[0]
                                + integrate.quad(mid, s, math.inf, **opts)[0])

            g = lambda U: inner(U) * phi(U)  # noqa: E731
            top = min(top, 40.0)
            # split at 0 so the Gaussian bulk is never skipped by the infinite-range map
            total = integrate.quad(g, -math.inf, min(top, 0.0), **opts)[0]
            if top > 0:
                total += integrate.quad(g, 0.0, top, **opts)[0]
        except integrate.IntegrationWarning as exc:
            raise NumericError(f"quadrature did not converge: {exc}") from exc
    return pref * total


# --- second moment -------------------------------------------------------------

def second_moment_integrand(p: int, N: int, r: float, B, samples: int, rng,
                            block: int = 4096) -> rm.MomentEstimate:
    """Estimate of E[prod_i |det M_i| 1{U_1, U_2 in sqrt(N) B}] at overlap r.

    U_1 is drawn from its restricted marginal and U_2 from its restricted
    conditional law; the two restricted masses become per-sample weights.
    """
    p, r = cv._check(p, r)
    if N < 3:
        raise DomainError("N must be >= 3")
    if abs(r) >= 1:
        raise DomainError("|r| must be < 1")
    lo, hi = _level(B)
    sn = math.sqrt(N)
    su = cv.sigma_u(p, r)
    s1 = math.sqrt(su[0, 0])
    beta = su[0, 1] / su[0, 0]
    s2 = math.sqrt(max(su[1, 1] - su[0, 1] ** 2 / su[0, 0], 0.0))
    if s2 == 0.0:
        raise DomainError("Sigma_U is singular at this overlap")
    a1, b1 = sn * lo / s1, sn * hi / s1
    lw1 = float(_log_interval_mass(a1, b1))
    if lw1 == -math.inf:
        raise EmptyEstimateError("level set has zero Gaussian mass; widen it")
    sizes = block_sizes(samples, block)
    gens = substreams(rng, len(sizes))
    out = []
    for b, g in zip(sizes, gens):
        u1 = s1 * _sample_truncated(a1, b1, g.random(b))
        a2, b2 = (sn * lo - beta * u1) / s2, (sn * hi - beta * u1) / s2
        lw2 = _log_interval_mass(a2, b2)
        u2 = beta * u1 + s2 * _sample_truncated(a2, b2, g.random(b))
        m1, m2 = rm.hessian_pair_batch(p, N, r, u1, u2, g)
        out.append(lw2 + rm.log_abs_det(m1) + rm.log_abs_det(m2))
    logv = np.concatenate(out)
    if not np.any(np.isfinite(logv)):
        raise EmptyEstimateError("no usable samples; increase samples")
    return _scaled(rm.MomentEstimate.from_log_values(logv), lw1)


def _gl_nodes(panels, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    rs, ws = [], []
    for a, b in panels:
        rs.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(rs), np.concatenate(ws)


def _clip_panels(I_R, panels):
    lo, hi = I_R
    out = [(max(a, lo), min(b, hi)) for a, b in panels if min(b, hi) > max(a, lo)]
    return out or [(lo, hi)]


def second_moment(p: int, N: int, B, I_R=(-0.99, 0.99), samples: int = 4000, rng=None,
                  nodes_per_panel: int = 33, panels=DEFAULT_PANELS, threads: int = 1) -> MomentReport:
    """Second factorial moment of the count restricted to overlaps in ``I_R``."""
    if int(p) != p or p < 3:
        raise DomainError("p must be an integer >= 3")
    if N < 3:
        raise DomainError("second moment needs N >= 3")
    lo_r, hi_r = float(I_R[0]), float(I_R[1])
    if not -1 < lo_r < hi_r < 1:
        raise DomainError("I_R must be a closed sub-interval of (-1, 1)")
    B = _level(B)
    rs, ws = _gl_nodes(_clip_panels((lo_r, hi_r), panels), nodes_per_panel)
    gens = substreams(as_generator(rng), len(rs))
    ests = pmap(lambda r, g: second_moment_integrand(p, N, float(r), B, samples, g),
                list(zip(rs, gens)), threads)
    logs = np.array([e.log_mean for e in ests])
    rels = np.array([e.rel_error for e in ests])
    logpre = np.array([ls.kr_prefactors(p, N, float(r)).log_weight(N) for r in rs])
    terms = logpre + np.log(ws) + logs
    log_total = float(logsumexp(terms))
    log_se = float(0.5 * logsumexp(2 * (terms + np.log(np.maximum(rels, 1e-300)))))
    rel = math.exp(log_se - log_total)
    mean = math.exp(log_total) if log_total < 709 else math.inf
    est = rm.MomentEstimate(mean, mean * rel, int(samples) * len(rs), log_total, rel)
    _resolution_check(logs, rels)
    u_top = B[1] if math.isfinite(B[1]) else 0.0
    grid = np.linspace(lo_r, hi_r, 401)
    ref = max(ls.psi_bar(p, u_top, float(x)) for x in grid)
    return MomentReport("second", int(p), int(N), B, (lo_r, hi_r), est, log_total / N, float(ref),
                        {"r_nodes": rs.tolist(), "integrand_ln": logs.tolist()})


def _resolution_check(logs: np.ndarray, rels: np.ndarray) -> None:
    # a local wiggle whose steps are all inside 3 combined SE is noise, not signal
    se = rels  # log-scale SE
    for k in range(1, len(logs) - 1):
        d1, d2 = logs[k] - logs[k - 1], logs[k + 1] - logs[k]
        if d1 * d2 < 0:
            s1 = 3 * math.hypot(se[k], se[k - 1])
            s2 = 3 * math.hypot(se[k], se[k + 1])
            if abs(d1) < s1 and abs(d2) < s2 and max(se[k - 1:k + 2]) > 0.05:
                warnings.warn(f"integrand not resolved near node {k}; raise samples", ResolutionWarning)
                return


# --- asymptotics ---------------------------------------------------------------

def asymptote_report(p: int, u: float, N_list, samples: int, rng, second_max_N: int = 10,
                     second_samples: int | None = None, threads: int = 1) -> list[dict]:
    """Per-N exponential-scale first/second moment diagnostics for B = (-inf, u)."""
    N_list = list(N_list)
    if N_list != sorted(N_list):
        raise DomainError("N_list must be ascending")
    g = as_generator(rng)
    th = theta(p, u)
    rows = []
    for N in N_list:
        f = first_moment(p, N, u, samples, g, threads=threads)
        row = {"N": N, "first_ln_per_n": f.log_per_n, "theta": th, "first_abs_error": abs(f.log_per_n - th),
               "second_ln_per_n": None, "two_theta": 2 * th, "ratio_ln": None}
        if 3 <= N <= second_max_N:
            s = second_moment(p, N, (-math.inf, u), samples=second_samples or samples, rng=g, threads=threads)
            row["second_ln_per_n"] = s.log_per_n
            row["ratio_ln"] = s.estimate.log_mean - 2 * f.estimate.log_mean
        rows.append(row)
    return rows
