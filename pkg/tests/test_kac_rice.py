import math

import numpy as np
import pytest
from scipy.stats import norm

from pspin_landscape import kac_rice as kr
from pspin_landscape import landscape as ls
from pspin_landscape.errors import DomainError
from pspin_landscape.special_functions import theta, thresholds

pytestmark = pytest.mark.filterwarnings("ignore::pspin_landscape.kac_rice.ResolutionWarning")


def test_truncated_helpers():
    assert float(kr._log_interval_mass(-1.0, 2.0)) == pytest.approx(math.log(norm.cdf(2) - norm.cdf(-1)), rel=1e-14)
    assert float(kr._log_interval_mass(30.0, 31.0)) == pytest.approx(norm.logsf(30.0), rel=1e-6)
    assert float(kr._log_interval_mass(1.0, 1.0)) == -math.inf
    v = np.linspace(0.001, 0.999, 999)
    z = kr._sample_truncated(-40.0, -38.0, v)
    assert np.all((z >= -40) & (z <= -38)) and np.all(np.diff(z) > 0)
    # right-tail draws are mirrored, so v maps to the upper quantile 1 - v
    z = kr._sample_truncated(0.5, np.inf, v)
    assert np.allclose(z, norm.ppf(norm.cdf(0.5) + (1 - v) * norm.sf(0.5)), atol=1e-9)


def test_prefactor_n2():
    for p in (3, 5):
        direct = math.log(2 * math.pi * math.sqrt((p - 1) / (2 * math.pi)))
        assert kr.first_moment_log_prefactor(p, 2) == pytest.approx(direct, rel=1e-14)


def test_prefactor_no_overflow():
    assert math.isfinite(kr.first_moment_log_prefactor(3, 200))
    assert math.isfinite(ls.kr_prefactors(3, 200, 0.3).log_weight(200))


def test_exact_small_full_space():
    assert kr.first_moment_exact_small(3, 2, 50.0) == pytest.approx(2 * math.sqrt(7), rel=1e-8)


def test_exact_small_monotone_in_u():
    vals = [kr.first_moment_exact_small(3, 2, u) for u in (-0.5, -1.5, -3.0, -5.0)]
    assert all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-9
    with pytest.raises(DomainError):
        kr.first_moment_exact_small(3, 4, 0.0)


@pytest.mark.parametrize("u", [10.0, -0.5])
def test_first_moment_vs_quadrature_n2(u, rng):
    est = kr.first_moment(3, 2, u, 200_000, rng).estimate
    assert abs(est.mean - kr.first_moment_exact_small(3, 2, u)) <= 3 * est.std_error


def test_first_moment_interval_and_errors(rng):
    whole = kr.first_moment(4, 5, (-1.8, -1.2), 20_000, np.random.default_rng(1))
    assert whole.level_set == (-1.8, -1.2) and whole.reference_exponent == theta(4, -1.2)
    deep = kr.first_moment(3, 10, (-500.0, -499.0), 100, rng)
    assert math.isfinite(deep.estimate.log_mean) and deep.estimate.mean == 0.0
    with pytest.raises(DomainError):
        kr.first_moment(3, 10, (1.0, 0.0), 100, rng)


def test_first_moment_reference_limits(rng):
    # u >= 0 counts every critical point; u = -E0 sits on the zero of the exponent
    errs = [abs(kr.first_moment(3, N, 1.0, 10_000, rng).log_per_n - 0.5 * math.log(2)) for N in (10, 20, 40)]
    assert errs[0] > errs[1] > errs[2]
    e0 = thresholds(3).e_zero
    vals = [abs(kr.first_moment(3, N, -e0, 10_000, rng).log_per_n) for N in (10, 20, 40)]
    assert vals[0] > vals[1] > vals[2]


def test_integrand_regression():
    e = kr.second_moment_integrand(3, 6, 0.4, (-math.inf, -1.6), 2000, np.random.default_rng(123))
    assert e.log_mean == pytest.approx(-13.967100494004079, rel=1e-12)


def test_integrand_factorizes_at_zero_overlap():
    # p >= 5 so every cross block vanishes at r = 0
    x = kr.second_moment_integrand(5, 6, 0.0, (-math.inf, -1.2), 100_000, np.random.default_rng(3))
    f = kr.first_moment(5, 6, -1.2, 100_000, np.random.default_rng(4)).estimate
    single = math.exp(f.log_mean - kr.first_moment_log_prefactor(5, 6))
    se = math.hypot(x.std_error, 2 * single * single * f.rel_error)
    assert abs(x.mean - single**2) <= 3 * se


def test_integrand_even_p_reflection():
    a = kr.second_moment_integrand(4, 5, 0.5, (-math.inf, -1.3), 40_000, np.random.default_rng(5))
    b = kr.second_moment_integrand(4, 5, -0.5, (-math.inf, -1.3), 40_000, np.random.default_rng(6))
    assert abs(a.mean - b.mean) <= 3 * math.hypot(a.std_error, b.std_error)


def test_integrand_errors(rng):
    with pytest.raises(DomainError):
        kr.second_moment_integrand(3, 2, 0.1, (-math.inf, 0.0), 10, rng)
    with pytest.raises(DomainError):
        kr.second_moment_integrand(3, 5, 1.0, (-math.inf, 0.0), 10, rng)


def test_second_moment_mass_near_zero_overlap():
    B = (-1.62, -1.58)
    inner = kr.second_moment(3, 8, B, I_R=(-0.2, 0.2), samples=1000, rng=np.random.default_rng(2))
    full = kr.second_moment(3, 8, B, samples=1000, rng=np.random.default_rng(2))
    frac = math.exp(inner.estimate.log_mean - full.estimate.log_mean)
    # the window is a fifth of the overlap range but carries well over a fifth of the mass
    assert frac > 2 * 0.4 / 1.98


def test_second_moment_dominates_first_squared():
    rep = kr.second_moment(3, 6, (-math.inf, -1.6), samples=2000, rng=np.random.default_rng(8))
    first = kr.first_moment(3, 6, -1.6, 100_000, np.random.default_rng(9)).estimate
    raw = rep.estimate.mean + first.mean  # E[C^2] = E[C(C-1)] + E[C]
    se = math.sqrt(rep.estimate.std_error**2 + first.std_error**2 + (2 * first.mean * first.std_error) ** 2)
    assert raw >= first.mean**2 - 3 * se
    assert set(rep.as_dict()) >= {"r_nodes", "integrand_ln", "log_per_n", "estimate"}
    assert len(rep.extra["r_nodes"]) == 99


def test_second_moment_errors(rng):
    with pytest.raises(DomainError):
        kr.second_moment(3, 2, (-math.inf, 0.0), rng=rng)
    with pytest.raises(DomainError):
        kr.second_moment(3, 5, (-math.inf, 0.0), I_R=(-1.0, 0.5), rng=rng)


def test_asymptote_report_shape(rng):
    rows = kr.asymptote_report(3, -1.6, [4, 12], 2000, rng, second_max_N=4, second_samples=300)
    assert rows[0]["second_ln_per_n"] is not None and rows[1]["second_ln_per_n"] is None
    assert rows[0]["two_theta"] == 2 * theta(3, -1.6)
    with pytest.raises(DomainError):
        kr.asymptote_report(3, -1.6, [12, 4], 100, rng)
