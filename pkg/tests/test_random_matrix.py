import math

import numpy as np
import pytest
from scipy import integrate

from oracles import abs_gauss_mean, goe2_density
from pspin_landscape import covariance as cv
from pspin_landscape import random_matrix as rm
from pspin_landscape.errors import DomainError


def _var_within(x, target, k=3.0):
    # SE of the sample variance from the fourth moment
    x = x - x.mean()
    v = np.mean(x**2)
    se = np.std(x**2, ddof=1) / math.sqrt(x.size)
    return abs(v - target) <= k * se


def test_goe_entry_variances(rng):
    a = rm.goe_batch(8, 100_000, rng)
    assert _var_within(a[:, 0, 1], 1 / 8)
    assert _var_within(a[:, 3, 3], 2 / 8)
    tr = np.trace(a, axis1=1, axis2=2)
    assert abs(tr.mean()) <= 3 * tr.std() / math.sqrt(tr.size)
    assert np.array_equal(a, np.swapaxes(a, 1, 2))


def test_seed_determinism():
    a = rm.goe_batch(5, 10, np.random.default_rng(3))
    b = rm.goe_batch(5, 10, np.random.default_rng(3))
    assert a.tobytes() == b.tobytes()
    e1 = rm.det_abs_moment(4, 1.0, 1, 5000, np.random.default_rng(9), block=1000)
    e2 = rm.det_abs_moment(4, 1.0, 1, 5000, np.random.default_rng(9), block=1000, threads=3)
    assert e1 == e2


def test_correlated_pair(rng):
    x1, x2 = rm.correlated_goe_pair(6, 3, -0.5, rng, size=100_000)
    a, b = x1[:, 0, 1] * math.sqrt(6), x2[:, 0, 1] * math.sqrt(6)
    prod = a * b
    assert abs(prod.mean() + 0.5) <= 3 * prod.std() / math.sqrt(prod.size)
    assert _var_within(x1[:, 2, 4], 1 / 6) and _var_within(x2[:, 1, 1], 2 / 6)
    y1, y2 = rm.correlated_goe_pair(4, 4, 1.0, rng)
    assert np.array_equal(y1, y2)
    z1, z2 = rm.correlated_goe_pair(6, 4, 0.0, rng, size=50_000)
    c = (z1[:, 0, 1] * z2[:, 0, 1]) * 6
    assert abs(c.mean()) <= 3 * c.std() / math.sqrt(c.size)
    # even p: the sign of r drops out
    w1, w2 = rm.correlated_goe_pair(6, 4, -0.8, rng, size=50_000)
    c = w1[:, 0, 1] * w2[:, 0, 1] * 6
    assert abs(c.mean() - 0.64) <= 3 * c.std() / math.sqrt(c.size)


@pytest.mark.parametrize("p,N,r,u1,u2", [(3, 6, 0.4, -1.6, -1.7), (4, 5, -0.6, -1.5, -1.9)])
def test_hessian_pair_matches_law(p, N, r, u1, u2):
    law = cv.explicit_hessian_law(p, N, r, u1, u2)
    B = 100_000
    m1, m2 = rm.hessian_pair_batch(p, N, r, np.full(B, u1), np.full(B, u2), np.random.default_rng(11))
    X = np.stack([(m1 if w == "n" else m2)[:, i, j] for (w, i, j) in law.labels], 1)
    mean_se = X.std(0, ddof=1) / math.sqrt(B)
    assert np.all(np.abs(X.mean(0) - law.mean) <= 4 * mean_se + 1e-15)
    Xc = X - law.mean
    prods = Xc[:, :, None] * Xc[:, None, :]
    emp = prods.mean(0)
    se = prods.std(0, ddof=1) / math.sqrt(B)
    assert np.all(np.abs(emp - law.cov) <= 4 * se + 1e-12)


def test_hessian_pair_structure(rng):
    m1, m2 = rm.hessian_pair_sample(3, 6, 0.4, -1.6, -1.7, rng)
    assert m1.shape == (5, 5) and np.array_equal(m1, m1.T) and np.array_equal(m2, m2.T)
    a, b = rm.hessian_pair_batch(4, 6, 0.0, np.zeros(50_000), np.zeros(50_000), rng)
    c = a[:, 0, 1] * b[:, 0, 1]
    assert abs(c.mean()) <= 3 * c.std() / math.sqrt(c.size)
    assert _var_within(a[:, 0, 1], 1 / 5)
    with pytest.raises(DomainError):
        rm.hessian_pair_sample(3, 2, 0.4, -1, -1, rng)


def test_spectral_summary(rng):
    s = rm.spectral_summary(np.eye(4))
    assert np.array_equal(s.eigenvalues, np.ones(4))
    assert rm.spectral_summary(rm.goe_sample(1000, rng)).semicircle_distance < 0.05
    # Tracy-Widom: the edge sits near 2 - 1.2 n^{-2/3}, i.e. just below 2 at n = 200
    edges = [rm.spectral_summary(m).max_abs for m in rm.goe_batch(200, 100, rng)]
    assert 1.95 < np.mean(edges) < 2.0
    with pytest.raises(DomainError):
        rm.spectral_summary(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_det_moment_n1(rng):
    for s in (0.0, 0.8, -1.5):
        e = rm.det_abs_moment(1, s, 1, 100_000, rng)
        assert abs(e.mean - abs_gauss_mean(s)) <= 3 * e.std_error
        e2 = rm.det_abs_moment(1, s, 2, 100_000, rng)
        assert abs(e2.mean - (2 + s * s)) <= 3 * e2.std_error


def test_det_moment_goe2(rng):
    ref = integrate.dblquad(lambda a, b: abs(a * b) * goe2_density(a, b), -12, 12, -12, 12)[0]
    assert ref == pytest.approx(math.sqrt(2) - 0.5, rel=1e-7)
    e = rm.det_abs_moment(2, 0.0, 1, 200_000, rng)
    assert abs(e.mean - ref) <= 3 * e.std_error


def test_det_moment_large_shift(rng):
    e = rm.det_abs_moment(5, 40.0, 1, 2000, rng)
    assert abs(e.log_mean - 5 * math.log(40.0)) < 0.01
    with pytest.raises(DomainError):
        rm.det_abs_moment(3, 0.0, 3, 1000, rng)


def test_moment_estimate_log_values():
    e = rm.MomentEstimate.from_log_values(np.array([1000.0, 1000.0 + math.log(3)]))
    assert e.log_mean == pytest.approx(1000 + math.log(2))
    assert e.mean == math.inf and math.isfinite(e.rel_error)
    z = rm.MomentEstimate.from_log_values(np.array([-np.inf, -np.inf]))
    assert z.mean == 0.0
    assert set(e.as_dict()) == {"mean", "std_error", "n_samples", "mean_ln", "rel_error"}


def test_ghat_n1(rng):
    v = 0.7
    g = rm.ghat_curve(1, v, [-0.5, 0.0, 0.5, 1.0], 200_000, rng)
    for rho, m, se in g.rows():
        assert abs(m - (2 * rho + v * v)) <= 3 * se


def test_ghat_zero_is_square(rng):
    g = rm.ghat_curve(3, 1.2, [0.0], 100_000, np.random.default_rng(5))
    a = rm.goe_batch(3, 400_000, rng)
    d = np.prod(np.linalg.eigvalsh(a - 1.2 * np.eye(3)), axis=1)
    m, se = d.mean(), d.std() / math.sqrt(d.size)
    sq, sq_se = m * m, 2 * abs(m) * se
    assert abs(g.value(0.0) - sq) <= 3 * math.hypot(g.se[0], sq_se)


def test_ghat_small_chain(rng):
    g = rm.ghat_curve(4, 2.0, [-0.5, 0.0, 0.5, 1.0], 50_000, rng)
    up, se_up = g.combo({0.5: 1.0, -0.5: -1.0})
    down, se_down = g.combo({0.5: 1.0, -0.5: 1.0, 0.0: -2.0})
    assert up >= -3 * se_up and down >= -3 * se_down
    with pytest.raises(DomainError):
        rm.ghat_curve(2, 1.0, [1.5], 10, rng)


def test_det_perturb(rng):
    rep = rm.det_perturb_check(5, 2, 10_000, rng)
    assert rep.violations == 0 and rep.worst_ratio <= 1 + 1e-10
    assert rm.det_perturb_check(6, 1, 2000, rng).violations == 0
    # rank-one diagonal case: |1 + t| <= 1 + |t|
    for t in (-3.0, 0.5, 2.0):
        assert abs(1 + t) <= 1 + abs(t)


def test_tail(rng):
    rep = rm.tail_check(10, 3.0, 100_000, rng)
    assert rep.within_bound
    assert rm.tail_check(50, 3.0, 2000, rng).frequency == 0.0
    assert rm.tail_check(10, 50.0, 1000, rng).frequency == 0.0
    with pytest.raises(DomainError):
        rm.tail_check(10, 1.0, 100, rng)
