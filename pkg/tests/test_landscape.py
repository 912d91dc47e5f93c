import math
from fractions import Fraction

import numpy as np
import pytest

from pspin_landscape import landscape as ls
from pspin_landscape.errors import DomainError
from pspin_landscape.special_functions import theta, u_th


def test_psi_at_zero_overlap():
    assert ls.psi(3, 0.0, -1.7, -1.7) == pytest.approx(2 * theta(3, -1.7), abs=1e-12)
    for p in (4, 7):
        assert ls.psi(p, 0.0, -1.9, -1.9) == pytest.approx(2 * theta(p, -1.9), abs=1e-12)


def test_psi_swap_symmetry(rng):
    for _ in range(1000):
        p = int(rng.integers(3, 9))
        r = rng.uniform(-0.99, 0.99)
        a, b = rng.uniform(-3, -1, size=2)
        assert ls.psi(p, r, a, b) == ls.psi(p, r, b, a)


def test_psi_even_p_parity():
    assert ls.psi(4, 0.4, -1.6, -1.9) == pytest.approx(ls.psi(4, -0.4, -1.6, -1.9), rel=1e-13)


def two_path_worst():
    # odd p near r = -1 gives |psi| ~ 1e7, so the gap is scaled by max(1, |psi|)
    worst = 0.0
    for p in range(3, 9):
        for r in np.round(np.arange(-0.99, 0.9901, 0.01), 10):
            for u in np.arange(-2.5, -0.999, 0.25):
                a = ls.psi(p, r, u, u)
                worst = max(worst, abs(a - ls.psi_diag_ratio(p, r, u)) / max(1.0, abs(a)))
    return worst


def test_two_path_identity_grid():
    assert two_path_worst() < 1e-10


def test_q_fn_identities():
    for p in (3, 4, 9):
        assert ls.q_fn(p, 1.3, 0.0) == 0.0
        assert abs(ls.q_fn(p, u_th(p), 1.0)) < 1e-12
    r, u = 0.5, 1.2
    lhs = ls.psi(3, r, -u, -u)
    rhs = ls.zeta(3, -u) - u * u + ls.q_fn(3, u, r)
    assert lhs == pytest.approx(rhs, abs=1e-10)
    with pytest.raises(DomainError):
        ls.q_fn(3, 1.0, -0.1)


def test_q_decreasing_in_u():
    for p in (3, 6):
        for r in np.linspace(0.05, 1.0, 20):
            assert ls.q_fn(p, 1.0, r) < ls.q_fn(p, 1.4, r)


def test_g0_values():
    assert ls.g0(3, 0.0) == 0.0
    for p in range(3, 11):
        assert ls.g0(p, 1.0) == (p - 2) / (4 * (p - 1))
    ref = Fraction(1, 8) ** 1 * 0 + (Fraction(1, 8) - Fraction(1, 16)) / (1 - Fraction(1, 16) + 2 * Fraction(1, 2) * Fraction(3, 4))
    assert ls.g0(3, 0.5) == pytest.approx(float(ref), rel=1e-14)
    with pytest.raises(DomainError):
        ls.g0(3, 1.01)


def test_g0_strictly_increasing():
    rs = np.linspace(1e-6, 1.0, 10_000)
    for p in range(3, 11):
        v = np.array([ls.g0(p, r) for r in rs])
        assert np.all(np.diff(v) > 0)


@pytest.mark.parametrize("p", [3, 5, 8])
def test_g0_prime_matches_difference_quotient(p):
    for r in (0.1, 0.4, 0.77, 0.95):
        h = 1e-6
        fd = (ls.g0(p, r + h) - ls.g0(p, r - h)) / (2 * h)
        assert ls.g0_prime(p, r) == pytest.approx(fd, rel=1e-6)
    assert ls.g0_prime(p, 1.0) == pytest.approx(p * (p - 2) / (8 * (p - 1)), rel=1e-13)


def test_psi_bar_boundaries():
    u = u_th(3)
    assert ls.psi_bar(3, u, 1.0) == pytest.approx(ls.psi_bar(3, u, 0.0), abs=1e-12)
    assert ls.psi_bar(4, -1.5, -1.0) == ls.psi_bar(4, -1.5, 1.0)
    assert abs(ls.psi_bar(3, 1.64, 0.999) - ls.psi_bar(3, 1.64, 1.0)) < 2e-3
    assert ls.psi_bar(3, -1.5, -1.0) == -math.inf
    for p in (3, 5):
        near = ls.psi_bar(p, 0.0, -1 + 1e-7)
        assert ls.psi_bar(p, 0.0, -1.0) == pytest.approx(near, abs=1e-5)
    with pytest.raises(DomainError):
        ls.psi_bar(3, 1.0, 1.2)


def test_psi_bar_odd_p_prefers_positive_overlap():
    for p in (3, 5, 7):
        for u in (-1.2, -1.7, -2.0):
            for r in np.linspace(0.01, 0.99, 50):
                assert ls.psi_bar(p, u, r) >= ls.psi_bar(p, u, -r)


def test_landscape_argmax_examples():
    assert ls.landscape_argmax(3, 1.6).r_star == 0.0
    assert ls.landscape_argmax(3, 1.7).r_star == 1.0
    res = ls.landscape_argmax(4, 1.9)
    assert set(res.maximizers) == {-1.0, 1.0}
    assert ls.psi_bar(4, 1.9, -1.0) == pytest.approx(ls.psi_bar(4, 1.9, 1.0), abs=1e-10)
    with pytest.raises(DomainError):
        ls.landscape_argmax(3, 1.0, grid=50)


def test_sup_offdiag_check():
    rep = ls.sup_offdiag_check(3, 0.3, (-2.2, -1.7))
    assert rep.diagonal_max and rep.concave
    rep0 = ls.sup_offdiag_check(3, 0.0, (-2.2, -1.7), grid=21)
    assert rep0.grid_max == rep0.diag_max
    rep5 = ls.sup_offdiag_check(5, 0.6, (-2.5, -1.9), grid=21)
    assert rep5.hessian_max_eig <= 1e-6
    with pytest.raises(DomainError):
        ls.sup_offdiag_check(3, 0.3, (-2.0, 0.0))


def test_kr_prefactors():
    k = ls.kr_prefactors(3, 10, 0.0)
    assert (k.g, k.f) == (1.0, 1.0)
    assert math.exp(ls.log_sphere_area(2)) == pytest.approx(2 * math.pi, rel=1e-15)
    r = Fraction(1, 2)
    g2 = (1 - r**2) / (1 - r**4)
    f2 = 1 / (g2**3 * (1 - r**4) * (1 - (3 * r**3 - 2 * r) ** 2))
    k = ls.kr_prefactors(3, 10, 0.5)
    assert k.f == pytest.approx(math.sqrt(float(f2)), rel=1e-13)
    assert k.g == pytest.approx(math.sqrt(float(g2)), rel=1e-14)
    for r in np.linspace(-0.95, 0.95, 39):
        kk = ls.kr_prefactors(5, 8, r)
        assert 0 < kk.g <= 1 and kk.f >= 1 - 1e-12 and math.isfinite(kk.log_c_n)
    with pytest.raises(DomainError):
        ls.kr_prefactors(3, 10, 1.0)
