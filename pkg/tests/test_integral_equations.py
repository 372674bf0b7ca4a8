import math

import numpy as np
import pytest
from scipy.integrate import quad

from qtm_nlie.core_types import validate_params
from qtm_nlie.integral_equations import (dressed_suite, dual_representation_check, eps_infinity,
                                         fermi_point, fredholm_det_segment, gauss_panels,
                                         segment_grid, solve_fredholm, trotter_dressed)
from qtm_nlie.special_functions import bare_energy, bare_momentum, kernel_K, trotter_driving

P13 = validate_params(J=1, zeta=1.3, h=2, T=0.2)
PFF = validate_params(J=1, zeta=math.pi / 2, h=2, T=0.2)


@pytest.fixture(scope="module")
def s13():
    return dressed_suite(P13)


@pytest.fixture(scope="module")
def sff():
    return dressed_suite(PFF)


def test_grid_weights_sum_to_length():
    g = gauss_panels([-1.0, 0.5 + 0.3j, 2.0 - 0.1j], order=16)
    assert abs(g.weights.sum() - g.length) < 1e-12
    ends = np.array([-1.0, 0.5 + 0.3j, 2.0 - 0.1j])
    assert np.min(np.abs(g.nodes[:, None] - ends[None, :])) > 1e-4


def test_fredholm_identity_cases():
    g = segment_grid(0.7)
    rhs = np.asarray(bare_energy(g.nodes, PFF))
    assert np.array_equal(solve_fredholm(g, rhs, PFF), rhs)
    g0 = segment_grid(0.0)
    assert len(solve_fredholm(g0, np.zeros(0), P13)) == 0


def test_fredholm_self_consistency(s13):
    q = s13.q
    g = s13.grid
    f = solve_fredholm(g, lambda x: bare_energy(x, P13), P13)
    rng = np.random.default_rng(3)
    for lam in rng.uniform(-q, q, 20):
        integral = quad(lambda m: (kernel_K(lam - m, P13) * s13.eps(m)).real, -q, q,
                        epsabs=1e-14, limit=200)[0]
        assert abs(s13.eps(lam).real + integral - bare_energy(lam, P13).real) < 1e-10
    assert np.max(np.abs(f - s13.eps_grid)) < 1e-13


def test_fermi_point_free_fermion():
    assert fermi_point(PFF) == pytest.approx(0.6584789484624084, abs=1e-12)


def test_fermi_point_near_saturation():
    p = P13.with_(h=4 * (1 + math.cos(1.3)) - 1e-6)
    assert fermi_point(p) < 1e-2


def test_fermi_point_sign_change(s13):
    q = s13.q
    assert abs(s13.eps(q)) < 1e-10
    assert s13.eps(q - 1e-3).real < 0 < s13.eps(q + 1e-3).real


def test_free_fermion_suite(sff):
    x = np.linspace(-2, 2, 25) + 0.05j
    assert np.max(np.abs(sff.Z(x) - 1)) < 1e-14
    assert np.max(np.abs(sff.phi(x, x[::3]))) < 1e-14
    assert np.max(np.abs(sff.eps(x) - bare_energy(x, PFF))) < 1e-14
    assert np.max(np.abs(sff.mom(x) - bare_momentum(x, PFF))) < 1e-14
    assert sff.vF == pytest.approx(2 * math.sqrt(3), abs=1e-8)


def test_slavnov_identities(s13):
    q = s13.q
    Z = s13.Z(q).real
    assert abs(1 + s13.phi(q, q) - 1 / (2 * Z) - Z / 2) < 1e-8
    assert abs(s13.phi(q, -q) - 1 / (2 * Z) + Z / 2) < 1e-8


def test_phi_symmetry(s13):
    rng = np.random.default_rng(5)
    lam = rng.uniform(-1.5, 1.5, 50)
    mu = rng.uniform(-1.5, 1.5, 50)
    a = np.array([s13.phi(l, m) for l, m in zip(lam, mu)])
    b = np.array([s13.phi(-l, -m) for l, m in zip(lam, mu)])
    assert np.max(np.abs(a + b)) < 1e-8


def test_eps_sign_structure(s13):
    q = s13.q
    inner = np.real(s13.eps(np.linspace(-q, q, 41)[1:-1]))
    outer = np.real(s13.eps(np.concatenate([np.linspace(q, 4, 30)[1:], -np.linspace(q, 4, 30)[1:]])))
    assert np.all(inner < 0) and np.all(outer > 0)
    x = np.linspace(-2, 2, 17)
    assert np.max(np.abs(s13.eps(x) - s13.eps(-x))) < 1e-8


def test_vF_positive_and_consistent(s13):
    assert s13.vF > 0
    fd = s13.eps_prime_fd() / s13.mom_d(s13.q).real
    assert fd == pytest.approx(s13.vF, rel=1e-8)


def test_grid_convergence(s13):
    s2 = dressed_suite(P13, order=128)
    x = np.linspace(-2, 2, 30) + 0.1j
    for f in ("eps", "Z", "mom"):
        assert np.max(np.abs(getattr(s13, f)(x) - getattr(s2, f)(x))) < 1e-8


def test_trotter_dressed_free_fermion(sff):
    p = PFF.with_(trotter=16)
    W = trotter_dressed(p, sff)
    lam = np.array([0.3, 1.0 + 0.2j, -0.7])
    assert np.max(np.abs(W(lam) - trotter_driving(lam, p))) < 1e-14


def test_trotter_dressed_limit(s13):
    lam = np.array([0.3, 1.0 + 0.2j, -0.8 - 0.3j, 2.0, 0.5 - 0.4j])
    Ns = [32, 64, 128, 256]
    err = [np.max(np.abs(trotter_dressed(P13.with_(trotter=N), s13)(lam) - s13.eps(lam))) for N in Ns]
    slope = np.polyfit(np.log(Ns), np.log(err), 1)[0]
    # at least first order; the even driving term in fact gives second order
    assert slope <= -1.0
    W = trotter_dressed(P13.with_(trotter=64), s13)
    assert np.max(np.abs(W(lam) - W(-lam))) < 1e-8


def test_det_segment(s13):
    assert fredholm_det_segment(PFF, 0.7) == 1.0
    assert fredholm_det_segment(P13, 0.0) == 1.0
    d64, d128 = fredholm_det_segment(P13, s13.q, 64), fredholm_det_segment(P13, s13.q, 128)
    assert abs(d64 - d128) < 1e-8 and d64 > 0.1


def test_eps_infinity_value():
    expected = 2 * math.pi / (2 * (math.pi - 1.3)) - 2 * math.pi * math.sin(1.3) / 1.3
    assert eps_infinity(0.0, P13) == pytest.approx(expected, abs=1e-14)


def test_dual_representation(s13, sff):
    assert dual_representation_check(sff) < 1e-9
    assert dual_representation_check(s13) < 1e-6
