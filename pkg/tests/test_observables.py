import csv
import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from qtm_nlie.core_types import PoleConflict, RatioGeqOne, SignedMultiset
from qtm_nlie.excitations import ExcitationSpec, far_integer, solve_quantisation
from qtm_nlie.integral_equations import dressed_suite
from qtm_nlie.nlie import fixed_point_solve
from qtm_nlie.observables import (EXPANSION, Functional, cft_spectrum_check, dress_direct,
                                  dress_quantity, eigenvalue_and_lengths, energy_E,
                                  energy_functional, expansion_terms, ln_lambda, minimiser_scan,
                                  momentum_functional, momentum_P, reports_json, spectral_report,
                                  write_reports_csv)
from qtm_nlie.special_functions import bare_energy, bare_momentum, bare_momentum_d

PP = ExcitationSpec(0, (0,), (0,))


def _solve(p, spec=None):
    s = dressed_suite(p)
    return solve_quantisation(p, spec or ExcitationSpec(), s)


def test_free_fermion_direct_vs_real_line(pff, suiteff):
    sol = fixed_point_solve(pff, suite=suiteff)
    P = dress_direct(momentum_functional(pff), sol, SignedMultiset())
    T = pff.T
    f = lambda l: (bare_momentum_d(l, pff) * np.log1p(np.exp(-bare_energy(l, pff).real / T))).real
    ref = -1j * quad(f, -30, 30, epsabs=1e-14, limit=400)[0] / (2 * math.pi)
    assert abs(P - ref) < 1e-9


def test_free_fermion_expansion_zeroth(suiteff):
    p = suiteff.p
    q = suiteff.q
    Y = SignedMultiset.from_pairs([(0.9 + 0.05j, 1), (0.5 - 0.1j, -1)])
    for f, g in ((momentum_functional(p), lambda z: bare_momentum(z, p)),
                 (energy_functional(p), lambda z: bare_energy(z, p))):
        t = expansion_terms(f, suiteff, Y, 1)
        exact = g(0.9 + 0.05j) - g(0.5 - 0.1j) + 0.5 * (g(q) - g(-q))
        assert abs(t[0] - exact) < 1e-12


@pytest.mark.parametrize("make", [momentum_functional, energy_functional])
def test_expansion_matches_direct(p13, make):
    diffs = []
    for T in (0.05, 0.025):
        p = p13.with_(T=T)
        sol, _ = _solve(p)
        f = make(p)
        diffs.append(abs(dress_quantity(f, sol).value - dress_quantity(f, sol, mode=EXPANSION).value))
    assert diffs[0] / diffs[1] >= 3.0


def test_varpi_hmin(p13, suite13):
    # all three integers kept in the close partition
    spec = ExcitationSpec(-1, (0, 1), (0,), far_fraction=0.9)
    sol, _ = solve_quantisation(p13, spec, suite13)
    pm = momentum_P(sol, spec)
    assert abs(pm["varpi_1"] - 5j * math.pi / pm["vF"]) < 1e-12


def test_free_energy_free_fermion(pff):
    res = []
    for T in (0.05, 0.025):
        p = pff.with_(T=T)
        sol, _ = _solve(p)
        pm = momentum_P(sol)
        res.append(abs((pm["P"] - pm["P_m1"] / T).imag + math.pi * T / (6 * 2 * math.sqrt(3))))
    assert res[0] / res[1] >= 3.0


def test_far_particle_P0(p13, suite13):
    n = far_integer(1.0, p13.T)
    spec = ExcitationSpec(-1, (n,), ())
    sol, rs = solve_quantisation(p13, spec, suite13)
    pm = momentum_P(sol, spec)
    y = rs.particles[0]
    assert abs(pm["P_0"] - (suite13.mom(y) - suite13.mom(suite13.q))) < 1e-12


def test_varsigma_close_pair(pp13):
    sol, _ = pp13
    assert abs(energy_E(sol, PP)["varsigma_1"] - 2j * math.pi) < 1e-14


def test_energy_leading(p13):
    res = []
    for T in (0.05, 0.025):
        sol, _ = _solve(p13.with_(T=T))
        en = energy_E(sol)
        res.append(abs(en["E"] - en["E_m1"] / T))
    assert res[0] / res[1] >= 3.0


def test_free_fermion_E0(pff, suiteff):
    n = far_integer(1.0, pff.T)
    spec = ExcitationSpec(-1, (n,), ())
    sol, rs = solve_quantisation(pff, spec, suiteff)
    assert abs(energy_E(sol, spec)["E_0"] - bare_energy(rs.particles[0], pff)) < 1e-12


def test_P1_unchanged_by_close_pair(empty13, pp13):
    a = momentum_P(empty13[0])["P_1"]
    b = momentum_P(pp13[0], PP)["P_1"]
    assert abs(a - b) < 1e-12


def test_upsilon():
    assert PP.upsilon_sum("R") == 1.0 and PP.upsilon_sum("L") == 0.0


def test_lambda_identity(empty13, p13):
    P = momentum_P(empty13[0])["P"]
    lnL = ln_lambda(P, 0, p13)
    assert abs(lnL - (p13.h / (2 * p13.T) - 2 * math.cos(1.3) / p13.T) - 1j * P) < 1e-12
    with pytest.raises(RatioGeqOne):
        eigenvalue_and_lengths(P, 0, P, p13)


def test_correlation_length(empty13, pp13, p13, suite13):
    rep = spectral_report(pp13[0], PP, ref=empty13[0])
    assert abs(1 / rep.xi - 2 * math.pi * p13.T / suite13.vF) < p13.T ** 2


def test_phase_asymmetric(empty13, p13, suite13):
    spec = ExcitationSpec(0, (1,), (0,))
    sol, _ = solve_quantisation(p13, spec, suite13)
    P = momentum_P(sol, spec)["P"]
    P0 = momentum_P(empty13[0])["P"]
    _, xi, phase = eigenvalue_and_lengths(P, 0, P0, p13)
    assert xi > 0 and abs(phase) > 1e-3
    assert phase == pytest.approx(math.remainder((1j * (P - P0)).imag, 2 * math.pi), abs=1e-14)


def test_pole_conflict(empty13, p13):
    z0 = 0.3 - 0.2j
    f = Functional(lambda z: np.log(z - z0), lambda z: 1 / (z - z0), (z0,), "bad")
    with pytest.raises(PoleConflict):
        dress_direct(f, empty13[0])


def test_cft_rejects_spin():
    with pytest.raises(ValueError):
        cft_spectrum_check([ExcitationSpec(1, (), (0,))], None, [0.05])


def test_small_scan(p13):
    specs = [ExcitationSpec(), PP, ExcitationSpec(1, (), (0,)), ExcitationSpec(-1, (0,), ())]
    entries = minimiser_scan(p13, specs)
    best = max(entries, key=lambda e: e.abs_ln_lambda)
    assert best.label == ExcitationSpec().label()


def test_report_outputs(tmp_path, empty13, pp13):
    rep = spectral_report(pp13[0], PP, ref=empty13[0])
    path = tmp_path / "r.csv"
    write_reports_csv(path, [rep])
    rows = list(csv.reader(open(path)))
    assert rows[0][0] == "spec" and len(rows) == 2
    rec = json.loads(reports_json([rep]))[0]
    assert rec["label"] == PP.label()
