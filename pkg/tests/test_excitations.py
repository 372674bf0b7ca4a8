import csv
import math

import numpy as np
import pytest

from qtm_nlie.bethe_check import fit_disk
from qtm_nlie.contours import eps_inverse
from qtm_nlie.core_types import validate_params
from qtm_nlie.excitations import (ExcitationSpec, check_repulsion, classify_points, classify_roots,
                                  far_integer, root_lowT_expansion, solve_quantisation,
                                  trotter_root_convergence)
from qtm_nlie.integral_equations import dressed_suite
from qtm_nlie.special_functions import trotter_driving, trotter_driving_d

PP = ExcitationSpec(0, (0,), (0,))


def test_spec_bookkeeping():
    spec = ExcitationSpec(1, (0,), (0, 2), (), ())
    assert spec.zero_monodromy and spec.is_eigenstate_config
    assert spec.ell("R") == -1 and spec.n_roots == 3
    assert ExcitationSpec.from_dict(spec.to_dict()) == spec
    assert ExcitationSpec(0, (0, 0), (0, 1)).degenerate


def test_free_fermion_roots(pff, suiteff):
    _, rs = solve_quantisation(pff, PP, suiteff)
    T = pff.T
    y = eps_inverse("R", 2j * math.pi * T * 0.5, suiteff)
    x = eps_inverse("R", -2j * math.pi * T * 0.5, suiteff)
    assert abs(rs.particles[0] - y) < 1e-12 and abs(rs.holes[0] - x) < 1e-12
    assert np.max(rs.residuals) < 1e-12
    assert np.max(np.abs(rs.predictions[0] - rs.roots)) < 1e-12


@pytest.mark.parametrize("spec", [PP, ExcitationSpec(1, (), (0,)), ExcitationSpec(0, (), (1,), (0,), ())])
def test_roots_hug_fermi_curve(p13, spec):
    p = p13.with_(T=0.2)
    sol, rs = solve_quantisation(p, spec)
    T = p.T
    assert rs.report.max_re_eps <= 2.0 * T * abs(math.log(T))
    assert np.max(rs.residuals) < 1e-10 and rs.jacobian_cond < 1e8
    for tg, r in zip(rs.targets, rs.roots):
        assert tg.upsilon * r.real > 0


def test_degenerate_integers(p13, suite13):
    spec = ExcitationSpec(0, (0, 0), (0, 1))
    with pytest.warns(UserWarning):
        _, rs = solve_quantisation(p13, spec, suite13)
    assert rs.degenerate
    y = rs.particles
    assert abs(y[0] - y[1]) < 1e-8


def test_near_fermi_prediction(p13):
    # fixed integers: y0 - q is 2 pi i T (n + 1/2) / eps'(q) up to O(T^2)
    res = []
    for T in (0.05, 0.025):
        s = dressed_suite(p13.with_(T=T))
        y0 = root_lowT_expansion(ExcitationSpec(0, (1,), (1,)), 0, s, T)
        lead = s.q + 2j * math.pi * T * 1.5 / s.eps_d(s.q)
        res.append(abs(y0[0] - lead) / T ** 2)
        assert abs(y0[0] - s.q) < 40 * T
    assert res[1] < 1.5 * res[0]


def test_order_one_ratio(p13):
    errs = []
    for T in (0.1, 0.05):
        n = lambda level: far_integer(level, T)
        spec = ExcitationSpec(0, (n(1.0),), (n(0.5),))
        _, rs = solve_quantisation(p13.with_(T=T), spec)
        errs.append(np.max(np.abs(rs.roots - rs.predictions[1])))
    assert 2.5 <= errs[0] / errs[1] <= 5.5


def test_classification_eigenstates(pp13):
    sol, rs = pp13
    rep = classify_roots(rs, sol, sol.p)
    assert rep.ok and rep.singular_count == 0 and rep.string_count == 0
    dmin, bound = check_repulsion(rs, sol)
    assert dmin >= 0.5 * bound


def test_synthetic_string(p13, suite13):
    y = 0.5 + 0.1j
    rep = classify_points([y, y - 1.3j + 1e-12], [], p13, suite13)
    assert rep.string_count >= 1


def test_injectivity(p13, suite13):
    specs = [PP, ExcitationSpec(0, (1,), (0,)), ExcitationSpec(0, (0,), (1,)), ExcitationSpec(0, (), (), (0,), (0,))]
    roots = [solve_quantisation(p13, s, suite13)[1] for s in specs]
    for i in range(len(specs)):
        for j in range(i + 1, len(specs)):
            a = np.sort_complex(roots[i].roots)
            b = np.sort_complex(roots[j].roots)
            assert np.max(np.abs(a - b)) > 1e-6


def test_free_fermion_trotter_slope(pff):
    # disk widened so that the smallest N keeps its branch points inside
    p = fit_disk(pff.with_(T=0.2, trotter=32)).with_(trotter=None)
    s = dressed_suite(p)
    Ns = [32, 64, 128]
    rep = trotter_root_convergence(p, PP, Ns, s)
    assert rep.root_slope == pytest.approx(-2.0, abs=0.15)
    # scalar Newton on the bare finite-Trotter driving term is exact here
    for N in Ns:
        pN = p.with_(trotter=N)
        _, rs = solve_quantisation(pN, PP, s)
        for tg, r in zip(rs.targets, rs.roots):
            x = eps_inverse("R", tg.value(p.T), s)
            for _ in range(40):
                x -= (trotter_driving(x, pN) - tg.value(p.T)) / trotter_driving_d(x, pN)
            assert abs(x - r) < 1e-12


def test_huge_trotter_matches_limit(p13):
    p = p13.with_(T=0.2)
    s = dressed_suite(p)
    _, inf = solve_quantisation(p, PP, s)
    _, big = solve_quantisation(p.with_(trotter=2 ** 20), PP, s)
    assert np.max(np.abs(inf.roots - big.roots)) < 1e-8


def test_rootset_csv(tmp_path, pp13):
    _, rs = pp13
    path = tmp_path / "roots.csv"
    rs.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0][:6] == ["id", "side", "kind", "n", "re", "im"]
    assert len(rows) == 3
