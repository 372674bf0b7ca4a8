import csv
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from qtm_nlie.contours import (OutOfImage, adapt_contour, build_ref_contour, cut_image_curve,
                               eps_inverse, eps_inverse_many, image_excluded, export_curves_csv, trace_fermi_curve)
from qtm_nlie.core_types import GeometryDegenerate, validate_params
from qtm_nlie.integral_equations import dressed_suite
from qtm_nlie.special_functions import bare_energy

P = validate_params(J=1, zeta=1.3, h=2, T=0.05, M=4)
PFF = validate_params(J=1, zeta=math.pi / 2, h=2, T=0.05)


@pytest.fixture(scope="module")
def suite():
    return dressed_suite(P)


@pytest.fixture(scope="module")
def curve(suite):
    return trace_fermi_curve(suite)


def test_inverse_at_zero(suite):
    assert abs(eps_inverse("R", 0, suite) - suite.q) < 1e-12
    assert abs(eps_inverse("L", 0, suite) + suite.q) < 1e-12


def test_inverse_near_pole(suite):
    # the preimage of a large value approaches -i zeta/2 like 1/(z - tau)
    errs = []
    for z in (-40j, -80j, -160j):
        lam = eps_inverse("R", z, suite)
        pred = -0.65j - 2j * math.sin(1.3) / (z - suite.tau)
        errs.append(abs(lam - pred) * abs(z - suite.tau) ** 2)
    assert errs[2] <= errs[1] <= errs[0] < 1.0


def test_double_cover(suite):
    rng = np.random.default_rng(11)
    z = rng.uniform(-3, 3, 100) + 1j * rng.uniform(-3, 3, 100)
    zl = eps_inverse_many("L", z, suite)
    zr = eps_inverse_many("R", z, suite)
    assert np.max(np.abs(suite.eps(zl) - z)) < 1e-8
    assert np.max(np.abs(suite.eps(zr) - z)) < 1e-8
    assert np.min(np.abs(zl - zr)) > 1e-6
    assert np.all(zl.real < 0) and np.all(zr.real > 0)


def test_excluded_image(suite):
    z = complex(np.mean(cut_image_curve(suite)))
    assert image_excluded(z, suite) and not image_excluded(z + 100, suite)
    with pytest.raises(OutOfImage):
        eps_inverse("R", z, suite)


def test_trace_endpoints_and_monotone(suite, curve):
    assert abs(curve.left.points[0] + suite.q) < 1e-8
    assert abs(curve.right.points[-1] - suite.q) < 1e-8
    assert np.all(np.diff(curve.left.parameter) > 0)
    assert np.all(np.diff(curve.right.parameter) > 0)
    assert np.max(np.abs(np.real(suite.eps(curve.points)))) < 1e-8


def test_trace_free_fermion():
    s = dressed_suite(PFF)
    c = trace_fermi_curve(s, density=80)
    y = -math.pi / 8
    x = brentq(lambda x: bare_energy(x + 1j * y, PFF).real, 0.05, s.q)
    pts = c.right.points
    k = np.argmin(np.abs(pts.imag - y))
    assert abs(pts[k] - (x + 1j * y)) < 2e-2
    assert abs(eps_inverse("R", bare_energy(x + 1j * y, PFF), s) - (x + 1j * y)) < 1e-8


def test_delta_T():
    assert validate_params(J=1, zeta=1.3, h=2, T=0.1).delta_T == pytest.approx(0.6907755, abs=1e-7)


def test_reference_contour(suite, curve):
    rc = build_ref_contour(suite, P)
    c = rc.contour
    poly = c.polyline()
    assert abs(poly[0] - poly[-1]) < 1e-10 or c.winding(-0.65j) == 1
    assert c.winding(-0.65j) == 1
    inner = curve.points[1:-1]
    assert all(c.winding(z) == 1 for z in inner[::5])
    # all nodes keep the disk radius from the pole of the bare energy
    assert np.min(np.abs(c.lam + 0.65j)) >= 0.999 * P.c_d * P.T


def test_junction_angles_converge():
    res = []
    for T in (0.05, 0.025):
        p = P.with_(T=T)
        rc = build_ref_contour(dressed_suite(p), p)
        res.append(max(abs(rc.angles[k] - rc.predicted_angles[k]) for k in rc.angles))
    assert res[0] / res[1] >= 3.0


def test_reference_degenerate():
    p = validate_params(J=1, zeta=1.3, h=2, T=0.5)
    with pytest.raises(GeometryDegenerate):
        build_ref_contour(dressed_suite(p), p)


def test_adapt_free_fermion():
    s = dressed_suite(PFF)
    c = adapt_contour(s.eps, s.eps_d, s, PFF)
    assert abs(c.q_plus - s.q) < 1e-14 and abs(c.q_minus + s.q) < 1e-14


def test_adapt_fermi_roots_quadratic(empty13):
    sols = {}
    from qtm_nlie.nlie import fixed_point_solve
    for T in (0.1, 0.05):
        p = P.with_(T=T, M=3.0)
        s = dressed_suite(p)
        sol = fixed_point_solve(p, suite=s)
        sols[T] = (abs(sol.q_plus - s.q), abs(sol.q_minus + s.q))
        assert sol.u.d(sol.q_plus).real > 0 and -sol.u.d(sol.q_minus).real > 0
    assert max(sols[0.1]) / max(sols[0.05]) == pytest.approx(4.0, rel=0.25)
    assert max(sols[0.05]) < 0.02 * 0.05 ** 2


def test_export_csv(tmp_path, curve):
    path = tmp_path / "c.csv"
    export_curves_csv(path, {"L": (curve.left.points, curve.left.parameter)})
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["re", "im", "branch", "parameter"]
    assert len(rows) == len(curve.left.points) + 1
