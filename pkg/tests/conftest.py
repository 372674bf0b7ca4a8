import math
import sys

import pytest
from hypothesis import settings

from qtm_nlie.core_types import validate_params
from qtm_nlie.integral_equations import dressed_suite

settings.register_profile("qtm", deadline=None, max_examples=40)
settings.load_profile("qtm")


@pytest.fixture(scope="session")
def p13():
    return validate_params(J=1.0, zeta=1.3, h=2.0, T=0.05)


@pytest.fixture(scope="session")
def pff():
    return validate_params(J=1.0, zeta=math.pi / 2, h=2.0, T=0.1)


@pytest.fixture(scope="session")
def suite13(p13):
    return dressed_suite(p13)


@pytest.fixture(scope="session")
def suiteff(pff):
    return dressed_suite(pff)


@pytest.fixture(scope="session")
def empty13(p13, suite13):
    from qtm_nlie.excitations import ExcitationSpec, solve_quantisation
    return solve_quantisation(p13, ExcitationSpec(), suite13)


@pytest.fixture(scope="session")
def pp13(p13, suite13):
    from qtm_nlie.excitations import ExcitationSpec, solve_quantisation
    return solve_quantisation(p13, ExcitationSpec(0, (0,), (0,)), suite13)


@pytest.fixture(scope="session")
def trotter16():
    from qtm_nlie.excitations import ExcitationSpec, solve_quantisation
    p = validate_params(J=1.0, zeta=1.3, h=2.0, T=0.5, trotter=16)
    sol, _ = solve_quantisation(p, ExcitationSpec())
    return sol


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[k]
        terminalreporter.write_line(mod.format_line(k, ok, detail))
