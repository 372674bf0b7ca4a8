import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qtm_nlie.core_types import (NonPositive, OddTrotter, OutOfRegime, SignedMultiset,
                                 default_M, dist_ipi, ms_combine, repeated, validate_params)

coord = st.floats(-5, 5, allow_nan=False)
cpx = st.builds(complex, coord, coord)
# a small lattice keeps accidental merges meaningful
lattice = st.builds(lambda a, b: complex(a, b), st.integers(-3, 3), st.integers(-3, 3))
multiset = st.lists(st.tuples(lattice, st.integers(-3, 3)), max_size=8).map(SignedMultiset.from_pairs)


def test_sum_adds_multiplicities():
    x = 0.3 + 0.1j
    A = SignedMultiset.from_points([x])
    assert (A + A).entries == ((x, 2),)


@given(multiset)
def test_self_difference_empty(A):
    assert len(ms_combine(A, A, "difference")) == 0


def test_weighted_sum_repeated():
    assert repeated(2 + 1j, 3).weighted_sum(lambda t: t) == 6 + 3j


@given(multiset)
def test_no_zero_entries(A):
    assert all(m != 0 for _, m in A)


@given(multiset, multiset, multiset)
def test_sum_associative_commutative(A, B, C):
    assert ((A + B) + C).same_as(A + (B + C))
    assert (A + B).same_as(B + A)


@given(multiset, multiset)
def test_sum_then_difference(A, B):
    assert ((A + B) - B).same_as(A)


@given(multiset, multiset)
def test_cardinality_additive(A, B):
    assert (A + B).cardinality == A.cardinality + B.cardinality


def test_merge_tolerance_keeps_first():
    A = SignedMultiset.from_points([1.0, 1.0 + 1e-14])
    assert A.entries == ((1.0 + 0j, 2),)


@pytest.mark.parametrize("z,w,d", [(0, 1j * math.pi, 0.0), (0, 0.5j * math.pi, math.pi / 2),
                                   (1 + 3j * math.pi, 1, 0.0)])
def test_dist_ipi_examples(z, w, d):
    assert dist_ipi(z, w) == pytest.approx(d, abs=1e-14)


@given(cpx, cpx)
def test_dist_ipi_symmetric(z, w):
    assert dist_ipi(z, w) == pytest.approx(dist_ipi(w, z), abs=1e-12)


def test_dist_ipi_triangle():
    rng = np.random.default_rng(7)
    pts = rng.uniform(-4, 4, (10_000, 3)) + 1j * rng.uniform(-6, 6, (10_000, 3))
    worst = max(dist_ipi(a, c) - dist_ipi(a, b) - dist_ipi(b, c) for a, b, c in pts)
    assert worst < 1e-12


def test_valid_reference_point():
    p = validate_params(J=1, h=2, zeta=1.3, T=0.2)
    assert p.Delta == pytest.approx(math.cos(1.3))
    assert p.aleph == pytest.approx(-1j * math.sin(1.3) / 0.2)
    assert p.delta_T == pytest.approx(-3 * 0.2 * math.log(0.2))
    assert p.zeta_m == 1.3 and p.s2 == 1


def test_field_too_large():
    with pytest.raises(OutOfRegime):
        validate_params(J=1, h=8.1, zeta=math.pi / 2, T=0.1)


def test_zeta_out_of_regime():
    with pytest.raises(OutOfRegime):
        validate_params(J=1, h=2, zeta=2.0, T=0.1)


def test_non_positive():
    with pytest.raises(NonPositive):
        validate_params(J=1, h=2, zeta=1.3, T=0.0)
    with pytest.raises(NonPositive):
        validate_params(J=-1, h=2, zeta=1.3, T=0.1)


@pytest.mark.parametrize("N", [7, 0, -2, 3.5])
def test_odd_trotter(N):
    with pytest.raises(OddTrotter):
        validate_params(J=1, h=2, zeta=1.3, T=0.1, trotter=N)


def test_rational_zeta_warns():
    with pytest.warns(UserWarning):
        validate_params(J=1, h=2, zeta=math.pi / 3, T=0.1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        validate_params(J=1, h=2, zeta=math.pi / 2, T=0.1)


@given(st.floats(0.1, 1.5), st.floats(0.01, 0.9), st.sampled_from([None, 2, 16, 64]))
def test_validate_idempotent(zeta, T, N):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p = validate_params(J=1, h=1.0, zeta=zeta, T=T, trotter=N)
        assert validate_params(p) == p


def test_default_M():
    assert default_M(0) == 3 and default_M(4) == 5
