"""Closed-form bare quantities of the XXZ quantum transfer matrix problem.

All functions accept scalars or numpy arrays of complex spectral parameters.
Products of hyperbolic sines are rewritten through
``sinh(x+ia) sinh(x-ia) = (cosh 2x - cos 2a)/2`` which keeps the free-fermion
point ``zeta = pi/2`` exactly degenerate (the kernel carries a literal
``sin 2 zeta`` factor that is set to zero there).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_types import (BranchPointHit, CutHit, ModelParams, PoleHit,
                         dist_ipi_array)

POLE_TOL = 1e-10
CUT_ETA = 1e-9


def _arr(lam):
    return np.asarray(lam, dtype=complex)


def _out(x, like):
    return complex(x) if np.ndim(like) == 0 else x


def _check_far(lam, centers, exc, what):
    for c in centers:
        if np.any(dist_ipi_array(lam, c) < POLE_TOL):
            raise exc(f"{what}: argument within {POLE_TOL} of {c}")


def _sin2z(p: ModelParams) -> float:
    return 0.0 if p.is_free_fermion else math.sin(2 * p.zeta)


# ------------------------------------------------------------------ energy

def bare_energy(lam, p: ModelParams):
    """eps0 = h - 2 J sin^2(z) / (sinh(l + i z/2) sinh(l - i z/2))."""
    x = _arr(lam)
    _check_far(x, (0.5j * p.zeta, -0.5j * p.zeta), PoleHit, "bare energy")
    den = np.cosh(2 * x) - math.cos(p.zeta)
    return _out(p.h - 4 * p.J * math.sin(p.zeta) ** 2 / den, lam)


def bare_energy_d(lam, p: ModelParams, order: int = 1):
    """First or second derivative of the bare energy."""
    x = _arr(lam)
    c = np.cosh(2 * x) - math.cos(p.zeta)
    s = np.sinh(2 * x)
    a = 8 * p.J * math.sin(p.zeta) ** 2
    if order == 1:
        r = a * s / c ** 2
    elif order == 2:
        r = a * (2 * np.cosh(2 * x) / c ** 2 - 4 * s ** 2 / c ** 3)
    else:
        raise ValueError("order must be 1 or 2")
    return _out(r, lam)


# ------------------------------------------------------------- momentum

def bare_momentum(lam, p: ModelParams):
    """p0 = i ln( sinh(i z/2 + l) / sinh(i z/2 - l) ), principal branch."""
    x = _arr(lam)
    _check_far(x, (0.5j * p.zeta, -0.5j * p.zeta), BranchPointHit, "bare momentum")
    a = 0.5j * p.zeta
    return _out(1j * np.log(np.sinh(a + x) / np.sinh(a - x)), lam)


def bare_momentum_d(lam, p: ModelParams, order: int = 1):
    """p0' = sin z / (sinh(l + i z/2) sinh(l - i z/2)) and its derivative."""
    x = _arr(lam)
    c = np.cosh(2 * x) - math.cos(p.zeta)
    if order == 1:
        r = 2 * math.sin(p.zeta) / c
    elif order == 2:
        r = -4 * math.sin(p.zeta) * np.sinh(2 * x) / c ** 2
    else:
        raise ValueError("order must be 1 or 2")
    return _out(r, lam)


# ----------------------------------------------------------------- kernel

def kernel_K(lam, p: ModelParams, check: bool = True):
    """K = sin(2z) / (2 pi sinh(l - i z) sinh(l + i z))."""
    x = _arr(lam)
    if check:
        _check_far(x, (1j * p.zeta, -1j * p.zeta), PoleHit, "kernel")
    s = _sin2z(p)
    if s == 0.0:
        return _out(np.zeros_like(x), lam)
    return _out(s / (math.pi * (np.cosh(2 * x) - math.cos(2 * p.zeta))), lam)


def kernel_K_d(lam, p: ModelParams, order: int = 1):
    x = _arr(lam)
    s = _sin2z(p)
    if s == 0.0:
        return _out(np.zeros_like(x), lam)
    c = np.cosh(2 * x) - math.cos(2 * p.zeta)
    sh = np.sinh(2 * x)
    if order == 1:
        r = -2 * s * sh / (math.pi * c ** 2)
    elif order == 2:
        r = s / math.pi * (-4 * np.cosh(2 * x) / c ** 2 + 8 * sh ** 2 / c ** 3)
    else:
        raise ValueError("order must be 1 or 2")
    return _out(r, lam)


# ------------------------------------------------------------------ phase

@dataclass(frozen=True)
class BranchedFunctionValue:
    value: complex
    on_cut: bool


def _reduce_strip(x):
    """Shift by multiples of i pi into -pi/2 < Im <= pi/2."""
    im = x.imag
    k = np.floor((im + np.pi / 2) / np.pi)
    y = x - 1j * np.pi * k
    return y


def theta_on_cut(lam, p: ModelParams):
    x = _reduce_strip(_arr(lam))
    zm = p.zeta_m
    return (x.real > 0) & (np.abs(np.abs(x.imag) - zm) < POLE_TOL)


def theta(lam, p: ModelParams):
    """Bare phase with its two-case branch structure; + boundary value on cuts."""
    x = _reduce_strip(_arr(lam))
    cut = theta_on_cut(x, p)
    x = np.where(cut, x + 1j * CUT_ETA, x)
    z = 1j * p.zeta
    near = np.abs(x.imag) < p.zeta_m
    outer = -np.pi * p.s2 + 1j * np.log(np.sinh(z + x) / np.sinh(x - z))
    if p.is_free_fermion:
        # the ratio inside the logarithm is identically one in the open strip
        return _out(np.where(near, 0j, outer), lam)
    inner = 1j * np.log(np.sinh(z + x) / np.sinh(z - x))
    return _out(np.where(near, inner, outer), lam)


def bare_phase(lam: complex, p: ModelParams) -> BranchedFunctionValue:
    """Scalar bare phase with a flag telling whether the cut regularisation applied."""
    cut = bool(theta_on_cut(np.array([lam]), p)[0])
    return BranchedFunctionValue(value=complex(theta(lam, p)), on_cut=cut)


# ---------------------------------------------------------- Trotter driving

def _log1p(w):
    """Principal ln(1 + w), accurate for small complex w."""
    small = np.abs(w) < 1e-3
    series = np.zeros_like(w)
    term = np.ones_like(w)
    for k in range(1, 10):
        term = term * w
        series = series + ((-1) ** (k + 1)) * term / k
    return np.where(small, series, np.log(1 + w))


def trotter_w(lam, p: ModelParams):
    """The finite-Trotter function w_N with its logarithm cuts."""
    if p.trotter is None:
        raise ValueError("trotter_w needs a finite Trotter number")
    x = _arr(lam)
    N = p.trotter
    b = p.aleph / N
    hz = 0.5j * p.zeta
    for c in (b - hz, -b - hz, b + hz, -b + hz):
        if np.any(dist_ipi_array(x, c) < POLE_TOL):
            raise CutHit("w_N evaluated at a logarithmic branch point")
    # ratios written as 1 + w with the differences of sinh taken in closed form
    w1 = -2 * np.cosh(x + hz) * np.sinh(b) / np.sinh(x + b + hz)
    w2 = 2 * np.cosh(x - hz) * np.sinh(b) / np.sinh(x - b - hz)
    return _out(N * _log1p(w1) + N * _log1p(w2), lam)


def trotter_driving(lam, p: ModelParams):
    """h - T w_N(l); tends to the bare energy as N grows."""
    return _out(p.h - p.T * _arr(trotter_w(lam, p)), lam)


def trotter_driving_d(lam, p: ModelParams, order: int = 1):
    x = _arr(lam)
    N = p.trotter
    b = p.aleph / N
    hz = 0.5j * p.zeta
    args = ((x - b + hz, 1), (x + b + hz, -1), (x + b - hz, 1), (x - b - hz, -1))
    if order == 1:
        dw = sum(s / np.tanh(a) for a, s in args)
    elif order == 2:
        dw = sum(-s / np.sinh(a) ** 2 for a, s in args)
    else:
        raise ValueError("order must be 1 or 2")
    return _out(-p.T * N * dw, lam)


# ------------------------------------------------------------ string sums

def _coth(x):
    return 1.0 / np.tanh(x)


def string_quantities(lam, k: int, p: ModelParams):
    """Closed forms of the k-string kernel and bare energy sums.

    Returns ``(K_k, eps0_k)`` with ``K_k(l) = sum_r K-type telescoped coth
    combination`` and ``eps0_k(l) = sum_{r<k} eps0(l - i r z)``.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    x = _arr(lam)
    z = p.zeta
    sing = [1j * k * z, 1j * (k - 1) * z, -1j * z, 0.0, -0.5j * z, -1j * (0.5 - k) * z]
    _check_far(x, sing[:4] if k > 1 else sing[:1] + sing[2:3], PoleHit, "string kernel")
    _check_far(x, sing[4:], PoleHit, "string energy")
    if k == 1:
        Kk = np.asarray(kernel_K(x, p, check=False))
    else:
        Kk = (_coth(x - 1j * k * z) + _coth(x - 1j * (k - 1) * z)
              - _coth(x + 1j * z) - _coth(x)) / (2j * math.pi)
    ek = k * p.h - 2j * p.J * math.sin(z) * (_coth(x + 0.5j * z) - _coth(x + 1j * (0.5 - k) * z))
    return _out(Kk, lam), _out(ek, lam)
