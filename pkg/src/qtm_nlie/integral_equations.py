"""Nystrom solvers for the linear integral equations on a real segment.

Every dressed function here solves ``f + K_[-q,q] f = rhs`` for some driving
term.  The segment is discretised by composite Gauss-Legendre panels and
off-grid values come from the Nystrom continuation
``f(l) = rhs(l) - sum_j w_j K(l - x_j) f_j`` which is the exact analytic
continuation of the discretised solution.  That continuation is also what the
curved-contour variants reduce to near the Fermi curve, so the ``*_c``
accessors are aliases (see the decisions ledger for the contour argument).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize

from .core_types import (ModelParams, NoBracket, PoleOnContour, SingularSystem,
                         TruncationTooSmall)
from .special_functions import (bare_energy, bare_energy_d, bare_momentum,
                                bare_momentum_d, kernel_K, kernel_K_d, theta,
                                trotter_driving)

DEFAULT_ORDER = 64
MAX_PANEL = 0.8
COND_MAX = 1e12


# ------------------------------------------------------------- quadrature

@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes and weights of a composite Gauss-Legendre rule on a polyline.

    ``panels`` lists the straight pieces ``(a, b)`` with orientation a -> b.
    Nodes never coincide with panel endpoints.
    """

    nodes: np.ndarray
    weights: np.ndarray
    panels: tuple = ()
    order: int = DEFAULT_ORDER

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def length(self) -> complex:
        return complex(sum(b - a for a, b in self.panels))


def gauss_panels(breaks, order: int = DEFAULT_ORDER) -> QuadratureGrid:
    """Composite rule on the polyline through the complex points ``breaks``."""
    t, w = np.polynomial.legendre.leggauss(order)
    nodes, weights, panels = [], [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        a, b = complex(a), complex(b)
        if a == b:
            continue
        half = 0.5 * (b - a)
        nodes.append(0.5 * (a + b) + half * t)
        weights.append(half * w)
        panels.append((a, b))
    if not nodes:
        return QuadratureGrid(np.zeros(0, complex), np.zeros(0, complex), (), order)
    return QuadratureGrid(np.concatenate(nodes), np.concatenate(weights), tuple(panels), order)


def segment_grid(Q: float, order: int = DEFAULT_ORDER, max_panel: float = MAX_PANEL) -> QuadratureGrid:
    """Symmetric grid on [-Q, Q] split at 0 and into panels no longer than ``max_panel``."""
    if Q <= 0:
        return gauss_panels([0.0], order)
    n = max(1, math.ceil(Q / max_panel))
    half = np.linspace(0.0, Q, n + 1)
    breaks = np.concatenate([-half[::-1], half[1:]])
    return gauss_panels(breaks, order)


def barycentric_eval(grid: QuadratureGrid, values: np.ndarray, lam) -> np.ndarray:
    """Per-panel polynomial interpolation of node samples (real segments only)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    out = np.empty(lam.shape, dtype=complex)
    n = grid.order
    t, _ = np.polynomial.legendre.leggauss(n)
    # barycentric weights for Legendre points
    bw = np.array([1.0 / np.prod(t[i] - np.delete(t, i)) for i in range(n)])
    bw /= np.max(np.abs(bw))
    for k, lv in enumerate(lam):
        # panel containing Re(lam), nearest if outside
        idx = 0
        for j, (a, b) in enumerate(grid.panels):
            if min(a.real, b.real) <= lv.real <= max(a.real, b.real):
                idx = j
                break
        else:
            idx = 0 if lv.real < grid.panels[0][0].real else len(grid.panels) - 1
        a, b = grid.panels[idx]
        s = (2 * lv - (a + b)) / (b - a)
        f = values[idx * n:(idx + 1) * n]
        d = s - t
        hit = np.abs(d) < 1e-15
        if np.any(hit):
            out[k] = f[np.argmax(hit)]
        else:
            c = bw / d
            out[k] = np.sum(c * f) / np.sum(c)
    return out


# ------------------------------------------------------------ linear solver

class SegmentOperator:
    """Factorised Nystrom matrix of ``id + K`` on a grid of real nodes."""

    def __init__(self, grid: QuadratureGrid, p: ModelParams):
        self.grid = grid
        self.p = p
        x = grid.nodes
        diff = x[:, None] - x[None, :]
        self.kmat = np.asarray(kernel_K(diff, p, check=False)) if len(x) else np.zeros((0, 0))
        n = len(x)
        self.A = np.eye(n) + self.kmat * grid.weights[None, :]
        if n:
            cond = np.linalg.cond(self.A)
            if not np.isfinite(cond) or cond > COND_MAX:
                raise SingularSystem(f"Nystrom matrix condition number {cond:.3e}")
            self.lu = scipy.linalg.lu_factor(self.A)
        else:
            self.lu = None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=complex)
        if self.lu is None:
            return rhs.copy()
        return scipy.linalg.lu_solve(self.lu, rhs)

    def continue_(self, lam, driving_values, sol: np.ndarray, kernel=None) -> np.ndarray:
        """``driving(lam) - sum_j w_j k(lam - x_j) sol_j`` with k = K by default."""
        lam = np.asarray(lam, dtype=complex)
        if len(self.grid) == 0:
            return np.asarray(driving_values, dtype=complex)
        kern = kernel if kernel is not None else (lambda z: kernel_K(z, self.p, check=False))
        kl = np.asarray(kern(lam.reshape(-1)[:, None] - self.grid.nodes[None, :]))
        corr = (kl * self.grid.weights[None, :]) @ sol
        return _sub(driving_values, corr, lam)

    def det(self) -> float:
        if self.lu is None:
            return 1.0
        return float(np.real(np.linalg.det(self.A)))


def _sub(drive, corr, lam):
    drive = np.asarray(drive, dtype=complex)
    shape = np.shape(lam) + corr.shape[1:]
    return drive.reshape(shape) - corr.reshape(shape)


def solve_fredholm(grid: QuadratureGrid, rhs, p: ModelParams, regularisation=None):
    """Solve ``f + int K(l - m) f(m) dm = rhs`` on ``grid``.

    ``rhs`` may be an array of node values or a callable.  Returns node values.
    The ``regularisation`` argument accepts ``None`` or ``"minus"``; the minus
    boundary value only affects evaluation points lying on the source contour
    and is realised by shifting them by ``-i eta`` (irrelevant on a real grid
    because the kernel is smooth there).
    """
    x = grid.nodes
    if len(x) > 1:
        d = x[:, None] - x[None, :]
        for c in (1j * p.zeta, -1j * p.zeta):
            if np.any(np.abs(d - c) < 1e-10):
                raise PoleOnContour("node pair at a kernel pole")
    if callable(rhs):
        pts = x - 1e-8j if regularisation == "minus" else x
        rhs = rhs(pts)
    op = SegmentOperator(grid, p)
    return op.solve(np.asarray(rhs, dtype=complex))


def fredholm_det_segment(p: ModelParams, Q: float, order: int = DEFAULT_ORDER) -> float:
    """Nystrom determinant of ``id + K`` on [-Q, Q]."""
    if Q <= 0 or p.is_free_fermion:
        return 1.0
    return SegmentOperator(segment_grid(Q, order), p).det()


# ------------------------------------------------------------- Fermi point

def _eps_at_endpoint(Q: float, p: ModelParams, order: int) -> float:
    if Q <= 0:
        return float(np.real(bare_energy(0.0, p)))
    grid = segment_grid(Q, order)
    op = SegmentOperator(grid, p)
    sol = op.solve(np.asarray(bare_energy(grid.nodes, p)))
    val = op.continue_(np.array([Q + 0j]), np.array([bare_energy(Q, p)]), sol)
    return float(np.real(val[0]))


def fermi_point(p: ModelParams, tol: float = 1e-13, order: int = DEFAULT_ORDER,
                Q_max: float = 20.0) -> float:
    """Positive root q of Q -> eps(Q | Q)."""
    if p.is_free_fermion:
        return 0.5 * math.acosh(4 * p.J / p.h)
    f = lambda Q: _eps_at_endpoint(Q, p, order)
    lo, flo = 0.0, f(0.0)
    if flo >= 0:
        raise NoBracket("eps(0|0) >= 0: field above the saturation value")
    hi = 0.25
    while hi <= Q_max:
        fhi = f(hi)
        if fhi > 0:
            break
        lo, flo = hi, fhi
        hi *= 2
    else:
        raise NoBracket(f"no sign change of eps(Q|Q) on [0, {Q_max}]")
    return scipy.optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)


# ----------------------------------------------------------- dressed suite

@dataclass
class DressedSuite:
    """Dressed energy, charge, phase, momentum and resolvent on [-q, q].

    All accessors take scalars or arrays of complex points and evaluate the
    Nystrom continuation.  Two-point functions ``phi`` and ``R`` return arrays
    of shape ``lam.shape + mu.shape``.
    """

    p: ModelParams
    q: float
    order: int = DEFAULT_ORDER
    grid: QuadratureGrid = field(init=False)
    op: SegmentOperator = field(init=False, repr=False)

    def __post_init__(self):
        self.grid = segment_grid(self.q, self.order)
        self.op = SegmentOperator(self.grid, self.p)
        x = self.grid.nodes
        self.eps_grid = self.op.solve(np.asarray(bare_energy(x, self.p)))
        self.Z_grid = self.op.solve(np.ones(len(x), dtype=complex))
        self.pd_grid = self.op.solve(np.asarray(bare_momentum_d(x, self.p)))
        self._kern = lambda z: kernel_K(z, self.p, check=False)
        self._kern_d = lambda z: kernel_K_d(z, self.p, 1)
        self._kern_dd = lambda z: kernel_K_d(z, self.p, 2)

    # -- helpers
    def _cont(self, lam, drive, sol, kernel=None):
        lam = np.asarray(lam, dtype=complex)
        out = self.op.continue_(lam, drive, sol, kernel)
        return out if np.ndim(lam) else complex(np.asarray(out).reshape(-1)[0])

    # -- energy
    def eps(self, lam):
        return self._cont(lam, bare_energy(lam, self.p), self.eps_grid)

    def eps_d(self, lam, order: int = 1):
        kern = self._kern_d if order == 1 else self._kern_dd
        return self._cont(lam, bare_energy_d(lam, self.p, order), self.eps_grid, kern)

    # -- charge
    def Z(self, lam):
        lam = np.asarray(lam, dtype=complex)
        return self._cont(lam, np.ones(lam.shape, dtype=complex), self.Z_grid)

    def Z_d(self, lam):
        lam = np.asarray(lam, dtype=complex)
        return self._cont(lam, np.zeros(lam.shape, dtype=complex), self.Z_grid, self._kern_d)

    # -- momentum
    def mom(self, lam):
        lam = np.asarray(lam, dtype=complex)
        th = lambda z: np.asarray(theta(z, self.p)) / (2 * math.pi)
        return self._cont(lam, bare_momentum(lam, self.p), self.pd_grid, th)

    def mom_d(self, lam, order: int = 1):
        if order == 1:
            return self._cont(lam, bare_momentum_d(lam, self.p, 1), self.pd_grid)
        return self._cont(lam, bare_momentum_d(lam, self.p, 2), self.pd_grid, self._kern_d)

    # -- two-point functions
    def _two_point(self, lam, mu, rhs_fn, drive_fn, kernel):
        lam = np.asarray(lam, dtype=complex)
        mu = np.asarray(mu, dtype=complex)
        m = mu.reshape(-1)
        x = self.grid.nodes
        sol = self.op.solve(rhs_fn(x[:, None] - m[None, :]))
        lam_f = lam.reshape(-1)
        drive = drive_fn(lam_f[:, None] - m[None, :])
        if len(x):
            kl = np.asarray(kernel(lam_f[:, None] - x[None, :])) * self.grid.weights[None, :]
            drive = drive - kl @ sol
        out = drive.reshape(lam.shape + mu.shape)
        return out if out.ndim else complex(out)

    def phi(self, lam, mu):
        """Dressed phase phi(lam, mu)."""
        th = lambda z: np.asarray(theta(z, self.p)) / (2 * math.pi)
        return self._two_point(lam, mu, th, th, self._kern)

    def phi_dlam(self, lam, mu):
        return self._two_point(lam, mu, lambda z: np.asarray(theta(z, self.p)) / (2 * math.pi),
                               lambda z: np.asarray(self._kern(z)), self._kern_d)

    def phi_dmu(self, lam, mu):
        """d phi / d mu = -R(lam, mu)."""
        r = self.R(lam, mu)
        return -np.asarray(r) if np.ndim(r) else -r

    def R(self, lam, mu):
        """Resolvent kernel of id + K on [-q, q]."""
        k = lambda z: np.asarray(self._kern(z))
        return self._two_point(lam, mu, k, k, self._kern)

    def R_dlam(self, lam, mu):
        k = lambda z: np.asarray(self._kern(z))
        return self._two_point(lam, mu, k, lambda z: np.asarray(self._kern_d(z)), self._kern_d)

    # curved-contour variants coincide with the continuations above
    eps_c = eps
    eps_c_d = eps_d
    Z_c = Z
    phi_c = phi
    mom_c = mom
    R_c = R

    # -- scalars
    @property
    def vF(self) -> float:
        return float(np.real(self.eps_d(self.q) / self.mom_d(self.q)))

    def eps_prime_fd(self) -> float:
        """Five-point finite difference of eps at q (independent derivative check)."""
        h = 1e-4 * max(self.q, 1e-3)
        q = self.q
        v = [np.real(self.eps(q + k * h)) for k in (-2, -1, 1, 2)]
        return float((v[0] - 8 * v[1] + 8 * v[2] - v[3]) / (12 * h))

    @property
    def tau(self) -> complex:
        x, w = self.grid.nodes, self.grid.weights
        corr = np.sum(w * self.eps_grid * np.asarray(self._kern(0.5j * self.p.zeta + x)))
        return complex(self.p.h - 2 * self.p.J * math.cos(self.p.zeta) - corr)

    def fredholm_det(self) -> float:
        return self.op.det()

    def summary(self) -> dict:
        return {"q": self.q, "vF": self.vF, "tau": self.tau, "det_segment": self.fredholm_det()}

    # -- accurate evaluation near the continuation cuts
    def eps_accurate(self, lam: complex) -> complex:
        """eps via adaptive quadrature (safe close to [-q, q] +- i zeta)."""
        lam = complex(lam)
        im = math.remainder(lam.imag, math.pi)
        lam = complex(lam.real, im)
        dist = min(abs(abs(im) - self.p.zeta), abs(abs(im) - (math.pi - self.p.zeta)))
        if dist > 0.15 or self.q == 0:
            return complex(self.eps(lam))
        f = lambda m: complex(kernel_K(lam - m, self.p, check=False)) * float(np.real(self.eps(m)))
        re = scipy.integrate.quad(lambda m: f(m).real, -self.q, self.q, limit=400, epsabs=1e-13)[0]
        ii = scipy.integrate.quad(lambda m: f(m).imag, -self.q, self.q, limit=400, epsabs=1e-13)[0]
        return complex(bare_energy(lam, self.p)) - complex(re, ii)


def dressed_suite(p: ModelParams, order: int = DEFAULT_ORDER, q: float | None = None) -> DressedSuite:
    if q is None:
        q = fermi_point(p, order=order)
    return DressedSuite(p=p, q=q, order=order)


# -------------------------------------------------- finite Trotter dressing

class TrotterDressed:
    """W_N: the dressing of the finite-Trotter driving term.

    Solved on the same segment as the infinite-Trotter functions; its
    continuation to the curved contour uses the same argument as eps_c.
    """

    def __init__(self, suite: DressedSuite, p: ModelParams):
        if p.trotter is None:
            raise ValueError("TrotterDressed needs a finite Trotter number")
        self.suite = suite
        self.p = p
        self.grid = suite.grid
        self.op = suite.op
        self.values = self.op.solve(np.asarray(trotter_driving(self.grid.nodes, p)))

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=complex)
        out = self.op.continue_(lam, trotter_driving(lam, self.p), self.values)
        return out if np.ndim(lam) else complex(np.asarray(out).reshape(-1)[0])

    def d(self, lam, order: int = 1):
        from .special_functions import trotter_driving_d
        lam = np.asarray(lam, dtype=complex)
        kern = (lambda z: kernel_K_d(z, self.p, 1)) if order == 1 else (lambda z: kernel_K_d(z, self.p, 2))
        out = self.op.continue_(lam, trotter_driving_d(lam, self.p, order), self.values, kern)
        return out if np.ndim(lam) else complex(np.asarray(out).reshape(-1)[0])


def trotter_dressed(p: ModelParams, suite: DressedSuite | None = None) -> TrotterDressed:
    if suite is None:
        suite = dressed_suite(p.with_(trotter=None))
    return TrotterDressed(suite, p)


# ------------------------------------------------- dual representation

def eps_infinity(lam, p: ModelParams):
    lam = np.asarray(lam, dtype=complex)
    z = p.zeta
    return p.h * math.pi / (2 * (math.pi - z)) - 2 * math.pi * p.J * math.sin(z) / (z * np.cosh(math.pi * lam / z))


def _kernel_alpha(x, alpha):
    return math.sin(2 * alpha) / (math.pi * (np.cosh(2 * x) - math.cos(2 * alpha)))


def _resolvent_integral(x, p: ModelParams, n: int = 4001, L: float = 40.0) -> np.ndarray:
    z = p.zeta
    mu = np.linspace(-L, L, n)
    h = mu[1] - mu[0]
    zt = math.pi * z / (2 * (math.pi - z))
    kv = _kernel_alpha(math.pi * mu / (math.pi - z), zt)
    res = np.empty(x.shape)
    for i in range(0, len(x), 512):
        chunk = x[i:i + 512]
        res[i:i + 512] = (1.0 / np.cosh(math.pi * (chunk[:, None] - mu[None, :]) / z)) @ kv * h
    return res * math.pi / (2 * z * (math.pi - z))


def resolvent_line(x, p: ModelParams, x_max: float = 30.0, step: float = 2.5e-3) -> np.ndarray:
    """Resolvent of id + K on the whole line at real arguments.

    The integral representation is tabulated once on |x| <= x_max and
    interpolated by a cubic spline (R is even and smooth on the real axis).
    """
    import scipy.interpolate
    x = np.abs(np.asarray(x, dtype=float))
    key = (p.zeta, x_max, step)
    spl = _RES_CACHE.get(key)
    if spl is None:
        grid = np.arange(0.0, x_max + step, step)
        spl = scipy.interpolate.CubicSpline(grid, _resolvent_integral(grid, p))
        _RES_CACHE[key] = spl
    return np.where(x <= x_max, spl(np.minimum(x, x_max)), 0.0)


_RES_CACHE: dict = {}


def dual_representation_check(suite: DressedSuite, cutoff: float = 12.0, order: int = 32,
                              tol: float = 1e-9) -> float:
    """Max deviation on [-q, q] between eps and its exterior-domain representation."""
    p, q = suite.p, suite.q
    if p.is_free_fermion:
        # K vanishes, so R does too and the exterior equation is eps = eps_inf = eps0
        # only when both sides degenerate; compare against the bare energy directly
        x = suite.grid.nodes
        return float(np.max(np.abs(suite.eps_grid - np.asarray(bare_energy(x, p)))))
    tail = abs(p.h) * float(resolvent_line(np.array([cutoff - q]), p)[0]) * p.zeta / math.pi
    if tail > tol:
        raise TruncationTooSmall(f"tail estimate {tail:.2e} exceeds {tol:.1e}")
    n = max(1, math.ceil((cutoff - q) / 1.0))
    right = gauss_panels(np.linspace(q, cutoff, n + 1), order)
    nodes = np.concatenate([-right.nodes[::-1].real, right.nodes.real])
    weights = np.concatenate([right.weights[::-1].real, right.weights.real])
    Rm = resolvent_line(nodes[:, None] - nodes[None, :], p)
    A = np.eye(len(nodes)) - Rm * weights[None, :]
    ext = np.linalg.solve(A, np.real(eps_infinity(nodes, p)))
    x = suite.grid.nodes.real
    inner = np.real(eps_infinity(x, p)) + (resolvent_line(x[:, None] - nodes[None, :], p) * weights[None, :]) @ ext
    return float(np.max(np.abs(inner - suite.eps_grid.real)))


# ------------------------------------------- positivity domain and strings

def in_D_eps(lam, suite: DressedSuite, tol: float = 1e-9):
    """Membership in D_eps + i pi Z: returns (inside, boundary_flag) arrays."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    im = np.remainder(lam.imag + math.pi / 2, math.pi) - math.pi / 2
    red = lam.real + 1j * im
    strip = np.abs(im) <= suite.p.zeta / 2
    re = np.full(lam.shape, np.inf)
    if np.any(strip):
        re[strip] = np.real(np.asarray(suite.eps(red[strip])))
    inside = strip & (re < 0)
    boundary = strip & (np.abs(re) < tol)
    return inside, boundary


def in_D_down(lam, suite: DressedSuite):
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    im = np.remainder(lam.imag + math.pi / 2, math.pi) - math.pi / 2
    inside, _ = in_D_eps(lam, suite)
    return inside & (im <= 0)


def _eps_ind(lam: complex, suite: DressedSuite) -> complex:
    if bool(in_D_down(np.array([lam]), suite)[0]):
        return suite.eps_accurate(lam)
    return 0j


def eps_c_full(lam: complex, suite: DressedSuite) -> complex:
    """eps_c anywhere: segment continuation plus residue corrections."""
    z = 1j * suite.p.zeta
    return (suite.eps_accurate(lam) + _eps_ind(lam - z, suite) - _eps_ind(lam + z, suite))


def eps_c_string(lam: complex, k: int, suite: DressedSuite) -> complex:
    """The k-string dressed energy sum eps_{c;k}^(-)."""
    z = 1j * suite.p.zeta
    base = sum(suite.eps_accurate(lam - r * z) for r in range(k))
    return (base + _eps_ind(lam - k * z, suite) + _eps_ind(lam - (k - 1) * z, suite)
            - _eps_ind(lam + z, suite) - _eps_ind(lam, suite))
