"""Fixed-point solution of the transformed non-linear integral equation.

The auxiliary function is written as

    u(l) = D(l) + T u1(l | X) - sum_m R(l, nu_m) c_m,

where D is the dressed energy (infinite Trotter number) or the dressed
finite-Trotter driving term, u1 carries the spin and the particle/hole roots,
and the last sum discretises the segment integrals between the Fermi points
of u and +-q together with the contour integral of ln(1 + exp(-|u|/T)).
Every piece is a finite sum of kernel values, so u, u' are cheap to evaluate
anywhere off the cuts of the kernel.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.special

from .contours import Contour, ContourSpec, adapt_contour, eps_inverse_many, newton_invert
from .core_types import (HypothesisViolated, MaxIterations, ModelParams, NoConvergence,
                         NotContractive, OutOfDomain, SignedMultiset, UndecidableRegion)
from .integral_equations import DressedSuite, TrotterDressed
from .special_functions import (bare_energy, bare_energy_d, kernel_K, kernel_K_d, theta,
                                trotter_driving, trotter_driving_d)

DEFAULT_TOL = 1e-10
MAX_ITER = 60
CHUNK = 1500


# ------------------------------------------------------------ root targets

@dataclass(frozen=True)
class RootTarget:
    """Quantisation target of one particle or hole root.

    A particle on side R solves u = 2 pi i T (n + 1/2); the sign flips for a
    hole and again on side L.
    """

    kind: str       # "particle" | "hole"
    side: str       # "R" | "L"
    n: int

    def __post_init__(self):
        if self.kind not in ("particle", "hole") or self.side not in ("L", "R") or self.n < 0:
            raise ValueError(f"bad root target {self}")

    @property
    def mult(self) -> int:
        return 1 if self.kind == "particle" else -1

    @property
    def upsilon(self) -> int:
        return 1 if self.side == "R" else -1

    def value(self, T: float) -> complex:
        return self.mult * self.upsilon * 2j * math.pi * T * (self.n + 0.5)


def _targets_multiset(targets, roots) -> SignedMultiset:
    out = SignedMultiset()
    for tg, r in zip(targets, roots):
        out = out.add(complex(r), tg.mult)
    return out


# ------------------------------------------------------------ expansion terms

def _in_domain(lam, pts, p: ModelParams):
    lam = np.asarray(lam, dtype=complex)
    if np.any(np.abs(lam.imag) >= p.zeta_m):
        raise OutOfDomain("spectral parameter outside the strip |Im| < zeta_m")
    for y in pts:
        if np.any(np.abs((lam - y).imag) >= p.zeta_m):
            raise OutOfDomain(f"lam - {y} crosses the cut of the dressed phase")


def u1_eval(lam, X: SignedMultiset, s: int, suite: DressedSuite):
    """-i pi s Z(l) - 2 pi i sum_{y in X} phi(l, y), multiplicities included."""
    _in_domain(lam, X.points, suite.p)
    lam_a = np.asarray(lam, dtype=complex)
    out = -1j * math.pi * s * np.asarray(suite.Z(lam_a), dtype=complex)
    if len(X):
        ph = np.asarray(suite.phi(lam_a, X.points))
        out = out - 2j * math.pi * (ph @ X.multiplicities.astype(float))
    return complex(out) if np.ndim(lam) == 0 else out


def u1_eval_d(lam, X: SignedMultiset, s: int, suite: DressedSuite):
    lam_a = np.asarray(lam, dtype=complex)
    out = -1j * math.pi * s * np.asarray(suite.Z_d(lam_a), dtype=complex)
    if len(X):
        ph = np.asarray(suite.phi_dlam(lam_a, X.points))
        out = out - 2j * math.pi * (ph @ X.multiplicities.astype(float))
    return complex(out) if np.ndim(lam) == 0 else out


def u2_eval(lam, X: SignedMultiset, s: int, suite: DressedSuite):
    """sum_sigma sigma R(l, sigma q) / (2 eps'(sigma q)) {u1(sigma q)^2 + pi^2/3}."""
    _in_domain(lam, X.points, suite.p)
    lam_a = np.asarray(lam, dtype=complex)
    q = suite.q
    out = np.zeros(lam_a.shape, dtype=complex)
    for sig in (1, -1):
        u1q = u1_eval(sig * q + 0j, X, s, suite)
        ed = complex(suite.eps_d(sig * q + 0j))
        out = out + sig * np.asarray(suite.R(lam_a, sig * q + 0j)) / (2 * ed) * (u1q ** 2 + math.pi ** 2 / 3)
    return complex(out) if np.ndim(lam) == 0 else out


# ------------------------------------------------------------ Sommerfeld

def sommerfeld_integral(g, T: float, delta: float) -> float:
    """int_{-delta}^{delta} g(t) ln(1 + exp(-|t|/T)) dt by adaptive quadrature."""
    f = lambda t: g(t) * math.log1p(math.exp(-abs(t) / T))
    pts = [-delta] + [k * T for k in (-8, -2, 0, 2, 8) if abs(k * T) < delta] + [delta]
    pts = sorted(set(pts))
    return sum(scipy.integrate.quad(f, a, b, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
               for a, b in zip(pts[:-1], pts[1:]))


def sommerfeld_prediction(g0: float, g2: float, T: float) -> float:
    """T pi^2/6 g(0) + 2 T^3 (1 - 2^-3) zeta(4) g''(0)."""
    return T * math.pi ** 2 / 6 * g0 + 2 * T ** 3 * (1 - 2.0 ** -3) * scipy.special.zeta(4) * g2


# ------------------------------------------------------------ the function u

class NlieContext:
    """Static ingredients shared by all iterates: suite, driving term, grid."""

    def __init__(self, suite: DressedSuite, p: ModelParams, spec: ContourSpec | None = None):
        self.suite, self.p = suite, p
        self.spec = spec or ContourSpec()
        self.grid = suite.grid
        self.op = suite.op
        self.T = p.T
        if p.trotter is None:
            self.D0 = lambda z: bare_energy(z, p)
            self.D0d = lambda z: bare_energy_d(z, p, 1)
            self.D_grid = suite.eps_grid
        else:
            self.D0 = lambda z: trotter_driving(z, p)
            self.D0d = lambda z: trotter_driving_d(z, p, 1)
            self.D_grid = TrotterDressed(suite, p).values

    def K(self, z):
        return np.asarray(kernel_K(z, self.p, check=False))

    def Kd(self, z):
        return np.asarray(kernel_K_d(z, self.p, 1))

    def kernel_outer(self, lam, nodes, deriv: bool = False):
        """K(l_i - nu_j) (or K') through exponentials instead of cosh of differences."""
        s2 = 0.0 if self.p.is_free_fermion else math.sin(2 * self.p.zeta)
        P = np.exp(2 * lam)[:, None] * np.exp(-2 * nodes)[None, :]
        Pi = 1.0 / P
        den = 0.5 * (P + Pi) - math.cos(2 * self.p.zeta)
        if not deriv:
            return s2 / (math.pi * den)
        return -s2 * (P - Pi) / (math.pi * den * den)


class AuxFunction:
    """u(l) = D(l) + T u1(l | roots) - sum_m R(l, nu_m) coef_m (+ optional extra term)."""

    def __init__(self, ctx: NlieContext, s: int, roots, mult, nu=None, coef=None, extra=None):
        self.ctx = ctx
        self.s = int(s)
        self.roots = np.asarray(roots, dtype=complex).reshape(-1)
        self.mult = np.asarray(mult, dtype=float).reshape(-1)
        self.nu = np.zeros(0, complex) if nu is None else np.asarray(nu, dtype=complex)
        self.coef = np.zeros(0, complex) if coef is None else np.asarray(coef, dtype=complex)
        self.extra = extra
        x = ctx.grid.nodes
        T = ctx.T
        u10 = self._u10(x)
        b = ctx.op.solve(ctx.K(x[:, None] - self.nu[None, :]) @ self.coef) if len(self.nu) else 0.0
        self.gamma = ctx.D_grid + ctx.op.solve(T * u10) - b

    def with_roots(self, roots) -> "AuxFunction":
        return AuxFunction(self.ctx, self.s, roots, self.mult, self.nu, self.coef, self.extra)

    def _u10(self, lam):
        out = np.full(lam.shape, -1j * math.pi * self.s, dtype=complex)
        for y, m in zip(self.roots, self.mult):
            out = out - 1j * m * np.asarray(theta(lam - y, self.ctx.p))
        return out

    def _u10_d(self, lam):
        out = np.zeros(lam.shape, dtype=complex)
        for y, m in zip(self.roots, self.mult):
            out = out - 2j * math.pi * m * self.ctx.K(lam - y)
        return out

    def _eval(self, lam, deriv: bool):
        ctx = self.ctx
        lam = np.asarray(lam, dtype=complex)
        flat = lam.reshape(-1)
        out = np.empty(flat.shape, dtype=complex)
        x, w = ctx.grid.nodes, ctx.grid.weights
        for a in range(0, len(flat), CHUNK):
            l = flat[a:a + CHUNK]
            if deriv:
                v = np.asarray(ctx.D0d(l)) + ctx.T * self._u10_d(l)
            else:
                v = np.asarray(ctx.D0(l)) + ctx.T * self._u10(l)
            if len(self.nu):
                v = v - ctx.kernel_outer(l, self.nu, deriv) @ self.coef
            v = v - (ctx.kernel_outer(l, x, deriv) * w[None, :]) @ self.gamma
            if self.extra is not None:
                v = v + np.asarray(self.extra[1 if deriv else 0](l))
            out[a:a + CHUNK] = v
        out = out.reshape(lam.shape)
        return complex(out) if out.ndim == 0 else out

    def __call__(self, lam):
        return self._eval(lam, False)

    def d(self, lam):
        return self._eval(lam, True)

    def remainder(self, lam):
        """The part -sum R c, i.e. u - D - T u1."""
        ctx = self.ctx
        lam = np.asarray(lam, dtype=complex).reshape(-1)
        if not len(self.nu):
            return np.zeros(lam.shape, dtype=complex)
        x, w = ctx.grid.nodes, ctx.grid.weights
        b = ctx.op.solve(ctx.K(x[:, None] - self.nu[None, :]) @ self.coef)
        return -(ctx.K(lam[:, None] - self.nu[None, :]) @ self.coef) + (ctx.K(lam[:, None] - x[None, :]) * w) @ b


def log_term(t, T: float) -> np.ndarray:
    """ln(1 + exp(-|t|/T)) with |t| = t sgn(Re t), evaluated without overflow."""
    t = np.asarray(t, dtype=complex)
    a = t * np.where(t.real >= 0, 1.0, -1.0) / T
    out = np.zeros(t.shape, dtype=complex)
    small = a.real < 700
    out[small] = np.log1p(np.exp(-a[small]))
    return out


# ------------------------------------------------------------ root system

def solve_roots(U: AuxFunction, targets, seeds, tol: float = 1e-13, maxit: int = 50) -> np.ndarray:
    """Coupled Newton for U(x_a | X) = target_a where u1 depends on all roots.

    U's own roots serve as the reference: the equations read
    U(x_a) + T [u1(x_a|X) - u1(x_a|X_ref)] = target_a.
    """
    n = len(targets)
    if n == 0:
        return np.zeros(0, dtype=complex)
    ctx = U.ctx
    T = ctx.T
    tv = np.array([tg.value(T) for tg in targets])
    mult = np.array([tg.mult for tg in targets], dtype=float)
    X = np.asarray(seeds, dtype=complex).copy()
    center = -0.5j * ctx.p.zeta
    for _ in range(maxit):
        V = U.with_roots(X)
        F = np.asarray(V(X)) - tv
        J = np.diag(np.asarray(V.d(X)))
        # d/dy u1(l | X) = 2 pi i m_y R(l, y): only the dressed part depends on y
        Rm = np.asarray(ctx.suite.R(X, X))
        J = J + T * 2j * math.pi * Rm * mult[None, :]
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("singular Jacobian in the root system") from exc
        cap = 0.25 * np.abs(X - center)
        big = np.abs(step) > cap
        step[big] *= cap[big] / np.abs(step[big])
        X = X - step
        if np.max(np.abs(step)) < tol * (1 + np.max(np.abs(X))) or np.max(np.abs(F)) < 1e-3 * tol:
            break
    else:
        raise NoConvergence("root system Newton did not converge")
    return X


def seed_roots(targets, suite: DressedSuite, T: float) -> np.ndarray:
    """Order-zero seeds: eps_alpha^{-1} of the targets."""
    out = np.zeros(len(targets), dtype=complex)
    for i, tg in enumerate(targets):
        out[i] = eps_inverse_many(tg.side, [tg.value(T)], suite)[0]
    return out


# ------------------------------------------------------------ solution

@dataclass
class IterationRecord:
    k: int
    residual: float
    root_change: float
    damped: bool = False


@dataclass
class NlieSolution:
    """Converged auxiliary function with its adapted contour and root data."""

    u: AuxFunction
    p: ModelParams
    s: int
    targets: tuple
    roots: np.ndarray
    contour: Contour
    q_plus: complex
    q_minus: complex
    log: list = field(default_factory=list)
    index: complex = 0j
    rho: float = float("nan")

    @property
    def trotter(self):
        return self.p.trotter

    @property
    def X(self) -> SignedMultiset:
        return _targets_multiset(self.targets, self.roots)

    @property
    def particles(self) -> np.ndarray:
        return np.array([r for tg, r in zip(self.targets, self.roots) if tg.kind == "particle"], dtype=complex)

    @property
    def holes(self) -> np.ndarray:
        return np.array([r for tg, r in zip(self.targets, self.roots) if tg.kind == "hole"], dtype=complex)

    @property
    def iterations(self) -> int:
        return len(self.log)

    def values(self) -> np.ndarray:
        return np.asarray(self.u(self.contour.lam))

    def fixed_point_residual(self) -> float:
        """|u - RHS[u]| on the contour nodes, with the roots re-solved."""
        new, _, _ = lt_step(self.u, self.targets, self.roots, self.contour)
        lam = self.contour.lam
        return float(np.max(np.abs(new(lam) - self.u(lam))))

    def to_json(self) -> str:
        lam = self.contour.lam
        u = self.values()
        rec = {
            "params": self.p.to_dict(),
            "spin": self.s,
            "targets": [[t.kind, t.side, t.n] for t in self.targets],
            "roots": [[float(r.real), float(r.imag)] for r in self.roots],
            "q_plus": [float(self.q_plus.real), float(self.q_plus.imag)],
            "q_minus": [float(self.q_minus.real), float(self.q_minus.imag)],
            "index": [float(self.index.real), float(self.index.imag)],
            "contraction": self.rho,
            "iterations": [[r.k, r.residual, r.root_change, r.damped] for r in self.log],
            "contour": {"re": lam.real.tolist(), "im": lam.imag.tolist()},
            "u": {"re": u.real.tolist(), "im": u.imag.tolist()},
        }
        return json.dumps(rec)


def monodromy_index(U, contour: Contour) -> complex:
    """-(1 / 2 pi i T) oint u' / (1 + exp(u/T)) on the contour."""
    T = U.ctx.T
    lam, dl = contour.lam, contour.dlam
    u = np.asarray(U(lam))
    ud = np.asarray(U.d(lam))
    a = u / T
    fermi = np.where(a.real > 0, np.exp(-np.where(a.real > 0, a, 0)) / (1 + np.exp(-np.where(a.real > 0, a, 0))),
                     1 / (1 + np.exp(np.where(a.real > 0, 0, a))))
    return complex(-np.sum(ud * fermi * dl) / (2j * math.pi * T))


def lt_step(U: AuxFunction, targets, roots_seed, previous: Contour | None):
    """One application of the fixed-point map.

    Returns the new function (with re-solved roots), the contour adapted to
    the input and the roots.
    """
    ctx = U.ctx
    roots = solve_roots(U, targets, roots_seed)
    Ut = U.with_roots(roots)
    c = adapt_contour(Ut, Ut.d, ctx.suite, ctx.p, ctx.spec, previous)
    T = ctx.T
    t = c.t
    L = log_term(t, T)
    sp, wp = c.seg_plus
    sm, wm = c.seg_minus
    nu = np.concatenate([sp, sm, c.lam])
    coef = np.concatenate([wp * np.asarray(Ut(sp)), wm * np.asarray(Ut(sm)), T * c.dlam * L])
    new = AuxFunction(ctx, U.s, roots, U.mult, nu, coef)
    return new, c, roots


def _check_hypotheses(p: ModelParams, targets, s: int):
    n_p = sum(1 for t in targets if t.kind == "particle")
    n_h = len(targets) - n_p
    if p.M < n_p + 1:
        raise HypothesisViolated(f"window exponent M={p.M} below |Y|+1={n_p + 1}")
    if s + n_p != n_h:
        raise HypothesisViolated(f"zero monodromy needs s + |particles| = |holes| (s={s}, {n_p}, {n_h})")


def fixed_point_solve(p: ModelParams, targets=(), s: int = 0, suite: DressedSuite | None = None,
                      spec: ContourSpec | None = None, tol: float = DEFAULT_TOL,
                      max_iter: int = MAX_ITER, start: NlieSolution | None = None) -> NlieSolution:
    """Iterate u_{k+1} = L_T[u_k] from u_0 = D + T u1 until the sup-norm change is below tol."""
    from .integral_equations import dressed_suite
    targets = tuple(targets)
    _check_hypotheses(p, targets, s)
    if suite is None:
        suite = dressed_suite(p.with_(trotter=None))
    ctx = NlieContext(suite, p, spec)
    mult = [t.mult for t in targets]
    if start is not None:
        roots = start.roots.copy()
        U = AuxFunction(ctx, s, roots, mult, start.u.nu, start.u.coef)
        prev = start.contour
    else:
        roots = seed_roots(targets, suite, p.T)
        U = AuxFunction(ctx, s, roots, mult)
        prev = None
    log = []
    last = None
    for k in range(max_iter):
        new, c, roots_new = lt_step(U, targets, roots, prev)
        lam = c.lam
        res = float(np.max(np.abs(np.asarray(new(lam)) - np.asarray(U.with_roots(roots_new)(lam)))))
        dr = float(np.max(np.abs(roots_new - roots))) if len(roots) else 0.0
        damped = False
        if last is not None and res > last and k > 1:
            # non-monotone residuals: half step on the discretised data
            new = AuxFunction(ctx, s, roots_new, mult, np.concatenate([U.nu, new.nu]),
                              np.concatenate([0.5 * U.coef, 0.5 * new.coef]))
            damped = True
        log.append(IterationRecord(k + 1, res, dr, damped))
        U, roots, prev = new, roots_new, c
        last = res
        if res < tol and dr < max(tol, 1e-12):
            break
    else:
        raise MaxIterations(f"no convergence after {max_iter} iterations (last residual {last:.3e})")
    # final contour and roots for the converged function
    roots = solve_roots(U, targets, roots)
    U = U.with_roots(roots)
    c = adapt_contour(U, U.d, suite, p, ctx.spec, prev)
    idx = monodromy_index(U, c)
    m_expected = -s - sum(1 for t in targets if t.kind == "particle") + sum(1 for t in targets if t.kind == "hole")
    if abs(idx - m_expected) > 1e-6:
        raise HypothesisViolated(f"index {idx} differs from {m_expected}")
    rates = [b.residual / a.residual for a, b in zip(log[:-1], log[1:]) if a.residual > 0]
    rho = float(max(rates[1:] if len(rates) > 1 else rates)) if rates else 0.0
    return NlieSolution(u=U, p=p, s=s, targets=targets, roots=roots, contour=c,
                        q_plus=c.q_plus, q_minus=c.q_minus, log=log, index=idx, rho=rho)


# ------------------------------------------------------------ contraction

def smooth_probe(sol: NlieSolution, rng: np.random.Generator, amplitude: float):
    """Random analytic probe a0 + a1 l + a2 l^2 scaled to the given sup norm on the contour."""
    a = rng.normal(size=3) + 1j * rng.normal(size=3)
    lam = sol.contour.lam
    scale = np.max(np.abs(a[0] + a[1] * lam + a[2] * lam ** 2))
    a = a * amplitude / scale
    return (lambda l: a[0] + a[1] * l + a[2] * l ** 2, lambda l: a[1] + 2 * a[2] * l + 0 * l)


def contraction_factor(sol: NlieSolution, probes) -> float:
    """max over probes of |L[f + g] - L[f]| / |g| on the contour, f the fixed point."""
    base = sol.u
    lam = sol.contour.lam
    new0, _, _ = lt_step(base, sol.targets, sol.roots, sol.contour)
    r0 = new0.remainder(lam)
    out = 0.0
    for g, gd in probes:
        pert = AuxFunction(base.ctx, base.s, base.roots, base.mult, base.nu, base.coef, extra=(g, gd))
        new1, _, _ = lt_step(pert, sol.targets, sol.roots, sol.contour)
        num = np.max(np.abs(new1.remainder(lam) - r0))
        den = np.max(np.abs(g(lam)))
        out = max(out, float(num / den))
    if out >= 1:
        raise NotContractive(f"measured Lipschitz factor {out:.3e} >= 1")
    return out


# ------------------------------------------------------------ continuation

def analytic_continuation(sol: NlieSolution, lam: complex, tol: float = 1e-6) -> complex:
    """u off the contour.

    The representation is analytic except where a kernel pole l +- i zeta
    crosses the contour; past that point the residue adds -T ln(1+e^{-|u|/T})
    at l - i zeta (or +T at l + i zeta) when the shifted point is enclosed.
    """
    lam = complex(lam)
    c = sol.contour
    poly = c.polyline()
    zeta = sol.p.zeta
    T = sol.p.T
    val = complex(sol.u(lam))
    if sol.p.is_free_fermion:
        # the kernel vanishes identically, so there is no residue to add
        return val
    for shift, sign in ((-1j * zeta, -1.0), (1j * zeta, 1.0)):
        z = lam + shift
        if np.min(np.abs(poly - z)) < tol:
            raise UndecidableRegion(f"{z} lies on the contour")
        if c.winding(z) != 0:
            val += sign * T * complex(log_term(np.array([sol.u(z)]), T)[0])
    return val
