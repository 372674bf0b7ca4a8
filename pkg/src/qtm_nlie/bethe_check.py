"""Finite-Trotter cross-validation against the Bethe equations.

The zeroes of 1 + exp(-u/T) inside the adapted contour are Bethe roots (or
holes); particles outside complete the set.  They are located by marching the
quantisation values u = -+ 2 pi i T (n + 1/2) along the two branches of the
Fermi curve, with the argument principle supplying the total count and, if the
march falls short, the missing zeroes through deflated moments.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core_types import (CountMismatch, ModelParams, NonAdmissible, PoleHit, SingularNorm,
                         dist_ipi, dist_ipi_array)
from .integral_equations import fredholm_det_segment
from .nlie import NlieSolution
from .observables import Functional, dress_direct
from .special_functions import bare_momentum, bare_momentum_d, kernel_K

ROOT_TOL = 1e-9
ADMISSIBLE_TOL = 1e-9
DISK_MARGIN = 1.3


def fit_disk(p: ModelParams, margin: float = DISK_MARGIN) -> ModelParams:
    """Enlarge c_d so the excluded disk holds both Trotter branch points +-aleph/N - i zeta/2.

    At small N T the points leave the default disk and the rails of the
    contour would cross the cut joining them.
    """
    if p.trotter is None:
        return p
    need = margin * abs(p.aleph) / p.trotter / p.T
    return p if need <= p.c_d else p.with_(c_d=need)


def kernel_clearance(sol: NlieSolution) -> float:
    """Smallest distance from y +- i zeta (y a particle or hole) to the contour.

    The kernel K(y - nu) is singular there; a clearance comparable to the
    panel size degrades the accuracy of u at y.
    """
    pts = np.concatenate([sol.particles, sol.holes])
    if not len(pts):
        return float("inf")
    poly = sol.contour.polyline()
    iz = 1j * sol.p.zeta
    return float(min(np.min(np.abs(poly - (y + s))) for y in pts for s in (iz, -iz)))


# ------------------------------------------------------------ root set

@dataclass
class BetheRootSet:
    roots: np.ndarray
    N: int
    s: int
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    flags: dict = field(default_factory=dict)
    zero_count: int = 0
    from_march: int = 0
    from_moments: int = 0

    @property
    def n_prime(self) -> int:
        return self.N - self.s

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["idx", "re", "im", "residual"])
            res = self.residuals if len(self.residuals) == len(self.roots) else [float("nan")] * len(self.roots)
            for i, (r, e) in enumerate(zip(self.roots, res)):
                w.writerow([i, repr(float(r.real)), repr(float(r.imag)), repr(float(e))])


def _fermi(a):
    """1 / (1 + exp(a)) without overflow."""
    pos = a.real > 0
    e = np.exp(-np.where(pos, a, 0))
    return np.where(pos, e / (1 + e), 1 / (1 + np.exp(np.where(pos, 0, a))))


def _pole(p: ModelParams) -> complex:
    """Order-N pole of exp(-u/T) inside the contour."""
    return -p.aleph / p.trotter - 0.5j * p.zeta


def zero_moments(sol: NlieSolution, kmax: int, center: complex, scale: float) -> np.ndarray:
    """sum over zeroes inside the contour of ((z - center)/scale)^k, k = 0..kmax."""
    p = sol.p
    c = sol.contour
    lam, dl = c.lam, c.dlam
    U = sol.u
    g = -(np.asarray(U.d(lam)) / p.T) * _fermi(np.asarray(U(lam)) / p.T)
    z = (lam - center) / scale
    zp = (_pole(p) - center) / scale
    return np.array([np.sum(z ** k * g * dl) / (2j * math.pi) + p.trotter * zp ** k for k in range(kmax + 1)])


def _newton_u(U, y, target, center, maxit=60):
    for _ in range(maxit):
        step = (complex(U(y)) - target) / complex(U.d(y))
        cap = 0.25 * abs(y - center)
        if abs(step) > cap:
            step *= cap / abs(step)
        y -= step
        if abs(step) < 1e-14 * (1 + abs(y)):
            break
    return y, abs(complex(U(y)) - target) < 1e-9 * (1 + abs(target))


def _march(sol: NlieSolution, side: str, limit: int) -> list:
    """Zeroes u = -+2 pi i T (n + 1/2), n = 0, 1, ..., along one Fermi branch."""
    U, T, c = sol.u, sol.p.T, sol.contour
    sg = -1 if side == "R" else 1
    start = c.q_plus if side == "R" else c.q_minus
    ys = []
    for n in range(limit):
        tgt = sg * 2j * math.pi * T * (n + 0.5)
        if len(ys) >= 2:
            seed = 2 * ys[-1] - ys[-2]
        elif ys:
            seed = 2 * ys[-1] - start
        else:
            seed = start
        y, ok = _newton_u(U, complex(seed), tgt, c.center)
        if not ok or c.winding(y) == 0 or (ys and min(abs(y - v) for v in ys) < ROOT_TOL):
            break
        if ys and np.sign(y.real) != np.sign(ys[0].real):
            break
        ys.append(y)
    return ys


def _moment_zeroes(sol, known, missing, center, scale):
    """Missing zeroes from deflated moments (small Hankel pencil) + Newton on 1 + e^{-u/T}."""
    S = zero_moments(sol, 2 * missing, center, scale)
    z = (np.asarray(known) - center) / scale
    S = S - np.array([np.sum(z ** k) for k in range(2 * missing + 1)])
    H0 = np.array([[S[i + j] for j in range(missing)] for i in range(missing)])
    H1 = np.array([[S[i + j + 1] for j in range(missing)] for i in range(missing)])
    ev = scipy.linalg.eigvals(H1, H0)
    U, T = sol.u, sol.p.T
    out = []
    for y in center + scale * ev:
        for _ in range(60):
            e = np.exp(-complex(U(y)) / T)
            step = (1 + e) / (-complex(U.d(y)) / T * e)
            y -= step
            if abs(step) < 1e-14:
                break
        out.append(complex(y))
    return out


def extract_bethe_roots(sol: NlieSolution, tol: float = 1e-6) -> BetheRootSet:
    """Bethe roots = (zeroes inside the contour minus holes) plus particles."""
    p = sol.p
    if p.trotter is None:
        raise ValueError("Bethe roots exist only at finite Trotter number")
    N = p.trotter
    c = sol.contour
    S0 = zero_moments(sol, 0, c.center, 1.0)[0]
    n_zero = int(round(S0.real))
    if abs(S0 - n_zero) > tol:
        raise CountMismatch(f"argument principle gives a non-integer count {S0}")
    zeros = _march(sol, "R", n_zero + 1) + _march(sol, "L", n_zero + 1)
    marched = len(zeros)
    if marched > n_zero:
        raise CountMismatch(f"marched {marched} zeroes but the contour holds {n_zero}")
    extra = []
    if marched < n_zero:
        scale = float(np.max(np.abs(c.lam - c.center)))
        extra = _moment_zeroes(sol, zeros, n_zero - marched, c.center, scale)
        zeros = zeros + extra
    zeros = np.array(zeros, dtype=complex)
    keep = np.ones(len(zeros), dtype=bool)
    for x in sol.holes:
        d = np.abs(zeros - x)
        i = int(np.argmin(d)) if len(d) else -1
        if i < 0 or d[i] > 1e-6 * (1 + abs(x)) or not keep[i]:
            raise CountMismatch(f"hole {x} is not among the zeroes inside the contour")
        keep[i] = False
    roots = np.concatenate([zeros[keep], sol.particles])
    if len(roots) != N - sol.s:
        raise CountMismatch(f"{len(roots)} Bethe roots, expected N' = {N - sol.s}")
    rs = BetheRootSet(roots=roots, N=N, s=sol.s, zero_count=n_zero, from_march=marched,
                      from_moments=len(extra))
    rs.flags = admissibility(rs.roots, p)
    return rs


# ------------------------------------------------------------ Bethe equations

def admissibility(roots, p: ModelParams) -> dict:
    roots = np.asarray(roots, dtype=complex)
    b = p.aleph / p.trotter
    hz = 0.5j * p.zeta
    bad_pairs = []
    for a in range(len(roots)):
        for s in (1j * p.zeta, -1j * p.zeta):
            d = dist_ipi_array(roots, roots[a] + s)
            bad_pairs += [(a, int(j)) for j in np.nonzero(d < ADMISSIBLE_TOL)[0]]
    excluded = [b - hz, -b - hz, b + hz, -b - 3 * hz]
    bad_points = [a for a, r in enumerate(roots) if any(dist_ipi(r, e) < ADMISSIBLE_TOL for e in excluded)]
    distinct = all(dist_ipi(roots[i], roots[j]) > ADMISSIBLE_TOL
                   for i in range(len(roots)) for j in range(i + 1, len(roots)))
    return {"pairs_ok": not bad_pairs, "points_ok": not bad_points, "distinct": distinct,
            "bad_pairs": bad_pairs, "bad_points": bad_points}


def _log_bethe_lhs(roots, p: ModelParams, s: int) -> np.ndarray:
    N = p.trotter
    b = p.aleph / N
    iz = 1j * p.zeta
    hz = 0.5 * iz
    la = roots[:, None]
    lk = roots[None, :]
    pair = np.sum(np.log(np.sinh(iz - la + lk)) - np.log(np.sinh(iz + la - lk)), axis=1)
    l = roots
    drive = N * (np.log(np.sinh(l - b + hz)) + np.log(np.sinh(3 * hz + l + b))
                 - np.log(np.sinh(l + b + hz)) - np.log(np.sinh(hz - l + b)))
    return -p.h / p.T + 1j * math.pi * s + pair + drive


def bae_residual(rs: BetheRootSet, p: ModelParams) -> float:
    """max_a |LHS_a + 1| of the product-form Bethe equations (log-domain accumulation)."""
    flags = admissibility(rs.roots, p)
    if not (flags["pairs_ok"] and flags["points_ok"]):
        raise NonAdmissible(f"non-admissible roots: pairs {flags['bad_pairs']}, points {flags['bad_points']}")
    if not flags["distinct"]:
        raise NonAdmissible("roots are not pairwise distinct")
    res = np.abs(np.exp(_log_bethe_lhs(rs.roots, p, rs.s)) + 1)
    rs.residuals = res
    return float(np.max(res)) if len(res) else 0.0


# ------------------------------------------------------------ eigenvalue

def _logsumexp2(a: complex, b: complex) -> complex:
    m = a if a.real >= b.real else b
    return m + np.log(np.exp(a - m) + np.exp(b - m))


def log_eigenvalue_product(xi: complex, rs: BetheRootSet, p: ModelParams) -> complex:
    """ln of the two-term product form of the eigenvalue (defined mod 2 pi i)."""
    N = p.trotter
    b = p.aleph / N
    iz = 1j * p.zeta
    hz = 0.5 * iz
    lam = rs.roots
    d = xi - lam
    for z in (d - hz,):
        if np.any(dist_ipi_array(z, 0) < 1e-12):
            raise PoleHit("spectral parameter on a shifted root")
    s2 = np.log(np.sinh(-iz) ** 2)
    t1 = (p.h / (2 * p.T) + np.sum(np.log(np.sinh(d + hz)) - np.log(np.sinh(d - hz)))
          + N * (np.log(np.sinh(xi + b)) + np.log(np.sinh(xi - b - iz)) - s2))
    t2 = (-p.h / (2 * p.T) + np.sum(np.log(np.sinh(d - 3 * hz)) - np.log(np.sinh(d - hz)))
          + N * (np.log(np.sinh(xi + b + iz)) + np.log(np.sinh(xi - b)) - s2))
    return complex(1j * math.pi * N + _logsumexp2(complex(t1), complex(t2)))


def log_eigenvalue_integral(xi: complex, sol: NlieSolution) -> complex:
    """ln of the eigenvalue from the NLIE data: Trotter factor, h/2T and the dressed momentum."""
    p = sol.p
    N = p.trotter
    b = p.aleph / N
    iz = 1j * p.zeta
    f = Functional(lambda z: bare_momentum(np.asarray(z) - xi, p),
                   lambda z: bare_momentum_d(np.asarray(z) - xi, p, 1),
                   (xi + 0.5j * p.zeta, xi - 0.5j * p.zeta), "p0(. - xi)")
    G = dress_direct(f, sol)
    trot = N * (np.log(np.sinh(b + iz + xi)) + np.log(np.sinh(b + iz - xi)) - np.log(np.sinh(iz) ** 2))
    return complex(trot + p.h / (2 * p.T) + 1j * G)


def eigenvalue_product(xi: complex, rs: BetheRootSet, p: ModelParams) -> complex:
    return complex(np.exp(log_eigenvalue_product(xi, rs, p)))


def eigenvalue_relative_difference(xi: complex, rs: BetheRootSet, sol: NlieSolution) -> float:
    d = log_eigenvalue_product(xi, rs, sol.p) - log_eigenvalue_integral(xi, sol)
    return float(abs(np.exp(d) - 1))


def trotter_energy_exponent(sol: NlieSolution, t: float = 1.0) -> complex:
    """N [ln L(x) - ln L(-x)] at x = J t sin(zeta) / N; tends to i t E as N grows."""
    p = sol.p
    x = p.J * t * math.sin(p.zeta) / p.trotter
    d = log_eigenvalue_integral(x, sol) - log_eigenvalue_integral(-x, sol)
    return complex(p.trotter * d)


# ------------------------------------------------------------ Gaudin norm

@dataclass
class NormCertificate:
    det_discrete: complex
    fredholm: complex
    matrix_factor: complex
    factorisation_residual: float
    segment_det: float
    floor: float

    def to_dict(self) -> dict:
        c = lambda z: [float(np.real(z)), float(np.imag(z))]
        return {"det_discrete": c(self.det_discrete), "fredholm": c(self.fredholm),
                "matrix_factor": c(self.matrix_factor), "factorisation_residual": self.factorisation_residual,
                "segment_det": self.segment_det, "floor": self.floor}


def _K(z, p):
    return np.asarray(kernel_K(z, p, check=False))


def gaudin_norm(rs: BetheRootSet, sol: NlieSolution, p: ModelParams | None = None,
                floor: float = 1e-12) -> NormCertificate:
    """Discrete Gaudin determinant, the Fredholm determinant on the contour and
    the particle/hole matrix, with the factorisation residual."""
    p = p or sol.p
    T = p.T
    U = sol.u
    lam = rs.roots
    ud = np.asarray(U.d(lam))
    A = np.eye(len(lam)) + 2j * math.pi * T * _K(lam[:, None] - lam[None, :], p) / ud[None, :]
    det_d = complex(np.linalg.det(A))
    c = sol.contour
    nu, dnu = c.lam, c.dlam
    fe = _fermi(np.asarray(U(nu)) / T)
    Kc = -_K(nu[:, None] - nu[None, :], p) * (fe * dnu)[None, :]
    I = np.eye(len(nu))
    fred = complex(np.linalg.det(I + Kc))
    ys, xs = sol.particles, sol.holes
    pts = np.concatenate([ys, xs])
    sgn = np.concatenate([np.ones(len(ys)), -np.ones(len(xs))])
    if len(pts):
        # R(l, m) = K(l - m) - int Kcal(l, n) f_m(n) dn with (id + Kcal) f_m = K(. - m)
        rhs = _K(nu[:, None] - pts[None, :], p)
        fm = np.linalg.solve(I + Kc, rhs)
        Kp = -_K(pts[:, None] - nu[None, :], p) * (fe * dnu)[None, :]
        R = _K(pts[:, None] - pts[None, :], p) - Kp @ fm
        upd = np.asarray(U.d(pts))
        Mm = np.eye(len(pts)) + 2j * math.pi * T * R * (sgn / upd)[None, :]
        mdet = complex(np.linalg.det(Mm))
    else:
        mdet = 1.0 + 0j
    scale = max(abs(det_d), 1.0)
    if abs(det_d) < floor * scale or abs(fred) < floor or abs(mdet) < floor:
        raise SingularNorm(f"norm determinant below floor: det={det_d}, fredholm={fred}, M={mdet}")
    res = abs(det_d - fred * mdet) / abs(det_d)
    seg = fredholm_det_segment(p.with_(trotter=None), 0.5 * abs(c.q_plus - c.q_minus))
    return NormCertificate(det_d, fred, mdet, float(res), float(seg), floor)


# ------------------------------------------------------------ record

def certification_record(sol: NlieSolution, xi: complex = 0.0) -> dict:
    rs = extract_bethe_roots(sol)
    res = bae_residual(rs, sol.p)
    cert = gaudin_norm(rs, sol)
    return {"N": rs.N, "s": rs.s, "n_prime": rs.n_prime, "zero_count": rs.zero_count,
            "marched": rs.from_march, "from_moments": rs.from_moments,
            "bae_residual": res, "kernel_clearance": kernel_clearance(sol),
            "eigenvalue_rel_diff": eigenvalue_relative_difference(xi, rs, sol),
            "norm": cert.to_dict()}


def certification_json(sol: NlieSolution) -> str:
    return json.dumps(certification_record(sol))
