"""Contour geometry: inverse branches of the dressed energy, the Fermi curve,
the reference contour and the contour adapted to a solved auxiliary function.

Orientation is counterclockwise throughout.  A closed contour is stored as an
ordered list of pieces, each with quadrature nodes ``lam``, weights ``dlam``
and the values ``t`` of the generating function at the nodes.  The pieces are

    R window (t: +d -> -d), R inner rail, top arc, L inner rail,
    L window (t: -d -> +d), L outer rail, bottom arc, R outer rail,

where the windows are preimages of real intervals, the rails are preimages of
rays and the arcs lie on the circle of radius c_d T around -i zeta/2.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.integrate

from .core_types import (GeometryDegenerate, ModelParams, NoConvergence,
                         OutOfImage, WindowEscape, ZeroNotBracketed)
from .integral_equations import DressedSuite
from .special_functions import bare_energy, kernel_K

SQ2 = math.sqrt(2.0)


# ----------------------------------------------------------------- Newton

def newton_invert(F: Callable, dF: Callable, targets, seeds, tol: float = 1e-13,
                  maxit: int = 60, pole: complex | None = None) -> np.ndarray:
    """Vectorised Newton for F(lam) = target.

    Steps are capped at a quarter of the distance to ``pole`` so that the
    iteration cannot jump across the singularity.
    """
    targets = np.atleast_1d(np.asarray(targets, dtype=complex))
    lam = np.atleast_1d(np.asarray(seeds, dtype=complex)).copy()
    active = np.ones(lam.shape, dtype=bool)
    scale = np.maximum(1.0, np.abs(targets))
    for _ in range(maxit):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        x = lam[idx]
        r = np.asarray(F(x)) - targets[idx]
        d = np.asarray(dF(x))
        step = r / d
        cap = 0.3 if pole is None else np.minimum(0.3, 0.25 * np.abs(x - pole))
        size = np.abs(step)
        big = size > cap
        step = np.where(big, step * (cap / np.where(big, size, 1.0)), step)
        lam[idx] = x - step
        done = (np.abs(step) < tol * (1 + np.abs(x))) & (np.abs(r) < 1e3 * tol * scale[idx])
        done |= np.abs(r) < 1e-2 * tol * scale[idx]
        active[idx[done]] = False
    if np.any(active):
        raise NoConvergence(f"Newton failed for {int(active.sum())} of {lam.size} targets")
    return lam


# ------------------------------------------------------------ eps inverse

def _inverse_table(suite: DressedSuite):
    tab = getattr(suite, "_inv_table", None)
    if tab is not None:
        return tab
    p = suite.p
    X = suite.q + 3.0
    re = np.linspace(1e-3, X, 200)
    im = np.linspace(-math.pi / 2 + 1e-3, math.pi / 2, 200)
    L = (re[None, :] + 1j * im[:, None]).reshape(-1)
    ok = (np.abs(L + 0.5j * p.zeta) > 0.02) & (np.abs(L - 0.5j * p.zeta) > 0.02)
    L = L[ok]
    E = np.asarray(suite.eps(L))
    tab = (L, E)
    suite._inv_table = tab
    return tab


def _seed(branch: str, z: np.ndarray, suite: DressedSuite) -> np.ndarray:
    L, E = _inverse_table(suite)
    p = suite.p
    seeds = np.empty(z.shape, dtype=complex)
    sgn = 1 if branch == "R" else -1
    tau = suite.tau
    for i, zi in enumerate(z):
        asym = -0.5j * p.zeta - 2j * p.J * math.sin(p.zeta) / (zi - tau)
        # table points near +i zeta/2 also have large |eps|: prefer the pole asymptotics
        if abs(zi - tau) > 8 * p.J and sgn * asym.real > 0:
            seeds[i] = asym
            continue
        k = np.argmin(np.abs(E - zi))
        seeds[i] = sgn * L[k].real + 1j * L[k].imag
    return seeds


def eps_inverse_many(branch: str, z, suite: DressedSuite, tol: float = 1e-13) -> np.ndarray:
    """Vectorised inverse of eps on the half strip Re > 0 (R) or Re < 0 (L)."""
    if branch not in ("L", "R"):
        raise ValueError("branch must be 'L' or 'R'")
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    seeds = _seed(branch, z, suite)
    try:
        lam = newton_invert(suite.eps, suite.eps_d, z, seeds, tol=tol,
                            pole=-0.5j * suite.p.zeta)
    except NoConvergence:
        bad = [zi for zi in z if image_excluded(zi, suite)]
        if bad:
            raise OutOfImage(f"{bad[0]} lies in the excluded region of the double cover")
        raise
    # a preimage past the cut [-q, q] +- i zeta belongs to the other sheet
    red = np.remainder(lam.imag + math.pi / 2, math.pi) - math.pi / 2
    crossed = (np.abs(red) > suite.p.zeta) & (np.abs(lam.real) < suite.q)
    for zi in z[crossed]:
        if image_excluded(zi, suite):
            raise OutOfImage(f"{zi} lies in the excluded region of the double cover")
    return lam


def eps_inverse(branch: str, z: complex, suite: DressedSuite, tol: float = 1e-13) -> complex:
    """Preimage of z under eps on the chosen half strip."""
    return complex(eps_inverse_many(branch, [z], suite, tol)[0])


def cut_image_curve(suite: DressedSuite, n: int = 120) -> np.ndarray:
    """Closed curve formed by the two boundary values of eps on [-q, q] + i zeta."""
    p, q = suite.p, suite.q
    if q == 0 or p.is_free_fermion:
        return np.zeros(0, dtype=complex)
    s = q * np.cos(np.pi * (np.arange(n) + 0.5) / n)[::-1]
    eps_real = lambda x: float(np.real(suite.eps(x)))
    z2 = 2j * p.zeta
    vals_minus, vals_plus = [], []
    for sv in s:
        reg = lambda x: (1 / np.tanh(sv - x) - 1 / (sv - x) if abs(sv - x) > 1e-8 else 0.0) * eps_real(x)
        smooth2 = lambda x: complex(1 / np.tanh(sv - x + z2)) * eps_real(x)
        a = scipy.integrate.quad(reg, -q, q, limit=200)[0]
        pv = -scipy.integrate.quad(eps_real, -q, q, weight="cauchy", wvar=sv)[0]
        b_re = scipy.integrate.quad(lambda x: smooth2(x).real, -q, q, limit=200)[0]
        b_im = scipy.integrate.quad(lambda x: smooth2(x).imag, -q, q, limit=200)[0]
        base = complex(bare_energy(sv + 1j * p.zeta, p))
        core = (a + pv - complex(b_re, b_im)) / (2j * math.pi)
        jump = 1j * math.pi * eps_real(sv) / (2j * math.pi)
        vals_minus.append(base - (core + jump))
        vals_plus.append(base - (core - jump))
    return np.concatenate([np.array(vals_minus), np.array(vals_plus)[::-1]])


def winding_number(curve: np.ndarray, z: complex) -> int:
    """Winding number of a closed polyline around z."""
    if len(curve) < 3:
        return 0
    d = np.angle(np.roll(curve - z, -1) / (curve - z))
    return int(round(np.sum(d) / (2 * math.pi)))


def image_excluded(z: complex, suite: DressedSuite) -> bool:
    curve = getattr(suite, "_cut_curve", None)
    if curve is None:
        curve = cut_image_curve(suite)
        suite._cut_curve = curve
    return winding_number(curve, z) != 0


# ------------------------------------------------------------ Fermi curve

@dataclass(frozen=True)
class TracedCurve:
    points: np.ndarray
    parameter: np.ndarray
    branch: str
    orientation: str = "increasing Im eps"


@dataclass(frozen=True)
class FermiCurve:
    left: TracedCurve
    right: TracedCurve

    @property
    def points(self) -> np.ndarray:
        return np.concatenate([self.left.points, self.right.points])


def _trace_branch(branch: str, suite: DressedSuite, p: ModelParams, density: float,
                  radius: float) -> TracedCurve:
    sgn = -1.0 if branch == "R" else 1.0
    pole = -0.5j * p.zeta
    lam = suite.q * (1 if branch == "R" else -1) + 0j
    y = 0.0
    pts, par = [lam], [0.0]
    h = 1.0 / density
    while abs(lam - pole) > radius:
        # predictor: d lam / dy = i sgn / eps'
        pred = lam + 1j * sgn * h / complex(suite.eps_d(lam))
        target = 1j * sgn * (y + h)
        cand = pred
        ok = False
        for _ in range(30):
            r = complex(suite.eps(cand)) - target
            step = r / complex(suite.eps_d(cand))
            cand -= step
            if abs(step) < 1e-14 * (1 + abs(cand)):
                ok = True
                break
        if not ok or abs(cand - pred) > 1e-2 * h * max(1.0, abs(1 / complex(suite.eps_d(lam)))):
            h *= 0.5
            if h < 1e-10:
                raise NoConvergence("Fermi curve tracing step underflow")
            continue
        lam, y = cand, y + h
        pts.append(lam)
        par.append(sgn * y)
        # the curve speeds up in eps near the pole: grow the step with |eps|
        h = max(1.0 / density, 0.05 * abs(y))
    pts = np.array(pts)
    par = np.array(par)
    if branch == "R":
        pts, par = pts[::-1], par[::-1]
    return TracedCurve(points=pts, parameter=par, branch=branch)


def trace_fermi_curve(suite: DressedSuite, density: float = 20.0, radius: float | None = None) -> FermiCurve:
    """Trace Re eps = 0 from -q down to the disk and from the disk up to q.

    Along both returned branches the parameter Im eps increases.
    """
    p = suite.p
    r = p.c_d * p.T if radius is None else radius
    left = _trace_branch("L", suite, p, density, r)
    right = _trace_branch("R", suite, p, density, r)
    return FermiCurve(left=left, right=right)


# ----------------------------------------------------------------- pieces

@dataclass
class Piece:
    name: str
    lam: np.ndarray
    dlam: np.ndarray
    t: np.ndarray
    sigma: int           # +1 on the outer side (Re t > 0), -1 on the inner side
    inner: bool
    ends: tuple = None   # exact start and end points in traversal order

    def __len__(self):
        return len(self.lam)


def _log_breaks(length: float, T: float) -> list[float]:
    b = [0.0]
    step = 2 * T
    while b[-1] + step < length * (1 - 1e-9):
        b.append(b[-1] + step)
        step *= 2
    b.append(length)
    return b


def _gl(breaks, order):
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, wts = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        nodes.append(0.5 * (a + b) + 0.5 * (b - a) * x)
        wts.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(wts)


@dataclass
class ContourSpec:
    """Discretisation controls of a contour."""

    window_order: int = 24
    rail_order: int = 16
    arc_order: int = 24
    arc_panels: int = 4
    segment_order: int = 16
    rails: str = "slanted"      # or "vertical"


def _rail_direction(side: str, inner: bool, rails: str) -> tuple[float, complex]:
    """Base point sign and unit direction of a rail in t-space."""
    base = -1.0 if inner else 1.0
    down = -1.0 if side == "R" else 1.0       # Im t runs to -inf on R, +inf on L
    if rails == "vertical":
        return base, 1j * down
    return base, (base + 1j * down) / SQ2


@dataclass
class Contour:
    """Closed oriented contour adapted to a function F with F(q+-) = 0."""

    pieces: list
    q_plus: complex
    q_minus: complex
    delta: float
    radius: float
    center: complex
    junctions: dict = field(default_factory=dict)
    seg_plus: tuple = None      # (nodes, weights) on the straight segment q -> q+
    seg_minus: tuple = None     # (nodes, weights) on q- -> -q

    @property
    def lam(self):
        return np.concatenate([pc.lam for pc in self.pieces])

    @property
    def dlam(self):
        return np.concatenate([pc.dlam for pc in self.pieces])

    @property
    def t(self):
        return np.concatenate([pc.t for pc in self.pieces])

    @property
    def sigma(self):
        return np.concatenate([np.full(len(pc), pc.sigma) for pc in self.pieces])

    @property
    def inner(self):
        return np.concatenate([np.full(len(pc), pc.inner) for pc in self.pieces])

    def piece(self, name: str) -> Piece:
        for pc in self.pieces:
            if pc.name == name:
                return pc
        raise KeyError(name)

    def polyline(self) -> np.ndarray:
        pts = [self.q_plus]
        for pc in self.pieces:
            pts.extend(pc.lam)
        pts.append(self.q_plus)
        return np.array(pts)

    def winding(self, z: complex) -> int:
        return winding_number(self.polyline()[:-1], z)

    def to_rows(self, curve_id: str = "contour"):
        rows = []
        for pc in self.pieces:
            for lam, tv in zip(pc.lam, pc.t):
                rows.append((curve_id, pc.name, lam.real, lam.imag, tv.real, tv.imag))
        return rows


# --------------------------------------------------------- construction

class ContourBuilder:
    """Builds the contour adapted to a callable F with derivative dF.

    ``seed(name, t)`` supplies Newton seeds for the preimages of t-values on
    piece ``name``; by default seeds come from the inverse of the dressed
    energy.
    """

    def __init__(self, F, dF, suite: DressedSuite, p: ModelParams, spec: ContourSpec | None = None,
                 previous: Contour | None = None):
        self.F, self.dF, self.suite, self.p = F, dF, suite, p
        self.spec = spec or ContourSpec()
        self.prev = previous
        self.center = -0.5j * p.zeta
        self.radius = p.c_d * p.T
        self.delta = p.delta_T
        if self.delta <= 0:
            raise GeometryDegenerate("delta_T <= 0: temperature too high for the window construction")

    # -- inversion
    def _seed(self, branch: str, t: np.ndarray, name: str | None = None) -> np.ndarray:
        if self.prev is not None and name is not None:
            try:
                pc = self.prev.piece(name)
                if len(pc.t):
                    # nearest previous node in t
                    k = np.argmin(np.abs(pc.t[None, :] - t[:, None]), axis=1)
                    dt = t - pc.t[k]
                    return pc.lam[k] + dt / np.asarray(self.dF(pc.lam[k]))
            except KeyError:
                pass
        return eps_inverse_many(branch, t, self.suite)

    def _on_branch(self, branch: str, lam: np.ndarray) -> np.ndarray:
        sgn = 1.0 if branch == "R" else -1.0
        return (sgn * lam.real > 0) & (np.abs(lam.imag) < 0.5 * math.pi)

    def invert(self, branch: str, t, name: str | None = None) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=complex))
        seeds = self._seed(branch, t, name)
        try:
            lam = newton_invert(self.F, self.dF, t, seeds, pole=self.center)
        except NoConvergence:
            seeds = eps_inverse_many(branch, t, self.suite)
            lam = newton_invert(self.F, self.dF, t, seeds, pole=self.center)
        return lam

    def invert_path(self, branch: str, t: np.ndarray, t0: complex) -> np.ndarray:
        """Preimages of an ordered sequence of t-values by continuation from t0.

        Used on the rails, where independent Newton solves may land on the
        conjugate sheet.  Substeps keep the predicted move below a fraction of
        the distance to the pole.
        """
        lam = self.invert(branch, [t0])[0]
        if not self._on_branch(branch, np.array([lam]))[0]:
            raise NoConvergence(f"rail base {t0} not inverted on branch {branch}")
        tc = complex(t0)
        out = np.empty(len(t), dtype=complex)
        for k, tk in enumerate(t):
            while tc != tk:
                d = complex(self.dF(lam))
                room = 0.2 * max(abs(lam - self.center), 1e-3 * self.radius)
                dt = tk - tc
                if abs(dt / d) > room:
                    dt *= room / abs(dt / d)
                tn = tk if abs(tc + dt - tk) < 1e-14 * (1 + abs(tk)) else tc + dt
                lam_n = newton_invert(self.F, self.dF, [tn], [lam + dt / d], pole=self.center)[0]
                lam, tc = lam_n, tn
            out[k] = lam
        return out

    # -- pieces
    def fermi_zero(self, sign: int) -> complex:
        guess = sign * self.suite.q + 0j
        if self.prev is not None:
            guess = self.prev.q_plus if sign > 0 else self.prev.q_minus
        try:
            z = newton_invert(self.F, self.dF, [0.0], [guess], pole=self.center)[0]
        except NoConvergence as exc:
            raise ZeroNotBracketed(f"no zero of F near {sign}q") from exc
        if abs(z - sign * self.suite.q) > 0.5 * self.suite.q:
            raise ZeroNotBracketed(f"zero of F near {sign}q escaped to {z}")
        return complex(z)

    def window(self, side: str, inner: bool) -> Piece:
        T = self.p.T
        br = np.array(_log_breaks(self.delta, T))
        s, w = _gl(br, self.spec.window_order)
        # R window runs t: +d -> -d, L window t: -d -> +d
        if side == "R":
            t = -s if inner else s[::-1]
            dt = -w if inner else -w[::-1]
        else:
            t = s[::-1] * -1 if inner else s
            dt = w[::-1] if inner else w
        name = f"{side}_window_{'in' if inner else 'out'}"
        lam = self.invert(side, t.astype(complex), name)
        dF = np.asarray(self.dF(lam))
        ref = eps_inverse_many(side, t.astype(complex), self.suite) if self.prev is None else None
        if ref is not None and np.max(np.abs(lam - ref)) > 0.5 * abs(self.suite.q):
            raise WindowEscape("window preimage left the neighbourhood of the Fermi point")
        return Piece(name, lam, dt / dF, t.astype(complex), -1 if inner else 1, inner)

    def _rail_t(self, side: str, inner: bool, s):
        base, direction = _rail_direction(side, inner, self.spec.rails)
        return base * self.delta + np.asarray(s) * direction

    def rail_end(self, side: str, inner: bool) -> float:
        """Rail length (in t units) at which the preimage reaches the disk."""
        tau = self.suite.tau
        A = 2 * self.p.J * math.sin(self.p.zeta) / self.radius
        base, direction = _rail_direction(side, inner, self.spec.rails)
        # asymptotic guess: |t(s) - tau| = A
        c0 = base * self.delta - tau
        b = 2 * (np.conj(direction) * c0).real
        c = abs(c0) ** 2 - A ** 2
        s0 = (-b + math.sqrt(max(b * b - 4 * c, 0.0))) / 2
        name = f"{side}_rail_{'in' if inner else 'out'}"

        def g(s):
            ts = self._rail_t(side, inner, [s])
            lam = self.invert(side, ts, None)[0]
            if not self._on_branch(side, np.array([lam]))[0]:
                lam = self.invert_path(side, ts, self._rail_t(side, inner, 0.0))[0]
            return abs(lam - self.center) - self.radius, lam

        s_a = s0
        ga, _ = g(s_a)
        s_b = s0 * (1.02 if ga > 0 else 0.98)
        gb, _ = g(s_b)
        for _ in range(60):
            if abs(gb - ga) < 1e-300:
                break
            s_new = s_b - gb * (s_b - s_a) / (gb - ga)
            s_a, ga = s_b, gb
            s_b = max(s_new, 1e-6)
            gb, lam_b = g(s_b)
            if abs(gb) < 1e-13:
                break
        else:
            raise GeometryDegenerate(f"{name} did not reach the excluded disk")
        if s_b <= 0:
            raise GeometryDegenerate(f"{name}: disk and window overlap")
        return float(s_b)

    def rail(self, side: str, inner: bool) -> Piece:
        T = self.p.T
        s_end = self.rail_end(side, inner)
        br = _log_breaks(s_end, T)
        s, w = _gl(np.array(br), self.spec.rail_order)
        base, direction = _rail_direction(side, inner, self.spec.rails)
        # traversal: R inner and L outer leave their window, the others run into it
        outward = (side == "R" and inner) or (side == "L" and not inner)
        if not outward:
            s, w = s[::-1], -w[::-1]
        t = self._rail_t(side, inner, s)
        name = f"{side}_rail_{'in' if inner else 'out'}"
        lam = self.invert(side, t, name)
        if not np.all(self._on_branch(side, lam)):
            order = np.argsort(np.abs(s))
            lam = np.empty_like(t)
            lam[order] = self.invert_path(side, t[order], self._rail_t(side, inner, 0.0))
        dF = np.asarray(self.dF(lam))
        t_tips = self._rail_t(side, inner, np.array([0.0, s_end]))
        tips = self.invert_path(side, t_tips[1:], t_tips[0])
        tip0 = self.invert(side, t_tips[:1])[0]
        ends = (tip0, tips[0]) if outward else (tips[0], tip0)
        return Piece(name, lam, w * direction / dF, t, -1 if inner else 1, inner, ends)

    def arc(self, top: bool, a0: float, a1: float) -> Piece:
        """Arc of the disk boundary from angle a0 to a1 (counterclockwise)."""
        br = np.linspace(a0, a1, self.spec.arc_panels + 1)
        th, w = _gl(br, self.spec.arc_order)
        e = np.exp(1j * th)
        lam = self.center + self.radius * e
        dlam = 1j * self.radius * e * w
        t = np.asarray(self.F(lam))
        return Piece("top_arc" if top else "bottom_arc", lam, dlam, t, -1 if top else 1, top)

    def segment(self, a: complex, b: complex):
        x, w = np.polynomial.legendre.leggauss(self.spec.segment_order)
        return 0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w

    def build(self) -> Contour:
        qp, qm = self.fermi_zero(+1), self.fermi_zero(-1)
        Rwo = self.window("R", False)
        Rwi = self.window("R", True)
        Lwi = self.window("L", True)
        Lwo = self.window("L", False)
        Rri = self.rail("R", True)
        Lri = self.rail("L", True)
        Lro = self.rail("L", False)
        Rro = self.rail("R", False)
        ang = lambda z: math.atan2((z - self.center).imag, (z - self.center).real)
        a_Ri = ang(Rri.ends[1])
        a_Li = ang(Lri.ends[0])
        a_Lo = ang(Lro.ends[1])
        a_Ro = ang(Rro.ends[0])
        # keep angles in a continuous ccw order: top arc a_Ri -> a_Li, bottom a_Lo -> a_Ro
        if a_Li < a_Ri:
            a_Li += 2 * math.pi
        if a_Lo > 0:
            a_Lo -= 2 * math.pi
        if a_Ro < a_Lo:
            a_Ro += 2 * math.pi
        top = self.arc(True, a_Ri, a_Li)
        bottom = self.arc(False, a_Lo, a_Ro)
        pieces = [Rwo, Rwi, Rri, top, Lri, Lwi, Lwo, Lro, bottom, Rro]
        junctions = {"R_in": (a_Ri, self.center + self.radius * np.exp(1j * a_Ri)),
                     "L_in": (a_Li, self.center + self.radius * np.exp(1j * a_Li)),
                     "L_out": (a_Lo, self.center + self.radius * np.exp(1j * a_Lo)),
                     "R_out": (a_Ro, self.center + self.radius * np.exp(1j * a_Ro))}
        q = self.suite.q
        return Contour(pieces=pieces, q_plus=qp, q_minus=qm, delta=self.delta, radius=self.radius,
                       center=self.center, junctions=junctions,
                       seg_plus=self.segment(q + 0j, qp), seg_minus=self.segment(qm, -q + 0j))


def adapt_contour(F, dF, suite: DressedSuite, p: ModelParams, spec: ContourSpec | None = None,
                  previous: Contour | None = None, check: bool = True) -> Contour:
    """Contour adapted to F: window preimages of real t, rails, and disk arcs.

    Also returns the Fermi zeroes ``q_plus``, ``q_minus`` of F as attributes.
    With ``check`` the construction asserts that |Re F| >= delta/2 on the
    arcs, i.e. away from the central windows.
    """
    c = ContourBuilder(F, dF, suite, p, spec, previous).build()
    if check:
        for name in ("top_arc", "bottom_arc"):
            pc = c.piece(name)
            if len(pc) and np.min(np.abs(pc.t.real)) < 0.5 * c.delta:
                raise WindowEscape(f"|Re F| < delta/2 on {name}")
    return c


# ---------------------------------------------------- reference contour

@dataclass
class ReferenceContour:
    contour: Contour
    angles: dict
    predicted_angles: dict

    @property
    def junction_points(self) -> dict:
        return {k: v[1] for k, v in self.contour.junctions.items()}


def predicted_junction_angles(suite: DressedSuite, p: ModelParams) -> dict:
    """Leading low-T junction angles for vertical rails at Re eps = +-delta_T."""
    fac = p.c_d * p.T / (2 * p.J * math.sin(p.zeta))
    tau = suite.tau.real
    out = {}
    for side, ups in (("R", 1), ("L", -1)):
        for sig, lab in ((1, "out"), (-1, "in")):
            base = -sig * math.pi if side == "L" else 0.0
            out[f"{side}_{lab}"] = base + fac * ups * (tau - sig * p.delta_T)
    return out


def build_ref_contour(suite: DressedSuite, p: ModelParams, spec: ContourSpec | None = None) -> ReferenceContour:
    """Reference contour built on the dressed energy itself with vertical rails."""
    if 10 * p.c_d * p.T > suite.q:
        raise GeometryDegenerate("disk radius c_d T is not small against q")
    spec = spec or ContourSpec(rails="vertical")
    c = ContourBuilder(suite.eps, suite.eps_d, suite, p, spec).build()
    angles = {k: v[0] for k, v in c.junctions.items()}
    pred = predicted_junction_angles(suite, p)
    # bring predictions to the branch used by the measured angles
    for k in pred:
        while pred[k] - angles[k] > math.pi:
            pred[k] -= 2 * math.pi
        while angles[k] - pred[k] > math.pi:
            pred[k] += 2 * math.pi
    return ReferenceContour(contour=c, angles=angles, predicted_angles=pred)


# ------------------------------------------------------------------ export

def export_curves_csv(path, curves: dict) -> None:
    """Write traced curves / contours with columns re, im, branch, parameter."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im", "branch", "parameter"])
        for branch, (pts, par) in curves.items():
            for z, s in zip(pts, par):
                w.writerow([repr(float(z.real)), repr(float(z.imag)), branch, repr(float(np.real(s)))])
