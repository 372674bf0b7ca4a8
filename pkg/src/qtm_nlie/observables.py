"""Linear functionals of a solved auxiliary function: the momentum and energy
exponents of the eigenvalue, their low-temperature expansions, correlation
lengths and the conformal spectrum checks.

A functional of an analytic function g is

    G(Y) = sum_{y in Y} g(y) - oint g'(l) Ln[1 + exp(-u/T)] dl / (2 pi i)

with Ln continued along the contour from its outer side.  On the inner part of
the adapted contour Ln = -u/T + ln(1 + exp(u/T)); the -u/T piece is moved onto
the real axis, which leaves an integral over [-q, q] plus the two short
segments q -> q+ and q- -> -q.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .core_types import ModelParams, PoleConflict, RatioGeqOne, SignedMultiset
from .excitations import SIDES, UPSILON, ExcitationSpec, solve_quantisation
from .integral_equations import DressedSuite, dressed_suite
from .nlie import NlieSolution, RootTarget, log_term, u1_eval
from .special_functions import (bare_energy, bare_energy_d, bare_momentum, bare_momentum_d, theta)

DIRECT = "direct"
EXPANSION = "expansion"


# ------------------------------------------------------------ dressing

class DressedLinear:
    """gamma with (id + K) gamma' = g' on [-q, q] and
    gamma(l) = g(l) - int theta(l - x) gamma'(x) dx / (2 pi)."""

    def __init__(self, g: Callable, gd: Callable, suite: DressedSuite):
        self.g, self.gd, self.suite = g, gd, suite
        x = suite.grid.nodes
        self.gd_grid = suite.op.solve(np.asarray(gd(x), dtype=complex))

    def __call__(self, lam):
        th = lambda z: np.asarray(theta(z, self.suite.p)) / (2 * math.pi)
        return self.suite._cont(lam, self.g(np.asarray(lam, dtype=complex)), self.gd_grid, th)

    def d(self, lam):
        return self.suite._cont(lam, self.gd(np.asarray(lam, dtype=complex)), self.gd_grid)


@dataclass
class Functional:
    """An analytic g with its derivative and the poles of g' (for conflict checks)."""

    g: Callable
    gd: Callable
    poles: tuple = ()
    name: str = "g"


def momentum_functional(p: ModelParams) -> Functional:
    return Functional(lambda z: bare_momentum(z, p), lambda z: bare_momentum_d(z, p, 1),
                      (0.5j * p.zeta, -0.5j * p.zeta), "p0")


def energy_functional(p: ModelParams) -> Functional:
    return Functional(lambda z: bare_energy(z, p), lambda z: bare_energy_d(z, p, 1),
                      (0.5j * p.zeta, -0.5j * p.zeta), "eps0")


@dataclass
class DressingResult:
    value: complex
    mode: str
    terms: dict = field(default_factory=dict)      # -1, 0, 1 -> complex (expansion mode)


def _check_poles(f: Functional, sol: NlieSolution):
    """g' may only have the pole at -i zeta/2 inside the contour or the deformation region."""
    c = sol.contour
    poly = c.polyline()
    inner = np.concatenate([pc.lam for pc in c.pieces if pc.inner])
    region = np.concatenate([[c.q_plus], inner, [c.q_minus], np.linspace(c.q_minus, c.q_plus, 50)])
    from .contours import winding_number
    for z in f.poles:
        z = complex(z.real, math.remainder(z.imag, math.pi))
        if abs(z - c.center) < c.radius:
            continue        # the single admitted pole sits inside the excluded disk
        if np.min(np.abs(poly - z)) < 0.5 * sol.p.c_d * sol.p.T:
            raise PoleConflict(f"pole {z} of {f.name}' lies on the contour")
        if c.winding(z) != 0 or winding_number(region, z) != 0:
            raise PoleConflict(f"pole {z} of {f.name}' lies inside the contour")


def dress_direct(f: Functional, sol: NlieSolution, Y: SignedMultiset | None = None) -> complex:
    """G(Y) evaluated on the adapted contour of the solution."""
    _check_poles(f, sol)
    T = sol.p.T
    Y = sol.X if Y is None else Y
    u = sol.u
    c = sol.contour
    grid = u.ctx.grid
    val = Y.weighted_sum(lambda y: complex(f.g(y)))
    lin = np.sum(grid.weights * np.asarray(u(grid.nodes)) * np.asarray(f.gd(grid.nodes)))
    for nodes, w in (c.seg_plus, c.seg_minus):
        lin += np.sum(w * np.asarray(u(nodes)) * np.asarray(f.gd(nodes)))
    L = log_term(c.t, T)
    loop = np.sum(np.asarray(f.gd(c.lam)) * L * c.dlam)
    return complex(val - lin / (2j * math.pi * T) - loop / (2j * math.pi))


def expansion_terms(f: Functional, suite: DressedSuite, Y: SignedMultiset, s: int) -> dict:
    """G_{-1}, G_0(Y), G_1(Y) of the low-temperature expansion."""
    x, w = suite.grid.nodes, suite.grid.weights
    q = suite.q
    gam = DressedLinear(f.g, f.gd, suite)
    gm1 = -np.sum(w * suite.eps_grid * np.asarray(f.gd(x))) / (2j * math.pi)
    g0 = Y.weighted_sum(lambda y: complex(gam(y))) + 0.5 * s * (complex(gam(q + 0j)) - complex(gam(-q + 0j)))
    g1 = 0j
    for sig in (1, -1):
        u1 = complex(u1_eval(sig * q + 0j, Y, s, suite))
        g1 += sig * complex(gam.d(sig * q + 0j)) / (4j * math.pi * complex(suite.eps_d(sig * q + 0j))) \
            * (u1 ** 2 + math.pi ** 2 / 3)
    return {-1: complex(gm1), 0: complex(g0), 1: complex(g1)}


def dress_quantity(f: Functional, sol: NlieSolution, Y: SignedMultiset | None = None,
                   mode: str = DIRECT) -> DressingResult:
    """Direct evaluation over the solved NLIE or its low-T expansion."""
    Y = sol.X if Y is None else Y
    if mode == DIRECT:
        return DressingResult(dress_direct(f, sol, Y), DIRECT)
    if mode != EXPANSION:
        raise ValueError(f"unknown mode {mode!r}")
    _check_poles(f, sol)
    T = sol.p.T
    terms = expansion_terms(f, sol.u.ctx.suite, Y, sol.s)
    return DressingResult(terms[-1] / T + terms[0] + T * terms[1], EXPANSION, terms)


# ------------------------------------------------------------ close / far split

@dataclass
class RootSplit:
    """Far roots and close integers per side, with l^(sigma)."""

    far: SignedMultiset
    close: dict         # side -> (particle integers, hole integers)
    ell: dict           # side -> int


def split_roots(sol: NlieSolution, spec: ExcitationSpec) -> RootSplit:
    suite = sol.u.ctx.suite
    im_range = abs(suite.tau)
    far = SignedMultiset()
    close = {s: ([], []) for s in SIDES}
    for tg, y in zip(sol.targets, sol.roots):
        if spec.is_far(tg, sol.p.T, im_range):
            far = far.add(complex(y), tg.mult)
        else:
            close[tg.side][0 if tg.kind == "particle" else 1].append(tg.n)
    ell = {s: UPSILON[s] * (len(close[s][0]) - len(close[s][1])) for s in SIDES}
    return RootSplit(far=far, close=close, ell=ell)


def far_multiset(split: RootSplit, q: float) -> SignedMultiset:
    """Y^far = far roots + {q}^{l+} + {-q}^{-l-}."""
    Y = split.far
    if split.ell["R"]:
        Y = Y.add(q + 0j, split.ell["R"])
    if split.ell["L"]:
        Y = Y.add(-q + 0j, -split.ell["L"])
    return Y


def h_sum(split: RootSplit, side: str) -> float:
    ps, hs = split.close[side]
    return sum(a + 0.5 for a in ps) + sum(a + 0.5 for a in hs)


# ------------------------------------------------------------ report

@dataclass
class SpectralReport:
    label: str
    T: float
    P: complex
    E: complex
    P_m1: complex
    P_0: complex
    P_1: complex
    varpi_1: complex
    E_m1: complex
    E_0: complex
    E_1: complex
    varsigma_1: complex
    vF: float
    Upsilon: dict
    lnLambda: complex
    xi: float = float("nan")
    phase: float = float("nan")
    lambda_ratio_lowT: complex = 0j
    energy_ratio_lowT: complex = 0j

    @property
    def P_expansion(self) -> complex:
        return self.P_m1 / self.T + self.P_0 + self.T * (self.P_1 + self.varpi_1)

    @property
    def E_expansion(self) -> complex:
        return self.E_m1 / self.T + self.E_0 + self.T * (self.E_1 + self.varsigma_1)

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if isinstance(v, complex):
                out[k] = [v.real, v.imag]
            else:
                out[k] = v
        return out


def momentum_P(sol: NlieSolution, spec: ExcitationSpec | None = None, mode: str = DIRECT) -> dict:
    """P and the terms P_{-1}, P_0(Y^far), P_1(Y^far), varpi_1(H)."""
    p = sol.p
    suite = sol.u.ctx.suite
    spec = spec or ExcitationSpec(sol.s)
    f = momentum_functional(p)
    val = dress_quantity(f, sol, mode=mode).value
    x, w = suite.grid.nodes, suite.grid.weights
    q, vF, T = suite.q, suite.vF, p.T
    split = split_roots(sol, spec)
    Yf = far_multiset(split, q)
    P_m1 = -np.sum(w * suite.eps_grid * np.asarray(bare_momentum_d(x, p))) / (2j * math.pi)
    ell_tot = split.ell["R"] + split.ell["L"]
    P_0 = split.far.weighted_sum(lambda y: complex(suite.mom(y))) + (ell_tot + sol.s) * complex(suite.mom(q + 0j))
    P_1 = 0j
    for side, sig in (("R", 1), ("L", -1)):
        u1 = complex(u1_eval(sig * q + 0j, Yf, sol.s, suite))
        P_1 += u1 * (u1 - 4j * math.pi * split.ell[side]) + math.pi ** 2 / 3
    P_1 /= 4j * math.pi * vF
    varpi = 2j * math.pi / vF * (h_sum(split, "R") + h_sum(split, "L"))
    return {"P": complex(val), "P_m1": complex(P_m1), "P_0": complex(P_0), "P_1": complex(P_1),
            "varpi_1": complex(varpi), "vF": vF, "split": split}


def energy_E(sol: NlieSolution, spec: ExcitationSpec | None = None, mode: str = DIRECT) -> dict:
    """E and the terms E_{-1}, E_0(Y^far), E_1(Y^far), varsigma_1(H)."""
    p = sol.p
    suite = sol.u.ctx.suite
    spec = spec or ExcitationSpec(sol.s)
    f = energy_functional(p)
    val = dress_quantity(f, sol, mode=mode).value
    x, w = suite.grid.nodes, suite.grid.weights
    q = suite.q
    split = split_roots(sol, spec)
    Yf = far_multiset(split, q)
    E_m1 = -np.sum(w * suite.eps_grid * np.asarray(bare_energy_d(x, p))) / (2j * math.pi)
    E_0 = split.far.weighted_sum(lambda y: complex(suite.eps(y)))
    E_1 = 0j
    for side, sig in (("R", 1), ("L", -1)):
        u1 = complex(u1_eval(sig * q + 0j, Yf, sol.s, suite))
        E_1 += sig * u1 * (u1 - 4j * math.pi * split.ell[side])
    E_1 /= 4j * math.pi
    vs = 2j * math.pi * (h_sum(split, "R") - h_sum(split, "L"))
    return {"E": complex(val), "E_m1": complex(E_m1), "E_0": complex(E_0), "E_1": complex(E_1),
            "varsigma_1": complex(vs)}


def ln_lambda(P: complex, s: int, p: ModelParams) -> complex:
    """ln of (-1)^s exp(h/2T - 2J cos(zeta)/T) exp(iP)."""
    return 1j * math.pi * s + p.h / (2 * p.T) - 2 * p.J * math.cos(p.zeta) / p.T + 1j * P


def eigenvalue_and_lengths(P: complex, s: int, P_ref: complex, p: ModelParams) -> tuple:
    """(ln Lambda, xi, phase) relative to the reference (dominant) exponent."""
    lnL = ln_lambda(P, s, p)
    d = lnL - ln_lambda(P_ref, 0, p)
    if d.real >= 0:
        raise RatioGeqOne(f"|Lambda / Lambda_max| = exp({d.real:.3e}) >= 1")
    return lnL, -1.0 / d.real, float(math.remainder(d.imag, 2 * math.pi))


def spectral_report(sol: NlieSolution, spec: ExcitationSpec | None = None,
                    ref: NlieSolution | None = None, mode: str = DIRECT) -> SpectralReport:
    spec = spec or ExcitationSpec(sol.s)
    pm = momentum_P(sol, spec, mode)
    en = energy_E(sol, spec, mode)
    p = sol.p
    ups = {s: spec.upsilon_sum(s) for s in SIDES}
    vF = pm["vF"]
    rep = SpectralReport(label=spec.label(), T=p.T, P=pm["P"], E=en["E"], P_m1=pm["P_m1"], P_0=pm["P_0"],
                         P_1=pm["P_1"], varpi_1=pm["varpi_1"], E_m1=en["E_m1"], E_0=en["E_0"],
                         E_1=en["E_1"], varsigma_1=en["varsigma_1"], vF=vF, Upsilon=ups,
                         lnLambda=ln_lambda(pm["P"], sol.s, p),
                         lambda_ratio_lowT=-2 * math.pi * p.T / vF * (ups["R"] + ups["L"]),
                         energy_ratio_lowT=-2 * math.pi * p.T * (ups["R"] - ups["L"]))
    if ref is not None:
        P_ref = momentum_P(ref, ExcitationSpec(ref.s), mode)["P"]
        try:
            _, rep.xi, rep.phase = eigenvalue_and_lengths(rep.P, sol.s, P_ref, p)
        except RatioGeqOne:
            rep.xi = float("inf") if abs(rep.P - P_ref) == 0 else float("nan")
    return rep


# ------------------------------------------------------------ CFT check

@dataclass
class CftRow:
    label: str
    T: float
    upsilon_R: float
    upsilon_L: float
    dln: complex
    prediction: complex
    residual: float
    dln_energy: complex
    prediction_energy: complex
    residual_energy: float
    xi: float
    phase: float


def _cft_pre(spec: ExcitationSpec):
    if spec.s != 0 or any(len(spec.particles(s)) != len(spec.holes(s)) for s in SIDES):
        raise ValueError(f"conformal check needs s=0 and n_p = n_h per side ({spec.label()})")


def cft_spectrum_check(specs, p: ModelParams, Ts, contour_spec=None) -> list:
    """Compare i(P(Y) - P(0)) and i(E(Y) - E(0)) with the conformal predictions."""
    rows = []
    for spec in specs:
        _cft_pre(spec)
    for T in Ts:
        pt = p.with_(T=float(T))
        suite = dressed_suite(pt.with_(trotter=None))
        empty, _ = solve_quantisation(pt, ExcitationSpec(), suite, contour_spec)
        P0 = momentum_P(empty)["P"]
        E0 = energy_E(empty)["E"]
        vF = suite.vF
        for spec in specs:
            sol, _ = solve_quantisation(pt, spec, suite, contour_spec)
            P = momentum_P(sol, spec)["P"]
            E = energy_E(sol, spec)["E"]
            uR, uL = spec.upsilon_sum("R"), spec.upsilon_sum("L")
            dln, dle = 1j * (P - P0), 1j * (E - E0)
            pred = -2 * math.pi * T / vF * (uR + uL)
            pred_e = -2 * math.pi * T * (uR - uL)
            d = ln_lambda(P, 0, pt) - ln_lambda(P0, 0, pt)
            xi = -1.0 / d.real if d.real < 0 else float("nan")
            rows.append(CftRow(spec.label(), float(T), uR, uL, dln, pred, abs(dln - pred),
                               dle, pred_e, abs(dle - pred_e), xi, float(math.remainder(d.imag, 2 * math.pi))))
    return rows


def fitted_constants(rows, attr: str = "residual") -> dict:
    """label -> list of residual / T^2 across temperatures."""
    out = {}
    for r in rows:
        out.setdefault(r.label, []).append(getattr(r, attr) / r.T ** 2)
    return out


# ------------------------------------------------------------ dominant configuration

def scan_specs(max_excitations: int = 2, spins=(-1, 0, 1), integers=range(3)) -> list:
    """All zero-monodromy specs with distinct integers and at most max_excitations roots."""
    ints = list(integers)
    out = []
    slots = [(k, side) for k in ("particle", "hole") for side in SIDES]
    for s in spins:
        for n_tot in range(max_excitations + 1):
            for combo in itertools.combinations_with_replacement(
                    [(k, side, n) for k, side in slots for n in ints], n_tot):
                fam = {(k, side): [] for k, side in slots}
                for k, side, n in combo:
                    fam[(k, side)].append(n)
                if any(len(set(v)) != len(v) for v in fam.values()):
                    continue
                spec = ExcitationSpec(s, tuple(sorted(fam[("particle", "R")])), tuple(sorted(fam[("hole", "R")])),
                                      tuple(sorted(fam[("particle", "L")])), tuple(sorted(fam[("hole", "L")])))
                if spec.zero_monodromy:
                    out.append(spec)
    return out


@dataclass
class ScanEntry:
    label: str
    s: int
    P: complex
    abs_ln_lambda: float
    error: str = ""


def _scan_one(args):
    p, spec, contour_spec = args
    suite = dressed_suite(p.with_(trotter=None))
    try:
        sol, _ = solve_quantisation(p, spec, suite, contour_spec)
    except Exception as exc:       # reported per entry, the scan goes on
        return ScanEntry(spec.label(), spec.s, complex("nan"), float("nan"), f"{type(exc).__name__}: {exc}")
    P = momentum_P(sol, spec)["P"]
    return ScanEntry(spec.label(), spec.s, P, ln_lambda(P, spec.s, p).real)


def minimiser_scan(p: ModelParams, specs=None, workers: int = 1, contour_spec=None) -> list:
    """Re ln Lambda for every spec; the dominant configuration maximises it."""
    specs = scan_specs() if specs is None else specs
    jobs = [(p, s, contour_spec) for s in specs]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_scan_one, jobs))
    return [_scan_one(j) for j in jobs]


# ------------------------------------------------------------ output

def write_reports_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["spec", "T", "P_re", "P_im", "E_re", "E_im", "prediction_re", "prediction_im",
                    "residual", "xi", "phase"])
        for r in rows:
            if isinstance(r, SpectralReport):
                pred, res = r.lambda_ratio_lowT, float("nan")
                P, E = r.P, r.E
            else:
                pred, res, P, E = r.prediction, r.residual, r.dln, r.dln_energy
            w.writerow([r.label, repr(float(r.T)), repr(P.real), repr(P.imag), repr(E.real), repr(E.imag),
                        repr(pred.real), repr(pred.imag), repr(float(res)), repr(float(r.xi)),
                        repr(float(r.phase))])


def reports_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports])
