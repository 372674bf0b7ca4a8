"""Particle/hole excitations: quantum-number specifications, the coupled
solve with the NLIE, low-temperature root expansions, classification and
Trotter convergence of the roots.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .contours import ContourSpec, eps_inverse_many
from .core_types import (ModelParams, NewtonDiverged, NoConvergence,
                         SignedMultiset, ValidationError, default_M, dist_ipi)
from .integral_equations import DressedSuite, dressed_suite
from .nlie import NlieSolution, RootTarget, fixed_point_solve, u1_eval, u1_eval_d, u2_eval

SIDES = ("R", "L")
UPSILON = {"R": 1, "L": -1}


# ------------------------------------------------------------ specification

def _check_family(name, seq):
    seq = tuple(int(n) for n in seq)
    if any(n < 0 for n in seq):
        raise ValidationError(f"{name}: integers must be non-negative")
    if any(b < a for a, b in zip(seq[:-1], seq[1:])):
        raise ValidationError(f"{name}: integers must be sorted increasingly")
    return seq


@dataclass(frozen=True)
class ExcitationSpec:
    """Spin and per-side particle/hole integers.

    Side "R" carries sigma = + and upsilon = +1, side "L" sigma = - and
    upsilon = -1.  Repeated integers are accepted (the solver flags them);
    eigenstate-producing specs have distinct integers and s + |p| = |h|.
    """

    s: int = 0
    particles_R: tuple = ()
    holes_R: tuple = ()
    particles_L: tuple = ()
    holes_L: tuple = ()
    far_fraction: float = 0.2

    def __post_init__(self):
        for name in ("particles_R", "holes_R", "particles_L", "holes_L"):
            object.__setattr__(self, name, _check_family(name, getattr(self, name)))

    # -- bookkeeping
    def particles(self, side: str) -> tuple:
        return self.particles_R if side == "R" else self.particles_L

    def holes(self, side: str) -> tuple:
        return self.holes_R if side == "R" else self.holes_L

    @property
    def n_particles(self) -> int:
        return len(self.particles_R) + len(self.particles_L)

    @property
    def n_holes(self) -> int:
        return len(self.holes_R) + len(self.holes_L)

    @property
    def n_roots(self) -> int:
        return self.n_particles + self.n_holes

    @property
    def zero_monodromy(self) -> bool:
        return self.s + self.n_particles == self.n_holes

    @property
    def degenerate(self) -> bool:
        fams = (self.particles_R, self.holes_R, self.particles_L, self.holes_L)
        return any(len(set(f)) != len(f) for f in fams)

    @property
    def is_eigenstate_config(self) -> bool:
        return self.zero_monodromy and not self.degenerate

    def ell(self, side: str) -> int:
        """l^(sigma) = sigma (n_p - n_h) on the side."""
        return UPSILON[side] * (len(self.particles(side)) - len(self.holes(side)))

    def upsilon_sum(self, side: str) -> float:
        """Sum of (p + 1/2) over particles and (h + 1/2) over holes on one side."""
        return sum(n + 0.5 for n in self.particles(side)) + sum(n + 0.5 for n in self.holes(side))

    def targets(self) -> tuple:
        out = []
        for side in SIDES:
            out += [RootTarget("particle", side, n) for n in self.particles(side)]
            out += [RootTarget("hole", side, n) for n in self.holes(side)]
        return tuple(out)

    def is_far(self, target: RootTarget, T: float, im_range: float) -> bool:
        """Far roots: 2 pi T (n + 1/2) above far_fraction of the Im eps range."""
        return 2 * math.pi * T * (target.n + 0.5) > self.far_fraction * im_range

    def label(self) -> str:
        f = lambda t: ",".join(map(str, t))
        return (f"s={self.s};pR={f(self.particles_R)};hR={f(self.holes_R)};"
                f"pL={f(self.particles_L)};hL={f(self.holes_L)}")

    def to_dict(self) -> dict:
        return {"s": self.s, "particles_R": list(self.particles_R), "holes_R": list(self.holes_R),
                "particles_L": list(self.particles_L), "holes_L": list(self.holes_L),
                "far_fraction": self.far_fraction}

    @staticmethod
    def from_dict(d: dict) -> "ExcitationSpec":
        return ExcitationSpec(s=int(d.get("s", 0)),
                              particles_R=tuple(d.get("particles_R", ())),
                              holes_R=tuple(d.get("holes_R", ())),
                              particles_L=tuple(d.get("particles_L", ())),
                              holes_L=tuple(d.get("holes_L", ())),
                              far_fraction=float(d.get("far_fraction", 0.2)))


def far_integer(level: float, T: float) -> int:
    """Integer n with 2 pi T (n + 1/2) closest to the given Im eps level."""
    return max(0, int(round(level / (2 * math.pi * T) - 0.5)))


# ------------------------------------------------------------ classification

@dataclass
class ClassificationReport:
    max_re_eps: float
    min_pair_distance: float
    repulsion_bound: float
    singular_count: int
    string_count: int
    particles_outside: bool
    holes_inside: bool
    string_pairs: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.singular_count == 0 and self.string_count == 0
                and self.particles_outside and self.holes_inside)


def classify_points(particles, holes, p: ModelParams, suite: DressedSuite, contour=None,
                    tol_string: float = 1e-3, c_rep: float = 0.0) -> ClassificationReport:
    """Pure diagnostics on a set of particle and hole roots."""
    particles = np.asarray(particles, dtype=complex).reshape(-1)
    holes = np.asarray(holes, dtype=complex).reshape(-1)
    roots = np.concatenate([particles, holes])
    T = p.T
    max_re = float(np.max(np.abs(np.real(suite.eps(roots))))) if len(roots) else 0.0
    dmin = math.inf
    for i in range(len(roots)):
        for j in range(i + 1, len(roots)):
            dmin = min(dmin, dist_ipi(roots[i], roots[j]))
    singular = 0
    outside, inside = True, True
    if contour is not None:
        singular = sum(1 for y in particles if contour.winding(y - 1j * p.zeta) != 0)
        outside = all(contour.winding(y) == 0 for y in particles)
        inside = all(contour.winding(x) != 0 for x in holes)
    thr = 10 * T * tol_string
    pairs = []
    for i, y in enumerate(particles):
        for j, y2 in enumerate(particles):
            if i != j and dist_ipi(y, y2 + 1j * p.zeta) < thr:
                pairs.append((i, j))
    return ClassificationReport(max_re_eps=max_re, min_pair_distance=dmin, repulsion_bound=c_rep * T,
                                singular_count=singular, string_count=len(pairs),
                                particles_outside=outside, holes_inside=inside, string_pairs=pairs)


# ------------------------------------------------------------ root sets

@dataclass
class RootSet:
    """Solved roots with their expansion predictions and diagnostics."""

    targets: tuple
    roots: np.ndarray
    predictions: dict            # order -> array aligned with targets
    residuals: np.ndarray
    jacobian_cond: float
    report: ClassificationReport | None = None
    degenerate: bool = False

    @property
    def particles(self) -> np.ndarray:
        return np.array([r for t, r in zip(self.targets, self.roots) if t.kind == "particle"], dtype=complex)

    @property
    def holes(self) -> np.ndarray:
        return np.array([r for t, r in zip(self.targets, self.roots) if t.kind == "hole"], dtype=complex)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "side", "kind", "n", "re", "im", "order0_re", "order0_im",
                        "order1_re", "order1_im", "order2_re", "order2_im", "residual"])
            for i, (t, r) in enumerate(zip(self.targets, self.roots)):
                row = [i, t.side, t.kind, t.n, repr(float(r.real)), repr(float(r.imag))]
                for k in (0, 1, 2):
                    pr = self.predictions.get(k)
                    row += ([repr(float(pr[i].real)), repr(float(pr[i].imag))] if pr is not None else ["", ""])
                row.append(repr(float(self.residuals[i])))
                w.writerow(row)


def _root_jacobian(sol: NlieSolution) -> np.ndarray:
    U, X = sol.u, sol.roots
    mult = np.array([t.mult for t in sol.targets], dtype=float)
    J = np.diag(np.asarray(U.d(X)))
    J = J + sol.p.T * 2j * math.pi * np.asarray(U.ctx.suite.R(X, X)) * mult[None, :]
    return J


def root_lowT_expansion(spec: ExcitationSpec, order: int, suite: DressedSuite, T: float) -> np.ndarray:
    """Roots predicted by the low-T expansion up to the given order (0, 1 or 2).

    Order 0 inverts eps at the targets; the first two corrections follow from
    expanding eps(y) + T u1(y|X) + T^2 u2(y|X) = target around the order-0 point.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    targets = spec.targets()
    if not targets:
        return np.zeros(0, dtype=complex)
    y0 = np.array([eps_inverse_many(t.side, [t.value(T)], suite)[0] for t in targets])
    if order == 0:
        return y0
    mult = np.array([t.mult for t in targets])
    X0 = SignedMultiset.from_pairs(zip(y0, mult))
    s = spec.s
    e1 = np.asarray(suite.eps_d(y0))
    u1 = np.asarray(u1_eval(y0, X0, s, suite))
    y1 = -u1 / e1
    if order == 1:
        return y0 + T * y1
    e2 = np.asarray(suite.eps_d(y0, 2))
    u1d = np.asarray(u1_eval_d(y0, X0, s, suite))
    # d u1(l | X) / d y_b = 2 pi i m_b R(l, y_b)
    chain = (2j * math.pi * np.asarray(suite.R(y0, y0)) * mult[None, :]) @ y1
    u2 = np.asarray(u2_eval(y0, X0, s, suite))
    y2 = -(0.5 * e2 * y1 ** 2 + u1d * y1 + chain + u2) / e1
    return y0 + T * y1 + T ** 2 * y2


def solve_quantisation(p: ModelParams, spec: ExcitationSpec, suite: DressedSuite | None = None,
                       contour_spec: ContourSpec | None = None, tol: float = 1e-10,
                       continuation_steps: int = 10) -> tuple[NlieSolution, RootSet]:
    """Solve the NLIE together with the quantisation conditions of ``spec``."""
    if spec.degenerate:
        warnings.warn(f"repeated integers in {spec.label()}: roots coincide, not an eigenstate",
                      stacklevel=2)
    if suite is None:
        suite = dressed_suite(p.with_(trotter=None))
    p_run = p.with_(M=max(p.M, default_M(spec.n_particles)))
    targets = spec.targets()
    try:
        sol = fixed_point_solve(p_run, targets, spec.s, suite=suite, spec=contour_spec, tol=tol)
    except NoConvergence:
        sol = _continuation_solve(p_run, spec, suite, contour_spec, tol, continuation_steps)
    preds = {k: root_lowT_expansion(spec, k, suite, p.T) for k in (0, 1, 2)} if targets else {}
    tv = np.array([t.value(p.T) for t in targets])
    res = np.abs(np.asarray(sol.u(sol.roots)) - tv) if targets else np.zeros(0)
    cond = float(np.linalg.cond(_root_jacobian(sol))) if targets else 1.0
    report = classify_points(sol.particles, sol.holes, p, suite, sol.contour)
    rs = RootSet(targets=targets, roots=sol.roots.copy(), predictions=preds, residuals=res,
                 jacobian_cond=cond, report=report, degenerate=spec.degenerate)
    return sol, rs


def _continuation_solve(p, spec, suite, contour_spec, tol, steps):
    """Continuation in T from a temperature where order-0 seeding is safer."""
    sol = None
    for T in np.geomspace(min(2.0 * p.T, 0.2), p.T, steps)[:-1]:
        pt = p.with_(T=float(T))
        try:
            sol = fixed_point_solve(pt, spec.targets(), spec.s, suite=dressed_suite(pt.with_(trotter=None)),
                                    spec=contour_spec, tol=tol, start=sol)
        except NoConvergence as exc:
            raise NewtonDiverged(f"root Newton diverged along the T continuation at T={T:.4g}") from exc
    try:
        return fixed_point_solve(p, spec.targets(), spec.s, suite=suite, spec=contour_spec, tol=tol, start=sol)
    except NoConvergence as exc:
        raise NewtonDiverged("root Newton diverged at the target temperature") from exc


def classify_roots(rs: RootSet, sol: NlieSolution, p: ModelParams, tol_string: float = 1e-3) -> ClassificationReport:
    return classify_points(rs.particles, rs.holes, p, sol.u.ctx.suite, sol.contour, tol_string)


def check_repulsion(rs: RootSet, sol: NlieSolution) -> tuple[float, float]:
    """(min pairwise distance, 2 pi T min-gap / max|u'|) for solved roots."""
    T = sol.p.T
    if len(rs.roots) < 2:
        return math.inf, 0.0
    vals = np.array([t.value(T) for t in rs.targets])
    gaps = [abs(a - b) for i, a in enumerate(vals) for b in vals[i + 1:]]
    ud = np.max(np.abs(np.asarray(sol.u.d(rs.roots))))
    dmin = min(dist_ipi(a, b) for i, a in enumerate(rs.roots) for b in rs.roots[i + 1:])
    return dmin, min(gaps) / ud


# ------------------------------------------------------------ Trotter limit

@dataclass
class TrotterReport:
    Ns: list
    root_dev: np.ndarray       # max |x(N) - x| per N
    u_dev: np.ndarray          # max |u_N - u| on the infinite-Trotter contour
    root_slope: float
    u_slope: float


def _slope(Ns, dev):
    return float(np.polyfit(np.log(Ns), np.log(dev), 1)[0])


def trotter_root_convergence(p: ModelParams, spec: ExcitationSpec, Ns, suite: DressedSuite | None = None,
                             contour_spec: ContourSpec | None = None, tol: float = 1e-11) -> TrotterReport:
    """Fit log |x(N) - x(inf)| and log |u_N - u| against log N."""
    p0 = p.with_(trotter=None)
    if suite is None:
        suite = dressed_suite(p0)
    sol_inf, rs_inf = solve_quantisation(p0, spec, suite, contour_spec, tol)
    lam = sol_inf.contour.lam
    far = np.abs(lam + 0.5j * p.zeta) > 2 * p.c_d * p.T
    u_inf = np.asarray(sol_inf.u(lam))
    rdev, udev = [], []
    for N in Ns:
        solN, rsN = solve_quantisation(p0.with_(trotter=int(N)), spec, suite, contour_spec, tol)
        rdev.append(float(np.max(np.abs(rsN.roots - rs_inf.roots))) if len(rs_inf.roots) else 0.0)
        udev.append(float(np.max(np.abs(np.asarray(solN.u(lam[far])) - u_inf[far]))))
    rdev, udev = np.array(rdev), np.array(udev)
    rs = _slope(Ns, rdev) if np.all(rdev > 0) else float("nan")
    return TrotterReport(Ns=list(Ns), root_dev=rdev, u_dev=udev, root_slope=rs, u_slope=_slope(Ns, udev))
