"""Shared data model: model parameters, signed multisets of complex points,
the i*pi-periodic distance, and the error hierarchy used across the package.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np


# ---------------------------------------------------------------- errors

class QtmError(Exception):
    """Base class of every error raised by the package."""


class ValidationError(QtmError):
    """Input rejected before any numerics ran (CLI exit code 2)."""


class OutOfRegime(ValidationError):
    pass


class NonPositive(ValidationError):
    pass


class OddTrotter(ValidationError):
    pass


class NumericalError(QtmError):
    """A solver failed to produce a trustworthy answer (CLI exit code 3)."""


class PoleHit(NumericalError):
    pass


class BranchPointHit(NumericalError):
    pass


class CutHit(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class PoleOnContour(NumericalError):
    pass


class NoBracket(NumericalError):
    pass


class TruncationTooSmall(NumericalError):
    pass


class OutOfImage(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class GeometryDegenerate(NumericalError):
    pass


class ZeroNotBracketed(NumericalError):
    pass


class WindowEscape(NumericalError):
    pass


class OutOfDomain(NumericalError):
    pass


class NotContractive(NumericalError):
    pass


class HypothesisViolated(NumericalError):
    pass


class MaxIterations(NumericalError):
    pass


class UndecidableRegion(NumericalError):
    pass


class NewtonDiverged(NumericalError):
    pass


class DegenerateIntegers(NumericalError):
    pass


class PoleConflict(NumericalError):
    pass


class RatioGeqOne(NumericalError):
    pass


class CountMismatch(NumericalError):
    pass


class NonAdmissible(NumericalError):
    pass


class SingularNorm(NumericalError):
    pass


# ------------------------------------------------------------ parameters

@dataclass(frozen=True)
class ModelParams:
    """Couplings, temperature and algorithmic constants.

    ``trotter`` is ``None`` for the infinite Trotter limit, otherwise the even
    Trotter number N.  ``M`` controls the window half-width
    ``delta_T = -M T ln T`` and ``c_d`` the radius ``c_d T`` of the disk
    excluded around the pole of the bare energy.
    """

    J: float
    zeta: float
    h: float
    T: float
    trotter: int | None = None
    M: float = 3.0
    c_d: float = 0.5

    @property
    def Delta(self) -> float:
        return math.cos(self.zeta)

    @property
    def aleph(self) -> complex:
        return -1j * self.J * math.sin(self.zeta) / self.T

    @property
    def delta_T(self) -> float:
        return -self.M * self.T * math.log(self.T)

    @property
    def zeta_m(self) -> float:
        return min(self.zeta, math.pi - self.zeta)

    @property
    def s2(self) -> int:
        return int(np.sign(math.pi - 2.0 * self.zeta))

    @property
    def h_max(self) -> float:
        return 4.0 * self.J * (1.0 + math.cos(self.zeta))

    @property
    def is_free_fermion(self) -> bool:
        return abs(self.zeta - math.pi / 2) < 1e-14

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {"J": self.J, "zeta": self.zeta, "h": self.h, "T": self.T,
                "trotter": self.trotter, "M": self.M, "c_d": self.c_d}


def default_M(n_roots: int) -> float:
    """Window exponent used when a configuration carries ``n_roots`` roots."""
    return float(max(3, n_roots + 1))


def _looks_rational(x: float, max_den: int = 64, tol: float = 1e-12) -> bool:
    frac = Fraction(x).limit_denominator(max_den)
    return abs(float(frac) - x) < tol


def validate_params(raw: ModelParams | Mapping | None = None, **kw) -> ModelParams:
    """Check admissible ranges and return a :class:`ModelParams`.

    Accepts either a ``ModelParams`` instance, a mapping with the same field
    names, or keyword arguments.  Validating an already valid object returns
    an equal object.
    """
    if isinstance(raw, ModelParams):
        data = raw.to_dict()
    else:
        data = dict(raw or {})
    data.update(kw)
    missing = [k for k in ("J", "zeta", "h", "T") if k not in data]
    if missing:
        raise ValidationError(f"missing parameters: {missing}")
    J, zeta, h, T = (float(data[k]) for k in ("J", "zeta", "h", "T"))
    trotter = data.get("trotter")
    M = float(data.get("M", 3.0) if data.get("M") is not None else 3.0)
    c_d = float(data.get("c_d", 0.5) if data.get("c_d") is not None else 0.5)

    if J <= 0 or T <= 0:
        raise NonPositive(f"J and T must be positive (J={J}, T={T})")
    if c_d <= 0 or M <= 0:
        raise NonPositive(f"M and c_d must be positive (M={M}, c_d={c_d})")
    if not (0.0 < zeta <= math.pi / 2 + 1e-15):
        raise OutOfRegime(f"zeta={zeta} outside (0, pi/2]")
    zeta = min(zeta, math.pi / 2)
    hmax = 4.0 * J * (1.0 + math.cos(zeta))
    if not (0.0 < h < hmax):
        raise OutOfRegime(f"h={h} outside (0, {hmax})")
    if trotter is not None:
        if isinstance(trotter, float) and trotter.is_integer():
            trotter = int(trotter)
        if not isinstance(trotter, (int, np.integer)) or trotter <= 0 or trotter % 2:
            raise OddTrotter(f"Trotter number must be a positive even integer, got {trotter}")
        trotter = int(trotter)
    if zeta < math.pi / 2 and _looks_rational(zeta / math.pi):
        warnings.warn(f"zeta/pi = {zeta / math.pi} looks rational; root classification "
                      "statements assume an irrational ratio", stacklevel=2)
    return ModelParams(J=J, zeta=zeta, h=h, T=T, trotter=trotter, M=M, c_d=c_d)


# --------------------------------------------------------------- geometry

def dist_ipi(z: complex, w: complex) -> float:
    """Distance between z and w on the cylinder C / (i pi Z)."""
    d = complex(z) - complex(w)
    im = math.remainder(d.imag, math.pi)
    return math.hypot(d.real, im)


def dist_ipi_array(z, w) -> np.ndarray:
    d = np.asarray(z, dtype=complex) - np.asarray(w, dtype=complex)
    im = np.remainder(d.imag + math.pi / 2, math.pi) - math.pi / 2
    return np.hypot(d.real, im)


# --------------------------------------------------------------- multisets

MERGE_TOL = 1e-12


@dataclass(frozen=True)
class SignedMultiset:
    """Complex points with integer (possibly negative) multiplicities.

    Points closer than ``MERGE_TOL`` are identified; the first inserted
    representative is kept.  Zero multiplicities never survive.
    """

    entries: tuple[tuple[complex, int], ...] = field(default_factory=tuple)

    @staticmethod
    def from_points(points: Iterable[complex] = (), mult: int = 1) -> "SignedMultiset":
        out = SignedMultiset()
        for p in points:
            out = out.add(p, mult)
        return out

    @staticmethod
    def from_pairs(pairs: Iterable[tuple[complex, int]]) -> "SignedMultiset":
        out = SignedMultiset()
        for p, m in pairs:
            out = out.add(p, m)
        return out

    def add(self, point: complex, mult: int = 1) -> "SignedMultiset":
        point = complex(point)
        items = list(self.entries)
        for i, (p, m) in enumerate(items):
            if abs(p - point) < MERGE_TOL:
                m2 = m + mult
                if m2 == 0:
                    del items[i]
                else:
                    items[i] = (p, m2)
                return SignedMultiset(tuple(items))
        if mult != 0:
            items.append((point, int(mult)))
        return SignedMultiset(tuple(items))

    def __add__(self, other: "SignedMultiset") -> "SignedMultiset":
        return ms_combine(self, other, "sum")

    def __sub__(self, other: "SignedMultiset") -> "SignedMultiset":
        return ms_combine(self, other, "difference")

    def __iter__(self) -> Iterator[tuple[complex, int]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def cardinality(self) -> int:
        return sum(m for _, m in self.entries)

    @property
    def points(self) -> np.ndarray:
        return np.array([p for p, _ in self.entries], dtype=complex)

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([m for _, m in self.entries], dtype=int)

    def weighted_sum(self, f: Callable[[complex], complex]) -> complex:
        return sum((m * f(p) for p, m in self.entries), 0j)

    def weighted_prod(self, f: Callable[[complex], complex]) -> complex:
        out = 1 + 0j
        for p, m in self.entries:
            out *= complex(f(p)) ** m
        return out

    def same_as(self, other: "SignedMultiset") -> bool:
        return len(ms_combine(self, other, "difference")) == 0


def ms_combine(A: SignedMultiset, B: SignedMultiset, op: str = "sum") -> SignedMultiset:
    """Pointwise sum or difference of multiplicities."""
    if op not in ("sum", "difference"):
        raise ValueError(f"unknown multiset operation {op!r}")
    sign = 1 if op == "sum" else -1
    out = A
    for p, m in B.entries:
        out = out.add(p, sign * m)
    return out


def repeated(point: complex, n: int) -> SignedMultiset:
    """The multiset {point} taken n times (n may be negative)."""
    return SignedMultiset().add(point, n)
