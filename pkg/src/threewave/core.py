"""Pointwise three-wave resonant interaction: state types, right-hand side,
polar conversion and conserved quantities.

The spatially uniform system is

    dA_j/dtau = i * g_j * conj(A_k * A_l),   {j, k, l} = {1, 2, 3}

with coupling signs ``g_j`` in {-1, +1}.  Identical signs give the
explosive (negative wave energy) system, mixed signs the bounded one.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np

EPS_ZERO = 1e-14
TWO_PI = 2.0 * math.pi


class InvalidStateError(ValueError):
    """Raised when an amplitude triple is non-finite or otherwise unusable."""


class PhaseUndefinedError(ValueError):
    """Raised when a phase is requested for a (near) zero amplitude."""


def _check_finite(*values: complex) -> None:
    for v in values:
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise InvalidStateError(f"non-finite amplitude {v!r}")


@dataclass(frozen=True)
class ComplexTriple:
    a1: complex
    a2: complex
    a3: complex

    def __post_init__(self):
        for name in ("a1", "a2", "a3"):
            object.__setattr__(self, name, complex(getattr(self, name)))

    def __iter__(self) -> Iterator[complex]:
        return iter((self.a1, self.a2, self.a3))

    def __getitem__(self, j: int) -> complex:
        return (self.a1, self.a2, self.a3)[j]

    @property
    def moduli(self) -> Tuple[float, float, float]:
        return (abs(self.a1), abs(self.a2), abs(self.a3))

    def is_finite(self) -> bool:
        return all(math.isfinite(v.real) and math.isfinite(v.imag) for v in self)

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3], dtype=complex)

    @classmethod
    def from_array(cls, arr) -> "ComplexTriple":
        return cls(complex(arr[0]), complex(arr[1]), complex(arr[2]))


@dataclass(frozen=True)
class PolarTriple:
    """Moduli and phases.  A phase is ``None`` when its modulus is below
    ``EPS_ZERO``; phases otherwise lie in [0, 2*pi)."""

    r1: float
    r2: float
    r3: float
    th1: Optional[float]
    th2: Optional[float]
    th3: Optional[float]

    @property
    def moduli(self) -> Tuple[float, float, float]:
        return (self.r1, self.r2, self.r3)

    @property
    def phases(self) -> Tuple[Optional[float], Optional[float], Optional[float]]:
        return (self.th1, self.th2, self.th3)


@dataclass(frozen=True)
class CouplingSignature:
    g1: int = 1
    g2: int = 1
    g3: int = 1

    def __post_init__(self):
        for g in (self.g1, self.g2, self.g3):
            if g not in (-1, 1):
                raise ValueError(f"coupling signs must be +1 or -1, got {g!r}")

    def __iter__(self):
        return iter((self.g1, self.g2, self.g3))

    @property
    def is_same_sign(self) -> bool:
        return self.g1 == self.g2 == self.g3


SAME_SIGN = CouplingSignature(1, 1, 1)


@dataclass(frozen=True)
class VelocitySet:
    c1: Tuple[float, ...]
    c2: Tuple[float, ...]
    c3: Tuple[float, ...]

    def __post_init__(self):
        vs = [tuple(float(x) for x in np.atleast_1d(c)) for c in (self.c1, self.c2, self.c3)]
        dims = {len(v) for v in vs}
        if len(dims) != 1 or dims.pop() not in (1, 2):
            raise ValueError("velocities must share a dimension of 1 or 2")
        for v in vs:
            if not any(v):
                raise ValueError("velocity vectors must be nonzero")
        object.__setattr__(self, "c1", vs[0])
        object.__setattr__(self, "c2", vs[1])
        object.__setattr__(self, "c3", vs[2])

    def __iter__(self):
        return iter((self.c1, self.c2, self.c3))

    @property
    def dim(self) -> int:
        return len(self.c1)

    @property
    def all_equal(self) -> bool:
        return self.c1 == self.c2 == self.c3


@dataclass(frozen=True)
class InvariantSet:
    m12: float
    m13: float
    h: float

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.m12, self.m13, self.h)


def rhs_uniform(a: ComplexTriple, g: CouplingSignature = SAME_SIGN) -> ComplexTriple:
    a1, a2, a3 = a
    _check_finite(a1, a2, a3)
    return ComplexTriple(
        1j * g.g1 * (a2 * a3).conjugate(),
        1j * g.g2 * (a1 * a3).conjugate(),
        1j * g.g3 * (a1 * a2).conjugate(),
    )


def invariants(a: ComplexTriple, g: CouplingSignature = SAME_SIGN) -> InvariantSet:
    """Generalized Manley-Rowe pair and the phase invariant.

    ``m12 = g2|A1|^2 - g1|A2|^2``, ``m13 = g3|A1|^2 - g1|A3|^2`` and
    ``h = 2 Re(A1 A2 A3)``.  For g = (1, 1, 1) these are the usual
    ``|A1|^2 - |A2|^2``, ``|A1|^2 - |A3|^2`` and ``A1A2A3 + c.c.``.
    """
    a1, a2, a3 = a
    _check_finite(a1, a2, a3)
    s1, s2, s3 = abs(a1) ** 2, abs(a2) ** 2, abs(a3) ** 2
    return InvariantSet(
        m12=g.g2 * s1 - g.g1 * s2,
        m13=g.g3 * s1 - g.g1 * s3,
        h=2.0 * (a1 * a2 * a3).real,
    )


def invariants_array(states: np.ndarray, g: CouplingSignature = SAME_SIGN) -> np.ndarray:
    """Vectorized ``invariants`` for an (n, 3) complex array; returns (n, 3)."""
    s = np.abs(states) ** 2
    out = np.empty((states.shape[0], 3))
    out[:, 0] = g.g2 * s[:, 0] - g.g1 * s[:, 1]
    out[:, 1] = g.g3 * s[:, 0] - g.g1 * s[:, 2]
    out[:, 2] = 2.0 * (states[:, 0] * states[:, 1] * states[:, 2]).real
    return out


def wrap_phase(theta: float) -> float:
    """Reduce an angle to [0, 2*pi)."""
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2*pi
    return 0.0 if t >= TWO_PI else t


def phase_distance(a: float, b: float) -> float:
    """Distance between two angles on the circle, in [0, pi]."""
    d = wrap_phase(a - b)
    return min(d, TWO_PI - d)


def to_polar(a: ComplexTriple) -> PolarTriple:
    _check_finite(*a)
    rs = []
    ths = []
    for v in a:
        r = abs(v)
        rs.append(r)
        ths.append(wrap_phase(cmath.phase(v)) if r >= EPS_ZERO else None)
    return PolarTriple(*rs, *ths)


_AXIS_UNITS = (1.0 + 0j, 1j, -1.0 + 0j, -1j)


def unit_phasor(theta: float) -> complex:
    """``exp(i*theta)``, returned exactly for multiples of pi/2.

    ``cos(3*pi/2)`` evaluates to about -1.8e-16 in floating point; snapping
    keeps axis-aligned data (and hence H = 0 exactly) on its invariant set.
    """
    q = theta / (0.5 * math.pi)
    k = round(q)
    if abs(q - k) <= 4.0 * np.finfo(float).eps * max(1.0, abs(q)):
        return _AXIS_UNITS[k % 4]
    return cmath.exp(1j * theta)


def from_polar(p: PolarTriple) -> ComplexTriple:
    out = []
    for r, th in zip(p.moduli, p.phases):
        if not math.isfinite(r) or r < 0.0:
            raise InvalidStateError(f"modulus must be finite and nonnegative, got {r!r}")
        if th is None:
            if r >= EPS_ZERO:
                raise InvalidStateError("undefined phase on a nonzero modulus")
            out.append(0j)
        else:
            out.append(r * unit_phasor(th))
    return ComplexTriple(*out)


def total_phase(a: ComplexTriple) -> float:
    """Theta = th1 + th2 + th3, computed as arg(A1 A2 A3) in [0, 2*pi)."""
    _check_finite(*a)
    prod = a.a1 * a.a2 * a.a3
    if min(a.moduli) < EPS_ZERO or abs(prod) < EPS_ZERO ** 3:
        raise PhaseUndefinedError("total phase undefined: an amplitude is (near) zero")
    return wrap_phase(cmath.phase(prod))


def polar_rhs(p: PolarTriple) -> Tuple[Tuple[float, float, float], Tuple[float, float, float]]:
    """Same-sign right-hand sides in polar form.

    Returns ``(d(r_j^2)/dtau, d(theta_j)/dtau)``.  Only meaningful when every
    modulus is nonzero.
    """
    r1, r2, r3 = p.moduli
    if min(r1, r2, r3) < EPS_ZERO:
        raise PhaseUndefinedError("polar equations require nonzero moduli")
    theta = p.th1 + p.th2 + p.th3
    s = 2.0 * r1 * r2 * r3 * math.sin(theta)
    c = math.cos(theta)
    return (s, s, s), (r2 * r3 * c / r1, r1 * r3 * c / r2, r1 * r2 * c / r3)
