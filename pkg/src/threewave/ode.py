"""Blow-up aware integration and classification of the uniform triad system."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    EPS_ZERO,
    SAME_SIGN,
    ComplexTriple,
    CouplingSignature,
    InvalidStateError,
    invariants_array,
    phase_distance,
    total_phase,
)

R_MAX = 1e8
DT_MIN = 1e-12
K_FIT = 10
EPS_PHASE = 1e-9
EPS_AMP = 1e-9
NEAR_FACTOR = 10.0
DELTA_SETTLE = 5
MAX_STEPS = 2_000_000

# |h * lambda| cap; DP5's real stability interval reaches about -3.3 and
# R(-2) > 0 keeps decaying components from flipping sign.
STABILITY_CAP = 2.0


class EstimationError(ValueError):
    pass


class Termination(str, enum.Enum):
    COMPLETED = "Completed"
    BLOWUP = "BlowUpDetected"
    UNDERFLOW = "StepSizeUnderflow"
    DRIFT_ABORT = "DriftAbort"
    RESOLUTION_ABORT = "ResolutionAbort"


class Verdict(str, enum.Enum):
    EQUILIBRIUM = "Equilibrium"
    GLOBAL_DECAY = "GlobalDecay"
    CASE1 = "BlowUpCase1"
    CASE2 = "BlowUpCase2"
    CASE3 = "BlowUpCase3"
    NEAR_BOUNDARY = "NearBoundary"

    @property
    def blows_up(self) -> Optional[bool]:
        if self is Verdict.NEAR_BOUNDARY:
            return None
        return self in (Verdict.CASE1, Verdict.CASE2, Verdict.CASE3)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n, 3) complex
    invariant_samples: np.ndarray  # (n, 3): m12, m13, h
    termination: Termination
    t_star_estimate: Optional[float] = None
    coupling: CouplingSignature = SAME_SIGN

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.states)

    @property
    def max_modulus(self) -> np.ndarray:
        return np.abs(self.states).max(axis=1)

    @property
    def final(self) -> ComplexTriple:
        return ComplexTriple.from_array(self.states[-1])

    def invariant_drift(self) -> np.ndarray:
        """Max |I(tau) - I(0)| for (m12, m13, h)."""
        return np.abs(self.invariant_samples - self.invariant_samples[0]).max(axis=0)


# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _validate(a0: ComplexTriple, tau_end: float, tol: float) -> None:
    if not a0.is_finite():
        raise ValueError(f"non-finite initial state {a0}")
    if not (tau_end > 0 and math.isfinite(tau_end)):
        raise ValueError(f"tau_end must be positive and finite, got {tau_end!r}")
    if not (1e-14 <= tol <= 1e-3):
        raise ValueError(f"tol must lie in [1e-14, 1e-3], got {tol!r}")


def integrate(a0: ComplexTriple, g: CouplingSignature = SAME_SIGN,
              tau_end: float = 10.0, tol: float = 1e-10, *,
              r_max: float = R_MAX, dt_min: float = DT_MIN,
              max_steps: int = MAX_STEPS) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) integration with PI step control.

    Every accepted step is recorded.  The scaled local error estimate is
    kept at or below ``tol * (1 + |A_j|)`` per component (RMS over the
    three components).  Integration stops at ``tau_end``, when the largest
    modulus reaches ``r_max`` (blow-up, with an extrapolated singular time)
    or when an accepted step would fall below ``dt_min``.
    """
    a0 = ComplexTriple(*a0)
    _validate(a0, tau_end, tol)
    g1, g2, g3 = (1j * g.g1, 1j * g.g2, 1j * g.g3)

    y1, y2, y3 = a0
    times: List[float] = [0.0]
    states: List[Tuple[complex, complex, complex]] = [(y1, y2, y3)]

    def f(u1, u2, u3):
        return (g1 * (u2 * u3).conjugate(), g2 * (u1 * u3).conjugate(),
                g3 * (u1 * u2).conjugate())

    k1 = f(y1, y2, y3)
    rmax = max(abs(y1), abs(y2), abs(y3))
    termination = Termination.COMPLETED
    if rmax >= r_max:
        termination = Termination.BLOWUP

    # Hairer's starting-step heuristic
    sc = [tol * (1.0 + abs(v)) for v in (y1, y2, y3)]
    d0 = math.sqrt(sum((abs(v) / s) ** 2 for v, s in zip((y1, y2, y3), sc)) / 3)
    d1 = math.sqrt(sum((abs(v) / s) ** 2 for v, s in zip(k1, sc)) / 3)
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h = min(h, tau_end, STABILITY_CAP / max(rmax, 1e-300))

    t = 0.0
    err_prev = 1e-4
    rejected = False
    steps = 0
    while termination is Termination.COMPLETED and t < tau_end:
        steps += 1
        if steps > max_steps:
            termination = Termination.UNDERFLOW
            break
        h = min(h, STABILITY_CAP / max(rmax, 1e-300))
        clipped = False
        if t + h >= tau_end:
            h = tau_end - t
            clipped = True
        if h < dt_min and not clipped:
            termination = Termination.UNDERFLOW
            break

        a, b, c = k1
        s2 = f(y1 + h * _A21 * a, y2 + h * _A21 * b, y3 + h * _A21 * c)
        s3 = f(y1 + h * (_A31 * a + _A32 * s2[0]),
               y2 + h * (_A31 * b + _A32 * s2[1]),
               y3 + h * (_A31 * c + _A32 * s2[2]))
        s4 = f(y1 + h * (_A41 * a + _A42 * s2[0] + _A43 * s3[0]),
               y2 + h * (_A41 * b + _A42 * s2[1] + _A43 * s3[1]),
               y3 + h * (_A41 * c + _A42 * s2[2] + _A43 * s3[2]))
        s5 = f(y1 + h * (_A51 * a + _A52 * s2[0] + _A53 * s3[0] + _A54 * s4[0]),
               y2 + h * (_A51 * b + _A52 * s2[1] + _A53 * s3[1] + _A54 * s4[1]),
               y3 + h * (_A51 * c + _A52 * s2[2] + _A53 * s3[2] + _A54 * s4[2]))
        s6 = f(y1 + h * (_A61 * a + _A62 * s2[0] + _A63 * s3[0] + _A64 * s4[0] + _A65 * s5[0]),
               y2 + h * (_A61 * b + _A62 * s2[1] + _A63 * s3[1] + _A64 * s4[1] + _A65 * s5[1]),
               y3 + h * (_A61 * c + _A62 * s2[2] + _A63 * s3[2] + _A64 * s4[2] + _A65 * s5[2]))
        n1 = y1 + h * (_B1 * a + _B3 * s3[0] + _B4 * s4[0] + _B5 * s5[0] + _B6 * s6[0])
        n2 = y2 + h * (_B1 * b + _B3 * s3[1] + _B4 * s4[1] + _B5 * s5[1] + _B6 * s6[1])
        n3 = y3 + h * (_B1 * c + _B3 * s3[2] + _B4 * s4[2] + _B5 * s5[2] + _B6 * s6[2])
        s7 = f(n1, n2, n3)

        err = 0.0
        for j, (yo, yn) in enumerate(((y1, n1), (y2, n2), (y3, n3))):
            e = h * (_E1 * k1[j] + _E3 * s3[j] + _E4 * s4[j] + _E5 * s5[j]
                     + _E6 * s6[j] + _E7 * s7[j])
            scale = tol * (1.0 + max(abs(yo), abs(yn)))
            err += (abs(e) / scale) ** 2
        err = math.sqrt(err / 3.0)
        if not math.isfinite(err):
            err = 1e10

        if err <= 1.0:
            t = tau_end if clipped else t + h
            y1, y2, y3 = n1, n2, n3
            k1 = s7
            times.append(t)
            states.append((y1, y2, y3))
            rmax = max(abs(y1), abs(y2), abs(y3))
            if not math.isfinite(rmax) or rmax >= r_max:
                termination = Termination.BLOWUP
                break
            err = max(err, 1e-10)
            fac = 0.9 * err ** (-0.7 / 5) * err_prev ** (0.4 / 5)
            fac = min(10.0, max(0.2, fac))
            if rejected:
                fac = min(fac, 1.0)
            if not clipped:
                h *= fac
            err_prev = err
            rejected = False
        else:
            h *= max(0.2, 0.9 * err ** (-1 / 5))
            rejected = True

    arr = np.array(states, dtype=complex)
    traj = Trajectory(
        times=np.array(times),
        states=arr,
        invariant_samples=invariants_array(arr, g),
        termination=termination,
        coupling=g,
    )
    if termination is Termination.BLOWUP:
        try:
            traj.t_star_estimate = estimate_blowup_time(traj)
        except EstimationError:
            traj.t_star_estimate = None
    return traj


def integrate_reversed(b0: ComplexTriple, g: CouplingSignature = SAME_SIGN,
                       eta_end: float = 10.0, tol: float = 1e-10, **kw) -> Trajectory:
    """Integrate dB/deta = -rhs(B), i.e. the flow run backwards in time."""
    neg = CouplingSignature(-g.g1, -g.g2, -g.g3)
    traj = integrate(b0, neg, eta_end, tol, **kw)
    traj.invariant_samples = invariants_array(traj.states, g)
    traj.coupling = g
    return traj


def fit_singular_time(times: Sequence[float], amplitudes: Sequence[float]) -> float:
    """Least-squares line through (tau, 1/amplitude); return its tau-intercept."""
    t = np.asarray(times, dtype=float)
    y = 1.0 / np.asarray(amplitudes, dtype=float)
    t_ref = t[-1]
    tc = t - t_ref
    A = np.vstack([tc, np.ones_like(tc)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    if not slope < 0:
        raise EstimationError("1/amplitude is not decreasing; no singularity ahead")
    t_star = t_ref - icpt / slope
    if not t_star > t[-1]:
        raise EstimationError(f"extrapolated time {t_star} does not exceed last sample {t[-1]}")
    return float(t_star)


def estimate_blowup_time(traj: Trajectory, k_fit: int = K_FIT, r_max: float = R_MAX) -> float:
    rm = traj.max_modulus
    finite = np.isfinite(rm)
    times, rm = traj.times[finite], rm[finite]
    if traj.termination is not Termination.BLOWUP and not (len(rm) and rm[-1] >= 0.01 * r_max):
        raise EstimationError("trajectory has not approached the blow-up threshold")
    if len(rm) < k_fit:
        raise EstimationError(f"need at least {k_fit} samples, have {len(rm)}")
    return fit_singular_time(times[-k_fit:], rm[-k_fit:])


def decay_closed_form(r0: float, tau: float) -> float:
    """Equal-modulus decay law as printed for the locked-phase family:
    ``r0 / (1 + 2 r0 tau)``.  See ``decay_substituted_form``."""
    if not r0 > 0:
        raise ValueError(f"r0 must be positive, got {r0!r}")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return r0 / (1.0 + 2.0 * r0 * tau)


def decay_substituted_form(r0: float, tau: float) -> float:
    """Solution of dr/dtau = -r^2, which is what equal moduli with total
    phase 3*pi/2 give on direct substitution."""
    if not r0 > 0:
        raise ValueError(f"r0 must be positive, got {r0!r}")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return r0 / (1.0 + r0 * tau)


def blowup_closed_form(r0: float, tau: float) -> float:
    """Riccati solution r0 / (1 - r0 tau) of dr/dtau = r^2."""
    if not r0 > 0:
        raise ValueError(f"r0 must be positive, got {r0!r}")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau >= 1.0 / r0:
        raise ValueError(f"tau={tau} is at or past the singularity 1/r0={1.0 / r0}")
    return r0 / (1.0 - r0 * tau)


@dataclass
class ClassificationResult:
    verdict: Verdict
    permutation: Tuple[int, int, int]
    details: str
    theta: Optional[float] = None
    d0: Optional[float] = None


def classify(a0: ComplexTriple, *, eps_zero: float = EPS_ZERO, eps_phase: float = EPS_PHASE,
             eps_amp: float = EPS_AMP, near_factor: float = NEAR_FACTOR) -> ClassificationResult:
    """Global existence vs finite-time blow-up for same-sign uniform data.

    Components are sorted by modulus (descending); ``permutation[k]`` is the
    original index of the k-th largest.  Deciding quantities that fall just
    outside an exact-intent tolerance (between eps and near_factor*eps) give
    ``NearBoundary`` instead of a verdict.
    """
    a0 = ComplexTriple(*a0)
    if not a0.is_finite():
        raise InvalidStateError(f"non-finite state {a0}")
    r = a0.moduli
    perm = tuple(sorted(range(3), key=lambda j: -r[j]))
    big, mid, small = (r[j] for j in perm)
    d0 = big - mid
    res = lambda v, why, theta=None: ClassificationResult(v, perm, why, theta, d0)

    n_zero = sum(v < eps_zero for v in r)
    if n_zero >= 2:
        return res(Verdict.EQUILIBRIUM, f"two or more moduli below {eps_zero:g}")
    if n_zero == 1:
        if mid < near_factor * eps_zero:
            return res(Verdict.NEAR_BOUNDARY, "middle modulus within 10x of the zero threshold")
        return res(Verdict.CASE1, "exactly one modulus is zero")
    if small < near_factor * eps_zero:
        return res(Verdict.NEAR_BOUNDARY, "smallest modulus within 10x of the zero threshold")

    theta = total_phase(a0)
    dphase = phase_distance(theta, 1.5 * math.pi)
    if dphase > near_factor * eps_phase:
        return res(Verdict.CASE3, f"total phase {theta:.12g} is not 3pi/2", theta)
    if dphase > eps_phase:
        return res(Verdict.NEAR_BOUNDARY, f"total phase within {dphase:.3g} of 3pi/2", theta)

    gap = mid - small
    if gap > near_factor * eps_amp:
        return res(Verdict.CASE2, f"phase 3pi/2 and smallest modulus below the others by {gap:.3g}", theta)
    if gap > eps_amp:
        return res(Verdict.NEAR_BOUNDARY, f"two smallest moduli differ by {gap:.3g}", theta)
    return res(Verdict.GLOBAL_DECAY, "phase 3pi/2 with the two smallest moduli equal", theta)


def theta_series(traj: Trajectory) -> np.ndarray:
    """Total phase at each sample in [0, 2pi); NaN where undefined."""
    prod = traj.states[:, 0] * traj.states[:, 1] * traj.states[:, 2]
    ok = traj.moduli.min(axis=1) >= EPS_ZERO
    th = np.full(len(prod), np.nan)
    th[ok] = np.mod(np.angle(prod[ok]), 2 * math.pi)
    return th


@dataclass
class PhaseLockReport:
    applicable: bool
    reason: str
    component: Optional[int] = None
    crossing_index: Optional[int] = None
    crossing_time: Optional[float] = None
    max_dev_after_crossing: float = float("nan")
    max_dev_settled: float = float("nan")
    max_abs_h: float = float("nan")
    passed: Optional[bool] = None


def _find_zero_crossing(traj: Trajectory, eps_zero: float) -> Optional[Tuple[int, int]]:
    """(component, index of first post-crossing sample) for the first zero
    crossing.  A crossing is a sample with modulus below eps_zero, or two
    consecutive samples pointing into opposite half-planes."""
    s = traj.states
    mod = np.abs(s)
    best = None
    for j in range(3):
        at_zero = np.nonzero(mod[:, j] < eps_zero)[0]
        flips = np.nonzero((s[:-1, j] * s[1:, j].conjugate()).real < 0)[0] + 1
        cands = []
        if len(at_zero):
            cands.append(int(at_zero[0]))
        if len(flips):
            cands.append(int(flips[0]))
        if cands:
            k = min(cands)
            if best is None or k < best[1]:
                best = (j, k)
    return best


def phase_lock_check(traj: Trajectory, eps_phase: float = 1e-6, h_tol: float = 1e-8,
                     settle: int = DELTA_SETTLE, eps_zero: float = EPS_ZERO) -> PhaseLockReport:
    """After one amplitude passes through zero, the total phase must sit at
    pi/2 (H is then zero for all time)."""
    found = _find_zero_crossing(traj, eps_zero)
    if found is None:
        return PhaseLockReport(False, "no zero crossing found")
    j, k = found
    mod = traj.moduli
    others = [i for i in range(3) if i != j]
    if mod[k, others].min() < eps_zero:
        return PhaseLockReport(False, "more than one amplitude vanishes at the crossing")
    th = theta_series(traj)
    first = k + 1 if mod[k, j] < eps_zero else k
    after = th[first:]
    settled = th[first + settle:]
    dev = lambda x: float(np.nanmax(np.abs(x - 0.5 * math.pi))) if np.any(np.isfinite(x)) else float("nan")
    max_h = float(np.abs(traj.invariant_samples[:, 2]).max())
    rep = PhaseLockReport(
        True, "zero crossing found", component=j, crossing_index=k,
        crossing_time=float(traj.times[k]),
        max_dev_after_crossing=dev(after), max_dev_settled=dev(settled), max_abs_h=max_h,
    )
    rep.passed = bool(np.isfinite(rep.max_dev_settled) and rep.max_dev_settled < eps_phase
                      and max_h < h_tol)
    return rep
