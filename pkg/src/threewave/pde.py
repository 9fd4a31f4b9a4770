"""Periodic-domain triad PDE solver.

Each component obeys ``dA_j/dtau + c_j . grad A_j = i g_j conj(A_k A_l)`` on
the box ``|x_k| < a_k`` with periodic identification.  Time stepping is
Strang splitting: constant-velocity transport is applied exactly as a
Fourier phase shift, and the pointwise coupling is advanced with classical
RK4 at every grid point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .core import EPS_ZERO, SAME_SIGN, CouplingSignature, VelocitySet
from .ode import K_FIT, R_MAX, EstimationError, Termination, fit_singular_time

DRIFT_ABORT_TOL = 1e-4
TAIL_TOL = 1e-6
# RK4 resolves the local time scale 1/|A| while |A| * dt stays below this
RESOLVED_RDT = 0.05
FIT_RDT = 0.02
BLOWUP_GROWTH = 10.0


class BlowUpReached(ArithmeticError):
    def __init__(self, component: int, index: Tuple[int, ...], message: str = ""):
        self.component = component
        self.index = index
        super().__init__(message or f"non-finite amplitude in A{component + 1} at grid index {index}")


@dataclass(frozen=True)
class PeriodicDomain:
    half_widths: Tuple[float, ...]

    def __post_init__(self):
        hw = tuple(float(a) for a in np.atleast_1d(self.half_widths))
        if len(hw) not in (1, 2) or not all(a > 0 and math.isfinite(a) for a in hw):
            raise ValueError(f"half_widths must be 1 or 2 positive numbers, got {hw!r}")
        object.__setattr__(self, "half_widths", hw)

    @property
    def dim(self) -> int:
        return len(self.half_widths)

    @property
    def measure(self) -> float:
        return float(np.prod([2 * a for a in self.half_widths]))

    def spacing(self, shape: Sequence[int]) -> Tuple[float, ...]:
        return tuple(2 * a / n for a, n in zip(self.half_widths, shape))

    def axes(self, shape: Sequence[int]) -> List[np.ndarray]:
        return [-a + np.arange(n) * (2 * a / n) for a, n in zip(self.half_widths, shape)]

    def mesh(self, shape: Sequence[int]) -> List[np.ndarray]:
        return np.meshgrid(*self.axes(shape), indexing="ij")

    def wavenumbers(self, shape: Sequence[int]) -> List[np.ndarray]:
        ks = [2 * np.pi * np.fft.fftfreq(n, d=2 * a / n) for a, n in zip(self.half_widths, shape)]
        return np.meshgrid(*ks, indexing="ij")


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass
class TriadField:
    domain: PeriodicDomain
    data: np.ndarray  # (3, N_1[, N_2]) complex

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.ndim != self.domain.dim + 1 or self.data.shape[0] != 3:
            raise ValueError(f"data shape {self.data.shape} does not match a {self.domain.dim}-d triad")
        if not all(_is_pow2(n) for n in self.resolution):
            raise ValueError(f"grid resolution must be powers of two, got {self.resolution}")
        if not np.isfinite(self.data).all():
            raise ValueError("field samples must be finite")

    @property
    def resolution(self) -> Tuple[int, ...]:
        return tuple(self.data.shape[1:])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.domain.spacing(self.resolution)))

    def copy(self) -> "TriadField":
        return TriadField(self.domain, self.data.copy())

    @classmethod
    def uniform(cls, domain: PeriodicDomain, shape: Sequence[int], values) -> "TriadField":
        data = np.empty((3, *shape), dtype=complex)
        for j in range(3):
            data[j] = values[j]
        return cls(domain, data)


def advect(u: np.ndarray, c: Sequence[float], dt: float, domain: PeriodicDomain) -> np.ndarray:
    """Exact periodic shift u(x) -> u(x - c*dt) via Fourier phase factors."""
    shift = [float(ck) * dt for ck in np.atleast_1d(c)]
    if len(shift) != u.ndim:
        raise ValueError(f"velocity of dimension {len(shift)} for a {u.ndim}-d field")
    if not any(shift):
        return np.array(u, dtype=complex, copy=True)
    ks = domain.wavenumbers(u.shape)
    phase = sum(k * s for k, s in zip(ks, shift))
    return np.fft.ifftn(np.fft.fftn(u) * np.exp(-1j * phase))


def _rhs(A: np.ndarray, g: CouplingSignature) -> np.ndarray:
    out = np.empty_like(A)
    out[0] = (1j * g.g1) * np.conj(A[1] * A[2])
    out[1] = (1j * g.g2) * np.conj(A[0] * A[2])
    out[2] = (1j * g.g3) * np.conj(A[0] * A[1])
    return out


def rk4_pointwise(A: np.ndarray, g: CouplingSignature, dt: float) -> np.ndarray:
    k1 = _rhs(A, g)
    k2 = _rhs(A + 0.5 * dt * k1, g)
    k3 = _rhs(A + 0.5 * dt * k2, g)
    k4 = _rhs(A + dt * k3, g)
    return A + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _raise_if_nonfinite(A: np.ndarray) -> None:
    bad = ~np.isfinite(A)
    if bad.any():
        loc = np.argwhere(bad)[0]
        raise BlowUpReached(int(loc[0]), tuple(int(i) for i in loc[1:]))


def nonlinear_step(f: TriadField, g: CouplingSignature, dt: float) -> TriadField:
    if not dt > 0:
        raise ValueError("dt must be positive")
    with np.errstate(over="ignore", invalid="ignore"):
        out = rk4_pointwise(f.data, g, dt)
    _raise_if_nonfinite(out)
    return TriadField(f.domain, out)


def _advect_all(data: np.ndarray, v: VelocitySet, dt: float, domain: PeriodicDomain) -> np.ndarray:
    return np.stack([advect(data[j], c, dt, domain) for j, c in enumerate(v)])


def step_strang(f: TriadField, g: CouplingSignature, v: VelocitySet, dt: float) -> TriadField:
    """Half transport, full coupling step, half transport."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    half = _advect_all(f.data, v, 0.5 * dt, f.domain)
    mid = nonlinear_step(TriadField(f.domain, half), g, dt)
    return TriadField(f.domain, _advect_all(mid.data, v, 0.5 * dt, f.domain))


def integral_invariants(f: TriadField, g: CouplingSignature = SAME_SIGN) -> Tuple[float, float]:
    """Grid quadrature of the sign-generalized Manley-Rowe densities."""
    s = np.abs(f.data) ** 2
    dv = f.cell_volume
    k1 = float(np.sum(g.g2 * s[0] - g.g1 * s[1]) * dv)
    k2 = float(np.sum(g.g3 * s[0] - g.g1 * s[2]) * dv)
    return k1, k2


def field_energy(f: TriadField) -> float:
    return float(np.sum(np.abs(f.data) ** 2) * f.cell_volume)


def grid_min_amplitude(f: TriadField) -> float:
    return float(np.abs(f.data).min())


def spectral_tail(f: TriadField) -> float:
    """Largest (over components) fraction of spectral energy carried by the
    top third of resolved wavenumbers on any axis."""
    shape = f.resolution
    idx = np.meshgrid(*[np.abs(np.fft.fftfreq(n) * n) / (n / 2) for n in shape], indexing="ij")
    high = np.zeros(shape, dtype=bool)
    for frac in idx:
        high |= frac > 2.0 / 3.0
    worst = 0.0
    for j in range(3):
        p = np.abs(np.fft.fftn(f.data[j])) ** 2
        tot = p.sum()
        if tot > 0:
            worst = max(worst, float(p[high].sum() / tot))
    return worst


def riccati_lower_bound(f0: float, tau0: float, tau: float) -> float:
    """Comparison solution of g' = g^2 started strictly below f0:
    ``C0 / (1 - C0 (tau - tau0))`` with ``C0 = 0.99 f0``."""
    if not f0 > 0:
        raise ValueError(f"f0 must be positive, got {f0!r}")
    if tau < tau0:
        raise ValueError("tau must not precede tau0")
    c0 = 0.99 * f0
    if tau - tau0 >= 1.0 / c0:
        raise ValueError(f"tau={tau} is at or past the comparison singularity {tau0 + 1.0 / c0}")
    return c0 / (1.0 - c0 * (tau - tau0))


def default_dt(f: TriadField) -> float:
    m = float(np.abs(f.data).max())
    return 1e-3 / m if m > 0 else 1e-3


@dataclass
class FieldTrajectory:
    times: np.ndarray
    invariants: np.ndarray  # (n, 2): K1, K2
    energy: np.ndarray
    rmin: np.ndarray  # (n, 3)
    rmax: np.ndarray  # (n, 3)
    f_min: np.ndarray
    tail: np.ndarray
    termination: Termination
    dt: float
    t_star_estimate: Optional[float] = None
    blowup_location: Optional[dict] = None
    resolution_warning: bool = False
    message: str = ""
    snapshots: List[Tuple[float, np.ndarray]] = field(default_factory=list)
    step_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    step_max: np.ndarray = field(default_factory=lambda: np.empty(0))
    final: Optional[TriadField] = None

    @property
    def max_modulus(self) -> np.ndarray:
        return self.rmax.max(axis=1)

    def invariant_drift(self) -> np.ndarray:
        return np.abs(self.invariants - self.invariants[0]).max(axis=0)


def _location(f: TriadField, component: int, index: Tuple[int, ...]) -> dict:
    axes = f.domain.axes(f.resolution)
    return {"component": component + 1, "index": list(index),
            "x": [float(ax[i]) for ax, i in zip(axes, index)]}


def run_pde(f0: TriadField, g: CouplingSignature, v: VelocitySet, *, tau_end: float,
            dt: Optional[float] = None, sample_interval: Optional[float] = None,
            snapshot_every: int = 0, r_max: float = R_MAX,
            drift_abort_tol: float = DRIFT_ABORT_TOL, tail_tol: float = TAIL_TOL,
            on_sample: Optional[Callable[[float, TriadField], None]] = None) -> FieldTrajectory:
    """Advance with fixed-step Strang splitting and record diagnostics.

    Stops at ``tau_end``, at blow-up (non-finite value or modulus above
    ``r_max``), at invariant drift beyond ``drift_abort_tol`` (relative to
    ``max(1, energy)``) or when the spectral tail exceeds ``tail_tol``.
    Drift and tail checks apply only while ``max|A| * dt`` is small enough
    for RK4 to follow the local time scale.  A tail breach after the sup
    norm has grown tenfold is reported as blow-up with
    ``resolution_warning`` set; otherwise it is a resolution abort.
    """
    if v.dim != f0.domain.dim:
        raise ValueError("velocity dimension does not match the domain")
    if not tau_end > 0:
        raise ValueError("tau_end must be positive")
    dt = default_dt(f0) if dt is None else float(dt)
    if not dt > 0:
        raise ValueError("dt must be positive")
    n_steps = max(1, int(round(tau_end / dt)))
    dt = tau_end / n_steps
    every = 1 if sample_interval is None else max(1, int(round(sample_interval / dt)))

    rec = {k: [] for k in ("t", "inv", "en", "rmin", "rmax", "f", "tail")}
    snapshots: List[Tuple[float, np.ndarray]] = []
    step_t: List[float] = [0.0]
    step_m: List[float] = [float(np.abs(f0.data).max())]
    m0 = max(step_m[0], 1e-300)

    def record(tau: float, fld: TriadField) -> Tuple[np.ndarray, float]:
        mod = np.abs(fld.data).reshape(3, -1)
        inv = np.array(integral_invariants(fld, g))
        tail = spectral_tail(fld)
        rec["t"].append(tau)
        rec["inv"].append(inv)
        rec["en"].append(field_energy(fld))
        rec["rmin"].append(mod.min(axis=1))
        rec["rmax"].append(mod.max(axis=1))
        rec["f"].append(float(mod.min()))
        rec["tail"].append(tail)
        if snapshot_every and (len(rec["t"]) - 1) % snapshot_every == 0:
            snapshots.append((tau, fld.data.copy()))
        if on_sample is not None:
            on_sample(tau, fld)
        return inv, tail

    inv0, _ = record(0.0, f0)
    fld = f0
    termination = Termination.COMPLETED
    location = None
    warning = False
    message = ""
    for n in range(1, n_steps + 1):
        tau = n * dt
        try:
            fld = step_strang(fld, g, v, dt)
        except BlowUpReached as exc:
            termination = Termination.BLOWUP
            location = _location(fld, exc.component, exc.index)
            message = "non-finite amplitude"
            break
        mod = np.abs(fld.data)
        mmax = float(mod.max())
        step_t.append(tau)
        step_m.append(mmax)
        if not math.isfinite(mmax) or mmax >= r_max:
            termination = Termination.BLOWUP
            loc = np.unravel_index(int(np.nanargmax(np.where(np.isfinite(mod), mod, np.inf))), mod.shape)
            location = _location(fld, int(loc[0]), tuple(int(i) for i in loc[1:]))
            message = f"modulus reached {mmax:.3g}"
            record(tau, fld)
            break
        if n % every == 0 or n == n_steps:
            inv, tail = record(tau, fld)
            if mmax * dt < RESOLVED_RDT:
                scale = max(1.0, rec["en"][-1])
                drift = float(np.abs(inv - inv0).max()) / scale
                if drift > drift_abort_tol:
                    termination = Termination.DRIFT_ABORT
                    message = f"integral invariant drift {drift:.3g} exceeds {drift_abort_tol:g}"
                    break
            if tail > tail_tol:
                warning = True
                loc = np.unravel_index(int(np.argmax(mod)), mod.shape)
                location = _location(fld, int(loc[0]), tuple(int(i) for i in loc[1:]))
                if mmax >= BLOWUP_GROWTH * m0:
                    termination = Termination.BLOWUP
                    message = (f"resolution lost during blow-up (tail {tail:.3g}, "
                               f"sup grew x{mmax / m0:.3g})")
                else:
                    termination = Termination.RESOLUTION_ABORT
                    message = f"spectral tail {tail:.3g} exceeds {tail_tol:g}"
                break

    traj = FieldTrajectory(
        times=np.array(rec["t"]),
        invariants=np.array(rec["inv"]),
        energy=np.array(rec["en"]),
        rmin=np.array(rec["rmin"]),
        rmax=np.array(rec["rmax"]),
        f_min=np.array(rec["f"]),
        tail=np.array(rec["tail"]),
        termination=termination,
        dt=dt,
        blowup_location=location if termination is Termination.BLOWUP else None,
        resolution_warning=warning,
        message=message,
        snapshots=snapshots,
        step_times=np.array(step_t),
        step_max=np.array(step_m),
        final=fld,
    )
    if termination is Termination.BLOWUP:
        try:
            traj.t_star_estimate = estimate_field_blowup_time(traj)
        except EstimationError:
            traj.t_star_estimate = None
    return traj


def estimate_field_blowup_time(traj: FieldTrajectory, k_fit: int = K_FIT) -> float:
    """Extrapolate 1/max|A| to zero using the last steps that RK4 still
    resolved (``max|A| * dt <= FIT_RDT``)."""
    t, m = traj.step_times, traj.step_max
    ok = np.isfinite(m) & (m * traj.dt <= FIT_RDT)
    # only the leading resolved stretch: stop at the first unresolved step
    bad = np.nonzero(~ok)[0]
    end = bad[0] if len(bad) else len(m)
    if end < k_fit:
        raise EstimationError(f"need {k_fit} resolved steps, have {end}")
    return fit_singular_time(t[end - k_fit:end], m[end - k_fit:end])


@dataclass
class TransportInvariantReport:
    applicable: bool
    reason: str = ""
    max_defect_k1: float = float("nan")
    max_defect_k2: float = float("nan")
    sup_bound_loose: float = float("nan")
    sup_bounds: Tuple[float, float, float] = (float("nan"),) * 3
    max_sup: Tuple[float, float, float] = (float("nan"),) * 3
    max_bound_excess: float = float("nan")
    trajectory: Optional[FieldTrajectory] = None


class TransportInvariantMonitor:
    """Per-sample comparison of |A1|^2+|A2|^2 and |A1|^2+|A3|^2 with their
    initial profiles carried along the common characteristic x = xi + c*tau.

    Sup-norm bounds follow from the same identities: |A1|^2 <= min(K1, K2),
    |A2|^2 <= K1, |A3|^2 <= K2 pointwise.
    """

    def __init__(self, f0: TriadField, g: CouplingSignature, v: VelocitySet):
        self.applicable = tuple(g) == (1, -1, -1) and v.all_equal
        if tuple(g) != (1, -1, -1):
            self.reason = "requires coupling signs (1, -1, -1)"
        elif not v.all_equal:
            self.reason = "requires equal velocities"
        else:
            self.reason = "ok"
        self.c = v.c1
        s0 = np.abs(f0.data) ** 2
        self.k1_0 = s0[0] + s0[1]
        self.k2_0 = s0[0] + s0[2]
        self.bounds = np.sqrt([np.minimum(self.k1_0, self.k2_0).max(), self.k1_0.max(), self.k2_0.max()])
        self.d1 = self.d2 = 0.0
        self.excess = -np.inf
        self.sup = np.zeros(3)

    def __call__(self, tau: float, fld: TriadField) -> None:
        if not self.applicable:
            return
        s = np.abs(fld.data) ** 2
        ref1 = advect(self.k1_0, self.c, tau, fld.domain).real
        ref2 = advect(self.k2_0, self.c, tau, fld.domain).real
        self.d1 = max(self.d1, float(np.abs(s[0] + s[1] - ref1).max()))
        self.d2 = max(self.d2, float(np.abs(s[0] + s[2] - ref2).max()))
        m = np.sqrt(s.reshape(3, -1).max(axis=1))
        np.maximum(self.sup, m, out=self.sup)
        self.excess = max(self.excess, float(np.max(m - self.bounds)))

    def report(self, traj: Optional[FieldTrajectory] = None) -> TransportInvariantReport:
        if not self.applicable:
            return TransportInvariantReport(False, self.reason, trajectory=traj)
        return TransportInvariantReport(
            True, self.reason, self.d1, self.d2,
            sup_bound_loose=float(self.bounds[1] + self.bounds[2]),
            sup_bounds=tuple(float(b) for b in self.bounds),
            max_sup=tuple(float(x) for x in self.sup),
            max_bound_excess=self.excess, trajectory=traj)


def pointwise_transport_invariants(f0: TriadField, g: CouplingSignature, v: VelocitySet, *,
                                   tau_end: float, dt: Optional[float] = None,
                                   sample_interval: Optional[float] = None) -> TransportInvariantReport:
    """Run the mixed-sign, equal-velocity system with a
    :class:`TransportInvariantMonitor` attached."""
    mon = TransportInvariantMonitor(f0, g, v)
    if not mon.applicable:
        return mon.report()
    traj = run_pde(f0, g, v, tau_end=tau_end, dt=dt, sample_interval=sample_interval, on_sample=mon)
    return mon.report(traj)


class PhaseFreezeMonitor:
    """Largest deviation of arg(A1 A2 A3) from a target over grid points
    whose moduli all exceed ``eps_zero``."""

    def __init__(self, target: float = 0.5 * math.pi, eps_zero: float = EPS_ZERO):
        self.target = target
        self.eps_zero = eps_zero
        self.devs: List[float] = []  # one entry per sample, nan if no grid point qualifies

    @property
    def max_dev(self) -> float:
        return float(np.nanmax(self.devs, initial=0.0))

    def resolved_max_dev(self, traj: FieldTrajectory) -> float:
        """Largest deviation over samples where RK4 still resolves the local
        time scale (max|A| * dt below RESOLVED_RDT)."""
        ok = traj.max_modulus[:len(self.devs)] * traj.dt < RESOLVED_RDT
        return float(np.nanmax(np.asarray(self.devs)[ok], initial=0.0))

    def __call__(self, tau: float, fld: TriadField) -> None:
        d = fld.data
        ok = np.abs(d).min(axis=0) > self.eps_zero
        if not ok.any():
            self.devs.append(float("nan"))
            return
        prod = (d[0] * d[1] * d[2])[ok]
        dev = np.abs(np.angle(prod * np.exp(-1j * self.target)))
        self.devs.append(float(dev.max()))


def chain(*hooks):
    hooks = [h for h in hooks if h is not None]

    def run(tau, fld):
        for h in hooks:
            h(tau, fld)
    return run


SNAPSHOT_MAGIC = "# threewave-snapshot v1"


def write_snapshot(path, f: TriadField, tau: float) -> None:
    """Text grid dump: a small header then one row per grid point,
    ``i[ j] re1 im1 re2 im2 re3 im3`` in C (row-major) order."""
    shape = f.resolution
    with open(path, "w") as fh:
        fh.write(SNAPSHOT_MAGIC + "\n")
        fh.write(f"# dim {f.domain.dim}\n")
        fh.write("# N " + " ".join(str(n) for n in shape) + "\n")
        fh.write("# a " + " ".join(repr(a) for a in f.domain.half_widths) + "\n")
        fh.write(f"# tau {tau!r}\n")
        for idx in np.ndindex(*shape):
            vals = f.data[(slice(None), *idx)]
            cols = [str(i) for i in idx]
            for z in vals:
                cols += [repr(float(z.real)), repr(float(z.imag))]
            fh.write(" ".join(cols) + "\n")


def read_snapshot(path) -> Tuple[TriadField, float]:
    header = {}
    rows = []
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a snapshot file")
        for line in fh:
            if line.startswith("#"):
                key, *vals = line[1:].split()
                header[key] = vals
            elif line.strip():
                rows.append(line.split())
    dim = int(header["dim"][0])
    shape = tuple(int(n) for n in header["N"])
    a = tuple(float(x) for x in header["a"])
    tau = float(header["tau"][0])
    data = np.empty((3, *shape), dtype=complex)
    for row in rows:
        idx = tuple(int(i) for i in row[:dim])
        nums = [float(x) for x in row[dim:]]
        for j in range(3):
            data[(j, *idx)] = complex(nums[2 * j], nums[2 * j + 1])
    return TriadField(PeriodicDomain(a), data), tau
