"""Run scenarios and check the documented properties on the result.

Every property of the relevant modules appears once in a report, with a
verdict of PASS, FAIL or N/A (hypotheses not met) and a measured margin
(positive means satisfied with room to spare).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .core import ComplexTriple, CouplingSignature, polar_rhs, to_polar
from .ode import (
    EPS_AMP,
    Termination,
    Trajectory,
    Verdict,
    classify,
    integrate,
    theta_series,
)
from .pde import (
    FieldTrajectory,
    PhaseFreezeMonitor,
    TransportInvariantMonitor,
    TriadField,
    advect,
    chain,
    riccati_lower_bound,
    run_pde,
)
from .scenarios import ScenarioConfig, build_initial, check_hypotheses

PASS, FAIL, NA = "PASS", "FAIL", "N/A"
ODE_DRIFT_BOUND = 1e-8


@dataclass
class Check:
    name: str
    verdict: str
    margin: float = float("nan")
    detail: str = ""


@dataclass
class RunReport:
    scenario: Dict[str, Any]
    termination: str
    t_star_estimate: Optional[float]
    drift_max: Dict[str, float]
    checks: List[Check] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def add(self, name, ok, margin=float("nan"), detail=""):
        verdict = NA if ok is None else (PASS if ok else FAIL)
        self.checks.append(Check(name, verdict, float(margin), detail))

    def check(self, name) -> Check:
        return next(c for c in self.checks if c.name == name)

    @property
    def all_passed(self) -> bool:
        return all(c.verdict != FAIL for c in self.checks)

    def to_dict(self):
        return asdict(self)

    def render(self) -> str:
        lines = ["# run report"]
        for k, v in self.scenario.items():
            lines.append(f"scenario.{k}: {v}")
        lines.append(f"termination: {self.termination}")
        t = "none" if self.t_star_estimate is None else repr(self.t_star_estimate)
        lines.append(f"t_star_estimate: {t}")
        for k, v in self.drift_max.items():
            lines.append(f"drift_max.{k}: {v:.3e}")
        for n in self.notes:
            lines.append(f"note: {n}")
        for c in self.checks:
            margin = "" if math.isnan(c.margin) else f" margin={c.margin:.3e}"
            detail = f" ({c.detail})" if c.detail else ""
            lines.append(f"{c.verdict:4s}  {c.name}{margin}{detail}")
        return "\n".join(lines) + "\n"


def scenario_echo(cfg: ScenarioConfig, seed: int) -> Dict[str, Any]:
    out = {"kind": cfg.kind, "gamma": list(cfg.gamma), "tau_end": cfg.tau_end, "seed": seed}
    if cfg.initial.preset:
        out["preset"] = cfg.initial.preset
        if cfg.initial.params:
            out["preset_params"] = dict(cfg.initial.params)
    if cfg.initial.triple is not None:
        out["initial"] = [str(z) for z in cfg.initial.triple]
    if cfg.kind == "ode":
        out["tol"] = cfg.tol
    else:
        out["dt"] = cfg.dt
        out["velocities"] = [list(c) for c in cfg.velocities]
        out["half_widths"] = list(cfg.domain.half_widths)
        out["resolution"] = list(cfg.resolution)
    return out


# ------------------------------------------------------------------- ODE

def polar_consistency(a: ComplexTriple, g: CouplingSignature, steps=(1e-3, 1e-4)) -> Tuple[float, float, float]:
    """Forward differences of r_j^2 and theta_j against the polar right-hand
    sides.  Returns (error at steps[0], error at steps[1], observed order)."""
    p = to_polar(a)
    d_r2, d_th = polar_rhs(p)
    d_r2 = [gj * x for gj, x in zip(g, d_r2)]
    d_th = [gj * x for gj, x in zip(g, d_th)]
    errs = []
    for h in steps:
        b = integrate(a, g, h, 1e-13).final
        q = to_polar(b)
        e = 0.0
        for j in range(3):
            fd_r2 = (q.moduli[j] ** 2 - p.moduli[j] ** 2) / h
            dth = q.phases[j] - p.phases[j]
            dth = (dth + math.pi) % (2 * math.pi) - math.pi
            scale_r = 1.0 + abs(d_r2[j])
            scale_t = 1.0 + abs(d_th[j])
            e = max(e, abs(fd_r2 - d_r2[j]) / scale_r, abs(dth / h - d_th[j]) / scale_t)
        errs.append(e)
    order = math.log(errs[0] / errs[1]) / math.log(steps[0] / steps[1]) if errs[1] > 0 else float("inf")
    return errs[0], errs[1], order


def case1_growth_law(a: ComplexTriple, g: CouplingSignature, k_big: int, consts, steps=(1e-3, 1e-4)):
    """Finite differences of r^2 for the largest modulus against
    2 r sqrt(r^2 - K_a) sqrt(r^2 - K_b)."""
    r = abs(a[k_big])
    law = 2.0 * r * math.sqrt(r * r - consts[0]) * math.sqrt(r * r - consts[1])
    errs = []
    for h in steps:
        b = integrate(a, g, h, 1e-13).final
        fd = (abs(b[k_big]) ** 2 - r * r) / h
        errs.append(abs(fd - law) / (1.0 + abs(law)))
    order = math.log(errs[0] / errs[1]) / math.log(steps[0] / steps[1]) if errs[1] > 0 else float("inf")
    return errs[0], errs[1], order


FD_MAX_MODULUS = 10.0


def _fd_samples(mod: np.ndarray, eligible, start: int = 0) -> List[int]:
    """Up to three sample indices (first, middle, last eligible) whose moduli
    stay below FD_MAX_MODULUS, so the finite-difference steps are in their
    asymptotic regime."""
    ids = [k for k in range(start, len(mod)) if mod[k].max() <= FD_MAX_MODULUS and eligible(mod[k])]
    if not ids:
        return []
    return sorted({ids[0], ids[len(ids) // 2], ids[-1]})


def _first_order(e0, e1, order, floor=1e-9):
    return e1 < floor or 0.8 <= order <= 1.3


def scaled_drift(traj: Trajectory) -> np.ndarray:
    """Invariant drift divided by the natural size of each invariant so far:
    max(1, running max |A|^2) for m12, m13 and max(1, running max |A|^3) for h."""
    peak = np.maximum.accumulate(traj.moduli.max(axis=1))
    scale = np.stack([np.maximum(1.0, peak ** 2)] * 2 + [np.maximum(1.0, peak ** 3)], axis=1)
    return (np.abs(traj.invariant_samples - traj.invariant_samples[0]) / scale).max(axis=0)


def outcome_agrees(verdict: Verdict, traj: Trajectory) -> Optional[bool]:
    if verdict.blows_up is None:
        return None
    if verdict.blows_up:
        return traj.termination is Termination.BLOWUP
    if traj.termination is not Termination.COMPLETED:
        return False
    m0, m1 = traj.moduli[0], traj.moduli[-1]
    if verdict is Verdict.EQUILIBRIUM:
        return bool(np.array_equal(traj.states[0], traj.states[-1]))
    return bool(np.all(m1 < m0))


def ode_report(cfg: ScenarioConfig, a0: ComplexTriple, traj: Trajectory, seed: int) -> RunReport:
    g = cfg.gamma
    drift = traj.invariant_drift()
    rep = RunReport(scenario_echo(cfg, seed), traj.termination.value, traj.t_star_estimate,
                    {"m12": float(drift[0]), "m13": float(drift[1]), "h": float(drift[2])})
    for v in check_hypotheses(cfg, a0):
        rep.notes.append(f"hypothesis violated: {v}")
    bound = ODE_DRIFT_BOUND if cfg.tol <= 1e-10 else 100 * cfg.tol
    mod = traj.moduli
    if traj.termination is Termination.BLOWUP:
        # absolute drift is meaningless once |A|^2 approaches 1e16
        drift = scaled_drift(traj)
        rep.notes.append("blow-up run: drift is scaled by the running max of |A|^2 (|A|^3 for h)")

    # triad_core properties
    rep.add("conservation", bool(drift.max() < bound), bound - drift.max(), f"bound {bound:g}")
    results = [polar_consistency(ComplexTriple.from_array(traj.states[k]), g)
               for k in _fd_samples(mod, lambda r: r.min() > 1e-6)]
    if results:
        ok = all(_first_order(*r) for r in results)
        rep.add("polar_consistency", ok, min(r[2] for r in results) - 0.8,
                "orders " + ", ".join(f"{r[2]:.2f}" for r in results))
    else:
        rep.add("polar_consistency", None, detail="no moderate sample with all moduli > 1e-6")
    prod = mod.prod(axis=1)
    hb = 2 * prod * (1 + 1e-12) + 1e-300 - np.abs(traj.invariant_samples[:, 2])
    rep.add("h_bound", bool(hb.min() >= 0), float(hb.min()))
    h0 = abs(traj.invariant_samples[0, 2])
    if h0 > 1e-12:
        running = np.maximum.accumulate(mod.max(axis=1))
        slack = mod.min(axis=1) - h0 / (2 * running ** 2) * (1 - 1e-9)
        rep.add("proposition_no_zero", bool(slack.min() >= 0), float(slack.min()))
    else:
        rep.add("proposition_no_zero", None, detail="h(0) is zero")

    # ode_dynamics properties
    if g.is_same_sign:
        verdict = classify(a0)
        agree = outcome_agrees(verdict.verdict, traj)
        full_horizon = traj.termination is not Termination.COMPLETED or traj.times[-1] >= 200
        detail = f"{verdict.verdict.value} vs {traj.termination.value}"
        if agree is False and traj.termination is Termination.COMPLETED and verdict.verdict.blows_up and not full_horizon:
            rep.add("classifier_integrator_agreement", None, detail=detail + f"; horizon {cfg.tau_end} < 200")
        else:
            rep.add("classifier_integrator_agreement", agree, detail=detail)

        th = theta_series(traj)
        if verdict.verdict is Verdict.CASE3 and verdict.theta is not None:
            shifted = np.mod(th + 0.5 * math.pi, 2 * math.pi) - 0.5 * math.pi  # (-pi/2, 3pi/2]
            live = np.isfinite(shifted)
            s = shifted[live]
            if s[0] < 0.5 * math.pi:
                inc = np.diff(s).min() if len(s) > 1 else 0.0
                final = abs(s[-1] - 0.5 * math.pi)
                rep.add("case3_phase_monotonicity", bool(inc >= -1e-12 and final < 0.1),
                        min(inc + 1e-12, 0.1 - final), f"final |theta - pi/2| = {final:.2e}")
            else:
                dec = -np.diff(s).min() if len(s) > 1 else 0.0
                final = abs(s[-1] - 0.5 * math.pi)
                rep.add("case3_phase_monotonicity", bool(dec >= -1e-12 and final < 0.1),
                        min(dec + 1e-12, 0.1 - final), "theta(0) in (pi/2, 3pi/2): non-increasing branch")
        else:
            rep.add("case3_phase_monotonicity", None, detail="not a case-3 start")

        if verdict.verdict is Verdict.CASE1:
            k_zero = int(np.argmin(mod[0]))
            k_big = int(np.argmax(mod[0]))
            others = [j for j in range(3) if j != k_big]
            consts = [mod[0, k_big] ** 2 - mod[0, j] ** 2 for j in others]
            grows = bool(mod[-1, k_zero] > mod[0, k_zero])
            pts = _fd_samples(mod, lambda r: True, start=1)
            res = [case1_growth_law(ComplexTriple.from_array(traj.states[k]), g, k_big, consts) for k in pts]
            ok = grows and all(_first_order(*r) for r in res)
            rep.add("case1_growth_law", ok, min((r[2] for r in res), default=float("nan")) - 0.8,
                    "orders " + ", ".join(f"{r[2]:.2f}" for r in res))
        else:
            rep.add("case1_growth_law", None, detail="not a case-1 start")

        if verdict.verdict is Verdict.GLOBAL_DECAY and (verdict.d0 or 0.0) > EPS_AMP:
            p = verdict.permutation
            floor = mod[0, p[1]] * np.exp(-mod[0, p[0]] * traj.times)
            slack = np.minimum(mod[:, p[1]], mod[:, p[2]]) - floor * (1 - 1e-9)
            rep.add("gronwall_floor", bool(slack.min() >= 0), float(slack.min()))
        else:
            rep.add("gronwall_floor", None, detail="needs global-decay data with a strict modulus gap")
    else:
        for name in ("classifier_integrator_agreement", "case3_phase_monotonicity",
                     "case1_growth_law", "gronwall_floor"):
            rep.add(name, None, detail="classification applies to same-sign coupling")
    rep.add("inherited_drift_bounds", bool(drift.max() < bound), bound - drift.max())
    return rep


def run_ode_scenario(cfg: ScenarioConfig, seed: Optional[int] = None):
    seed = cfg.seed if seed is None else seed
    a0 = build_initial(cfg, seed)
    traj = integrate(a0, cfg.gamma, cfg.tau_end, cfg.tol)
    return traj, ode_report(cfg, a0, traj, seed)


# ------------------------------------------------------------------- PDE

def _theorem3_start(f0: TriadField, g: CouplingSignature) -> bool:
    d = f0.data
    if not g.is_same_sign or np.abs(d).min() <= 0:
        return False
    dev = np.abs(np.angle(d[0] * d[1] * d[2] * np.exp(-0.5j * math.pi)))
    const = all(np.ptp(np.angle(d[j] * np.conj(d[j].flat[0]))) < 1e-12 for j in range(3))
    return bool(dev.max() < 1e-12 and const)


def pde_report(cfg: ScenarioConfig, f0: TriadField, traj: FieldTrajectory, seed: int,
               freeze: Optional[PhaseFreezeMonitor], transport: TransportInvariantMonitor) -> RunReport:
    v = cfg.velocities
    drift = traj.invariant_drift()
    rep = RunReport(scenario_echo(cfg, seed), traj.termination.value, traj.t_star_estimate,
                    {"K1": float(drift[0]), "K2": float(drift[1])})
    for msg in check_hypotheses(cfg, f0):
        rep.notes.append(f"hypothesis violated: {msg}")
    if traj.message:
        rep.notes.append(traj.message)
    if traj.blowup_location:
        rep.notes.append(f"blow-up location: {traj.blowup_location}")
    if traj.resolution_warning:
        rep.notes.append("resolution warning: spectral tail exceeded its threshold")
    t3 = freeze is not None
    f = traj.f_min
    t = traj.times

    if t3:
        dev = freeze.resolved_max_dev(traj)
        rep.add("phase_freezing", bool(dev < 1e-6), 1e-6 - dev,
                f"max |arg(A1A2A3) - pi/2| = {dev:.2e} over resolved samples, {freeze.max_dev:.2e} overall")
        inc = np.diff(f)
        lip = float((traj.max_modulus ** 2).max())
        slope_excess = (inc - lip * np.diff(t)).max() if len(inc) else -1.0
        ok = bool((inc >= 0).all() and slope_excess <= 0)
        rep.add("monotone_minimum", ok, min(float(inc.min()) if len(inc) else 0.0, -slope_excess),
                f"Lipschitz constant {lip:.3g}")
        if len(inc):
            dtau = np.diff(t)
            gap = (f[:-1] ** 2 - inc / dtau) / dtau
            c_needed = max(0.0, float(gap.max()))
            c_allowed = 10.0 * float(f.max()) ** 3
            rep.add("discrete_differential_inequality", c_needed <= c_allowed, c_allowed - c_needed,
                    f"needed C = {c_needed:.3g}")
        else:
            rep.add("discrete_differential_inequality", None, detail="fewer than two samples")
    else:
        for name in ("phase_freezing", "monotone_minimum", "discrete_differential_inequality"):
            rep.add(name, None, detail="needs a same-sign start with constant phases summing to pi/2")

    if f[0] > 0:
        rep.add("strict_positivity", bool((f > 0).all()), float(f.min()))
    else:
        rep.add("strict_positivity", None, detail="initial data has a zero")

    worst = 0.0
    for j, c in enumerate(v):
        u = f0.data[j]
        w = advect(u, c, traj.dt, f0.domain)
        n0 = np.linalg.norm(u)
        if n0 > 0:
            worst = max(worst, abs(np.linalg.norm(w) - n0) / n0)
    rep.add("transport_exactness", worst < 1e-13, 1e-13 - worst, f"relative L2 change {worst:.2e}")

    tr = transport.report()
    if tr.applicable:
        rep.add("theorem1_boundedness", bool(tr.max_bound_excess <= 1e-6), 1e-6 - tr.max_bound_excess,
                f"sup |A_j| = {', '.join(f'{x:.6f}' for x in tr.max_sup)}; "
                f"bounds {', '.join(f'{x:.6f}' for x in tr.sup_bounds)}")
        defect = max(tr.max_defect_k1, tr.max_defect_k2)
        rep.add("pointwise_transport_defect", defect < 1e-6, 1e-6 - defect)
    else:
        rep.add("theorem1_boundedness", None, detail=tr.reason)
        rep.add("pointwise_transport_defect", None, detail=tr.reason)

    if not t3:
        for name in ("riccati_bound", "blowup_time_bound"):
            rep.add(name, None, detail="needs a same-sign start with constant phases summing to pi/2")
    else:
        f0min = float(f[0])
        horizon = 1.0 / (0.99 * f0min)
        live = t < horizon
        lower = np.array([riccati_lower_bound(f0min, 0.0, x) for x in t[live]])
        slack = f[live] - lower
        rep.add("riccati_bound", bool(slack.min() >= 0), float(slack.min()))
        bound = horizon + 0.05
        if traj.termination is Termination.BLOWUP:
            t_det = float(traj.times[-1])
            t_star = traj.t_star_estimate if traj.t_star_estimate is not None else t_det
            rep.add("blowup_time_bound", bool(max(t_det, t_star) <= bound), bound - max(t_det, t_star),
                    f"detected at {t_det:.6f}, estimate {t_star:.6f}, bound {bound:.6f}")
        elif traj.times[-1] >= bound:
            rep.add("blowup_time_bound", False, bound - float(traj.times[-1]),
                    f"still finite at tau={traj.times[-1]:.4g}")
        else:
            rep.add("blowup_time_bound", None, detail=f"run stopped at tau={traj.times[-1]:.4g}")
    return rep


def run_pde_scenario(cfg: ScenarioConfig, seed: Optional[int] = None, snapshot_every: int = 0):
    seed = cfg.seed if seed is None else seed
    f0 = build_initial(cfg, seed)
    freeze = PhaseFreezeMonitor() if _theorem3_start(f0, cfg.gamma) else None
    transport = TransportInvariantMonitor(f0, cfg.gamma, cfg.velocities)
    traj = run_pde(f0, cfg.gamma, cfg.velocities, tau_end=cfg.tau_end, dt=cfg.dt,
                   sample_interval=cfg.sample_interval, snapshot_every=snapshot_every,
                   on_sample=chain(freeze, transport if transport.applicable else None))
    return traj, pde_report(cfg, f0, traj, seed, freeze, transport)
