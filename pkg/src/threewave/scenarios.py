"""Scenario configuration, theorem presets and seeded initial data."""
from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import Call, ConfigError, Entry, Issue, parse_sections
from .core import (
    ComplexTriple,
    CouplingSignature,
    VelocitySet,
    phase_distance,
    unit_phasor,
)
from .ode import Verdict, classify
from .pde import PeriodicDomain, TriadField

HALF_PI = 0.5 * math.pi
THREE_HALF_PI = 1.5 * math.pi


@dataclass(frozen=True)
class InitialConditionSpec:
    """Exactly one of: an explicit ``triple`` (ode), per-component Fourier
    ``modes`` (pde), or a ``preset`` name with ``params``."""

    triple: Optional[ComplexTriple] = None
    modes: Optional[Tuple[Tuple[Tuple[Tuple[int, ...], complex], ...], ...]] = None
    preset: Optional[str] = None
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SweepGrid:
    r1: Tuple[float, ...] = (1.0,)
    r2: Tuple[float, ...] = (1.0,)
    r3: Tuple[float, ...] = (1.0,)
    theta_sum: Tuple[float, ...] = (0.0,)

    def points(self) -> List[Tuple[float, float, float, float]]:
        return list(itertools.product(self.r1, self.r2, self.r3, self.theta_sum))

    def __len__(self):
        return len(self.r1) * len(self.r2) * len(self.r3) * len(self.theta_sum)


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    gamma: CouplingSignature
    initial: InitialConditionSpec
    tau_end: float
    tol: float = 1e-10
    dt: Optional[float] = None
    sample_interval: Optional[float] = None
    seed: int = 0
    velocities: Optional[VelocitySet] = None
    domain: Optional[PeriodicDomain] = None
    resolution: Optional[Tuple[int, ...]] = None
    sweep: Optional[SweepGrid] = None


def triple_from_polar(r: Sequence[float], theta: Sequence[float]) -> ComplexTriple:
    return ComplexTriple(*(float(rj) * unit_phasor(float(tj)) for rj, tj in zip(r, theta)))


def sweep_triple(r1: float, r2: float, r3: float, theta_sum: float) -> ComplexTriple:
    """Sweep points put the whole total phase on the third component."""
    return triple_from_polar((r1, r2, r3), (0.0, 0.0, theta_sum))


# ---------------------------------------------------------------- presets

def smooth_periodic(domain: PeriodicDomain, shape: Sequence[int], n_modes: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Band-limited real field rescaled to span exactly [0, 1] on the grid."""
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    if any(n_modes > n // 3 for n in shape):
        raise ValueError(f"{n_modes} modes do not fit the lower third of a {tuple(shape)} grid")
    xs = domain.mesh(shape)
    u = np.zeros(tuple(shape))
    ranges = [range(-n_modes, n_modes + 1)] * domain.dim
    for m in itertools.product(*ranges):
        if not any(m) or m < tuple(-x for x in m):
            continue  # skip zero and the mirrored half (real field)
        phase = sum(mk * math.pi / a * x for mk, a, x in zip(m, domain.half_widths, xs))
        a_c, b_s = rng.normal(size=2) / (1.0 + sum(abs(mk) for mk in m))
        u += a_c * np.cos(phase) + b_s * np.sin(phase)
    lo, hi = u.min(), u.max()
    if hi - lo <= 0:
        return np.zeros_like(u)
    return (u - lo) / (hi - lo)


def _modulus_field(domain, shape, n_modes, lo, hi, rng):
    return lo + (hi - lo) * smooth_periodic(domain, shape, n_modes, rng)


def _gen_theorem1(p, seed, domain, shape):
    rng = np.random.default_rng(seed)
    data = np.empty((3, *shape), dtype=complex)
    for j in range(3):
        r = _modulus_field(domain, shape, p["n_modes"], p["mod_lo"], p["mod_hi"], rng)
        phi = p["phase_amp"] * math.pi * (2.0 * smooth_periodic(domain, shape, p["n_modes"], rng) - 1.0)
        data[j] = r * np.exp(1j * phi)
    return TriadField(domain, data)


def _gen_theorem3(p, seed, domain, shape):
    if not p["r_floor"] > 0:
        raise ValueError("r_floor must be positive")
    if p["mod_lo"] < p["r_floor"]:
        raise ValueError(f"mod_lo={p['mod_lo']} is below r_floor={p['r_floor']}")
    if p["mod_hi"] < p["mod_lo"]:
        raise ValueError("mod_hi must be at least mod_lo")
    theta = [float(t) for t in p["theta"]]
    if len(theta) != 3 or phase_distance(sum(theta), HALF_PI) > 1e-12:
        raise ValueError(f"theta must hold three phases summing to pi/2, got {theta}")
    rng = np.random.default_rng(seed)
    data = np.empty((3, *shape), dtype=complex)
    for j in range(3):
        r = _modulus_field(domain, shape, p["n_modes"], p["mod_lo"], p["mod_hi"], rng)
        data[j] = r * unit_phasor(theta[j])
    return TriadField(domain, data)


def _gen_case1(p, seed, domain, shape):
    if not p["big"] >= p["mid"] > 0:
        raise ValueError("ode_case1 needs big >= mid > 0")
    return ComplexTriple(p["mid"], 0.0, p["big"])


def _gen_case2(p, seed, domain, shape):
    r = sorted(float(x) for x in p["moduli"])
    if len(r) != 3 or not (0 < r[0] < r[1] <= r[2]):
        raise ValueError("ode_case2 needs three positive moduli with a strictly smallest one")
    return ComplexTriple(*(1j * x for x in p["moduli"]))


def _gen_case3(p, seed, domain, shape):
    if min(p["moduli"]) <= 0:
        raise ValueError("ode_case3 needs positive moduli")
    if phase_distance(p["theta_sum"], THREE_HALF_PI) < 1e-6:
        raise ValueError("ode_case3 needs a total phase away from 3pi/2")
    return triple_from_polar(p["moduli"], (0.0, 0.0, p["theta_sum"]))


def _gen_global_i(p, seed, domain, shape):
    z = complex(p["z"])
    return ComplexTriple(0.0, 0.0, z)


def _gen_global_ii(p, seed, domain, shape):
    if not p["big"] >= p["pair"] > 0:
        raise ValueError("ode_global_ii needs big >= pair > 0")
    return ComplexTriple(1j * p["pair"], 1j * p["pair"], 1j * p["big"])


@dataclass(frozen=True)
class Preset:
    kind: str
    defaults: Dict[str, Any]
    builder: Callable
    gamma: Optional[Tuple[int, int, int]] = None
    expected: Optional[Verdict] = None


PRESETS: Dict[str, Preset] = {
    "theorem1_bounded": Preset(
        "pde", dict(mod_lo=0.75, mod_hi=1.25, n_modes=3, phase_amp=0.0), _gen_theorem1, (1, -1, -1)),
    "theorem3_blowup": Preset(
        "pde", dict(mod_lo=1.0, mod_hi=2.0, n_modes=3, r_floor=0.5,
                    theta=[HALF_PI, 0.0, 0.0], equal_velocities=False),
        _gen_theorem3, (1, 1, 1)),
    "ode_case1": Preset("ode", dict(big=2.0, mid=1.0), _gen_case1, None, Verdict.CASE1),
    "ode_case2": Preset("ode", dict(moduli=[0.5, 1.0, 2.0]), _gen_case2, None, Verdict.CASE2),
    "ode_case3": Preset("ode", dict(moduli=[1.0, 1.0, 1.0], theta_sum=0.0), _gen_case3, None, Verdict.CASE3),
    "ode_global_i": Preset("ode", dict(z=3.0), _gen_global_i, None, Verdict.EQUILIBRIUM),
    "ode_global_ii": Preset("ode", dict(pair=1.0, big=2.0), _gen_global_ii, None, Verdict.GLOBAL_DECAY),
}

DEFAULT_HALF_WIDTH = math.pi
DEFAULT_RESOLUTION = 256


def preset_velocities(name: str, dim: int, params: Dict[str, Any]) -> VelocitySet:
    """Equal velocities for theorem1, distinct ones for theorem3 unless
    ``equal_velocities`` is set."""
    if dim == 1:
        equal = ((1.0,),) * 3
        distinct = ((1.0,), (-0.5,), (0.25,))
    else:
        equal = ((1.0, 0.5),) * 3
        distinct = ((1.0, 0.0), (-0.5, 0.5), (0.25, -0.75))
    if name == "theorem1_bounded" or params.get("equal_velocities"):
        return VelocitySet(*equal)
    return VelocitySet(*distinct)


def generate(spec: InitialConditionSpec, seed: int = 0, *,
             domain: Optional[PeriodicDomain] = None,
             resolution: Optional[Sequence[int]] = None) -> Union[ComplexTriple, TriadField]:
    """Deterministic initial data for a spec (and seed, for random presets)."""
    if spec.triple is not None:
        return spec.triple
    if spec.modes is not None:
        if domain is None or resolution is None:
            raise ValueError("Fourier initial data needs a domain and resolution")
        return fourier_field(spec.modes, domain, resolution)
    if spec.preset not in PRESETS:
        raise ValueError(f"unknown preset {spec.preset!r}")
    pre = PRESETS[spec.preset]
    params = {**pre.defaults, **spec.params}
    if pre.kind == "pde":
        domain = domain or PeriodicDomain((DEFAULT_HALF_WIDTH,))
        resolution = tuple(resolution or (DEFAULT_RESOLUTION,) * domain.dim)
    return pre.builder(params, seed, domain, resolution)


def fourier_field(modes, domain: PeriodicDomain, resolution: Sequence[int]) -> TriadField:
    """Sum of ``coef * exp(i * pi * m . x / a)`` over the listed modes."""
    xs = domain.mesh(resolution)
    data = np.zeros((3, *resolution), dtype=complex)
    for j, comp in enumerate(modes):
        for m, coef in comp:
            if len(m) != domain.dim:
                raise ValueError(f"mode {m} does not match a {domain.dim}-d domain")
            phase = sum(mk * math.pi / a * x for mk, a, x in zip(m, domain.half_widths, xs))
            data[j] += coef * np.exp(1j * phase)
    return TriadField(domain, data)


def field_hash(f: TriadField) -> str:
    h = hashlib.sha256()
    h.update(repr((f.domain.half_widths, f.resolution)).encode())
    h.update(np.ascontiguousarray(f.data).tobytes())
    return h.hexdigest()


def check_hypotheses(cfg: ScenarioConfig, initial) -> List[str]:
    """Violations of the named preset's theorem hypotheses (empty if none)."""
    name = cfg.initial.preset
    if name is None:
        return []
    pre = PRESETS[name]
    params = {**pre.defaults, **cfg.initial.params}
    out = []
    if pre.gamma is not None and tuple(cfg.gamma) != pre.gamma:
        out.append(f"{name} requires coupling {pre.gamma}, got {tuple(cfg.gamma)}")
    if pre.expected is not None:
        got = classify(initial).verdict
        if got is not pre.expected:
            out.append(f"{name} classifies as {got.value}, expected {pre.expected.value}")
    if name == "theorem1_bounded" and cfg.velocities is not None and not cfg.velocities.all_equal:
        out.append("theorem1_bounded requires equal velocities")
    if name == "theorem3_blowup":
        d = initial.data
        prod = d[0] * d[1] * d[2]
        dev = np.abs(np.angle(prod * np.exp(-1j * HALF_PI)))
        if np.abs(d).min() < params["r_floor"]:
            out.append(f"minimum modulus {np.abs(d).min():.6g} below r_floor {params['r_floor']}")
        if dev.max() > 1e-12:
            out.append(f"total phase deviates from pi/2 by {dev.max():.3g}")
        for j in range(3):
            ph = np.angle(d[j])
            if np.ptp(np.unwrap(ph.ravel())) > 1e-12:
                out.append(f"phase of A{j + 1} is not spatially constant")
    return out


# ---------------------------------------------------------------- parsing

_ALLOWED = {
    "run": {"kind", "tau_end", "tol", "dt", "sample_interval", "seed", "initial", "preset"},
    "coupling": {"gamma"},
    "velocities": {"c1", "c2", "c3"},
    "domain": {"half_widths", "resolution"},
    "sweep": {"r1", "r2", "r3", "theta_sum"},
}
_INITIAL_SECTIONS = ("initial.A1", "initial.A2", "initial.A3")


class _Validator:
    def __init__(self, sections, headers, issues):
        self.s = sections
        self.headers = headers
        self.issues: List[Issue] = list(issues)

    def err(self, where: Union[Entry, str, None], msg: str):
        if isinstance(where, Entry):
            self.issues.append(Issue(where.line, where.col, msg))
        elif isinstance(where, str) and where in self.headers:
            self.issues.append(Issue(self.headers[where], 1, msg))
        else:
            self.issues.append(Issue(1, 1, msg))

    def get(self, section, key) -> Optional[Entry]:
        return self.s.get(section, {}).get(key)

    def number(self, section, key, *, positive=False, integer=False, default=None):
        e = self.get(section, key)
        if e is None:
            return default
        v = e.value
        ok = isinstance(v, (int, float)) and not isinstance(v, bool)
        if ok and integer and not isinstance(v, int):
            ok = False
        if not ok or not math.isfinite(v):
            self.err(e, f"{section}.{key} must be {'an integer' if integer else 'a number'}, got {v!r}")
            return default
        if positive and not v > 0:
            self.err(e, f"{section}.{key} must be positive, got {v!r}")
            return default
        return v

    def vector(self, section, key, n=None, *, integer=False) -> Optional[Tuple]:
        e = self.get(section, key)
        if e is None:
            return None
        v = e.value
        if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            self.err(e, f"{section}.{key} must be a list of numbers")
            return None
        if integer and not all(isinstance(x, int) for x in v):
            self.err(e, f"{section}.{key} must hold integers")
            return None
        if n is not None and len(v) != n:
            self.err(e, f"{section}.{key} must have {n} entries, got {len(v)}")
            return None
        return tuple(v)

    def number_list(self, section, key) -> Optional[Tuple[float, ...]]:
        e = self.get(section, key)
        if e is None:
            return None
        v = e.value
        if isinstance(v, Call):
            if v.name != "linspace" or len(v.args) != 3 or not isinstance(v.args[2], int):
                self.err(e, f"{section}.{key}: only linspace(start, stop, count) is supported")
                return None
            return tuple(float(x) for x in np.linspace(v.args[0], v.args[1], v.args[2]))
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return (float(v),)
        if isinstance(v, list) and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            return tuple(float(x) for x in v)
        self.err(e, f"{section}.{key} must be a number, a list of numbers or linspace(...)")
        return None


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario.  Raises ConfigError listing every
    problem found."""
    sections, headers, issues = parse_sections(text)
    V = _Validator(sections, headers, issues)

    for name, entries in sections.items():
        if name in _ALLOWED:
            for key, e in entries.items():
                if key not in _ALLOWED[name]:
                    V.err(e, f"unknown key {key!r} in [{name}]")
        elif name in _INITIAL_SECTIONS:
            for key, e in entries.items():
                if not key.startswith("mode["):
                    V.err(e, f"unknown key {key!r} in [{name}]; expected mode[...]")
        elif name != "preset":
            V.err(name, f"unknown section [{name}]")

    kind_e = V.get("run", "kind")
    kind = None
    if kind_e is None:
        V.err("run", "missing required key run.kind")
    elif kind_e.value not in ("ode", "pde"):
        V.err(kind_e, f"run.kind must be 'ode' or 'pde', got {kind_e.value!r}")
    else:
        kind = kind_e.value

    tau_end = V.number("run", "tau_end", positive=True)
    if V.get("run", "tau_end") is None:
        V.err("run", "missing required key run.tau_end")
    tol = V.number("run", "tol", positive=True, default=1e-10)
    if V.get("run", "tol") is not None and not (1e-14 <= tol <= 1e-3):
        V.err(V.get("run", "tol"), f"run.tol must lie in [1e-14, 1e-3], got {tol!r}")
    dt = V.number("run", "dt", positive=True)
    sample_interval = V.number("run", "sample_interval", positive=True)
    seed = V.number("run", "seed", integer=True, default=0)
    if seed is not None and seed < 0:
        V.err(V.get("run", "seed"), "run.seed must be nonnegative")

    gamma = CouplingSignature()
    gv = V.vector("coupling", "gamma", 3, integer=True)
    if gv is not None:
        if all(x in (-1, 1) for x in gv):
            gamma = CouplingSignature(*gv)
        else:
            V.err(V.get("coupling", "gamma"), f"coupling.gamma entries must be +1 or -1, got {list(gv)}")

    # initial condition
    preset_e = V.get("run", "preset")
    triple_e = V.get("run", "initial")
    has_modes = any(s in sections for s in _INITIAL_SECTIONS)
    given = sum(x is not None and x is not False for x in (preset_e, triple_e, has_modes or None))
    initial = None
    if given == 0 and "sweep" not in sections:
        V.err("run", "no initial condition: give run.initial, run.preset or [initial.A*] sections")
    elif given > 1:
        V.err("run", "give exactly one of run.initial, run.preset or [initial.A*] sections")
    elif triple_e is not None:
        v = triple_e.value
        if (isinstance(v, list) and len(v) == 3
                and all(isinstance(x, (complex, int, float)) and not isinstance(x, bool) for x in v)):
            initial = InitialConditionSpec(triple=ComplexTriple(*(complex(x) for x in v)))
        else:
            V.err(triple_e, "run.initial must be a list of three complex literals like (1, 0)")
    elif preset_e is not None:
        name = preset_e.value
        if name not in PRESETS:
            V.err(preset_e, f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
        else:
            pre = PRESETS[name]
            params = {}
            for key, e in sections.get("preset", {}).items():
                if key not in pre.defaults:
                    V.err(e, f"unknown parameter {key!r} for preset {name}")
                    continue
                params[key] = e.value
            initial = InitialConditionSpec(preset=name, params=params)
            if kind is not None and pre.kind != kind:
                V.err(preset_e, f"preset {name} is a {pre.kind} preset but run.kind is {kind}")
            if pre.gamma is not None and gv is None:
                gamma = CouplingSignature(*pre.gamma)
    elif has_modes:
        comps = []
        for s in _INITIAL_SECTIONS:
            modes = []
            for key, e in sections.get(s, {}).items():
                if not key.startswith("mode["):
                    continue
                m = tuple(int(x) for x in key[5:-1].split(","))
                if isinstance(e.value, (complex, int, float)) and not isinstance(e.value, bool):
                    modes.append((m, complex(e.value)))
                else:
                    V.err(e, f"{s}.{key} must be a complex literal like (0.5, 0)")
            comps.append(tuple(modes))
        initial = InitialConditionSpec(modes=tuple(comps))
        if kind == "ode":
            V.err(_INITIAL_SECTIONS[0], "[initial.A*] Fourier sections apply to pde runs only")

    # pde geometry
    domain = resolution = velocities = None
    dim = None
    hw = V.vector("domain", "half_widths")
    res = V.vector("domain", "resolution", integer=True)
    if hw is not None:
        if len(hw) not in (1, 2) or not all(a > 0 for a in hw):
            V.err(V.get("domain", "half_widths"), "domain.half_widths must be 1 or 2 positive numbers")
        else:
            domain = PeriodicDomain(hw)
            dim = len(hw)
    if res is not None:
        if not all(n > 0 and (n & (n - 1)) == 0 for n in res):
            V.err(V.get("domain", "resolution"), f"domain.resolution must be powers of two, got {list(res)}")
        elif dim is not None and len(res) != dim:
            V.err(V.get("domain", "resolution"), f"domain.resolution has {len(res)} entries for a {dim}-d domain")
        else:
            resolution = tuple(res)
            dim = dim or len(res)
    if kind == "pde":
        is_preset = initial is not None and initial.preset is not None
        if domain is None and not is_preset and hw is None:
            V.err("domain", "missing required key domain.half_widths")
        if resolution is None and not is_preset and res is None:
            V.err("domain", "missing required key domain.resolution")
        dim = dim or 1
        if domain is None and is_preset:
            domain = PeriodicDomain((DEFAULT_HALF_WIDTH,) * dim)
        if resolution is None and is_preset:
            resolution = (DEFAULT_RESOLUTION,) * dim
        cs = []
        for key in ("c1", "c2", "c3"):
            e = V.get("velocities", key)
            if e is None:
                continue
            c = V.vector("velocities", key, dim)
            if c is not None and not any(c):
                V.err(e, f"velocities.{key} must be nonzero")
                c = None
            cs.append(c)
        present = [V.get("velocities", k) is not None for k in ("c1", "c2", "c3")]
        if any(present) and not all(present):
            V.err("velocities", "give all of velocities.c1, c2 and c3")
        elif all(present):
            if all(c is not None for c in cs):
                velocities = VelocitySet(*cs)
        elif is_preset:
            velocities = preset_velocities(initial.preset, dim, initial.params)
        else:
            V.err("velocities", "missing required keys velocities.c1, c2, c3")
        if initial is not None and initial.modes is not None and dim is not None:
            for s, comp in zip(_INITIAL_SECTIONS, initial.modes):
                for m, _ in comp:
                    if len(m) != dim:
                        V.err(s, f"[{s}] mode {list(m)} does not match a {dim}-d domain")
    elif kind == "ode":
        for s in ("velocities", "domain"):
            if s in sections:
                V.err(s, f"[{s}] applies to pde runs only")

    sweep = None
    if "sweep" in sections:
        axes = {}
        for key in ("r1", "r2", "r3", "theta_sum"):
            vals = V.number_list("sweep", key)
            if vals is not None:
                if key != "theta_sum" and any(x < 0 for x in vals):
                    V.err(V.get("sweep", key), f"sweep.{key} moduli must be nonnegative")
                axes[key] = vals
        sweep = SweepGrid(**axes)

    if V.issues:
        raise ConfigError(sorted(V.issues, key=lambda i: (i.line, i.col)))
    return ScenarioConfig(
        kind=kind, gamma=gamma, initial=initial, tau_end=float(tau_end), tol=float(tol),
        dt=None if dt is None else float(dt),
        sample_interval=None if sample_interval is None else float(sample_interval),
        seed=int(seed), velocities=velocities, domain=domain, resolution=resolution, sweep=sweep,
    )


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def build_initial(cfg: ScenarioConfig, seed: Optional[int] = None):
    return generate(cfg.initial, cfg.seed if seed is None else seed,
                    domain=cfg.domain, resolution=cfg.resolution)
