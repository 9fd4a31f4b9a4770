"""Command-line entry point.

Subcommands: ``classify``, ``run-ode``, ``run-pde``, ``sweep`` and
``report``.  CSV goes to ``--out`` (or stdout); the run report goes to
``--report`` (or stderr).  When ``--out`` is omitted and
``THREEWAVE_OUTPUT_DIR`` is set, files are written there instead.

Exit codes: 0 success (a detected blow-up counts as success), 1 input or
configuration error, 2 classification landed near a case boundary, 3 the
run aborted (invariant drift, lost resolution or step-size underflow).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, TextIO

import numpy as np

from .config import ConfigError
from .core import ComplexTriple, InvalidStateError, PhaseUndefinedError, invariants, total_phase
from .ode import Termination, Verdict, classify, integrate
from .pde import TriadField, write_snapshot
from .reports import outcome_agrees, run_ode_scenario, run_pde_scenario
from .scenarios import ScenarioConfig, build_initial, load_config, sweep_triple

OUTPUT_DIR_ENV = "THREEWAVE_OUTPUT_DIR"
EXIT_OK, EXIT_INPUT, EXIT_NEAR, EXIT_ABORT = 0, 1, 2, 3

ODE_COLUMNS = ["tau", "re1", "im1", "re2", "im2", "re3", "im3",
               "r1", "r2", "r3", "theta_sum", "m12", "m13", "h"]
PDE_COLUMNS = ["tau", "f_min", "r1_min", "r1_max", "r2_min", "r2_max",
               "r3_min", "r3_max", "K1", "K2", "spectral_tail"]
SWEEP_COLUMNS = ["index", "r1", "r2", "r3", "theta_sum", "verdict",
                 "termination", "t_star", "agreement"]
SWEEP_HORIZON = 200.0

_TRIPLE_TOKEN = re.compile(r"\(\s*([^,()\s]+)\s*,\s*([^,()\s]+)\s*\)")


class InputError(ValueError):
    pass


def parse_triple(text: str) -> ComplexTriple:
    """Parse ``"(re,im) (re,im) (re,im)"``; errors name the offending token."""
    values, pos = [], 0
    for m in _TRIPLE_TOKEN.finditer(text):
        gap = text[pos:m.start()].strip()
        if gap:
            raise InputError(f"unexpected token {gap.split()[0]!r}")
        parts = []
        for tok in m.groups():
            try:
                parts.append(float(tok))
            except ValueError:
                raise InputError(f"bad number {tok!r} in {m.group(0)!r}") from None
        values.append(complex(*parts))
        pos = m.end()
    rest = text[pos:].strip()
    if rest:
        raise InputError(f"unexpected token {rest.split()[0]!r}")
    if len(values) != 3:
        raise InputError(f"expected three complex values, found {len(values)}")
    try:
        return ComplexTriple(*values)
    except InvalidStateError as exc:
        raise InputError(str(exc)) from None


def _fmt(x: float) -> str:
    return repr(float(x))


def _header(out: TextIO, columns: Sequence[str], timestamp: bool) -> csv.writer:
    if timestamp:
        out.write(f"# generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    return w


def write_ode_csv(out: TextIO, traj, timestamp: bool = True) -> None:
    w = _header(out, ODE_COLUMNS, timestamp)
    mod = traj.moduli
    for t, s, r, inv in zip(traj.times, traj.states, mod, traj.invariant_samples):
        if r.min() > 0:
            theta = float(np.mod(np.angle(s[0] * s[1] * s[2]), 2 * math.pi))
        else:
            theta = float("nan")
        w.writerow([_fmt(t), _fmt(s[0].real), _fmt(s[0].imag), _fmt(s[1].real), _fmt(s[1].imag),
                    _fmt(s[2].real), _fmt(s[2].imag), _fmt(r[0]), _fmt(r[1]), _fmt(r[2]),
                    _fmt(theta), _fmt(inv[0]), _fmt(inv[1]), _fmt(inv[2])])


def write_pde_csv(out: TextIO, traj, timestamp: bool = True) -> None:
    w = _header(out, PDE_COLUMNS, timestamp)
    for k, t in enumerate(traj.times):
        lo, hi = traj.rmin[k], traj.rmax[k]
        w.writerow([_fmt(t), _fmt(traj.f_min[k]), _fmt(lo[0]), _fmt(hi[0]), _fmt(lo[1]), _fmt(hi[1]),
                    _fmt(lo[2]), _fmt(hi[2]), _fmt(traj.invariants[k, 0]), _fmt(traj.invariants[k, 1]),
                    _fmt(traj.tail[k])])


def _exit_for(termination: Termination) -> int:
    if termination in (Termination.COMPLETED, Termination.BLOWUP):
        return EXIT_OK
    return EXIT_ABORT


def _outputs(args, stem: str):
    """Resolve the CSV and report destinations for a run."""
    out, rep = args.out, getattr(args, "report", None)
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if out is None and env_dir:
        Path(env_dir).mkdir(parents=True, exist_ok=True)
        out = str(Path(env_dir) / f"{stem}.csv")
        if rep is None:
            rep = str(Path(env_dir) / f"{stem}.report.txt")
    return out, rep


def _emit(path: Optional[str], text: str, default: TextIO) -> None:
    if path is None or path == "-":
        default.write(text)
    else:
        Path(path).write_text(text)


def _load(args) -> ScenarioConfig:
    return load_config(args.config)


def _print_errors(exc: Exception) -> None:
    if isinstance(exc, ConfigError):
        for issue in exc.issues:
            print(f"error: {issue}", file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)


# ------------------------------------------------------------- commands

def cmd_classify(args) -> int:
    try:
        if args.triple is not None:
            a0 = parse_triple(args.triple)
        else:
            cfg = _load(args)
            if cfg.kind != "ode":
                raise InputError("classify needs an ode scenario")
            a0 = build_initial(cfg, args.seed)
    except (InputError, ConfigError, OSError, ValueError) as exc:
        _print_errors(exc)
        return EXIT_INPUT
    res = classify(a0)
    inv = invariants(a0)
    try:
        theta = f"{total_phase(a0):.12g}"
    except PhaseUndefinedError:
        theta = "undefined"
    print(f"verdict: {res.verdict.value}")
    print(f"permutation: {' '.join(str(p + 1) for p in res.permutation)}")
    print(f"theta_sum: {theta}")
    print(f"m12: {inv.m12:.12g}")
    print(f"m13: {inv.m13:.12g}")
    print(f"h: {inv.h:.12g}")
    print(f"details: {res.details}")
    if res.verdict is Verdict.NEAR_BOUNDARY:
        print("warning: input lies near a case boundary", file=sys.stderr)
        return EXIT_NEAR
    return EXIT_OK


def _run(args, kind: str, write_csv: bool) -> int:
    try:
        cfg = _load(args)
        if cfg.kind != kind:
            raise InputError(f"config describes a {cfg.kind} scenario, not {kind}")
        seed = cfg.seed if args.seed is None else args.seed
        if kind == "ode":
            traj, report = run_ode_scenario(cfg, seed)
        else:
            traj, report = run_pde_scenario(cfg, seed, snapshot_every=getattr(args, "snapshot_every", 0) or 0)
    except (InputError, ConfigError, OSError, ValueError) as exc:
        _print_errors(exc)
        return EXIT_INPUT
    out_path, rep_path = _outputs(args, f"{kind}-seed{seed}")
    if write_csv:
        buf = io.StringIO()
        (write_ode_csv if kind == "ode" else write_pde_csv)(buf, traj, timestamp=not args.no_timestamp)
        _emit(out_path, buf.getvalue(), sys.stdout)
    _emit(rep_path, report.render(), sys.stderr if write_csv else sys.stdout)
    if kind == "pde" and traj.snapshots:
        base = Path(out_path).with_suffix("") if out_path not in (None, "-") else Path(f"pde-seed{seed}")
        for k, (tau, data) in enumerate(traj.snapshots):
            write_snapshot(f"{base}.snap{k:04d}.txt", TriadField(cfg.domain, data), tau)
    return _exit_for(traj.termination)


def cmd_run_ode(args) -> int:
    return _run(args, "ode", True)


def cmd_run_pde(args) -> int:
    return _run(args, "pde", True)


def cmd_report(args) -> int:
    try:
        kind = _load(args).kind
    except (ConfigError, OSError, ValueError) as exc:
        _print_errors(exc)
        return EXIT_INPUT
    return _run(args, kind, False)


def sweep_point(point, tol: float) -> List[str]:
    r1, r2, r3, th = point
    a0 = sweep_triple(r1, r2, r3, th)
    verdict = classify(a0).verdict
    traj = integrate(a0, tau_end=SWEEP_HORIZON, tol=tol)
    ok = outcome_agrees(verdict, traj)
    agree = "n/a" if ok is None else ("yes" if ok else "no")
    t_star = "" if traj.t_star_estimate is None else _fmt(traj.t_star_estimate)
    return [_fmt(r1), _fmt(r2), _fmt(r3), _fmt(th), verdict.value, traj.termination.value, t_star, agree]


def cmd_sweep(args) -> int:
    try:
        cfg = _load(args)
        if cfg.sweep is None:
            raise InputError("config has no [sweep] section")
    except (InputError, ConfigError, OSError, ValueError) as exc:
        _print_errors(exc)
        return EXIT_INPUT
    points = cfg.sweep.points()
    if not points:
        print("error: sweep grid is empty", file=sys.stderr)
        return EXIT_INPUT
    todo = list(enumerate(points))[args.skip:]
    if args.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(sweep_point, [p for _, p in todo], [cfg.tol] * len(todo)))
    else:
        rows = [sweep_point(p, cfg.tol) for _, p in todo]
    buf = io.StringIO()
    if args.skip:
        w = csv.writer(buf, lineterminator="\n")  # resumed output appends to an existing file
    else:
        w = _header(buf, SWEEP_COLUMNS, not args.no_timestamp)
    for (i, _), row in zip(todo, rows):
        w.writerow([i] + row)
    out_path, _ = _outputs(args, "sweep")
    if out_path not in (None, "-") and args.skip:
        with open(out_path, "a") as fh:
            fh.write(buf.getvalue())
    else:
        _emit(out_path, buf.getvalue(), sys.stdout)
    return EXIT_OK


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="threewave", description="Three-wave resonant interaction lab.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, metavar="PATH")
        sp.add_argument("--seed", type=int, metavar="N")
        sp.add_argument("--out", metavar="PATH")
        sp.add_argument("--no-timestamp", action="store_true", help="omit the '# generated' line")

    sp = sub.add_parser("classify", help="classify an initial triple")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--triple", help='e.g. "(1,0) (0,0) (2,0)"')
    src.add_argument("--config", metavar="PATH")
    sp.add_argument("--seed", type=int, metavar="N")
    sp.set_defaults(func=cmd_classify)

    for name, func in (("run-ode", cmd_run_ode), ("run-pde", cmd_run_pde), ("report", cmd_report)):
        sp = sub.add_parser(name)
        common(sp)
        sp.add_argument("--report", metavar="PATH", help="write the run report here")
        if name != "run-ode":
            sp.add_argument("--snapshot-every", type=int, default=0, metavar="K",
                            help="dump the field every K samples (pde only)")
        sp.set_defaults(func=func)

    sp = sub.add_parser("sweep", help="classify and integrate every grid point")
    common(sp)
    sp.add_argument("--skip", type=int, default=0, metavar="N", help="resume after N points")
    sp.add_argument("--jobs", type=int, default=1, metavar="J")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
