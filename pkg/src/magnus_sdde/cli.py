"""Command-line front end.

Subcommands::

    converge  Monte Carlo strong-convergence experiment -> CSV + SVG
    simulate  one trajectory of a preset problem -> CSV
    spdde     stochastic heat equation with delayed cooling -> field CSV [+ SVG]
    qwiener   truncated Q-Wiener field samples -> field CSV [+ SVG]

Exit codes: 0 success, 2 configuration or alignment error, 3 divergence
(outputs are still written, truncated where the run blew up).
"""

from __future__ import annotations

import argparse
import logging
import math
import re
import sys
from pathlib import Path

import numpy as np

from .errors import SddeError
from .experiments import ExperimentConfig, run_convergence
from .model import build_mesh
from .noise import RULES, kl_basis, sample_lattice
from .presets import PRESETS, preset
from .schemes import Scheme, integrate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

log = logging.getLogger("magnus_sdde")

_POWER = re.compile(r"^\s*(-?\d+(?:\.\d*)?)\s*(?:\^|\*\*)\s*(-?\d+)\s*$")


def parse_number(text: str) -> float:
    """``2^-3``, ``2**-3`` or a plain decimal."""
    m = _POWER.match(text)
    if m:
        return float(m.group(1)) ** int(m.group(2))
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return value


def parse_steps(text: str) -> list[float]:
    """Comma list of numbers, or ``a..b`` meaning a, a/2, ... down to b."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        first, last = parse_number(lo), parse_number(hi)
        if not first > 0 or not last > 0:
            raise argparse.ArgumentTypeError("step range bounds must be positive")
        big, small = max(first, last), min(first, last)
        count = math.log2(big / small)
        if abs(count - round(count)) > 1e-9:
            raise argparse.ArgumentTypeError(f"{text!r}: bounds must differ by a power of two")
        return [big / 2**k for k in range(round(count) + 1)]
    return [parse_number(s) for s in text.split(",") if s.strip()]


def _schemes(text: str) -> list[str]:
    try:
        return [Scheme(s.strip().lower()).value for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="magnus-sdde",
        description="Magnus-type integrators for semilinear stochastic delay equations.",
    )
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("converge", help="strong-convergence experiment")
    c.add_argument("--preset", required=True, choices=PRESETS)
    c.add_argument("--schemes", type=_schemes, help="comma list, e.g. em,milstein,mem,mm")
    c.add_argument("--steps", type=parse_steps, help="e.g. 2^-3..2^-8 or 0.125,0.0625")
    c.add_argument("--href", type=parse_number, help="reference step")
    c.add_argument("--reference", type=_schemes, help="reference scheme")
    c.add_argument("--trials", type=int)
    c.add_argument("--seed", type=int, default=42)
    c.add_argument("--rule", choices=RULES, default="trapezium")
    c.add_argument("--parallel", type=int, default=1)
    c.add_argument("--out", type=Path, required=True, help="output directory")

    s = sub.add_parser("simulate", help="one trajectory of a preset problem")
    s.add_argument("--preset", required=True, choices=PRESETS)
    s.add_argument("--scheme", type=_schemes, default=["mem"])
    s.add_argument("--step", type=parse_number, required=True)
    s.add_argument("--href", type=parse_number, help="lattice step (default: preset's, capped at --step)")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--rule", choices=RULES, default="trapezium")
    s.add_argument("--out", type=Path, required=True)

    h = sub.add_parser("spdde", help="stochastic heat equation with delayed cooling")
    h.add_argument("--d", type=int, default=50, help="spatial intervals")
    h.add_argument("--D", type=parse_number, default=1.0 / 25.0, help="diffusion coefficient")
    h.add_argument("--c", type=parse_number, default=0.15, help="noise intensity")
    h.add_argument("--tau", type=parse_number, default=1.0, help="cooling delay (0 = none)")
    h.add_argument("--ra", type=parse_number, default=1.0)
    h.add_argument("--rb", type=parse_number, default=10.0)
    h.add_argument("--noise", choices=("correlated", "uncorrelated"), default="correlated")
    h.add_argument("--modes", type=int, help="noise modes (default d, or d-1 uncorrelated)")
    h.add_argument("--T", type=parse_number, default=6.0)
    h.add_argument("--scheme", type=_schemes, default=["mem"])
    h.add_argument("--step", type=parse_number, required=True)
    h.add_argument("--href", type=parse_number, help="lattice step (default: --step)")
    h.add_argument("--seed", type=int, default=1)
    h.add_argument("--out", type=Path, required=True)
    h.add_argument("--svg", type=Path, help="also draw a heat map")

    q = sub.add_parser("qwiener", help="sample a truncated Q-Wiener field")
    q.add_argument("--kind", choices=("correlated", "uncorrelated"), default="correlated")
    q.add_argument("--modes", type=int, default=50)
    q.add_argument("--d", type=int, help="spatial intervals (default: modes, or modes+1 uncorrelated)")
    q.add_argument("--href", type=parse_number, required=True)
    q.add_argument("--T", type=parse_number, required=True)
    q.add_argument("--seed", type=int, default=9)
    q.add_argument("--stride", type=int, help="keep every k-th time (default: at most 1025 rows)")
    q.add_argument("--out", type=Path, required=True)
    q.add_argument("--svg", type=Path)
    return ap


def _converge(args) -> int:
    from .report import plot_report, write_report_csv

    cfg = ExperimentConfig(
        preset=args.preset,
        schemes=args.schemes,
        steps=args.steps,
        h_ref=args.href,
        reference=args.reference[0] if args.reference else None,
        n_trials=args.trials,
        seed=args.seed,
        rule=args.rule,
        parallel=args.parallel,
    )
    report = run_convergence(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, args.out / "convergence.csv")
    plot_report(report, args.out / "convergence.svg", title=f"{args.preset}, {report.n_trials} trials")
    for r in report.results.values():
        print(f"{r.scheme:<9} slope {r.slope:.3f}")
    log.info("runtime %.1f s", report.runtime)
    if report.any_diverged:
        log.error("divergence at some step sizes; those points are excluded from the fit")
        return EXIT_DIVERGED
    return EXIT_OK


def _simulate(args) -> int:
    from .report import write_trajectory_csv

    pre = preset(args.preset)
    p = pre.problem
    h_ref = args.href if args.href is not None else min(pre.h_ref, args.step)
    lat = sample_lattice(p.m, p.T, h_ref, args.seed)
    traj = integrate(p, args.scheme[0], build_mesh(p.T, args.step, p.delays), lat, rule=args.rule)
    return _finish(traj, lambda t: write_trajectory_csv(t, args.out))


def _truncate(traj):
    """Drop rows after the first divergence so the written output stays finite."""
    if not traj.any_diverged:
        return traj
    stop = traj.mesh.p + int(traj.diverged_at) + 1
    traj.values = traj.values[..., :stop, :]
    return traj


def _finish(traj, write) -> int:
    if traj.any_diverged:
        at = int(traj.diverged_at) * traj.mesh.h
        log.error("solution diverged at t = %g; output truncated there", at)
        write(_truncate(traj))
        return EXIT_DIVERGED
    write(traj)
    return EXIT_OK


def _spdde(args) -> int:
    from .report import plot_field, write_field_csv
    from .spdde import HeatProblem, assemble, field

    hp = HeatProblem(
        D=args.D, c=args.c, tau=args.tau, r_a=args.ra, r_b=args.rb, d=args.d,
        noise=args.noise, T=args.T,
    )
    p = assemble(hp, args.modes)
    h_ref = args.href if args.href is not None else args.step
    lat = sample_lattice(p.m, p.T, h_ref, args.seed)
    traj = integrate(p, args.scheme[0], build_mesh(p.T, args.step, p.delays), lat)

    def write(t):
        n = t.values.shape[-2]
        times, values = t.times[:n], field(t)
        write_field_csv(times, hp.grid, values, args.out)
        if args.svg is not None:
            plot_field(times, hp.grid, values, args.svg, title=f"{args.scheme[0].upper()}, h = {args.step:g}")

    return _finish(traj, write)


def _qwiener(args) -> int:
    from .report import plot_field, write_field_csv

    if args.kind == "uncorrelated":
        d = args.d if args.d is not None else args.modes + 1
        basis = kl_basis("uncorrelated", args.modes, d)
    else:
        d = args.d if args.d is not None else args.modes
        basis = kl_basis("correlated", args.modes)
    lat = sample_lattice(basis.m, args.T, args.href, args.seed)
    n = lat.n_samples
    stride = args.stride if args.stride is not None else max(1, math.ceil(n / 1024))
    if stride < 1:
        raise SddeError(f"stride must be positive, got {stride}")
    idx = np.arange(0, n + 1, stride)
    grid = np.arange(d + 1) / d
    weights = basis.matrix(grid) * np.sqrt(basis.eigenvalues)
    values = lat.values[:, idx].T @ weights.T
    times = idx * lat.h_ref
    write_field_csv(times, grid, values, args.out)
    if args.svg is not None:
        plot_field(times, grid, values, args.svg, title=f"{args.kind} Q-Wiener", label="W(t, x)")
    return EXIT_OK


_COMMANDS = {"converge": _converge, "simulate": _simulate, "spdde": _spdde, "qwiener": _qwiener}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (SddeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
