"""Monte Carlo strong-convergence harness.

Each trial samples one Wiener lattice at the reference step ``h_ref``. The
reference solution and every scheme/step combination run on that same
lattice (coarse steps read it through ``F = h / h_ref`` subintervals), and
the error at ``T`` is accumulated as

    MSE(h) = sqrt(mean_i |Y_N^(i) - X^(i)(T)|^2).

Trials are processed in fixed-size chunks, vectorized within a chunk and
optionally spread over worker processes; results do not depend on the
degree of parallelism.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError, MeshAlignmentError
from .model import SemilinearSdde, build_mesh
from .noise import sample_lattice, stack_lattices, trial_seed
from .presets import preset
from .schemes import Scheme, integrate

__all__ = [
    "ExperimentConfig",
    "SchemeResult",
    "ConvergenceReport",
    "run_convergence",
    "fit_slope",
]

log = logging.getLogger(__name__)

# Rough cap on lattice bytes per chunk; keeps desk-scale runs well under 1 GB.
_CHUNK_BYTES = 64 * 2**20


@dataclass
class ExperimentConfig:
    """Settings for one convergence experiment.

    Either ``preset`` names a registered problem or ``problem`` is given
    directly. Unset fields fall back to the preset's defaults.
    """

    preset: str | None = None
    problem: SemilinearSdde | None = None
    schemes: Sequence[str] | None = None
    steps: Sequence[float] | None = None
    h_ref: float | None = None
    reference: str | None = None
    n_trials: int | None = None
    seed: int = 42
    rule: str = "trapezium"
    parallel: int = 1
    chunk: int | None = None

    def resolved(self) -> "ExperimentConfig":
        """Copy with every default filled in and validated."""
        base = None
        if self.preset is not None:
            base = preset(self.preset)
        elif self.problem is None:
            raise ConfigurationError("experiment needs a preset name or a problem")
        pick = lambda mine, attr, fallback: (  # noqa: E731
            mine if mine is not None else (getattr(base, attr) if base else fallback)
        )
        cfg = ExperimentConfig(
            preset=self.preset,
            problem=self.problem if self.problem is not None else base.problem,
            schemes=tuple(Scheme(s).value for s in pick(self.schemes, "schemes", ("em", "mem"))),
            steps=tuple(float(h) for h in pick(self.steps, "steps", ())),
            h_ref=float(pick(self.h_ref, "h_ref", 2.0**-12)),
            reference=Scheme(pick(self.reference, "reference", "milstein")).value,
            n_trials=int(pick(self.n_trials, "n_trials", 200)),
            seed=int(self.seed),
            rule=self.rule,
            parallel=max(1, int(self.parallel)),
            chunk=self.chunk,
        )
        p = cfg.problem
        if not cfg.steps:
            raise ConfigurationError("no step sizes configured")
        if cfg.n_trials < 1:
            raise ConfigurationError("need at least one trial")
        for h in cfg.steps:
            ratio = h / cfg.h_ref
            if ratio < 1 or abs(ratio - round(ratio)) > 1e-9 * ratio:
                raise MeshAlignmentError(f"step {h} is not an integer multiple of h_ref {cfg.h_ref}")
        build_mesh(p.T, cfg.h_ref, p.delays)
        if cfg.chunk is None:
            n = round(p.T / cfg.h_ref) + 1
            per_trial = 8 * max(p.m, 1) * n
            cfg.chunk = int(max(1, min(50, _CHUNK_BYTES // per_trial)))
        return cfg


@dataclass
class SchemeResult:
    scheme: str
    steps: list
    mse: list
    diverged: list
    slope: float = float("nan")
    intercept: float = float("nan")

    def fitted_points(self):
        return [(h, e) for h, e, bad in zip(self.steps, self.mse, self.diverged) if not bad]


@dataclass
class ConvergenceReport:
    results: dict = field(default_factory=dict)
    n_trials: int = 0
    h_ref: float = float("nan")
    reference: str = ""
    runtime: float = 0.0
    lattice_count: int = 0

    @property
    def any_diverged(self) -> bool:
        return any(any(r.diverged) for r in self.results.values())

    def rows(self):
        """``(scheme, h, mse, slope)`` rows in scheme then step order."""
        for r in self.results.values():
            for h, e in zip(r.steps, r.mse):
                yield r.scheme, h, e, r.slope


def fit_slope(points) -> tuple[float, float]:
    """Least-squares line through ``(log h, log mse)``; returns (slope, intercept)."""
    pts = list(points)
    if len(pts) < 2:
        raise InvalidArgumentError(f"need at least two points to fit a slope, got {len(pts)}")
    h = np.array([p[0] for p in pts], dtype=float)
    e = np.array([p[1] for p in pts], dtype=float)
    if np.any(~(h > 0)) or np.any(~(e > 0)) or not np.all(np.isfinite(h * e)):
        raise InvalidArgumentError("slope fit needs finite, strictly positive h and mse")
    slope, intercept = np.polyfit(np.log(h), np.log(e), 1)
    return float(slope), float(intercept)


def _run_chunk(problem, schemes, steps, h_ref, reference, rule, seeds):
    """Squared errors ``(len(seeds), len(schemes), len(steps))`` plus flags."""
    p = problem
    lat = stack_lattices([sample_lattice(p.m, p.T, h_ref, s) for s in seeds])
    ref = integrate(p, reference, build_mesh(p.T, h_ref, p.delays), lat, F=1, rule=rule)
    x_T = ref.final
    shape = (len(seeds), len(schemes), len(steps))
    sq = np.zeros(shape)
    bad = np.zeros(shape, dtype=bool)
    for a, scheme in enumerate(schemes):
        for b, h in enumerate(steps):
            F = round(h / h_ref)
            traj = integrate(p, scheme, build_mesh(p.T, h, p.delays), lat, F=F, rule=rule)
            with np.errstate(over="ignore", invalid="ignore"):
                sq[:, a, b] = np.sum((traj.final - x_T) ** 2, axis=-1)
            bad[:, a, b] = traj.diverged | ~np.isfinite(sq[:, a, b])
    ref_bad = ref.diverged
    return sq, bad, ref_bad, len(seeds)


def run_convergence(cfg: ExperimentConfig) -> ConvergenceReport:
    """Estimate MSE(h) for each scheme and fit log-log slopes.

    Steps at which any trial diverged get ``mse = inf`` and are left out of
    the slope fit.
    """
    cfg = cfg.resolved()
    start = time.perf_counter()
    seeds = [trial_seed(cfg.seed, i) for i in range(cfg.n_trials)]
    chunks = [seeds[i : i + cfg.chunk] for i in range(0, len(seeds), cfg.chunk)]
    args = (cfg.problem, cfg.schemes, cfg.steps, cfg.h_ref, cfg.reference, cfg.rule)
    if cfg.parallel > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallel) as pool:
            futures = [pool.submit(_run_chunk, *args, c) for c in chunks]
            parts = [f.result() for f in futures]
    else:
        parts = []
        for i, c in enumerate(chunks):
            parts.append(_run_chunk(*args, c))
            log.info("chunk %d/%d done", i + 1, len(chunks))
    sq = np.concatenate([part[0] for part in parts])
    bad = np.concatenate([part[1] for part in parts])
    ref_bad = np.concatenate([np.atleast_1d(part[2]) for part in parts])
    if np.any(ref_bad):
        raise ConfigurationError(f"reference {cfg.reference} at h_ref = {cfg.h_ref} diverged")

    report = ConvergenceReport(
        n_trials=cfg.n_trials,
        h_ref=cfg.h_ref,
        reference=cfg.reference,
        lattice_count=sum(part[3] for part in parts),
    )
    for a, scheme in enumerate(cfg.schemes):
        mse, diverged = [], []
        for b, h in enumerate(cfg.steps):
            if np.any(bad[:, a, b]):
                mse.append(math.inf)
                diverged.append(True)
            else:
                # sum in trial order so the result is schedule independent
                total = math.fsum(sq[:, a, b].tolist())
                mse.append(math.sqrt(total / cfg.n_trials))
                diverged.append(False)
        res = SchemeResult(scheme, list(cfg.steps), mse, diverged)
        pts = [(h, e) for h, e in res.fitted_points() if e > 0]
        if len(pts) >= 2:
            res.slope, res.intercept = fit_slope(pts)
        report.results[scheme] = res
    report.runtime = time.perf_counter() - start
    return report
