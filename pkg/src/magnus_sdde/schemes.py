"""Euler-Maruyama, Milstein, Magnus-EM and Magnus-Milstein for SDDEs.

The Taylor baselines (EM, Milstein) integrate the folded plain form of the
problem, where the linear parts live inside the callbacks. The Magnus
schemes treat ``A_0..A_m`` through a matrix exponential and the
nonlinearities through a Taylor step with the modified drift
``f - sum_j A_j g_j``.

One-step maps take a :class:`StepContext` (current and delayed states) and a
:class:`~magnus_sdde.noise.StepNoise`; both may carry leading trial axes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, MeshAlignmentError, StepSizeError
from .linalg import lie_bracket, mat_exp
from .model import (
    SemilinearSdde,
    TimeMesh,
    Trajectory,
    bellman_intervals,
    f_tilde,
)
from .noise import RULES, StepNoise, WienerLattice, mesh_noise

__all__ = [
    "Scheme",
    "StepContext",
    "DIVERGENCE_THRESHOLD",
    "magnus_log_1",
    "magnus_log_2",
    "step_em",
    "step_milstein",
    "step_mem",
    "step_mm",
    "integrate",
]

DIVERGENCE_THRESHOLD = 1e12

# Steps whose matrix exponentials are evaluated together in one stacked call.
_EXP_CHUNK = 256


class Scheme(str, enum.Enum):
    EM = "em"
    MILSTEIN = "milstein"
    MEM = "mem"
    MM = "mm"

    @property
    def second_order(self) -> bool:
        return self in (Scheme.MILSTEIN, Scheme.MM)

    @property
    def magnus(self) -> bool:
        return self in (Scheme.MEM, Scheme.MM)


@dataclass(frozen=True)
class StepContext:
    """States a one-step map reads at mesh time ``t``.

    ``delayed[k]`` is ``Y(t - tau_k)``. ``doubly[k][l]`` is
    ``Y(t - tau_l - tau_k)``; it is only needed (and only filled) when
    ``t >= tau_k``, otherwise ``doubly[k]`` is None.
    """

    t: float
    y: np.ndarray
    delayed: tuple = ()
    doubly: tuple = ()


def _active(p: SemilinearSdde, t: float) -> list[int]:
    # mesh times are exact multiples of h, and so are the delays
    return [k for k, tau in enumerate(p.delays) if t >= tau - 1e-12 * max(1.0, tau)]


def magnus_log_1(p: SemilinearSdde, noise: StepNoise) -> np.ndarray:
    """First-order Magnus log ``(A_0 - 1/2 sum A_j^2) h + sum A_j dW_j``."""
    A = p.A
    drift = A[0] - 0.5 * np.einsum("jab,jbc->ac", A[1:], A[1:])
    omega = drift * noise.h
    if p.m:
        omega = omega + np.einsum("...j,jab->...ab", noise.dW, A[1:])
    return omega


def _bracket_pairs(p: SemilinearSdde):
    """Nonzero brackets ``(i, j, [A_i, A_j])`` for ``0 <= i < j <= m``."""
    pairs = []
    for i in range(p.m + 1):
        for j in range(i + 1, p.m + 1):
            c = lie_bracket(p.A[i], p.A[j])
            if np.any(c):
                pairs.append((i, j, c))
    return pairs


def magnus_log_2(p: SemilinearSdde, noise: StepNoise, _pairs=None) -> np.ndarray:
    """Second-order Magnus log: ``magnus_log_1`` plus the bracket correction
    ``1/2 sum_{i<j} [A_i, A_j] (I_ji - I_ij)`` with index 0 standing for time."""
    omega = magnus_log_1(p, noise)
    pairs = _bracket_pairs(p) if _pairs is None else _pairs
    if not pairs:
        return omega
    if noise.I is None or noise.I0 is None:
        raise ConfigurationError("second-order Magnus log needs I_ij and the mixed integrals")
    for i, j, c in pairs:
        if i == 0:
            # I0[..., j, 0] = I_0j, I0[..., j, 1] = I_j0
            w = noise.I0[..., j - 1, 1] - noise.I0[..., j - 1, 0]
        else:
            w = noise.I[..., j - 1, i - 1] - noise.I[..., i - 1, j - 1]
        omega = omega + 0.5 * w[..., None, None] * c
    return omega


def _em_increment(p, ctx, noise, drift):
    """``drift h + sum_j g_j dW_j`` with ``drift`` already evaluated."""
    inc = drift * noise.h
    if p.m:
        G = p.diffusions(ctx.t, ctx.y, ctx.delayed)
        inc = inc + np.einsum("...ja,...j->...a", G, noise.dW)
        return inc, G
    return inc, None


def _delayed_args(ctx: StepContext, k: int, K: int):
    return ctx.delayed[k], tuple(ctx.doubly[k][l] for l in range(K))


def _milstein_terms(p, ctx, noise, G, linear: bool):
    """Immediate and delayed iterated-integral corrections.

    With ``linear`` the bracketed factors carry ``A_i Y`` and the immediate
    term subtracts ``A_i g_j``, as the Magnus-Milstein inner step requires.
    """
    if p.m == 0:
        return 0.0
    Jx = p.jac_x(ctx.t, ctx.y, ctx.delayed)  # (..., m, d, d)
    B = G
    if linear:
        B = G + np.einsum("iab,...b->...ia", p.A[1:], ctx.y)
    # H_j = sum_i I_ij B_i
    H = np.einsum("...ij,...ia->...ja", noise.I, B)
    out = np.einsum("...jab,...jb->...a", Jx, H)
    if linear:
        out = out - np.einsum("iab,...ij,...jb->...a", p.A[1:], noise.I, G)
    active = _active(p, ctx.t)
    if active and noise.Idelay is None:
        raise ConfigurationError(f"delayed integrals missing at t = {ctx.t}")
    for k in active:
        t_k = ctx.t - p.delays[k]
        y_k, y_kk = _delayed_args(ctx, k, p.K)
        Bk = p.diffusions(t_k, y_k, y_kk)
        if linear:
            Bk = Bk + np.einsum("iab,...b->...ia", p.A[1:], y_k)
        Jk = p.jac_delay(k, ctx.t, ctx.y, ctx.delayed)
        Hk = np.einsum("...ij,...ia->...ja", noise.Idelay[..., k, :, :], Bk)
        out = out + np.einsum("...jab,...jb->...a", Jk, Hk)
    return out


def step_em(p: SemilinearSdde, ctx: StepContext, noise: StepNoise) -> np.ndarray:
    """Euler-Maruyama step on the folded plain form."""
    q = p.plain
    drift = np.asarray(q.f(ctx.t, ctx.y, *ctx.delayed), dtype=float)
    inc, _ = _em_increment(q, ctx, noise, drift)
    return ctx.y + inc


def step_milstein(p: SemilinearSdde, ctx: StepContext, noise: StepNoise) -> np.ndarray:
    """Milstein step on the folded plain form, delayed terms gated by ``t >= tau_k``."""
    q = p.plain
    q.require_jacobians()
    if q.m and noise.I is None:
        raise ConfigurationError("Milstein step needs the iterated integrals I_ij")
    drift = np.asarray(q.f(ctx.t, ctx.y, *ctx.delayed), dtype=float)
    inc, G = _em_increment(q, ctx, noise, drift)
    return ctx.y + inc + _milstein_terms(q, ctx, noise, G, linear=False)


def _inner_mem(p, ctx, noise):
    drift = f_tilde(p, ctx.t, ctx.y, ctx.delayed)
    inc, G = _em_increment(p, ctx, noise, drift)
    return ctx.y + inc, G


def _apply(expo: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...ab,...b->...a", expo, v)


def step_mem(p: SemilinearSdde, ctx: StepContext, noise: StepNoise, expo=None) -> np.ndarray:
    """Magnus-EM step ``exp(Omega_1) {Y + f~ h + sum g_j dW_j}``.

    ``expo`` may carry a precomputed ``exp(Omega_1)`` for this step.
    """
    if expo is None:
        expo = mat_exp(magnus_log_1(p, noise))
    inner, _ = _inner_mem(p, ctx, noise)
    return _apply(expo, inner)


def step_mm(p: SemilinearSdde, ctx: StepContext, noise: StepNoise, expo=None) -> np.ndarray:
    """Magnus-Milstein step ``exp(Omega_2) Y~`` with the full inner Taylor step."""
    p.require_jacobians()
    if p.m and noise.I is None:
        raise ConfigurationError("Magnus-Milstein step needs the iterated integrals I_ij")
    if expo is None:
        expo = mat_exp(magnus_log_2(p, noise))
    inner, G = _inner_mem(p, ctx, noise)
    return _apply(expo, inner + _milstein_terms(p, ctx, noise, G, linear=True))


_STEPPERS = {
    Scheme.EM: step_em,
    Scheme.MILSTEIN: step_milstein,
    Scheme.MEM: step_mem,
    Scheme.MM: step_mm,
}


def _context(p: SemilinearSdde, mesh: TimeMesh, Y: np.ndarray, n: int, need_doubly: bool):
    i = n + mesh.p
    t = n * mesh.h
    delayed = tuple(Y[..., i - s, :] for s in mesh.delay_steps)
    doubly = ()
    if need_doubly:
        doubly = tuple(
            tuple(Y[..., i - sk - sl, :] for sl in mesh.delay_steps) if n >= sk else None
            for sk in mesh.delay_steps
        )
    return StepContext(t, Y[..., i, :], delayed, doubly)


def _validate(p, scheme, mesh, lat, F, rule):
    if lat.m != p.m:
        raise ConfigurationError(f"problem has {p.m} noise terms, lattice has {lat.m} paths")
    if rule not in RULES:
        raise ConfigurationError(f"unknown integral rule {rule!r}")
    if len(mesh.delay_steps) != p.K:
        raise ConfigurationError("mesh was built for a different set of delays")
    if abs(mesh.T - p.T) > 1e-12 * max(1.0, p.T):
        raise MeshAlignmentError(f"mesh horizon {mesh.T} differs from problem horizon {p.T}")
    if lat.T < mesh.T * (1 - 1e-12):
        raise MeshAlignmentError(f"lattice ends at {lat.T}, before the horizon {mesh.T}")
    R = round(mesh.h / lat.h_ref)
    if abs(mesh.h / lat.h_ref - R) > 1e-9 * max(1.0, R) or R < 1:
        raise MeshAlignmentError(f"step {mesh.h} is not a multiple of h_ref {lat.h_ref}")
    if F is None:
        F = R
    if scheme.second_order:
        p.require_jacobians()
        if p.K and mesh.h > min(p.delays) * (1 + 1e-12):
            raise StepSizeError(
                f"{scheme.name} needs h <= min delay; got h = {mesh.h}, delays = {p.delays}"
            )
    if p.K:
        edges = bellman_intervals(p.delays, p.T)
        for s in edges:
            if abs(s / mesh.h - round(s / mesh.h)) > 1e-9:
                raise MeshAlignmentError(f"Bellman breakpoint {s} is not a mesh point")
    return F


def integrate(
    p: SemilinearSdde,
    scheme: Scheme | str,
    mesh: TimeMesh,
    lat: WienerLattice,
    F: int | None = None,
    rule: str = "trapezium",
) -> Trajectory:
    """Run ``scheme`` over the whole mesh on the given lattice.

    ``F`` is the number of subintervals per step for the iterated integrals
    and defaults to ``h / h_ref``. Leading batch axes of the lattice become
    leading axes of the trajectory. Trials whose state exceeds 1e12 in
    magnitude (or turns non-finite) are flagged as diverged rather than
    aborting the run; once every trial has diverged the remaining values are
    left as NaN.
    """
    scheme = Scheme(scheme)
    F = _validate(p, scheme, mesh, lat, F, rule)
    batch = lat.batch_shape
    Y = np.full(batch + (mesh.N + mesh.p + 1, p.d), np.nan)
    for n in range(-mesh.p, 1):
        Y[..., n + mesh.p, :] = np.asarray(p.history(n * mesh.h), dtype=float)
    traj = Trajectory(mesh, Y, p.history)
    if mesh.N == 0:
        return traj

    second = scheme.second_order
    noise = mesh_noise(
        lat, 0.0, mesh.h, mesh.N, F, p.delays if second else (), rule,
        doubles=second, mixed=scheme is Scheme.MM,
    )
    step = _STEPPERS[scheme]

    pairs = _bracket_pairs(p) if scheme is Scheme.MM else None
    const_expo = None
    if scheme.magnus and (p.m == 0 or not np.any(p.A[1:])):
        # the log does not depend on the noise: one exponential for all steps
        const_expo = mat_exp(magnus_log_1(p, noise.step(0)))

    diverged = traj.diverged
    diverged_at = traj.diverged_at
    expos = None
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(mesh.N):
            sn = noise.step(n)
            ctx = _context(p, mesh, Y, n, second and p.K > 0)
            if scheme.magnus:
                if const_expo is not None:
                    expo = const_expo
                else:
                    if n % _EXP_CHUNK == 0:
                        block = StepNoise(
                            noise.h,
                            noise.dW[n : n + _EXP_CHUNK],
                            None if noise.I is None else noise.I[n : n + _EXP_CHUNK],
                            None if noise.I0 is None else noise.I0[n : n + _EXP_CHUNK],
                        )
                        log = (
                            magnus_log_2(p, block, pairs)
                            if scheme is Scheme.MM
                            else magnus_log_1(p, block)
                        )
                        expos = mat_exp(log)
                    expo = expos[n % _EXP_CHUNK]
                y_next = step(p, ctx, sn, expo)
            else:
                y_next = step(p, ctx, sn)
            Y[..., n + mesh.p + 1, :] = y_next
            bad = ~np.all(np.abs(y_next) <= DIVERGENCE_THRESHOLD, axis=-1)
            fresh = bad & ~diverged
            if np.any(fresh):
                diverged_at[fresh] = n + 1
                diverged |= fresh
                if np.all(diverged):
                    break
    return traj
