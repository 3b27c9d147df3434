"""Semilinear SDDE problems, delay-aligned meshes and trajectories.

A problem has the form

    dX = [A_0 X + f(t, X, X(t - tau_1), ..., X(t - tau_K))] dt
         + sum_j [A_j X + g_j(t, X, X(t - tau_1), ...)] dW_j

with history ``X(t) = phi(t)`` on ``[-tau, 0]``.

Callbacks take ``(t, x, *x_delayed)`` where each state argument has shape
``(..., d)`` and must broadcast over the leading (trial) axes. Drift and
diffusion callbacks return ``(..., d)``; Jacobian callbacks return
``(..., d, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    InvalidArgumentError,
    MeshAlignmentError,
    TrajectoryLookupError,
)

__all__ = [
    "SemilinearSdde",
    "TimeMesh",
    "Trajectory",
    "BellmanBreakpoints",
    "f_tilde",
    "bellman_intervals",
    "build_mesh",
    "lookup",
    "as_plain_sdde",
    "constant_history",
]

_DIV_TOL = 1e-12


def _multiple(value: float, step: float, what: str) -> int:
    """Snap ``value / step`` to an integer within relative tolerance 1e-12."""
    ratio = value / step
    k = round(ratio)
    if abs(ratio - k) > _DIV_TOL * max(1.0, abs(ratio)):
        raise MeshAlignmentError(f"{what} = {value} is not an integer multiple of h = {step}")
    return int(k)


class constant_history:
    """History ``phi(t) = value`` for all ``t`` in ``[-tau, 0]``."""

    def __init__(self, value):
        self.value = np.array(value, dtype=float)
        self.value.setflags(write=False)

    def __call__(self, t):
        return self.value

    def __repr__(self):
        return f"constant_history({self.value.tolist()})"


@dataclass(frozen=True, eq=False)
class SemilinearSdde:
    """A semilinear SDDE with ``m + 1`` constant matrices ``A[0..m]``.

    Attributes:
        A: ``(m + 1, d, d)`` array; ``A[0]`` is the drift matrix.
        delays: positive delays ``tau_1..tau_K``.
        T: horizon.
        f: drift nonlinearity.
        g: ``m`` diffusion nonlinearities.
        history: deterministic ``phi(t)`` on ``[-tau, 0]``.
        jac_x_g: optional Jacobians of ``g_j`` in the current state.
        jac_delay_g: optional ``[j][k]`` Jacobians of ``g_j`` in ``x(t - tau_k)``.
        fd_jacobians: fall back to central differences for missing Jacobians.
    """

    A: np.ndarray
    delays: tuple
    T: float
    f: Callable
    g: tuple
    history: Callable
    jac_x_g: tuple | None = None
    jac_delay_g: tuple | None = None
    fd_jacobians: bool = False
    name: str = ""

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2] or A.shape[1] < 1:
            raise InvalidArgumentError(f"A must have shape (m+1, d, d), got {A.shape}")
        if not np.all(np.isfinite(A)):
            raise InvalidArgumentError("A has non-finite entries")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        delays = tuple(float(t) for t in self.delays)
        if any(not t > 0 for t in delays):
            raise InvalidArgumentError(f"delays must be positive, got {delays}")
        object.__setattr__(self, "delays", delays)
        if not self.T > 0:
            raise InvalidArgumentError(f"horizon must be positive, got {self.T}")
        object.__setattr__(self, "g", tuple(self.g))
        if len(self.g) != self.m:
            raise InvalidArgumentError(f"{self.m} noise matrices but {len(self.g)} g callbacks")
        if self.jac_x_g is not None:
            object.__setattr__(self, "jac_x_g", tuple(self.jac_x_g))
            if len(self.jac_x_g) != self.m:
                raise InvalidArgumentError("jac_x_g needs one callback per noise term")
        if self.jac_delay_g is not None:
            jd = tuple(tuple(row) for row in self.jac_delay_g)
            if len(jd) != self.m or any(len(row) != self.K for row in jd):
                raise InvalidArgumentError("jac_delay_g needs shape [m][K]")
            object.__setattr__(self, "jac_delay_g", jd)
        self._spot_check()

    def _spot_check(self):
        x0 = np.asarray(self.history(0.0), dtype=float)
        if x0.shape != (self.d,):
            raise InvalidArgumentError(f"history returns shape {x0.shape}, expected ({self.d},)")
        xd = [np.asarray(self.history(-t), dtype=float) for t in self.delays]
        for name, fn in [("f", self.f)] + [(f"g_{j + 1}", g) for j, g in enumerate(self.g)]:
            out = np.asarray(fn(0.0, x0, *xd), dtype=float)
            if out.shape != (self.d,) or not np.all(np.isfinite(out)):
                raise InvalidArgumentError(
                    f"{name} must return a finite vector of shape ({self.d},), got {out!r}"
                )

    @property
    def d(self) -> int:
        return self.A.shape[-1]

    @property
    def m(self) -> int:
        return self.A.shape[0] - 1

    @property
    def K(self) -> int:
        return len(self.delays)

    @property
    def tau(self) -> float:
        return max(self.delays, default=0.0)

    @property
    def is_plain(self) -> bool:
        return not np.any(self.A)

    @property
    def has_jacobians(self) -> bool:
        if self.fd_jacobians:
            return True
        if self.m == 0:
            return True
        return self.jac_x_g is not None and (self.K == 0 or self.jac_delay_g is not None)

    def require_jacobians(self):
        if not self.has_jacobians:
            raise ConfigurationError(
                f"problem {self.name or '<anonymous>'} has no Jacobians; Milstein-type "
                "schemes need jac_x_g and jac_delay_g (or fd_jacobians=True)"
            )

    def diffusions(self, t, x, xd) -> np.ndarray:
        """All ``g_j`` stacked, shape ``(..., m, d)``."""
        shape = np.broadcast_shapes(np.shape(x), *(np.shape(v) for v in xd))
        if self.m == 0:
            return np.zeros(shape[:-1] + (0, self.d))
        return np.stack([np.broadcast_to(g(t, x, *xd), shape) for g in self.g], axis=-2)

    def jac_x(self, t, x, xd) -> np.ndarray:
        """``grad_x g_j`` stacked, shape ``(..., m, d, d)``."""
        if self.jac_x_g is not None:
            return _stack_jacobians([jac(t, x, *xd) for jac in self.jac_x_g], x, xd, self.d)
        if self.fd_jacobians:
            return np.stack([_fd_jacobian(g, t, x, xd, None) for g in self.g], axis=-3)
        self.require_jacobians()

    def jac_delay(self, k, t, x, xd) -> np.ndarray:
        """``grad_{x_{tau_k}} g_j`` stacked over ``j``, shape ``(..., m, d, d)``."""
        if self.jac_delay_g is not None:
            return _stack_jacobians(
                [row[k](t, x, *xd) for row in self.jac_delay_g], x, xd, self.d
            )
        if self.fd_jacobians:
            return np.stack([_fd_jacobian(g, t, x, xd, k) for g in self.g], axis=-3)
        self.require_jacobians()

    @cached_property
    def plain(self) -> "SemilinearSdde":
        return as_plain_sdde(self)


def _stack_jacobians(mats, x, xd, d):
    shape = np.broadcast_shapes(np.shape(x), *(np.shape(v) for v in xd))[:-1] + (d, d)
    return np.stack([np.broadcast_to(mat, shape) for mat in mats], axis=-3)


def _fd_jacobian(fn, t, x, xd, k):
    """Central-difference Jacobian of ``fn`` in ``x`` (k None) or ``xd[k]``."""
    x = np.asarray(x, dtype=float)
    xd = [np.asarray(v, dtype=float) for v in xd]
    base = x if k is None else xd[k]
    cols = []
    for i in range(base.shape[-1]):
        step = 1e-6 * (1.0 + np.abs(base[..., i]))
        e = np.zeros(base.shape)
        e[..., i] = step
        if k is None:
            up, down = fn(t, x + e, *xd), fn(t, x - e, *xd)
        else:
            plus = list(xd)
            minus = list(xd)
            plus[k] = base + e
            minus[k] = base - e
            up, down = fn(t, x, *plus), fn(t, x, *minus)
        cols.append((np.asarray(up) - np.asarray(down)) / (2.0 * step[..., None]))
    return np.stack(cols, axis=-1)


def f_tilde(p: SemilinearSdde, t, x, x_delays) -> np.ndarray:
    """Modified drift ``f - sum_j A_j g_j``."""
    out = np.asarray(p.f(t, x, *x_delays), dtype=float)
    if p.m == 0:
        return out
    G = p.diffusions(t, x, x_delays)
    return out - np.einsum("jab,...jb->...a", p.A[1:], G)


class _FoldedDrift:
    def __init__(self, A0, f):
        self.A0, self.f = A0, f

    def __call__(self, t, x, *xd):
        return x @ self.A0.T + self.f(t, x, *xd)


class _FoldedDiffusion:
    def __init__(self, Aj, g):
        self.Aj, self.g = Aj, g

    def __call__(self, t, x, *xd):
        return x @ self.Aj.T + self.g(t, x, *xd)


class _FoldedJacobian:
    def __init__(self, Aj, jac):
        self.Aj, self.jac = Aj, jac

    def __call__(self, t, x, *xd):
        return self.Aj + self.jac(t, x, *xd)


def as_plain_sdde(p: SemilinearSdde) -> SemilinearSdde:
    """Fold the linear parts into the callbacks, leaving all ``A`` zero.

    The folded diffusion Jacobian in the current state is ``A_j + grad_x g_j``;
    delayed Jacobians are unchanged. An already-plain problem is returned as is.
    """
    if p.is_plain:
        return p
    jac_x = None
    if p.jac_x_g is not None:
        jac_x = tuple(_FoldedJacobian(p.A[j + 1], jac) for j, jac in enumerate(p.jac_x_g))
    return SemilinearSdde(
        A=np.zeros_like(p.A),
        delays=p.delays,
        T=p.T,
        f=_FoldedDrift(p.A[0], p.f),
        g=tuple(_FoldedDiffusion(p.A[j + 1], g) for j, g in enumerate(p.g)),
        history=p.history,
        jac_x_g=jac_x,
        jac_delay_g=p.jac_delay_g,
        fd_jacobians=p.fd_jacobians,
        name=f"{p.name}[plain]" if p.name else "",
    )


@dataclass(frozen=True)
class BellmanBreakpoints:
    """Sorted, merged delay multiples in ``(0, T]`` ending at ``T``."""

    times: tuple

    def __iter__(self):
        return iter(self.times)

    def __len__(self):
        return len(self.times)

    def intervals(self):
        """Consecutive ``(start, end)`` pairs starting from 0."""
        edges = (0.0,) + self.times
        return list(zip(edges[:-1], edges[1:]))


def bellman_intervals(delays: Sequence[float], T: float) -> BellmanBreakpoints:
    if not T > 0:
        raise InvalidArgumentError(f"horizon must be positive, got {T}")
    points = []
    for tau in delays:
        if not tau > 0:
            raise InvalidArgumentError(f"delays must be positive, got {tau}")
        for n in range(1, int(T / tau) + 2):
            s = n * tau
            if math.isclose(s, T, rel_tol=_DIV_TOL):
                s = T
            if s <= T:
                points.append(s)
    points.append(float(T))
    points.sort()
    merged = []
    for s in points:
        if merged and math.isclose(s, merged[-1], rel_tol=_DIV_TOL, abs_tol=0.0):
            continue
        merged.append(float(s))
    return BellmanBreakpoints(tuple(merged))


@dataclass(frozen=True)
class TimeMesh:
    """Uniform mesh ``t_n = n h`` for ``n = -p..N``."""

    h: float
    N: int
    p: int
    delay_steps: tuple

    @property
    def T(self) -> float:
        return self.N * self.h

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(-self.p, self.N + 1)

    def index(self, t: float) -> int:
        """Storage index (offset by ``p``) of mesh time ``t``."""
        ratio = t / self.h
        k = round(ratio)
        if abs(ratio - k) > _DIV_TOL * max(1.0, abs(ratio)):
            raise TrajectoryLookupError(f"time {t} is not on the mesh of step {self.h}")
        if not -self.p <= k <= self.N:
            raise TrajectoryLookupError(
                f"time {t} outside the mesh range [{-self.p * self.h}, {self.T}]"
            )
        return int(k) + self.p


def build_mesh(T: float, h: float, delays: Sequence[float] = ()) -> TimeMesh:
    """Uniform mesh on ``[-tau, T]`` with every delay landing on a mesh point."""
    if not h > 0:
        raise InvalidArgumentError(f"step must be positive, got {h}")
    N = _multiple(T, h, "horizon T")
    steps = tuple(_multiple(tau, h, f"delay tau_{k + 1}") for k, tau in enumerate(delays))
    if any(s < 1 for s in steps):
        raise MeshAlignmentError(f"delays {tuple(delays)} must be at least one step {h}")
    return TimeMesh(float(h), N, max(steps, default=0), steps)


@dataclass(eq=False)
class Trajectory:
    """Scheme output on a mesh, history segment included.

    ``values[..., i, :]`` is ``Y`` at ``mesh.times[i]``. ``diverged`` has the
    batch shape and marks trials whose state left the finite/1e12 range;
    ``diverged_at`` holds the first mesh step where that happened (or -1).
    """

    mesh: TimeMesh
    values: np.ndarray
    history: Callable
    diverged: np.ndarray = field(default=None)
    diverged_at: np.ndarray = field(default=None)

    def __post_init__(self):
        batch = self.values.shape[:-2]
        if self.diverged is None:
            self.diverged = np.zeros(batch, dtype=bool)
        if self.diverged_at is None:
            self.diverged_at = np.full(batch, -1, dtype=int)

    @property
    def times(self) -> np.ndarray:
        return self.mesh.times

    @property
    def final(self) -> np.ndarray:
        return self.values[..., -1, :]

    @property
    def any_diverged(self) -> bool:
        return bool(np.any(self.diverged))


def lookup(traj: Trajectory, t: float) -> np.ndarray:
    """Value at mesh time ``t``; history times go through ``phi``."""
    i = traj.mesh.index(t)
    if t <= 0:
        return np.broadcast_to(
            np.asarray(traj.history(t), dtype=float), traj.values[..., i, :].shape
        )
    return traj.values[..., i, :]
