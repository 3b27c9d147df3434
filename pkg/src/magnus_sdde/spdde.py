"""Stochastic heat equation with delayed cooling, as a linear SDDE.

The equation on (0, 1) with zero boundary values,

    dU = [D U_xx + C(t - tau, x)] dt + c U dW^c(t, x),

is discretized by forward-time centred-space finite differences on
``x_i = i / d``. The state is ``(U_1, ..., U_d)``: ``U_0`` is dropped and the
pinned right boundary ``U_d`` is kept as a component with zero dynamics so
matrix indices line up with the grid. Cooling observes the field at
``a = x_1`` and ``b = x_{d-1}`` and acts with a delay ``tau``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError, TrajectoryLookupError
from .model import SemilinearSdde, Trajectory, constant_history
from .noise import kl_basis

__all__ = [
    "HeatProblem",
    "FieldSlice",
    "stability_threshold",
    "cooling",
    "laplacian",
    "assemble",
    "slice",
    "field",
]


def _sine(x):
    return np.sin(2 * np.pi * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class HeatProblem:
    D: float = 1.0 / 25.0
    c: float = 0.15
    tau: float = 1.0
    r_a: float = 1.0
    r_b: float = 10.0
    d: int = 50
    T0: Callable = _sine
    noise: str = "correlated"
    T: float = 6.0

    def __post_init__(self):
        if not self.D > 0:
            raise InvalidArgumentError(f"diffusion coefficient must be positive, got {self.D}")
        if self.d < 3:
            raise InvalidArgumentError(f"need at least 3 spatial intervals, got {self.d}")
        if self.tau < 0 or self.r_a < 0 or self.r_b < 0:
            raise InvalidArgumentError("tau, r_a and r_b must be non-negative")
        if self.noise not in ("correlated", "uncorrelated"):
            raise InvalidArgumentError(f"unknown noise kind {self.noise!r}")

    @property
    def dx(self) -> float:
        return 1.0 / self.d

    @property
    def grid(self) -> np.ndarray:
        """All grid points ``x_0..x_d``."""
        return np.arange(self.d + 1) / self.d

    @property
    def a(self) -> float:
        return 1.0 / self.d

    @property
    def b(self) -> float:
        return (self.d - 1) / self.d

    @property
    def default_modes(self) -> int:
        # one path per evolving point when uncorrelated, d KL modes otherwise
        return self.d if self.noise == "correlated" else self.d - 1


def stability_threshold(hp: HeatProblem) -> float:
    """Largest explicit-Euler step for the noiseless problem: ``dx^2 / (2 D)``.

    Steps must be strictly below it.
    """
    return hp.dx**2 / (2.0 * hp.D)


def cooling(hp: HeatProblem, u_a: float, u_b: float, x: float) -> float:
    """Cooling applied at ``x`` given the delayed observations at ``a`` and ``b``."""
    if not 0.0 < x < 1.0:
        return 0.0
    a, b = hp.a, hp.b
    return (x - b) / (b - a) * hp.r_a * u_a + (a - x) / (b - a) * hp.r_b * u_b


def laplacian(d: int) -> np.ndarray:
    """Second-difference matrix on ``U_1..U_d`` with the last row zeroed."""
    L = np.zeros((d, d))
    i = np.arange(d - 1)
    L[i, i] = -2.0
    L[i, i + 1] = 1.0
    L[i[1:], i[1:] - 1] = 1.0
    return L


class _CoolingDrift:
    """Linear drift ``w_a u[0] + w_b u[d-2]`` of the (delayed) state ``u``."""

    def __init__(self, w_a, w_b, delayed: bool):
        self.w_a, self.w_b, self.delayed = w_a, w_b, delayed

    def __call__(self, t, x, *xd):
        u = xd[0] if self.delayed else x
        return u[..., :1] * self.w_a + u[..., -2:-1] * self.w_b


class _Zero:
    def __init__(self, jac=False):
        self.jac = jac

    def __call__(self, t, x, *xd):
        shape = np.shape(x)
        return np.zeros(shape + (shape[-1],) if self.jac else shape)


def assemble(hp: HeatProblem, modes: int | None = None) -> SemilinearSdde:
    """Linear SDDE ``dU = [A_0 U + f(U(t - tau))] dt + sum_j A_j U dW_j``.

    ``A_0 = D / dx^2 * laplacian(d)``; ``A_j = c / sqrt(dx) * sqrt(lambda_j)
    * diag(phi_j(x_1..x_d))`` where the KL pair comes from the noise kind
    (for uncorrelated noise ``A_j`` has the single entry ``c / sqrt(dx)`` at
    ``(j, j)``). With ``tau = 0`` the cooling acts on the current state and the
    problem has no delays.
    """
    d = hp.d
    m = hp.default_modes if modes is None else modes
    limit = d if hp.noise == "correlated" else d - 1
    if not 1 <= m <= limit:
        raise ConfigurationError(f"{hp.noise} noise on d = {d} supports 1..{limit} modes, got {m}")
    x = np.arange(1, d + 1) / d
    A0 = hp.D / hp.dx**2 * laplacian(d)
    basis = kl_basis(hp.noise, m, d) if hp.noise == "uncorrelated" else kl_basis(hp.noise, m)
    scale = hp.c / np.sqrt(hp.dx) * np.sqrt(basis.eigenvalues)
    phi = basis.matrix(x)  # (d, m)
    A = np.zeros((m + 1, d, d))
    A[0] = A0
    idx = np.arange(d)
    A[1:, idx, idx] = (phi * scale).T

    j = np.arange(1, d + 1)
    v1 = np.where(j < d, j + 1 - d, 0).astype(float)
    v2 = np.where(j < d, 1 - j, 0).astype(float)
    drift = _CoolingDrift(hp.r_a / (d - 2) * v1, hp.r_b / (d - 2) * v2, hp.tau > 0)

    u0 = np.asarray(hp.T0(x), dtype=float).copy()
    u0[-1] = 0.0  # boundary value U(t, 1) = 0
    delays = (hp.tau,) if hp.tau > 0 else ()
    return SemilinearSdde(
        A=A,
        delays=delays,
        T=hp.T,
        f=drift,
        g=tuple(_Zero() for _ in range(m)),
        history=constant_history(u0),
        jac_x_g=tuple(_Zero(jac=True) for _ in range(m)),
        jac_delay_g=tuple(tuple(_Zero(jac=True) for _ in delays) for _ in range(m)),
        name="spdde-heat",
    )


@dataclass(frozen=True)
class FieldSlice:
    """A cross section of the field.

    ``axis`` is "time" (fixed ``t``, values over ``coords`` = grid) or
    "space" (fixed ``x``, values over ``coords`` = mesh times).
    """

    axis: str
    coordinate: float
    coords: np.ndarray
    values: np.ndarray


def field(traj: Trajectory) -> np.ndarray:
    """Full field including both boundaries, shape ``(..., times, d + 1)``."""
    v = traj.values
    zeros = np.zeros(v.shape[:-1] + (1,))
    return np.concatenate([zeros, v], axis=-1)


def slice(traj: Trajectory, hp: HeatProblem, axis: str, coordinate: float) -> FieldSlice:
    """Cross section at fixed time (``axis="time"``) or fixed position (``"space"``)."""
    full = field(traj)
    if axis == "time":
        i = traj.mesh.index(coordinate)
        return FieldSlice(axis, coordinate, hp.grid, full[..., i, :])
    if axis == "space":
        k = round(coordinate * hp.d)
        if abs(coordinate * hp.d - k) > 1e-9 or not 0 <= k <= hp.d:
            raise TrajectoryLookupError(f"x = {coordinate} is not a grid point of d = {hp.d}")
        return FieldSlice(axis, coordinate, traj.times, full[..., :, k])
    raise InvalidArgumentError(f"axis must be 'time' or 'space', got {axis!r}")
