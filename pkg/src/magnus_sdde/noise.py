"""Wiener lattices and the stochastic integrals derived from them.

All randomness enters through :func:`sample_lattice`: standard Wiener paths
sampled on a fine reference mesh ``n * h_ref``. Every coarse quantity a
scheme needs (increments, iterated Ito integrals, delayed integrals, mixed
time/Wiener integrals, Q-Wiener fields) is a deterministic function of the
lattice, so a reference run and a coarse run on the same lattice are coupled
path by path.

Lattice values carry optional leading batch axes ``(*batch, m, n + 1)``; every
function here broadcasts over them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgumentError, MeshAlignmentError, StepSizeError

__all__ = [
    "WienerLattice",
    "StepNoise",
    "KLBasis",
    "RULES",
    "sample_lattice",
    "sample_lattices",
    "stack_lattices",
    "fine_increments",
    "trial_seed",
    "increment",
    "step_noise",
    "step_noise_rectangle",
    "step_noise_riemann",
    "mesh_noise",
    "kl_basis",
    "sample_q_wiener",
    "save_lattice",
    "load_lattice",
]

RULES = ("trapezium", "rectangle", "riemann")

# Normals are drawn in fixed blocks, each block keyed by its own Philox
# counter, so any fine-step range can be regenerated on its own.
BLOCK = 4096
_ALIGN_TOL = 1e-9

_MAGIC = b"WLAT"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQdQ")


def _mesh_count(length: float, step: float, what: str) -> int:
    """Integer ``length / step``, or a MeshAlignmentError."""
    if step <= 0:
        raise InvalidArgumentError(f"step must be positive, got {step}")
    ratio = length / step
    k = round(ratio)
    if abs(ratio - k) > _ALIGN_TOL * max(1.0, abs(ratio)):
        raise MeshAlignmentError(f"{what}: {length} is not a multiple of {step}")
    return int(k)


def _philox_key(seed: int, path: int) -> np.ndarray:
    return np.random.SeedSequence([int(seed), int(path)]).generate_state(2, np.uint64)


def trial_seed(base: int, trial: int) -> int:
    """Mix a base seed and a trial index into an independent 64-bit seed."""
    state = np.random.SeedSequence([int(base), int(trial), 0x5EED]).generate_state(
        1, np.uint64
    )
    return int(state[0])


def fine_increments(seed: int, path: int, start: int, stop: int, h_ref: float) -> np.ndarray:
    """N(0, h_ref) increments for fine steps ``start..stop-1`` of one path.

    The output for a given fine-step index does not depend on the requested
    range, so a lattice can be streamed piecewise with identical values.
    """
    if start < 0 or stop < start:
        raise InvalidArgumentError(f"bad fine-step range [{start}, {stop})")
    if stop == start:
        return np.zeros(0)
    key = _philox_key(seed, path)
    first, last = start // BLOCK, (stop - 1) // BLOCK
    chunks = []
    for b in range(first, last + 1):
        bitgen = np.random.Philox(counter=[0, b, 0, 0], key=key)
        chunks.append(np.random.Generator(bitgen).standard_normal(BLOCK))
    z = np.concatenate(chunks)[start - first * BLOCK : stop - first * BLOCK]
    return np.sqrt(h_ref) * z


@dataclass(frozen=True, eq=False)
class WienerLattice:
    """Fine-mesh samples of ``m`` independent Wiener paths.

    ``values[..., j, n]`` is ``W_j(n * h_ref)``. Leading axes, when present,
    index independent trials.
    """

    values: np.ndarray
    h_ref: float
    seed: int | tuple | None = None
    _trap: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 2:
            raise InvalidArgumentError("lattice values need shape (..., m, n+1)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[-2]

    @property
    def n_samples(self) -> int:
        return self.values.shape[-1] - 1

    @property
    def batch_shape(self) -> tuple:
        return self.values.shape[:-2]

    @property
    def T(self) -> float:
        return self.n_samples * self.h_ref

    def index(self, t: float) -> int:
        """Fine index of time ``t``; raises MeshAlignmentError off the lattice."""
        k = _mesh_count(t, self.h_ref, "lattice time") if t != 0 else 0
        if not 0 <= k <= self.n_samples:
            raise MeshAlignmentError(f"time {t} outside lattice [0, {self.T}]")
        return k

    def at(self, t: float) -> np.ndarray:
        """``W(t)`` for all paths, shape ``(*batch, m)``."""
        return self.values[..., self.index(t)]

    def running_trapezoid(self) -> np.ndarray:
        """Cumulative trapezoid integral of each path, cached per lattice."""
        if "c" not in self._trap:
            v = self.values
            c = np.zeros_like(v)
            np.cumsum(0.5 * self.h_ref * (v[..., 1:] + v[..., :-1]), axis=-1, out=c[..., 1:])
            c.setflags(write=False)
            self._trap["c"] = c
        return self._trap["c"]


def sample_lattice(m: int, T: float, h_ref: float, seed: int) -> WienerLattice:
    """Sample ``m`` standard Wiener paths on ``[0, T]`` with fine step ``h_ref``."""
    if m < 0:
        raise InvalidArgumentError(f"path count must be >= 0, got {m}")
    n = _mesh_count(T, h_ref, "horizon")
    values = np.zeros((m, n + 1))
    for j in range(m):
        np.cumsum(fine_increments(seed, j, 0, n, h_ref), out=values[j, 1:])
    return WienerLattice(values, float(h_ref), int(seed))


def stack_lattices(lattices: Sequence[WienerLattice]) -> WienerLattice:
    """Stack single-trial lattices along a new leading batch axis."""
    if not lattices:
        raise InvalidArgumentError("nothing to stack")
    h = lattices[0].h_ref
    if any(lat.h_ref != h for lat in lattices):
        raise MeshAlignmentError("stacked lattices must share h_ref")
    values = np.stack([lat.values for lat in lattices])
    return WienerLattice(values, h, tuple(lat.seed for lat in lattices))


def sample_lattices(m: int, T: float, h_ref: float, seeds: Sequence[int]) -> WienerLattice:
    return stack_lattices([sample_lattice(m, T, h_ref, s) for s in seeds])


def increment(lat: WienerLattice, j: int, s: float, t: float) -> np.ndarray:
    """``W_j(t) - W_j(s)``."""
    if t < s:
        raise InvalidArgumentError(f"increment needs s <= t, got s={s}, t={t}")
    return lat.values[..., j, lat.index(t)] - lat.values[..., j, lat.index(s)]


@dataclass(frozen=True)
class StepNoise:
    """Per-step stochastic quantities, with optional leading step/batch axes.

    Attributes:
        h: coarse step.
        dW: ``(..., m)`` increments.
        I: ``(..., m, m)`` iterated integrals, ``I[..., i, j] = I_ij``.
        I0: ``(..., m, 2)`` with ``[..., j, 0] = I_0j`` and ``[..., j, 1] = I_j0``.
        Idelay: ``(..., K, m, m)`` delayed integrals ``I_ij^{tau_k}``; NaN
            where the step starts before the delay.
    """

    h: float
    dW: np.ndarray
    I: np.ndarray | None = None
    I0: np.ndarray | None = None
    Idelay: np.ndarray | None = None

    def step(self, n: int) -> "StepNoise":
        """Slice out step ``n`` from a stack laid out as ``(N, *batch, ...)``."""
        pick = lambda a: None if a is None else a[n]  # noqa: E731
        return StepNoise(self.h, self.dW[n], pick(self.I), pick(self.I0), pick(self.Idelay))


def _double_integrals(a_i, w_j, rule):
    """Off-diagonal double integrals from subinterval data.

    ``a_i``: ``(..., m, N, F)`` increments of the inner integrator.
    ``w_j``: ``(..., m, N, F + 1)`` outer path values at the subinterval nodes.
    Returns ``(..., N, m, m)``.
    """
    a_j = np.diff(w_j, axis=-1)
    tail = w_j[..., -1:] - w_j[..., 1:]  # dW_j(t^(l+1), t^(F))
    if rule == "trapezium":
        weight = 0.5 * a_j + tail
    elif rule == "rectangle":
        weight = tail
    else:
        raise InvalidArgumentError(f"unknown rule {rule!r}")
    return np.einsum("...inl,...jnl->...nij", a_i, weight)


def mesh_noise(
    lat: WienerLattice,
    t0: float,
    h: float,
    N: int,
    F: int,
    delays: Sequence[float] = (),
    rule: str = "trapezium",
    *,
    doubles: bool = True,
    mixed: bool = True,
) -> StepNoise:
    """Noise for ``N`` consecutive steps of size ``h`` starting at ``t0``.

    Arrays come out laid out as ``(N, *batch, ...)``. ``doubles`` and
    ``mixed`` switch off the iterated and time/Wiener integrals for schemes
    that only need increments. Delayed integrals are produced for steps with
    ``t_n >= tau_k`` and NaN elsewhere.

    Raises:
        MeshAlignmentError: a step, subinterval or delay is off the lattice.
        StepSizeError: delayed integrals requested with ``h > min(delays)``.
    """
    if rule not in RULES:
        raise InvalidArgumentError(f"unknown rule {rule!r}, expected one of {RULES}")
    if F < 1:
        raise InvalidArgumentError(f"subinterval count must be >= 1, got {F}")
    R = _mesh_count(h, lat.h_ref, "step")
    if R < 1:
        raise MeshAlignmentError(f"step {h} is smaller than h_ref {lat.h_ref}")
    if R % F:
        raise MeshAlignmentError(f"{F} subintervals of a {R}-sample step are off the lattice")
    stride = R // F
    i0 = lat.index(t0)
    if i0 + N * R > lat.n_samples:
        raise MeshAlignmentError(f"{N} steps of {h} from {t0} run past the lattice end")
    W = lat.values
    lead = W.ndim - 2  # number of batch axes

    def to_steps_first(a, step_axis):
        return np.moveaxis(a, step_axis, 0)

    ends = W[..., i0 + R * np.arange(N + 1)]
    dW = np.diff(ends, axis=-1)  # (..., m, N)
    out_dW = to_steps_first(np.swapaxes(dW, -1, -2), lead)  # (N, ..., m)
    if not doubles:
        return StepNoise(h, out_dW)
    if lat.m == 0:
        zeros = np.zeros(out_dW.shape[:-1] + (0, 0))
        return StepNoise(
            h, out_dW, zeros, np.zeros(out_dW.shape + (2,)),
            np.zeros(out_dW.shape[:-1] + (len(delays), 0, 0)),
        )

    nodes = i0 + stride * np.arange(N * F + 1)
    w = W[..., nodes]
    sub = np.diff(w, axis=-1).reshape(w.shape[:-1] + (N, F))
    node_idx = (np.arange(N)[:, None] * F + np.arange(F + 1)[None, :])
    w_nodes = w[..., node_idx]  # (..., m, N, F+1)

    if rule == "riemann":
        I = 0.5 * np.einsum("...in,...jn->...nij", dW, dW)
    else:
        I = _double_integrals(sub, w_nodes, rule)
    diag = 0.5 * (dW * dW - h)  # (..., m, N)
    ii = np.arange(lat.m)
    I[..., ii, ii] = np.swapaxes(diag, -1, -2)
    out_I = to_steps_first(I, lead)

    out_I0 = None
    if mixed:
        C = lat.running_trapezoid()
        starts = i0 + R * np.arange(N)
        Ij0 = C[..., starts + R] - C[..., starts] - h * W[..., starts]
        I0j = h * dW - Ij0
        out_I0 = to_steps_first(np.stack([I0j, Ij0], axis=-1).swapaxes(-2, -3), lead)

    out_Id = None
    if delays:
        K = len(delays)
        out_Id = np.full((N,) + lat.batch_shape + (K, lat.m, lat.m), np.nan)
        for k, tau in enumerate(delays):
            shift = _mesh_count(tau, lat.h_ref, f"delay tau_{k + 1}")
            if R > shift:
                raise StepSizeError(
                    f"step {h} exceeds delay {tau}; delayed integrals need h <= min delay"
                )
            # first step index n with t_n >= tau
            n_on = max(0, -(-(shift - i0) // R))
            if n_on >= N:
                continue
            dnodes = nodes[n_on * F :] - shift
            wd = W[..., dnodes]
            sub_d = np.diff(wd, axis=-1).reshape(wd.shape[:-1] + (N - n_on, F))
            if rule == "riemann":
                dWd = wd[..., F::F] - wd[..., :-F:F]
                Id = 0.5 * np.einsum("...in,...jn->...nij", dWd, dW[..., n_on:])
            else:
                Id = _double_integrals(sub_d, w_nodes[..., n_on:, :], rule)
            out_Id[n_on:, ..., k, :, :] = to_steps_first(Id, lead)
    return StepNoise(h, out_dW, out_I, out_I0, out_Id)


def step_noise(lat, t_n, h, F, delays=(), rule="trapezium") -> StepNoise:
    """All stochastic quantities for the single step ``[t_n, t_n + h]``.

    Off-diagonal ``I_ij`` use the trapezium rule over ``F`` equal
    subintervals by default; diagonal entries always use
    ``I_jj = (dW_j**2 - h) / 2``.
    """
    return mesh_noise(lat, t_n, h, 1, F, delays, rule).step(0)


def step_noise_rectangle(lat, t_n, h, F, delays=()) -> StepNoise:
    return step_noise(lat, t_n, h, F, delays, "rectangle")


def step_noise_riemann(lat, t_n, h, F, delays=()) -> StepNoise:
    return step_noise(lat, t_n, h, F, delays, "riemann")


@dataclass(frozen=True)
class KLBasis:
    """Truncated Karhunen-Loeve eigenpairs of a spatial covariance on [0, 1]."""

    kind: str
    eigenvalues: np.ndarray
    eigenfunctions: tuple[Callable[[np.ndarray], np.ndarray], ...]

    @property
    def m(self) -> int:
        return len(self.eigenvalues)

    def matrix(self, grid) -> np.ndarray:
        """``phi_j(x_i)`` as an array of shape ``(len(grid), m)``."""
        x = np.asarray(grid, dtype=float)
        return np.stack([phi(x) for phi in self.eigenfunctions], axis=-1)


def _min_kernel_mode(lam: float):
    def phi(x):
        return np.sqrt(2.0) * np.sin(np.asarray(x, dtype=float) / np.sqrt(lam))

    return phi


def _grid_point_mode(xj: float):
    def phi(x):
        return (np.abs(np.asarray(x, dtype=float) - xj) < 1e-9).astype(float)

    return phi


def kl_basis(kind: str, m: int, d: int | None = None) -> KLBasis:
    """Eigenpairs for ``kind`` in {"correlated", "uncorrelated"}.

    ``correlated`` is the covariance ``Q(x, y) = min(x, y)`` with
    ``lambda_j = 4 / (pi^2 (2j - 1)^2)`` and
    ``phi_j(x) = sqrt(2) sin(x / sqrt(lambda_j))``.

    ``uncorrelated`` is the grid realization of white spatial noise: mode ``j``
    drives only the grid point ``x_j = j / d`` (``d`` defaults to ``m + 1``, so
    the modes cover the interior points of a ``d``-interval grid).
    """
    if m < 1:
        raise InvalidArgumentError(f"mode count must be >= 1, got {m}")
    j = np.arange(1, m + 1)
    if kind == "correlated":
        lam = 4.0 / (np.pi**2 * (2 * j - 1) ** 2)
        funcs = tuple(_min_kernel_mode(v) for v in lam)
    elif kind == "uncorrelated":
        d = m + 1 if d is None else d
        if m > d:
            raise InvalidArgumentError(f"{m} modes do not fit a {d}-interval grid")
        lam = np.ones(m)
        funcs = tuple(_grid_point_mode(k / d) for k in j)
    else:
        raise InvalidArgumentError(f"unknown KL kind {kind!r}")
    lam.setflags(write=False)
    return KLBasis(kind, lam, funcs)


def sample_q_wiener(basis: KLBasis, lat: WienerLattice, grid, t: float) -> np.ndarray:
    """Truncated Q-Wiener field ``sum_j sqrt(lambda_j) phi_j(x) W_j(t)`` on ``grid``."""
    if lat.m < basis.m:
        raise InvalidArgumentError(f"basis needs {basis.m} paths, lattice has {lat.m}")
    weights = basis.matrix(grid) * np.sqrt(basis.eigenvalues)  # (nx, m)
    return lat.at(t)[..., : basis.m] @ weights.T


def save_lattice(lat: WienerLattice, path) -> None:
    """Write an unbatched lattice as the flat ``WLAT`` binary format."""
    if lat.batch_shape:
        raise InvalidArgumentError("only unbatched lattices can be saved")
    seed = lat.seed if isinstance(lat.seed, int) else 0
    header = _HEADER.pack(_MAGIC, _VERSION, lat.m, lat.n_samples, lat.h_ref, seed)
    body = np.ascontiguousarray(lat.values, dtype="<f8").tobytes()
    Path(path).write_bytes(header + body)


def load_lattice(path) -> WienerLattice:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidArgumentError(f"{path}: truncated lattice header")
    magic, version, m, n, h_ref, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise InvalidArgumentError(f"{path}: not a WLAT v{_VERSION} file")
    expected = _HEADER.size + 8 * m * (n + 1)
    if len(raw) != expected:
        raise InvalidArgumentError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(m, n + 1)
    return WienerLattice(values.astype(float), h_ref, seed)
