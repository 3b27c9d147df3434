"""Dense matrix helpers: Lie brackets and a batched matrix exponential.

``mat_exp`` follows the classic scaling-and-squaring recipe with a
degree-13 diagonal Pade approximant (Higham 2005). Every function accepts
stacks of matrices with arbitrary leading axes, which is how the integrators
push a whole batch of Monte Carlo trials through one step at once.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError

__all__ = ["mat_exp", "lie_bracket", "onenorm"]

# Pade(13) coefficients b_0..b_13.
_PADE13 = np.array(
    [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ]
)
_THETA13 = 5.371920351148152


def _as_square(a, name="A") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidArgumentError(f"{name} must be square, got shape {a.shape}")
    if a.shape[-1] < 1:
        raise InvalidArgumentError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    return a


def onenorm(a: np.ndarray) -> np.ndarray:
    """Induced 1-norm (max column sum) of each matrix in the stack."""
    return np.abs(a).sum(axis=-2).max(axis=-1)


def lie_bracket(a, b) -> np.ndarray:
    """Commutator ``[A, B] = AB - BA``."""
    a = _as_square(a, "A")
    b = _as_square(b, "B")
    if a.shape[-1] != b.shape[-1]:
        raise InvalidArgumentError(
            f"dimension mismatch in lie_bracket: {a.shape[-1]} vs {b.shape[-1]}"
        )
    return a @ b - b @ a


def _pade13(a: np.ndarray) -> np.ndarray:
    b = _PADE13
    ident = np.broadcast_to(np.eye(a.shape[-1]), a.shape)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (
        a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
        + b[7] * a6
        + b[5] * a4
        + b[3] * a2
        + b[1] * ident
    )
    v = (
        a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
        + b[6] * a6
        + b[4] * a4
        + b[2] * a2
        + b[0] * ident
    )
    return np.linalg.solve(v - u, v + u)


def mat_exp(a) -> np.ndarray:
    """Matrix exponential of a square matrix or a stack of them.

    Each matrix in the stack is scaled independently, so the result for one
    item never depends on what else shares the batch.

    Raises:
        InvalidArgumentError: if the input is not square or not finite.
    """
    a = _as_square(a)
    if a.shape[-1] == 1:
        return np.exp(a)
    norms = onenorm(a)
    s = np.zeros(norms.shape, dtype=int)
    big = norms > _THETA13
    if np.any(big):
        s[big] = np.ceil(np.log2(norms[big] / _THETA13)).astype(int)
    scaled = a / np.ldexp(1.0, s)[..., None, None]
    e = _pade13(scaled)
    for k in range(1, int(s.max(initial=0)) + 1):
        mask = s >= k
        if mask.ndim == 0:
            e = e @ e
        else:
            e[mask] = e[mask] @ e[mask]
    return e
