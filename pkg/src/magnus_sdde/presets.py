"""Named test problems.

``example1``-``example3`` are two-dimensional SDDEs with two Wiener
processes, constant history ``(0.8, 0.2)`` and horizon 6. ``gbm`` is the
scalar geometric Brownian motion used as an exactness oracle and
``spdde-heat`` is the delayed-cooling stochastic heat equation.

All callbacks here are module-level so problems pickle into worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .model import SemilinearSdde, constant_history

__all__ = ["Preset", "preset", "PRESETS"]


def _vec(a, b):
    return np.stack(np.broadcast_arrays(a, b), axis=-1)


def _mat(a, b, c, e):
    a, b, c, e = np.broadcast_arrays(a, b, c, e)
    return np.stack([np.stack([a, b], axis=-1), np.stack([c, e], axis=-1)], axis=-2)


def _zero_jac(t, x, *xd):
    return np.zeros(np.shape(x) + (np.shape(x)[-1],))


def _zero_vec(t, x, *xd):
    return np.zeros(np.shape(x))


# -- example 1: linear in X(t), nonlinear in X(t - 1) ------------------------

EX1_A = np.array(
    [
        [[-0.1, 0.4], [-0.3, 0.2]],
        [[0.3, 0.1], [0.0, 0.2]],
        [[0.1, 0.0], [0.3, 0.1]],
    ]
)
_EX1_M = np.array([[0.18, 0.04], [0.21, 0.03]])


def ex1_f(t, x, y):
    y1, y2 = y[..., 0], y[..., 1]
    return 0.1 * _vec(np.cos(y1 + y2), y2 - y1**2)


def ex1_g1(t, x, y):
    y1, y2 = y[..., 0], y[..., 1]
    return _vec(np.sin(y1) + np.exp(-(y2**2)), np.arctan(y1) + np.cos(y2)) / 3.0


def ex1_g2(t, x, y):
    return _vec(y[..., 0], np.arctan(y[..., 1])) @ _EX1_M.T


def ex1_g1_dy(t, x, y):
    y1, y2 = y[..., 0], y[..., 1]
    return _mat(np.cos(y1), -2.0 * y2 * np.exp(-(y2**2)), 1.0 / (1.0 + y1**2), -np.sin(y2)) / 3.0


def ex1_g2_dy(t, x, y):
    s = 1.0 / (1.0 + y[..., 1] ** 2)
    return _mat(_EX1_M[0, 0], _EX1_M[0, 1] * s, _EX1_M[1, 0], _EX1_M[1, 1] * s)


def example1() -> SemilinearSdde:
    return SemilinearSdde(
        A=EX1_A,
        delays=(1.0,),
        T=6.0,
        f=ex1_f,
        g=(ex1_g1, ex1_g2),
        history=constant_history([0.8, 0.2]),
        jac_x_g=(_zero_jac, _zero_jac),
        jac_delay_g=((ex1_g1_dy,), (ex1_g2_dy,)),
        name="example1",
    )


# -- example 2: same matrices, nonlinear in both X(t) and X(t - 1) ----------

_EX2_N = np.array([[0.04, 0.05], [0.06, 0.04]])


def ex2_f(t, x, y):
    s = x[..., 0] + x[..., 1] + y[..., 0] + y[..., 1]
    return _vec(np.cos(s), np.sin(s)) / 3.0


def ex2_g1(t, x, y):
    y1, y2 = y[..., 0], y[..., 1]
    return _vec(np.cos(x[..., 0]), np.sin(x[..., 1])) / 9.0 + _vec(
        np.sin(y1) + np.exp(-(y2**2)), np.arctan(y1) + np.cos(y2)
    ) / 5.0


def ex2_g2(t, x, y):
    return _vec(np.sin(x[..., 1]), np.cos(x[..., 0])) / 7.0 + _vec(
        1.0 / (1.0 + y[..., 0] ** 2), np.arctan(y[..., 1])
    ) @ _EX2_N.T


def ex2_g1_dx(t, x, y):
    return _mat(-np.sin(x[..., 0]), 0.0, 0.0, np.cos(x[..., 1])) / 9.0


def ex2_g1_dy(t, x, y):
    y1, y2 = y[..., 0], y[..., 1]
    return _mat(np.cos(y1), -2.0 * y2 * np.exp(-(y2**2)), 1.0 / (1.0 + y1**2), -np.sin(y2)) / 5.0


def ex2_g2_dx(t, x, y):
    return _mat(0.0, np.cos(x[..., 1]), -np.sin(x[..., 0]), 0.0) / 7.0


def ex2_g2_dy(t, x, y):
    y1, y2 = y[..., 0], y[..., 1]
    a = -2.0 * y1 / (1.0 + y1**2) ** 2
    b = 1.0 / (1.0 + y2**2)
    return _mat(_EX2_N[0, 0] * a, _EX2_N[0, 1] * b, _EX2_N[1, 0] * a, _EX2_N[1, 1] * b)


def example2() -> SemilinearSdde:
    return SemilinearSdde(
        A=EX1_A,
        delays=(1.0,),
        T=6.0,
        f=ex2_f,
        g=(ex2_g1, ex2_g2),
        history=constant_history([0.8, 0.2]),
        jac_x_g=(ex2_g1_dx, ex2_g2_dx),
        jac_delay_g=((ex2_g1_dy,), (ex2_g2_dy,)),
        name="example2",
    )


# -- example 3: two delays, y = X(t - 1) and z = X(t - 1/4) -----------------

EX3_A = np.array(
    [
        [[-0.1, 0.03], [-0.2, -0.04]],
        [[0.15, 0.1], [0.2, 0.1]],
        [[0.05, 0.03], [0.04, 0.01]],
    ]
)


def ex3_f(t, x, y, z):
    return _vec(np.sin(x[..., 0]), np.cos(x[..., 1])) / 5.0


def ex3_g1(t, x, y, z):
    return _vec(z[..., 0] - y[..., 0], y[..., 1] - z[..., 1]) / 10.0


def ex3_g2(t, x, y, z):
    p1 = x[..., 0] * y[..., 0] * z[..., 0]
    p2 = x[..., 1] * y[..., 1] * z[..., 1]
    return _vec(np.sin(p2), np.cos(p1)) / 5.0


def ex3_g1_dy(t, x, y, z):
    return np.broadcast_to(np.diag([-0.1, 0.1]), np.shape(x) + (2,))


def ex3_g1_dz(t, x, y, z):
    return np.broadcast_to(np.diag([0.1, -0.1]), np.shape(x) + (2,))


def _ex3_g2_jac(u, v, x, y, z):
    """Jacobian of g_2 in one argument; ``u``/``v`` are the products of the
    other two arguments' first/second components."""
    p1 = x[..., 0] * y[..., 0] * z[..., 0]
    p2 = x[..., 1] * y[..., 1] * z[..., 1]
    return _mat(0.0, np.cos(p2) * v, -np.sin(p1) * u, 0.0) / 5.0


def ex3_g2_dx(t, x, y, z):
    return _ex3_g2_jac(y[..., 0] * z[..., 0], y[..., 1] * z[..., 1], x, y, z)


def ex3_g2_dy(t, x, y, z):
    return _ex3_g2_jac(x[..., 0] * z[..., 0], x[..., 1] * z[..., 1], x, y, z)


def ex3_g2_dz(t, x, y, z):
    return _ex3_g2_jac(x[..., 0] * y[..., 0], x[..., 1] * y[..., 1], x, y, z)


def example3() -> SemilinearSdde:
    return SemilinearSdde(
        A=EX3_A,
        delays=(1.0, 0.25),
        T=6.0,
        f=ex3_f,
        g=(ex3_g1, ex3_g2),
        history=constant_history([0.8, 0.2]),
        jac_x_g=(_zero_jac, ex3_g2_dx),
        jac_delay_g=((ex3_g1_dy, ex3_g1_dz), (ex3_g2_dy, ex3_g2_dz)),
        name="example3",
    )


def gbm(a: float = 0.05, b: float = 0.2, T: float = 1.0, x0: float = 1.0) -> SemilinearSdde:
    """``dX = a X dt + b X dW``; Magnus schemes are exact for it."""
    return SemilinearSdde(
        A=[[[a]], [[b]]],
        delays=(),
        T=T,
        f=_zero_vec,
        g=(_zero_vec,),
        history=constant_history([x0]),
        jac_x_g=(_zero_jac,),
        name="gbm",
    )


def spdde_heat() -> SemilinearSdde:
    from .spdde import HeatProblem, assemble

    return assemble(HeatProblem())


@dataclass(frozen=True)
class Preset:
    """A problem plus the convergence settings it is usually run with."""

    name: str
    problem: SemilinearSdde
    schemes: tuple = ("em", "milstein", "mem", "mm")
    steps: tuple = tuple(2.0**-k for k in range(3, 9))
    h_ref: float = 2.0**-12
    reference: str = "milstein"
    n_trials: int = 200
    extra: dict = field(default_factory=dict)


def _build(name: str) -> Preset:
    if name == "example1":
        return Preset(name, example1())
    if name == "example2":
        return Preset(name, example2())
    if name == "example3":
        return Preset(name, example3(), steps=tuple(2.0**-k for k in range(2, 8)))
    if name == "gbm":
        return Preset(name, gbm(), steps=tuple(2.0**-k for k in range(2, 9)))
    if name == "spdde-heat":
        return Preset(
            name,
            spdde_heat(),
            schemes=("em", "mem"),
            steps=tuple(2.0**-k for k in range(3, 10)),
            h_ref=2.0**-12,
            reference="em",
            n_trials=50,
        )
    raise InvalidArgumentError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


PRESETS = ("example1", "example2", "example3", "gbm", "spdde-heat")


def preset(name: str) -> Preset:
    """Problem and default experiment settings registered under ``name``."""
    return _build(name)
