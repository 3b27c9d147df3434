"""Loop-based reference implementations used as test oracles.

Everything here is written straight from the scheme formulas with explicit
Python loops over components, independent of the vectorized code paths.
"""

import math

import numpy as np
import scipy.linalg


def trapezium(a_in, w_out):
    """Trapezium double integral from inner increments and outer node values."""
    F = len(a_in)
    total = 0.0
    for l in range(F):
        a_out = w_out[l + 1] - w_out[l]
        total += 0.5 * a_in[l] * a_out + a_in[l] * (w_out[F] - w_out[l + 1])
    return total


def step_quantities(W, h_ref, n, R, F, delay_shifts):
    """dW, I, I0, Idelay for coarse step n from lattice values W (m, n+1)."""
    m = W.shape[0]
    s = n * R
    stride = R // F
    nodes = [s + l * stride for l in range(F + 1)]
    dW = [W[j, s + R] - W[j, s] for j in range(m)]
    h = R * h_ref
    I = [[0.0] * m for _ in range(m)]
    for i in range(m):
        for j in range(m):
            if i == j:
                I[i][j] = 0.5 * (dW[j] ** 2 - h)
            else:
                a_in = [W[i, nodes[l + 1]] - W[i, nodes[l]] for l in range(F)]
                I[i][j] = trapezium(a_in, [W[j, k] for k in nodes])
    I0 = []
    for j in range(m):
        ij0 = sum(0.5 * h_ref * (W[j, k] + W[j, k + 1]) - h_ref * W[j, s] for k in range(s, s + R))
        I0.append((h * dW[j] - ij0, ij0))
    Id = []
    for shift in delay_shifts:
        if s < shift:
            Id.append(None)
            continue
        block = [[0.0] * m for _ in range(m)]
        for i in range(m):
            for j in range(m):
                a_in = [W[i, nodes[l + 1] - shift] - W[i, nodes[l] - shift] for l in range(F)]
                block[i][j] = trapezium(a_in, [W[j, k] for k in nodes])
        Id.append(block)
    return dW, I, I0, Id


def run(p, scheme, h, W, h_ref):
    """Single-trial integration of ``p`` with plain loops; returns final state."""
    d, m, K = p.d, p.m, p.K
    A = [np.array(p.A[i]) for i in range(m + 1)]
    R = round(h / h_ref)
    N = round(p.T / h)
    steps = [round(tau / h) for tau in p.delays]
    shifts = [round(tau / h_ref) for tau in p.delays]
    P = max(steps, default=0)
    Y = {}
    for n in range(-P, 1):
        Y[n] = np.array(p.history(n * h), dtype=float)

    def g_all(t, x, xd):
        return [np.asarray(p.g[j](t, x, *xd), dtype=float) for j in range(m)]

    for n in range(N):
        t = n * h
        y = Y[n]
        yd = [Y[n - s] for s in steps]
        dW, I, I0, Id = step_quantities(W, h_ref, n, R, R, shifts)
        f = np.asarray(p.f(t, y, *yd), dtype=float)
        g = g_all(t, y, yd)
        if scheme in ("em", "milstein"):
            # folded drift and diffusion
            F_ = A[0] @ y + f
            G = [A[j + 1] @ y + g[j] for j in range(m)]
            nxt = y + F_ * h + sum(G[j] * dW[j] for j in range(m))
            if scheme == "milstein":
                for i in range(m):
                    for j in range(m):
                        J = A[j + 1] + np.asarray(p.jac_x_g[j](t, y, *yd))
                        nxt = nxt + J @ G[i] * I[i][j]
                for k in range(K):
                    if n < steps[k]:
                        continue
                    ydd = [Y[n - steps[k] - s] for s in steps]
                    gk = g_all(t - p.delays[k], yd[k], ydd)
                    for i in range(m):
                        Gi = A[i + 1] @ yd[k] + gk[i]
                        for j in range(m):
                            J = np.asarray(p.jac_delay_g[j][k](t, y, *yd))
                            nxt = nxt + J @ Gi * Id[k][i][j]
            Y[n + 1] = nxt
            continue
        ft = f - sum(A[j + 1] @ g[j] for j in range(m))
        inner = y + ft * h + sum(g[j] * dW[j] for j in range(m))
        omega = (A[0] - 0.5 * sum(A[j + 1] @ A[j + 1] for j in range(m))) * h
        omega = omega + sum(A[j + 1] * dW[j] for j in range(m))
        if scheme == "mm":
            for i in range(0, m + 1):
                for j in range(i + 1, m + 1):
                    br = A[i] @ A[j] - A[j] @ A[i]
                    if i == 0:
                        w = I0[j - 1][1] - I0[j - 1][0]
                    else:
                        w = I[j - 1][i - 1] - I[i - 1][j - 1]
                    omega = omega + 0.5 * br * w
            for i in range(m):
                for j in range(m):
                    J = np.asarray(p.jac_x_g[j](t, y, *yd))
                    inner = inner + (J @ (A[i + 1] @ y + g[i]) - A[i + 1] @ g[j]) * I[i][j]
            for k in range(K):
                if n < steps[k]:
                    continue
                ydd = [Y[n - steps[k] - s] for s in steps]
                gk = g_all(t - p.delays[k], yd[k], ydd)
                for i in range(m):
                    for j in range(m):
                        J = np.asarray(p.jac_delay_g[j][k](t, y, *yd))
                        inner = inner + J @ (A[i + 1] @ yd[k] + gk[i]) * Id[k][i][j]
        Y[n + 1] = scipy.linalg.expm(omega) @ inner
    return Y[N]
