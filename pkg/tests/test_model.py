import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magnus_sdde.errors import (
    ConfigurationError,
    InvalidArgumentError,
    MeshAlignmentError,
    TrajectoryLookupError,
)
from magnus_sdde.model import (
    SemilinearSdde,
    Trajectory,
    as_plain_sdde,
    bellman_intervals,
    build_mesh,
    constant_history,
    f_tilde,
    lookup,
)
from magnus_sdde.presets import example1, example2, example3


def _zero(t, x, *xd):
    return np.zeros(np.shape(x))


def _problem(**kw):
    base = dict(
        A=np.zeros((2, 2, 2)), delays=(1.0,), T=2.0, f=_zero, g=(_zero,),
        history=constant_history([1.0, 0.0]),
    )
    base.update(kw)
    return SemilinearSdde(**base)


# -- construction ---------------------------------------------------------------


def test_dimensions_and_flags():
    p = example3()
    assert (p.d, p.m, p.K, p.tau) == (2, 2, 2, 1.0)
    assert p.has_jacobians and not p.is_plain
    assert example1().A[1].tolist() == [[0.3, 0.1], [0.0, 0.2]]


@pytest.mark.parametrize(
    "kw",
    [
        dict(A=np.zeros((2, 2, 3))),
        dict(A=np.full((2, 2, 2), np.nan)),
        dict(delays=(0.0,)),
        dict(T=-1.0),
        dict(g=()),
        dict(history=constant_history([1.0])),
        dict(f=lambda t, x, y: np.full(2, np.inf)),
        dict(jac_delay_g=((_zero, _zero),)),
    ],
)
def test_invalid_problems(kw):
    with pytest.raises(InvalidArgumentError):
        _problem(**kw)


def test_missing_jacobians_are_reported():
    p = _problem()
    assert not p.has_jacobians
    with pytest.raises(ConfigurationError, match="Jacobians"):
        p.require_jacobians()


def test_finite_difference_jacobians_match_analytic():
    p = example2()
    fd = SemilinearSdde(p.A, p.delays, p.T, p.f, p.g, p.history, fd_jacobians=True)
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(2, 5, 2))
    np.testing.assert_allclose(fd.jac_x(0.0, x, [y]), p.jac_x(0.0, x, [y]), atol=1e-8)
    np.testing.assert_allclose(fd.jac_delay(0, 0.0, x, [y]), p.jac_delay(0, 0.0, x, [y]), atol=1e-8)


def test_callbacks_broadcast_over_trials():
    p = example3()
    rng = np.random.default_rng(2)
    x, y, z = rng.normal(size=(3, 4, 3, 2))
    G = p.diffusions(0.0, x, [y, z])
    assert G.shape == (4, 3, 2, 2)
    np.testing.assert_allclose(G[2, 1, 1], p.g[1](0.0, x[2, 1], y[2, 1], z[2, 1]))
    assert p.jac_delay(1, 0.0, x, [y, z]).shape == (4, 3, 2, 2, 2)


# -- folding into a plain SDDE ---------------------------------------------------


def test_f_tilde_definition():
    p = example1()
    x, y = np.array([0.3, -0.2]), np.array([1.1, 0.4])
    expected = p.f(0.0, x, y) - p.A[1] @ p.g[0](0.0, x, y) - p.A[2] @ p.g[1](0.0, x, y)
    np.testing.assert_allclose(f_tilde(p, 0.0, x, [y]), expected, atol=1e-16)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_plain_form_reproduces_coefficients(vals):
    p = example2()
    q = as_plain_sdde(p)
    x, y = np.array(vals[:2]), np.array(vals[2:])
    assert q.is_plain and q.delays == p.delays
    np.testing.assert_allclose(q.f(0.0, x, y), p.A[0] @ x + p.f(0.0, x, y), atol=1e-14)
    for j in range(2):
        np.testing.assert_allclose(q.g[j](0.0, x, y), p.A[j + 1] @ x + p.g[j](0.0, x, y), atol=1e-14)
        np.testing.assert_allclose(q.jac_x_g[j](0.0, x, y), p.A[j + 1] + p.jac_x_g[j](0.0, x, y))


def test_plain_problem_is_returned_unchanged():
    p = _problem()
    assert as_plain_sdde(p) is p


# -- meshes and Bellman intervals --------------------------------------------


def test_bellman_breakpoints_merge_multiples():
    b = bellman_intervals((1.0, 0.25), 2.0)
    assert b.times == (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
    assert bellman_intervals((0.4,), 1.0).times == (0.4, 0.8, 1.0)
    assert bellman_intervals((0.1,), 0.3).times == (0.1, 0.2, 0.3)
    assert bellman_intervals((), 3.0).intervals() == [(0.0, 3.0)]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from([0.125, 0.25, 0.375, 0.5, 1.0, 1.5]), min_size=1, max_size=3))
def test_bellman_breakpoints_properties(delays):
    T = 3.0
    times = bellman_intervals(delays, T).times
    assert times[-1] == T
    assert all(a < b for a, b in zip(times, times[1:]))
    for tau in delays:
        for n in range(1, int(T / tau) + 1):
            assert any(abs(s - n * tau) < 1e-12 for s in times)


def test_mesh_layout():
    mesh = build_mesh(6.0, 0.25, (1.0, 0.25))
    assert (mesh.N, mesh.p, mesh.delay_steps) == (24, 4, (4, 1))
    assert mesh.times[0] == -1.0 and mesh.times[-1] == 6.0
    assert mesh.index(0.0) == 4
    with pytest.raises(TrajectoryLookupError):
        mesh.index(0.1)
    with pytest.raises(TrajectoryLookupError):
        mesh.index(6.25)


@pytest.mark.parametrize("T, h, delays", [(6.0, 0.35, ()), (6.0, 0.5, (0.25,)), (1.0, 0.25, (0.3,))])
def test_mesh_alignment_errors(T, h, delays):
    with pytest.raises(MeshAlignmentError):
        build_mesh(T, h, delays)


def test_mesh_tolerates_rounding():
    assert build_mesh(0.3, 0.1, (0.1,)).N == 3


def test_lookup_history_and_mesh_values():
    p = example1()
    mesh = build_mesh(2.0, 0.5, p.delays)
    values = np.arange(mesh.N + mesh.p + 1, dtype=float)[:, None] * np.ones(2)
    traj = Trajectory(mesh, values, p.history)
    np.testing.assert_array_equal(lookup(traj, 1.5), [5.0, 5.0])
    np.testing.assert_array_equal(lookup(traj, -0.5), [0.8, 0.2])
    with pytest.raises(TrajectoryLookupError):
        lookup(traj, 0.7)
