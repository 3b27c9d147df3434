import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from magnus_sdde.errors import InvalidArgumentError
from magnus_sdde.linalg import lie_bracket, mat_exp, onenorm

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def square(d):
    return arrays(np.float64, (d, d), elements=finite)


def test_mat_exp_zero_is_identity():
    np.testing.assert_allclose(mat_exp(np.zeros((4, 4))), np.eye(4), rtol=0, atol=1e-15)


def test_mat_exp_diagonal_matches_scalar_exp():
    a = np.diag([-3.0, 0.5, 2.0])
    np.testing.assert_allclose(mat_exp(a), np.diag(np.exp([-3.0, 0.5, 2.0])), rtol=1e-14)


def test_mat_exp_rotation_generator():
    t = 0.7
    a = np.array([[0.0, -t], [t, 0.0]])
    expected = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    np.testing.assert_allclose(mat_exp(a), expected, atol=1e-15)


def test_mat_exp_nilpotent_is_polynomial():
    a = np.array([[0.0, 1.0, 2.0], [0.0, 0.0, 3.0], [0.0, 0.0, 0.0]])
    np.testing.assert_allclose(mat_exp(a), np.eye(3) + a + a @ a / 2, atol=1e-14)


def test_mat_exp_scalar_uses_exp():
    assert mat_exp(np.array([[1.5]]))[0, 0] == np.exp(1.5)


@pytest.mark.parametrize("scale", [1e-3, 1.0, 8.0, 60.0])
def test_mat_exp_against_scipy(rng, scale):
    a = rng.normal(size=(6, 6))
    a *= scale / onenorm(a)
    ref = scipy.linalg.expm(a)
    np.testing.assert_allclose(mat_exp(a), ref, rtol=1e-11, atol=1e-13 * np.abs(ref).max())


def test_mat_exp_batch_equals_items(rng):
    a = rng.normal(size=(3, 4, 5, 5)) * np.array([0.01, 1.0, 20.0])[:, None, None, None]
    out = mat_exp(a)
    for idx in np.ndindex(3, 4):
        np.testing.assert_array_equal(out[idx], mat_exp(a[idx]))


@settings(max_examples=60, deadline=None)
@given(square(3))
def test_mat_exp_inverse_property(a):
    prod = mat_exp(a) @ mat_exp(-a)
    scale = np.abs(mat_exp(a)).max() * np.abs(mat_exp(-a)).max()
    np.testing.assert_allclose(prod, np.eye(3), atol=1e-12 * max(1.0, scale))


@settings(max_examples=60, deadline=None)
@given(square(3), st.floats(-2, 2), st.floats(-2, 2))
def test_mat_exp_one_parameter_group(a, s, t):
    lhs = mat_exp((s + t) * a)
    rhs = mat_exp(s * a) @ mat_exp(t * a)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * max(1.0, np.abs(lhs).max()))


@pytest.mark.parametrize(
    "bad", [np.ones((2, 3)), np.ones(3), np.zeros((0, 0)), np.array([[np.nan, 0], [0, 1.0]])]
)
def test_mat_exp_rejects_bad_input(bad):
    with pytest.raises(InvalidArgumentError):
        mat_exp(bad)


def test_lie_bracket_known_value():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    b = np.array([[0.0, 0.0], [1.0, 0.0]])
    np.testing.assert_array_equal(lie_bracket(a, b), np.diag([1.0, -1.0]))


def test_lie_bracket_dimension_mismatch():
    with pytest.raises(InvalidArgumentError, match="dimension mismatch"):
        lie_bracket(np.eye(2), np.eye(3))


@settings(max_examples=60, deadline=None)
@given(square(3), square(3), square(3))
def test_lie_bracket_algebra(a, b, c):
    np.testing.assert_allclose(lie_bracket(a, b), -lie_bracket(b, a), atol=1e-12)
    np.testing.assert_array_equal(lie_bracket(a, a), np.zeros((3, 3)))
    jacobi = (
        lie_bracket(a, lie_bracket(b, c))
        + lie_bracket(b, lie_bracket(c, a))
        + lie_bracket(c, lie_bracket(a, b))
    )
    np.testing.assert_allclose(jacobi, 0.0, atol=1e-9)
