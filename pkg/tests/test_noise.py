import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from magnus_sdde.errors import InvalidArgumentError, MeshAlignmentError, StepSizeError
from magnus_sdde.noise import (
    BLOCK,
    fine_increments,
    kl_basis,
    load_lattice,
    mesh_noise,
    sample_lattice,
    sample_lattices,
    sample_q_wiener,
    save_lattice,
    stack_lattices,
    step_noise,
    step_noise_rectangle,
    step_noise_riemann,
    trial_seed,
)


# -- lattice sampling ---------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 3 * BLOCK), st.integers(0, 600))
def test_fine_increments_do_not_depend_on_range(start, length):
    full = fine_increments(7, 1, 0, 3 * BLOCK + 600, 0.01)
    part = fine_increments(7, 1, start, start + length, 0.01)
    np.testing.assert_array_equal(part, full[start : start + length])


def test_lattice_is_reproducible_and_seed_dependent():
    a = sample_lattice(2, 1.0, 2**-8, 3)
    b = sample_lattice(2, 1.0, 2**-8, 3)
    c = sample_lattice(2, 1.0, 2**-8, 4)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert not np.array_equal(a.values[0], a.values[1])
    assert np.all(a.values[:, 0] == 0.0)
    assert a.n_samples == 256 and a.T == 1.0


def test_lattice_prefix_is_stable_under_longer_horizon():
    short = sample_lattice(2, 1.0, 2**-10, 5)
    long = sample_lattice(2, 3.0, 2**-10, 5)
    np.testing.assert_array_equal(long.values[:, : short.n_samples + 1], short.values)


def test_lattice_increment_statistics():
    h = 2**-6
    lat = sample_lattice(3, 2**10, h, 11)
    dw = np.diff(lat.values, axis=-1)
    n = dw.shape[-1]
    assert np.all(np.abs(dw.mean(axis=-1)) < 4 * np.sqrt(h / n))
    np.testing.assert_allclose(dw.var(axis=-1) / h, 1.0, atol=5 * np.sqrt(2.0 / n))
    corr = np.corrcoef(dw)
    assert np.all(np.abs(corr[np.triu_indices(3, 1)]) < 4 / np.sqrt(n))


def test_trial_seeds_are_distinct():
    seeds = {trial_seed(42, i) for i in range(2000)}
    assert len(seeds) == 2000
    assert trial_seed(42, 0) != trial_seed(43, 0)


def test_stack_rejects_mixed_steps():
    with pytest.raises(MeshAlignmentError):
        stack_lattices([sample_lattice(1, 1, 0.25, 0), sample_lattice(1, 1, 0.125, 0)])


def test_lattice_index_off_grid():
    lat = sample_lattice(1, 1.0, 0.25, 0)
    with pytest.raises(MeshAlignmentError):
        lat.index(0.3)
    with pytest.raises(MeshAlignmentError):
        lat.index(1.25)


def test_save_load_roundtrip(tmp_path):
    lat = sample_lattice(3, 2.0, 2**-7, 123)
    path = tmp_path / "lat.bin"
    save_lattice(lat, path)
    back = load_lattice(path)
    np.testing.assert_array_equal(back.values, lat.values)
    assert back.h_ref == lat.h_ref and back.seed == 123
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(InvalidArgumentError):
        load_lattice(path)


# -- iterated integrals against the loop oracle -------------------------------


@pytest.mark.parametrize("F", [1, 2, 8])
def test_mesh_noise_matches_loop_oracle(F):
    h_ref, R = 2**-6, 8
    lat = sample_lattice(3, 4.0, h_ref, 17)
    delays = (0.5, 0.125)
    shifts = [round(t / h_ref) for t in delays]
    N = 4.0 / (R * h_ref)
    noise = mesh_noise(lat, 0.0, R * h_ref, int(N), F, delays)
    for n in range(int(N)):
        # oracle uses every lattice point; compare on the F-node subgrid
        W = lat.values
        sub = W[:, :: R // F]
        dW, I, I0, Id = oracle.step_quantities(sub, h_ref * (R // F), n, F, F, [s // (R // F) for s in shifts])
        np.testing.assert_allclose(noise.dW[n], dW, atol=1e-15)
        np.testing.assert_allclose(noise.I[n], I, atol=1e-14)
        for k, block in enumerate(Id):
            if block is None:
                assert np.all(np.isnan(noise.Idelay[n, k]))
            else:
                np.testing.assert_allclose(noise.Idelay[n, k], block, atol=1e-14)


def test_mixed_integrals_match_loop_oracle():
    h_ref, R = 2**-6, 16
    lat = sample_lattice(2, 1.0, h_ref, 5)
    noise = mesh_noise(lat, 0.0, R * h_ref, 4, R)
    for n in range(4):
        _, _, I0, _ = oracle.step_quantities(lat.values, h_ref, n, R, R, [])
        np.testing.assert_allclose(noise.I0[n], np.array(I0), atol=1e-15)


def test_identities_hold_bitwise():
    lat = sample_lattice(3, 2.0, 2**-10, 8)
    h = 2**-4
    noise = mesh_noise(lat, 0.0, h, 32, 64)
    dW = noise.dW
    for j in range(3):
        assert np.array_equal(noise.I[:, j, j], 0.5 * (dW[:, j] ** 2 - h))
        assert np.array_equal(noise.I0[:, j, 0], h * dW[:, j] - noise.I0[:, j, 1])
    total = noise.I0[..., 0] + noise.I0[..., 1]
    scale = np.maximum(np.abs(noise.I0).max(axis=-1), np.abs(h * dW))
    assert np.all(np.abs(total - h * dW) <= np.spacing(scale))


def test_trapezium_sum_rule():
    lat = sample_lattice(3, 1.0, 2**-10, 2)
    noise = mesh_noise(lat, 0.0, 2**-4, 16, 64)
    prod = noise.dW[:, :, None] * noise.dW[:, None, :]
    off = ~np.eye(3, dtype=bool)
    np.testing.assert_allclose((noise.I + np.swapaxes(noise.I, 1, 2))[:, off], prod[:, off], atol=1e-15)


def test_riemann_and_rectangle_rules():
    h_ref, R = 2**-8, 16
    lat = sample_lattice(2, 1.0, h_ref, 3)
    ri = step_noise_riemann(lat, 0.25, R * h_ref, R)
    assert ri.I[0, 1] == pytest.approx(0.5 * ri.dW[0] * ri.dW[1], abs=1e-16)
    re = step_noise_rectangle(lat, 0.25, R * h_ref, R)
    W = lat.values
    s = round(0.25 / h_ref)
    expected = sum((W[0, s + l] - W[0, s]) * (W[1, s + l + 1] - W[1, s + l]) for l in range(R))
    assert re.I[0, 1] == pytest.approx(expected, abs=1e-15)


def test_step_noise_matches_mesh_slice():
    lat = sample_lattice(2, 2.0, 2**-8, 6)
    whole = mesh_noise(lat, 0.0, 2**-4, 32, 4, (0.5,))
    one = step_noise(lat, 21 * 2**-4, 2**-4, 4, (0.5,))
    np.testing.assert_array_equal(one.I, whole.I[21])
    np.testing.assert_array_equal(one.Idelay, whole.Idelay[21])


def test_batched_noise_equals_single():
    seeds = [1, 2, 3]
    batch = sample_lattices(2, 1.0, 2**-8, seeds)
    out = mesh_noise(batch, 0.0, 2**-4, 16, 16, (0.25,))
    for b, s in enumerate(seeds):
        single = mesh_noise(sample_lattice(2, 1.0, 2**-8, s), 0.0, 2**-4, 16, 16, (0.25,))
        np.testing.assert_array_equal(out.I[:, b], single.I)
        np.testing.assert_array_equal(out.I0[:, b], single.I0)
        np.testing.assert_array_equal(out.Idelay[:, b], single.Idelay)


def test_delayed_integrals_need_step_within_delay():
    lat = sample_lattice(2, 2.0, 2**-6, 0)
    with pytest.raises(StepSizeError):
        mesh_noise(lat, 0.0, 0.5, 4, 1, (0.25,))


def test_misaligned_subintervals():
    lat = sample_lattice(2, 2.0, 2**-6, 0)
    with pytest.raises(MeshAlignmentError):
        mesh_noise(lat, 0.0, 2**-3, 8, 3)
    with pytest.raises(MeshAlignmentError):
        mesh_noise(lat, 0.0, 0.1, 8, 1)
    with pytest.raises(MeshAlignmentError):
        mesh_noise(lat, 0.0, 2**-3, 17, 1)


def test_lattice_with_no_paths():
    lat = sample_lattice(0, 1.0, 0.25, 0)
    noise = mesh_noise(lat, 0.0, 0.25, 4, 1)
    assert noise.dW.shape == (4, 0)


# -- Karhunen-Loeve bases -----------------------------------------------------


def test_correlated_modes_are_orthonormal():
    basis = kl_basis("correlated", 6)
    x = (np.arange(20000) + 0.5) / 20000
    phi = basis.matrix(x)
    gram = phi.T @ phi / len(x)
    np.testing.assert_allclose(gram, np.eye(6), atol=1e-6)
    np.testing.assert_allclose(basis.eigenvalues[:2], [4 / np.pi**2, 4 / (9 * np.pi**2)])


def test_uncorrelated_modes_are_grid_indicators():
    basis = kl_basis("uncorrelated", 4, 5)
    np.testing.assert_array_equal(basis.matrix(np.arange(6) / 5), np.eye(6, 4, -1))
    np.testing.assert_array_equal(basis.eigenvalues, np.ones(4))


def test_kl_basis_errors():
    with pytest.raises(InvalidArgumentError):
        kl_basis("pink", 3)
    with pytest.raises(InvalidArgumentError):
        kl_basis("correlated", 0)
    with pytest.raises(InvalidArgumentError):
        kl_basis("uncorrelated", 6, 5)


def test_q_wiener_covariance_is_min_kernel():
    basis = kl_basis("correlated", 40)
    lat = sample_lattice(40, 4000.0, 1.0, 77)
    x = np.array([0.2, 0.5, 0.9])
    w = np.stack([sample_q_wiener(basis, lat, x, float(t)) for t in range(4001)])
    dw = np.diff(w, axis=0)  # independent unit-time field increments
    cov = dw.T @ dw / len(dw)
    np.testing.assert_allclose(cov, np.minimum.outer(x, x), atol=0.06)
