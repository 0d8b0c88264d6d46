import numpy as np
import pytest
from hypothesis import given, strategies as st

from cfbeam.beamspace import (array_response, beamspace_response, dft_matrix, grid_angles,
                              mask_vector, nearest_grid_index, to_beamspace)


def test_dictionary_base_case():
    d = dft_matrix(1)
    np.testing.assert_allclose(d.W, [[1.0]])
    assert d.grid[0] == pytest.approx(-np.pi / 2)


def test_dictionary_rejects_zero():
    with pytest.raises(ValueError):
        dft_matrix(0)


@pytest.mark.parametrize("N", [16, 32])
def test_dictionary_unitary(N):
    W = dft_matrix(N).W
    assert np.abs(W.conj().T @ W - np.eye(N)).max() < 1e-12


def test_dictionary_matches_explicit_formula():
    N = 8
    p, u = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    expected = np.exp(2j * np.pi * p * (u / N - 0.5)) / np.sqrt(N)
    np.testing.assert_allclose(dft_matrix(N).W, expected, atol=1e-14)


def test_broadside_column():
    # 0-based column 8 of a 16-point grid points at sin = 0
    assert dft_matrix(16).grid[8] == pytest.approx(0.0, abs=1e-15)


def test_array_response_broadside():
    a = array_response(32, 0.0)
    np.testing.assert_allclose(a, np.full(32, 1 / np.sqrt(32)))


@pytest.mark.parametrize("N", [4, 16, 32])
def test_on_grid_response_is_a_column(N):
    W = dft_matrix(N).W
    for u, theta in enumerate(grid_angles(N)):
        assert abs(array_response(N, theta).conj() @ W[:, u]) == pytest.approx(1.0, abs=1e-12)


def test_off_grid_midpoint_has_no_perfect_column():
    N = 32
    s = (np.sin(grid_angles(N)[10]) + np.sin(grid_angles(N)[11])) / 2
    corr = np.abs(array_response(N, np.arcsin(s)).conj() @ dft_matrix(N).W)
    assert corr.max() < 1.0 - 1e-3


def test_nearest_grid_examples():
    assert nearest_grid_index(-np.pi / 2, 16) == 0
    assert nearest_grid_index(-np.pi / 2, 5) == 0
    assert nearest_grid_index(0.0, 16) == 8
    assert nearest_grid_index(0.01, 16) == 8


def test_nearest_grid_wraps_at_endfire():
    # sin = 1 aliases to sin = -1, the first column
    assert nearest_grid_index(np.pi / 2, 16) == 0
    assert nearest_grid_index(np.arcsin(0.99), 16) == 0


@given(st.floats(-np.pi / 2, np.pi / 2), st.sampled_from([4, 8, 16, 32]))
def test_nearest_grid_is_argmax_of_correlation(angle, N):
    u = nearest_grid_index(angle, N)
    corr = np.abs(beamspace_response(N, angle))
    assert corr[u] >= corr.max() - 1e-9


def test_nearest_grid_vectorized():
    angles = grid_angles(32)
    np.testing.assert_array_equal(nearest_grid_index(angles, 32), np.arange(32))


def test_to_beamspace_zero_and_shape_check():
    ue, ap = dft_matrix(4), dft_matrix(8)
    np.testing.assert_array_equal(to_beamspace(np.zeros((4, 8)), ue, ap), np.zeros((4, 8)))
    with pytest.raises(ValueError):
        to_beamspace(np.zeros((8, 4)), ue, ap)


def test_to_beamspace_on_grid_rank_one_is_sparse():
    ue, ap = dft_matrix(16), dft_matrix(32)
    H = np.outer(array_response(16, ue.grid[3]), array_response(32, ap.grid[20]).conj())
    B = to_beamspace(H, ue, ap)
    energy = np.abs(B) ** 2
    assert energy[3, 20] >= 0.999 * energy.sum()


@given(st.integers(0, 2 ** 32 - 1))
def test_to_beamspace_preserves_frobenius_norm(seed):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
    B = to_beamspace(H, dft_matrix(4), dft_matrix(8))
    assert abs(np.linalg.norm(B) - np.linalg.norm(H)) < 1e-10


def test_mask_vector():
    v = mask_vector([1, 0, 1, 1])
    assert np.linalg.norm(v) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mask_vector([0, 0])
