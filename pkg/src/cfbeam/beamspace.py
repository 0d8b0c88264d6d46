"""DFT dictionaries, ULA responses and beamspace quantization.

Grid indices are 0-based: column ``u`` of an N-point dictionary steers
towards the angle with ``sin(theta) = 2u/N - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class DftDictionary:
    N: int
    W: np.ndarray
    grid: np.ndarray


def grid_sines(N):
    return 2.0 * np.arange(N) / N - 1.0


def grid_angles(N):
    return np.arcsin(grid_sines(N))


@lru_cache(maxsize=None)
def _dft(N):
    p = np.arange(N)[:, None]
    col = np.arange(N)[None, :]
    W = np.exp(1j * 2 * np.pi * p * (col / N - 0.5)) / np.sqrt(N)
    W.setflags(write=False)
    grid = grid_angles(N)
    grid.setflags(write=False)
    return DftDictionary(N, W, grid)


def dft_matrix(N):
    """Unitary N x N DFT dictionary with columns ordered by increasing angle."""
    N = int(N)
    if N < 1:
        raise ValueError("dictionary size must be at least 1")
    return _dft(N)


def array_response(N, angle):
    """Half-wavelength ULA response, unit norm.

    ``angle`` may be an array; the antenna axis is appended last.
    """
    angle = np.asarray(angle, dtype=float)
    n = np.arange(N)
    return np.exp(1j * np.pi * np.multiply.outer(np.sin(angle), n)) / np.sqrt(N)


def nearest_grid_index(angle, N):
    """Index of the dictionary column closest to ``angle`` in the sine domain.

    Distances wrap with period 2 because a half-wavelength ULA cannot tell
    ``sin = 1`` from ``sin = -1``. Ties go to the lower index.
    """
    s = np.sin(np.asarray(angle, dtype=float))
    diff = np.abs(np.subtract.outer(s, grid_sines(N)))
    diff = np.minimum(diff, 2.0 - diff)
    # tiny slack so that floating point noise cannot break exact ties upward
    best = diff.min(axis=-1, keepdims=True)
    idx = np.argmax(diff <= best + 1e-12, axis=-1)
    return int(idx) if idx.ndim == 0 else idx


def beamspace_response(N, angle):
    """Beamspace coordinates ``W^H a(angle)``, antenna axis last."""
    W = dft_matrix(N).W
    return array_response(N, angle) @ W.conj()


def to_beamspace(matrix, ue_dict, ap_dict):
    """Two-sided transform ``W_UE^H H W_AP`` of an N_UE x N_AP matrix."""
    matrix = np.asarray(matrix)
    if matrix.shape[-2:] != (ue_dict.N, ap_dict.N):
        raise ValueError(f"expected trailing shape {(ue_dict.N, ap_dict.N)}, got {matrix.shape}")
    return ue_dict.W.conj().T @ matrix @ ap_dict.W


def mask_vector(mask):
    """Normalized beamspace beamformer from a 0/1 finger mask."""
    mask = np.asarray(mask, dtype=float)
    nu = mask.sum(axis=-1, keepdims=True)
    if np.any(nu == 0):
        raise ValueError("mask has no active finger")
    return mask / np.sqrt(nu)
