"""Beacon-phase observables at the UEs.

Everything happens in the per-subcarrier frequency domain: each AP sends the
constant sqrt(beta) on the subcarriers of its data pattern, the UE applies its
multi-finger receive beams behind an n_UE-way splitter, and the received
samples of one slot are reduced to the averaged energy per (slot, receive
chain, transmit chain).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .beamspace import beamspace_response

_ALPHA = 0
_NOISE = 1


@dataclass
class QuadraticObservables:
    c: np.ndarray  # (K, D, T, n_UE, n_AP) averaged energies
    sigma2: float

    @property
    def T(self):
        return self.c.shape[2]

    def prefix(self, T):
        """Observables of the first T beacon slots."""
        return QuadraticObservables(self.c[:, :, :T], self.sigma2)


def noise_variance(noise_psd, subcarrier_spacing, noise_figure):
    """Thermal noise power per subcarrier in watts (psd in dBm/Hz)."""
    dbm = noise_psd + 10.0 * np.log10(subcarrier_spacing) + noise_figure
    return 10.0 ** ((dbm - 30.0) / 10.0)


def substream(seed, *key):
    """Generator for the sub-stream ``key`` below ``seed`` (an int or SeedSequence)."""
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key))
    else:
        ss = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return np.random.default_rng(ss)


def _cn(rng, shape, var=1.0):
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_slot_gains(geometry, T, seed):
    """Complex path gains per link and slot: gains[k][m] has shape (T, L_km)."""
    gains = []
    for k, row in enumerate(geometry.links):
        out = []
        for m, lp in enumerate(row):
            rng = substream(seed, _ALPHA, k, m)
            out.append(_cn(rng, (T, len(lp))) * np.sqrt(lp.gain_var))
        gains.append(out)
    return gains


def beamspace_gain(paths, alpha, q, tx_mask, rx_mask, t0, N_AP=None, N_UE=None):
    """Scalar ``v^H Hbeam(q) u`` for one link, summed path by path.

    ``tx_mask`` and ``rx_mask`` are 0/1 finger masks; the 1/sqrt(nu)
    normalization is applied here.
    """
    tx_mask = np.asarray(tx_mask, dtype=float)
    rx_mask = np.asarray(rx_mask, dtype=float)
    if len(paths) == 0:
        return 0j
    N_AP = N_AP or tx_mask.shape[-1]
    N_UE = N_UE or rx_mask.shape[-1]
    g_ap = beamspace_response(N_AP, paths.aod).conj() @ tx_mask / np.sqrt(tx_mask.sum())
    g_ue = beamspace_response(N_UE, paths.aoa) @ rx_mask / np.sqrt(rx_mask.sum())
    phase = np.exp(-2j * np.pi * q * paths.delay / t0)
    return complex(np.sum(np.asarray(alpha) * g_ue * g_ap * phase))


def _group_paths(geometry, k, members, gains):
    aod, aoa, tau, alpha = [], [], [], []
    for m in members:
        lp = geometry.links[k][m]
        if len(lp):
            aod.append(lp.aod)
            aoa.append(lp.aoa)
            tau.append(lp.delay)
            alpha.append(gains[k][m])
    if not aod:
        return None
    return (np.concatenate(aod), np.concatenate(aoa), np.concatenate(tau),
            np.concatenate(alpha, axis=1))


def synthesize_observables(geometry, assignment, patterns, codebook, params, seed,
                           T=None, noiseless=False, method="chi2", gains=None):
    """Averaged quadratic observables for every (UE, pattern, slot, rx chain, tx chain).

    ``method="symbols"`` draws the noise of every OFDM symbol and subcarrier
    explicitly. ``method="chi2"`` samples the same per-slot energy sum in one
    draw: with S*Q noisy copies the sum is a scaled noncentral chi-square with
    2SQ degrees of freedom, which is exact in distribution and far cheaper.
    """
    if method not in ("symbols", "chi2"):
        raise ValueError(f"unknown method {method!r}")
    T = T or patterns[0].T
    K, D = geometry.K, len(patterns)
    n_UE, n_AP, S = params.n_UE, params.n_AP, params.S
    Q = patterns[0].subcarriers.shape[-1]
    t0 = params.symbol_duration
    sigma2 = 0.0 if noiseless else noise_variance(params.noise_psd, params.subcarrier_spacing,
                                                  params.noise_figure)
    amp = np.sqrt(params.beta / n_UE)
    if params.array_gain:
        # physical ULA responses have unit-modulus entries; the dictionary uses unit-norm ones
        amp *= np.sqrt(params.N_AP * params.N_UE)
    if gains is None and amp > 0:
        gains = draw_slot_gains(geometry, T, seed)

    c = np.zeros((K, D, T, n_UE, n_AP))
    for d, pattern in enumerate(patterns):
        members = assignment.members(d)
        tx = pattern.tx_masks[:T].astype(float)
        tx /= np.sqrt(tx.sum(axis=-1, keepdims=True))
        sub = pattern.subcarriers[:T]
        for k in range(K):
            rx = codebook.rx_masks[k, :T].astype(float)
            rx /= np.sqrt(rx.sum(axis=-1, keepdims=True))
            group = _group_paths(geometry, k, members, gains) if amp > 0 else None
            if group is None:
                signal = np.zeros((T, n_UE, n_AP, Q), dtype=complex)
            else:
                aod, aoa, tau, alpha = group
                b_ap = beamspace_response(params.N_AP, aod).conj()  # (L, N_AP)
                b_ue = beamspace_response(params.N_UE, aoa)  # (L, N_UE)
                g_ap = tx @ b_ap.T  # (T, n_AP, L)
                g_ue = rx @ b_ue.T  # (T, n_UE, L)
                phase = np.exp(-2j * np.pi * sub[:, None, :, :] * tau[None, :, None, None] / t0)
                rx_side = g_ue * alpha[:T, None, :]
                tx_side = (g_ap.transpose(0, 2, 1)[..., None] * phase).reshape(T, len(tau), -1)
                signal = amp * (rx_side @ tx_side).reshape(T, n_UE, n_AP, Q)
            c[k, d] = _slot_energy(signal, sigma2, S, method, substream(seed, _NOISE, k, d))
    return QuadraticObservables(c, sigma2)


def _slot_energy(signal, sigma2, S, method, rng):
    T, n_UE, n_AP, Q = signal.shape
    if sigma2 == 0.0:
        return (np.abs(signal) ** 2).mean(axis=-1)
    if method == "symbols":
        noise = _cn(rng, (T, S, n_UE, n_AP, Q), sigma2)
        return (np.abs(signal[:, None] + noise) ** 2).mean(axis=(1, 4))
    dof = 2 * S * Q
    nonc = 2.0 * S * (np.abs(signal) ** 2).sum(axis=-1) / sigma2
    draws = rng.noncentral_chisquare(dof, nonc) if np.any(nonc > 0) else rng.chisquare(dof, nonc.shape)
    return draws * sigma2 / (2.0 * S * Q)


_MAGIC = b"CFBAOBS1"


def save_observables(path, obs):
    """Flat little-endian dump: magic, sigma2, ndim, dims (uint64), then float64 data."""
    c = np.ascontiguousarray(obs.c, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<dQ", obs.sigma2, c.ndim))
        fh.write(struct.pack(f"<{c.ndim}Q", *c.shape))
        fh.write(c.tobytes())


def load_observables(path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not an observables file")
        sigma2, ndim = struct.unpack("<dQ", fh.read(16))
        dims = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
        data = np.frombuffer(fh.read(), dtype="<f8")
    return QuadraticObservables(data.reshape(dims).astype(float), sigma2)
