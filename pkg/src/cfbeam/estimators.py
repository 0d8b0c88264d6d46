"""UE-side direction estimators.

SCO stacks every averaged energy of one pattern into a linear model whose
unknown is the power of each (AoD, AoA) grid pair, and inverts it by
non-negative least squares. MCO skips the inversion and simply adds each
energy to every grid pair that its transmit and receive masks touched.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairEstimate:
    ue: int
    pattern: int
    aod_index: int
    aoa_index: int
    strength: float
    detected: bool = True

    def to_dict(self):
        return asdict(self)


@dataclass
class ScoSystem:
    B: np.ndarray  # (T * n_UE * n_AP, N_AP * N_UE)
    c: np.ndarray
    sigma2: float


@dataclass
class NnlsResult:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool


def build_sco_row(tx_mask, rx_mask):
    """Kronecker product of the transmit and receive beamspace power profiles, unit norm.

    Entry ``u * N_UE + u'`` pairs AoD index u with AoA index u'.
    """
    p = np.abs(np.asarray(tx_mask, dtype=float)) ** 2
    r = np.abs(np.asarray(rx_mask, dtype=float)) ** 2
    norm = np.linalg.norm(p) * np.linalg.norm(r)
    if norm == 0:
        raise ValueError("zero beamspace mask")
    return np.kron(p, r) / norm


def build_sco_system(c_kd, tx_masks, rx_masks, sigma2):
    """Stack rows in (slot, rx chain, tx chain) order to match ``c_kd.ravel()``.

    ``c_kd`` has shape (T, n_UE, n_AP); masks are (T, n_AP, N_AP) and
    (T, n_UE, N_UE).
    """
    c_kd = np.asarray(c_kd, dtype=float)
    T, n_UE, n_AP = c_kd.shape
    p = np.abs(np.asarray(tx_masks[:T], dtype=float)) ** 2
    r = np.abs(np.asarray(rx_masks[:T], dtype=float)) ** 2
    p /= np.linalg.norm(p, axis=-1, keepdims=True)
    r /= np.linalg.norm(r, axis=-1, keepdims=True)
    B = np.einsum("sia,sjb->sjiab", p, r).reshape(T * n_UE * n_AP, -1)
    return ScoSystem(B, c_kd.ravel(), float(sigma2))


def kkt_residual(G, h, x, g=None):
    """Largest violation of the non-negative least squares optimality conditions."""
    if g is None:
        g = G @ x - h
    active = x > 0
    viol = np.where(active, np.abs(g), np.maximum(-g, 0.0))
    return float(viol.max()) if len(viol) else 0.0


def nnls_solve(B, c, sigma2=0.0, tol=1e-8, max_iters=5000, x0=None, callback=None):
    """Minimize ||B x + sigma2 - c||^2 over x >= 0.

    Projected gradient with Barzilai-Borwein steps and an exact line search
    along the projected direction, so every iterate stays feasible and the
    objective never increases. Stops when the KKT residual drops below
    ``tol * ||B^T (c - sigma2)||_inf``. ``callback(x)`` sees every iterate.
    """
    B = np.asarray(B, dtype=float)
    b = np.asarray(c, dtype=float) - sigma2
    G = B.T @ B
    return _nnls_gram(G.__matmul__, np.diag(G), B.T @ b, float(b @ b), tol, max_iters, x0,
                      callback)


def _nnls_gram(matvec, diag, h, bb, tol, max_iters, x0=None, callback=None):
    """Projected Barzilai-Borwein on the normal equations; ``matvec(v)`` is G @ v."""
    n = len(h)
    scale = np.abs(h).max() if n else 0.0
    x = np.zeros(n) if x0 is None else np.maximum(np.array(x0, dtype=float), 0.0)
    Gx = matvec(x)
    g = Gx - h
    if scale == 0.0:
        return NnlsResult(x, _objective(x, Gx, h, bb), 0, True)
    threshold = tol * scale
    diag_max = float(np.max(diag))
    lam_max = 1.0 / diag_max if diag_max > 0 else 1.0
    lam = lam_max
    it = 0
    converged = False
    while True:
        viol = np.where(x > 0, np.abs(g), -g).max()
        if viol <= threshold:
            converged = True
            break
        if it >= max_iters:
            break
        it += 1
        d = np.maximum(x - lam * g, 0.0) - x
        gd = float(g @ d)
        if gd >= 0.0 and lam != lam_max:
            # a wild BB step can leave nothing to gain; retry with the safe step
            lam = lam_max
            d = np.maximum(x - lam * g, 0.0) - x
            gd = float(g @ d)
        if gd >= 0.0:
            break
        Gd = matvec(d)
        dGd = float(d @ Gd)
        t = 1.0 if dGd <= 0.0 else min(1.0, -gd / dGd)
        x += t * d
        np.maximum(x, 0.0, out=x)
        if callback is not None:
            callback(x)
        Gx = matvec(x) if it % 64 == 0 else Gx + t * Gd
        g = Gx - h
        lam = min(max(float(d @ d) / dGd, 1e-12), 1e12) if dGd > 0 else 1e12
    if not converged:
        logger.debug("nnls stopped after %d iterations without meeting tol=%g", it, tol)
    return NnlsResult(x, _objective(x, Gx, h, bb), it, converged)


def _objective(x, Gx, h, bb):
    return max(float(x @ Gx - 2.0 * x @ h + bb), 0.0)


def _sco_factors(c_kd, tx_masks, rx_masks, sigma2):
    """Per-slot profile Grams P_s, R_s plus B^T (c - sigma2) and ||c - sigma2||^2."""
    c_kd = np.asarray(c_kd, dtype=float)
    T = c_kd.shape[0]
    p = np.abs(np.asarray(tx_masks[:T], dtype=float)) ** 2
    r = np.abs(np.asarray(rx_masks[:T], dtype=float)) ** 2
    p /= np.linalg.norm(p, axis=-1, keepdims=True)
    r /= np.linalg.norm(r, axis=-1, keepdims=True)
    P = p.transpose(0, 2, 1) @ p
    R = r.transpose(0, 2, 1) @ r
    b = c_kd - sigma2
    H = (p.transpose(0, 2, 1) @ b.transpose(0, 2, 1) @ r).sum(axis=0)
    return P, R, H.ravel(), float((b * b).sum())


def sco_normal_equations(c_kd, tx_masks, rx_masks, sigma2):
    """Gram matrix, B^T (c - sigma2) and ||c - sigma2||^2 without forming B.

    Rows of one slot share the profiles, so B^T B is a sum over slots of
    kron(sum_i p_i p_i^T, sum_j r_j r_j^T).
    """
    P, R, h, bb = _sco_factors(c_kd, tx_masks, rx_masks, sigma2)
    T, n_ap, n_ue = P.shape[0], P.shape[-1], R.shape[-1]
    G = (P.reshape(T, -1).T @ R.reshape(T, -1)).reshape(n_ap, n_ap, n_ue, n_ue)
    G = G.transpose(0, 2, 1, 3).reshape(n_ap * n_ue, n_ap * n_ue)
    return G, h, bb


def sco_solve(c_kd, tx_masks, rx_masks, sigma2, tol=1e-8, max_iters=5000, x0=None):
    # G v = vec(sum_s P_s V R_s) with V = v as (N_AP, N_UE); cheaper than the dense product
    P, R, h, bb = _sco_factors(c_kd, tx_masks, rx_masks, sigma2)
    shape = (P.shape[-1], R.shape[-1])

    def matvec(v):
        return (P @ v.reshape(shape) @ R).sum(axis=0).ravel()

    diag = np.einsum("saa,sbb->ab", P, R).ravel()
    return _nnls_gram(matvec, diag, h, bb, tol, max_iters, x0)


def pair_from_power_map(power, ue=-1, pattern=-1):
    """Largest entry of an (N_AP, N_UE) map; ties go to the lowest (AoD, AoA)."""
    flat = int(np.argmax(power))
    u, u_rx = divmod(flat, power.shape[1])
    return PairEstimate(ue, pattern, u, u_rx, float(power[u, u_rx]), bool(power[u, u_rx] > 0))


def sco_estimate(c_kd, tx_masks, rx_masks, sigma2, N_AP=None, N_UE=None, ue=-1, pattern=-1,
                 tol=1e-8, max_iters=5000, x0=None, return_solution=False):
    N_AP = N_AP or tx_masks.shape[-1]
    N_UE = N_UE or rx_masks.shape[-1]
    res = sco_solve(c_kd, tx_masks, rx_masks, sigma2, tol, max_iters, x0)
    est = pair_from_power_map(res.x.reshape(N_AP, N_UE), ue, pattern)
    return (est, res) if return_solution else est


def mco_accumulate(c_kd, tx_masks, rx_masks, visits=False, out=None, start=0):
    """Indicator-weighted sum C[aoa, aod] over all measurements.

    Measurements are added one at a time in (slot, rx chain, tx chain) order;
    ``np.add.at`` is unbuffered and walks the indices in that order, so the
    result is bit-identical to a plain nested loop. Passing ``out`` and
    ``start`` continues an earlier accumulation from slot ``start``. With
    ``visits=True`` also returns how many measurements touched each entry.
    """
    c_kd = np.asarray(c_kd, dtype=float)
    T = c_kd.shape[0]
    N_AP, N_UE = tx_masks.shape[-1], rx_masks.shape[-1]
    C = np.zeros((N_UE, N_AP)) if out is None else out
    tx = np.asarray(tx_masks[start:T], dtype=bool)
    rx = np.asarray(rx_masks[start:T], dtype=bool)
    rows, cols, vals = _mco_indices(c_kd[start:T], tx, rx)
    np.add.at(C, (rows, cols), vals)
    if visits:
        V = np.zeros((N_UE, N_AP), dtype=int)
        np.add.at(V, (rows, cols), 1)
        return C, V
    return C


def _mco_indices(c_kd, tx, rx):
    """Flat (row, col, value) triples in (slot, rx chain, tx chain, aoa, aod) order."""
    T, n_ue, n_ap = c_kd.shape
    nu_tx, nu_rx = tx.sum(axis=-1), rx.sum(axis=-1)
    if T and (nu_tx == nu_tx.flat[0]).all() and (nu_rx == nu_rx.flat[0]).all():
        # every finger set has the same size: nonzero of each mask is a dense index block
        a = np.nonzero(tx)[-1].reshape(T, 1, n_ap, 1, -1)
        b = np.nonzero(rx)[-1].reshape(T, n_ue, 1, -1, 1)
        shape = np.broadcast_shapes(a.shape, b.shape)
        vals = np.broadcast_to(c_kd[:, :, :, None, None], shape)
        return (np.broadcast_to(b, shape).ravel(), np.broadcast_to(a, shape).ravel(),
                vals.ravel())
    s, j, i, rows, cols = np.nonzero(rx[:, :, None, :, None] & tx[:, None, :, None, :])
    return rows, cols, c_kd[s, j, i]


def mco_visits(tx_masks, rx_masks, T=None):
    T = T or tx_masks.shape[0]
    tx = np.asarray(tx_masks[:T], dtype=bool).sum(axis=1)
    rx = np.asarray(rx_masks[:T], dtype=bool).sum(axis=1)
    return rx.T @ tx


def mco_estimate(C, visits=None, ue=-1, pattern=-1):
    """Pair with the largest mean energy per visit.

    With ``visits`` the accumulated matrix is divided entry-wise by the visit
    counts (unvisited pairs score zero), so pairs scheduled more often gain no
    advantage from the noise floor; the strength is that mean energy. Without
    it the raw accumulation is used. An all-zero C yields a non-detection.
    """
    C = np.asarray(C, dtype=float)
    if visits is not None:
        visits = np.asarray(visits)
        C = np.divide(C, visits, out=np.zeros_like(C), where=visits > 0)
    power = C.T  # (N_AP, N_UE): lexicographic ties in (aod, aoa)
    flat = int(np.argmax(power))
    u, u_rx = divmod(flat, power.shape[1])
    peak = float(power[u, u_rx])
    return PairEstimate(ue, pattern, u, u_rx, max(peak, 0.0), peak > 0.0)


def select_top_pairs(estimates, N_D):
    """The N_D strongest per-pattern estimates, strongest first, ties by pattern index."""
    estimates = list(estimates)
    if N_D > len(estimates):
        raise ValueError(f"N_D = {N_D} exceeds the {len(estimates)} available patterns")
    ranked = sorted(estimates, key=lambda e: (-e.strength, e.pattern))
    return ranked[:N_D]


def estimates_to_json(estimates):
    return json.dumps([e.to_dict() for e in estimates])


def estimates_from_json(text):
    return [PairEstimate(**item) for item in json.loads(text)]
