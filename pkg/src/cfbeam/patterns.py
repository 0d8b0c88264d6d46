"""Orthogonal data patterns, their assignment to APs, and UE receive schedules.

A data pattern fixes, for every beacon slot and AP RF chain, a block of Q
subcarriers and a multi-finger beamspace mask. Patterns use disjoint
subcarriers, so a UE can separate the APs of different patterns; APs that
share a pattern interfere, which the location-based assignment tries to keep
geographically apart.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

_MAX_REDRAWS = 20


@dataclass
class DataPattern:
    index: int
    subcarriers: np.ndarray  # (T, n_AP, Q) int
    tx_masks: np.ndarray  # (T, n_AP, N_AP) bool

    @property
    def T(self):
        return self.tx_masks.shape[0]


@dataclass
class PatternAssignment:
    pattern_of: np.ndarray  # (M,) pattern index per AP
    D: int
    clusters: np.ndarray | None = None  # (M,) cluster label, LB only
    objective_history: list = field(default_factory=list)

    @property
    def M(self):
        return len(self.pattern_of)

    def members(self, d):
        return np.flatnonzero(self.pattern_of == d)

    @property
    def groups(self):
        return [self.members(d) for d in range(self.D)]

    def to_dict(self):
        out = {"D": self.D, "pattern_of": self.pattern_of.tolist()}
        if self.clusters is not None:
            out["clusters"] = self.clusters.tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        clusters = data.get("clusters")
        return cls(np.asarray(data["pattern_of"], dtype=int), int(data["D"]),
                   None if clusters is None else np.asarray(clusters, dtype=int))


@dataclass
class UeCodebook:
    rx_masks: np.ndarray  # (K, T, n_UE, N_UE) bool

    def masks(self, k):
        return self.rx_masks[k]


def num_patterns(N_C, Q, n_AP):
    D = (N_C // Q) // n_AP
    if D < 1:
        raise ValueError(f"no data pattern fits: N_C={N_C}, Q={Q}, n_AP={n_AP}")
    return D


def _draw_masks(rng, shape, nu, N):
    """Uniform nu-of-N masks, independent across the leading ``shape``."""
    keys = rng.random(shape + (N,))
    picks = np.argsort(keys, axis=-1)[..., :nu]
    masks = np.zeros(shape + (N,), dtype=bool)
    np.put_along_axis(masks, picks, True, axis=-1)
    return masks


def _fill_uncovered(masks):
    """Swap uncovered directions into the schedule, latest slots first.

    Only fingers whose direction is scheduled more than once are replaced, so
    coverage never regresses.
    """
    T, n, N = masks.shape
    counts = masks.sum(axis=(0, 1))
    missing = list(np.flatnonzero(counts == 0))
    for s in range(T - 1, -1, -1):
        for i in range(n):
            if not missing:
                return masks
            for u in np.flatnonzero(masks[s, i]):
                if not missing:
                    break
                if counts[u] > 1:
                    new = missing.pop(0)
                    masks[s, i, u] = False
                    masks[s, i, new] = True
                    counts[u] -= 1
                    counts[new] += 1
    return masks


def _schedule(rng, T, n, nu, N):
    """T x n masks with every direction covered whenever T*n*nu >= N."""
    masks = _draw_masks(rng, (T, n), nu, N)
    if T * n * nu < N:
        return masks
    for _ in range(_MAX_REDRAWS):
        if masks.any(axis=(0, 1)).all():
            return masks
        # redraw the last slot only; earlier slots stay as drawn
        masks[-1] = _draw_masks(rng, (n,), nu, N)
    if not masks.any(axis=(0, 1)).all():
        masks = _fill_uncovered(masks)
    return masks


def build_patterns(D, T, n_AP, Q, nu_AP, N_AP, rng, N_C=None, permute_subcarriers=False):
    """D data patterns over T beacon slots.

    Subcarrier blocks are contiguous and the same in every slot unless
    ``permute_subcarriers`` is set, in which case each slot applies its own
    random permutation of the used subcarriers (still a partition).
    """
    used = D * n_AP * Q
    if D < 1 or T < 1 or nu_AP < 1 or nu_AP > N_AP:
        raise ValueError("infeasible pattern dimensions")
    if N_C is not None and used > N_C:
        raise ValueError(f"D*n_AP*Q = {used} exceeds N_C = {N_C}")
    blocks = np.arange(used).reshape(D, 1, n_AP, Q)
    subcarriers = np.broadcast_to(blocks, (D, T, n_AP, Q)).copy()
    if permute_subcarriers:
        pool = np.arange(N_C if N_C is not None else used)
        for s in range(T):
            subcarriers[:, s] = rng.permutation(pool)[:used].reshape(D, n_AP, Q)
    patterns = []
    for d in range(D):
        masks = _schedule(rng, T, n_AP, nu_AP, N_AP)
        patterns.append(DataPattern(d, subcarriers[d], masks))
    return patterns


def build_ue_codebook(K, T, n_UE, nu_UE, N_UE, rng):
    if nu_UE < 1 or nu_UE > N_UE:
        raise ValueError("infeasible UE codebook dimensions")
    return UeCodebook(np.stack([_schedule(rng, T, n_UE, nu_UE, N_UE) for _ in range(K)]))


def assign_patterns_random(M, D, rng):
    """Balanced random assignment: pattern counts differ by at most one."""
    labels = np.tile(np.arange(D), math.ceil(M / D))[:M]
    return PatternAssignment(rng.permutation(labels), D)


def _greedy_assign(points, centroids, capacity):
    """Nearest-centroid assignment in order of increasing distance, respecting capacities."""
    dist = np.linalg.norm(points[:, None, :] - centroids[None, :, :], axis=-1)
    order = np.argsort(dist, axis=None, kind="stable")
    labels = np.full(len(points), -1)
    room = np.array(capacity, dtype=int)
    left = len(points)
    for flat in order:
        p, c = divmod(int(flat), len(centroids))
        if labels[p] < 0 and room[c] > 0:
            labels[p] = c
            room[c] -= 1
            left -= 1
            if left == 0:
                break
    return labels


def _kmeans_cost(points, centroids, labels):
    return float(((points - centroids[labels]) ** 2).sum())


def _kmeans_pp(points, n_clusters, rng):
    """k-means++ seeding: each new centroid drawn with probability ~ squared distance."""
    centroids = [points[rng.integers(len(points))]]
    for _ in range(1, n_clusters):
        d2 = ((points[:, None, :] - np.array(centroids)[None]) ** 2).sum(-1).min(axis=1)
        total = d2.sum()
        idx = rng.choice(len(points), p=d2 / total) if total > 0 else rng.integers(len(points))
        centroids.append(points[idx])
    return np.array(centroids, dtype=float)


def _kmeans_run(points, capacity, centroids, max_iters, tol):
    labels = _greedy_assign(points, centroids, capacity)
    history = []
    for _ in range(max_iters):
        new_labels = _greedy_assign(points, centroids, capacity)
        if _kmeans_cost(points, centroids, new_labels) > _kmeans_cost(points, centroids, labels):
            new_labels = labels
        labels = new_labels
        new_centroids = centroids.copy()
        for c in range(len(capacity)):
            sel = labels == c
            if sel.any():
                new_centroids[c] = points[sel].mean(axis=0)
        shift = np.linalg.norm(new_centroids - centroids, axis=1).max()
        centroids = new_centroids
        history.append(_kmeans_cost(points, centroids, labels))
        if shift < tol:
            break
    return labels, centroids, history


def constrained_kmeans(points, capacity, rng, max_iters=100, tol=1e-6, n_init=8):
    """k-means where cluster c receives exactly ``capacity[c]`` points.

    Runs ``n_init`` k-means++ seeded restarts and keeps the cheapest. Returns
    labels, centroids and the objective after every iteration of that run,
    which never increases: an assignment step that would raise the cost is
    rejected.
    """
    points = np.asarray(points, dtype=float)
    capacity = np.asarray(capacity, dtype=int)
    if capacity.sum() < len(points):
        raise ValueError("total capacity smaller than the number of points")
    best = None
    for _ in range(max(n_init, 1)):
        run = _kmeans_run(points, capacity, _kmeans_pp(points, len(capacity), rng), max_iters, tol)
        if best is None or run[2][-1] < best[2][-1] - 1e-9:
            best = run
    return best


def assign_patterns_lb(ap_positions, D, rng=None, max_iters=100):
    """Location-based assignment: cluster APs, then hand out patterns north to south.

    Clusters hold exactly D APs except one remainder cluster of ``M mod D``
    APs, so each cluster uses every pattern at most once.
    """
    ap_positions = np.asarray(ap_positions, dtype=float)
    M = len(ap_positions)
    if D < 1:
        raise ValueError("D must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    full, rest = divmod(M, D)
    capacity = [D] * full + ([rest] if rest else [])
    labels, _, history = constrained_kmeans(ap_positions, capacity, rng, max_iters=max_iters)
    pattern_of = np.empty(M, dtype=int)
    for c in range(len(capacity)):
        members = np.flatnonzero(labels == c)
        # decreasing latitude, ties by AP index
        order = members[np.lexsort((members, -ap_positions[members, 1]))]
        pattern_of[order] = np.arange(len(order))
    return PatternAssignment(pattern_of, D, labels, history)


def patterns_to_dict(patterns, assignment=None):
    out = {"patterns": [
        {"index": p.index,
         "subcarriers": p.subcarriers.tolist(),
         "tx_fingers": [[np.flatnonzero(m).tolist() for m in slot] for slot in p.tx_masks],
         "N_AP": int(p.tx_masks.shape[-1])}
        for p in patterns]}
    if assignment is not None:
        out["assignment"] = assignment.to_dict()
    return out


def patterns_from_dict(data):
    patterns = []
    for item in data["patterns"]:
        fingers = item["tx_fingers"]
        T, n = len(fingers), len(fingers[0])
        masks = np.zeros((T, n, int(item["N_AP"])), dtype=bool)
        for s, slot in enumerate(fingers):
            for i, idx in enumerate(slot):
                masks[s, i, idx] = True
        patterns.append(DataPattern(int(item["index"]), np.asarray(item["subcarriers"], dtype=int), masks))
    assignment = data.get("assignment")
    return patterns, (PatternAssignment.from_dict(assignment) if assignment else None)


def save_patterns(path, patterns, assignment=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(patterns_to_dict(patterns, assignment), fh)


def load_patterns(path):
    with open(path, encoding="utf-8") as fh:
        return patterns_from_dict(json.load(fh))
