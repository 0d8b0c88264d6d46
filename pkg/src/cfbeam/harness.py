"""Monte Carlo driver for the beam alignment protocol.

One drop runs the whole beacon phase: geometry, data patterns, both pattern
assignments, observables for T_max slots, and the estimators at every UE for
each requested T (using the first T slots of the same schedule). Success for a
(UE, pattern) trial means the estimated grid pair equals the grid pair of the
strongest path among the APs sharing that pattern.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .airlink import substream, synthesize_observables
from .beamspace import nearest_grid_index
from .estimators import mco_accumulate, mco_estimate, mco_visits, sco_solve, pair_from_power_map, select_top_pairs
from .patterns import (assign_patterns_lb, assign_patterns_random, build_patterns,
                       build_ue_codebook)
from .scenario import (SimParams, build_channel_geometry, build_single_path_geometry,
                       generate_drop)

logger = logging.getLogger(__name__)

CSV_FIELDS = ("estimator", "assignment", "D", "nu_AP", "nu_UE", "N_D", "T",
              "trials", "successes", "prob", "ci95")

StatKey = namedtuple("StatKey", "estimator assignment D nu_AP nu_UE N_D T")

# sub-stream tags below each drop's seed
_GEOMETRY, _PATTERNS, _CODEBOOK, _LB, _RA, _AIR = range(6)


@dataclass
class GroundTruth:
    """Dominant path per (UE, pattern); -1 / 0.0 where no AP of the pattern reaches the UE."""

    ap: np.ndarray  # (K, D)
    path: np.ndarray  # (K, D)
    aod_index: np.ndarray  # (K, D)
    aoa_index: np.ndarray  # (K, D)
    gain: np.ndarray  # (K, D)

    def detectable(self, k, d):
        return self.ap[k, d] >= 0

    def ranked_patterns(self, k):
        """Detectable patterns of UE k, strongest dominant path first (ties by pattern)."""
        ds = np.flatnonzero(self.ap[k] >= 0)
        return ds[np.lexsort((ds, -self.gain[k, ds]))]

    def to_dict(self):
        return {name: getattr(self, name).tolist() for name in
                ("ap", "path", "aod_index", "aoa_index", "gain")}


def compute_ground_truth(geometry, assignment, N_AP, N_UE):
    K, D = geometry.K, assignment.D
    ap = np.full((K, D), -1)
    path = np.full((K, D), -1)
    aod = np.full((K, D), -1)
    aoa = np.full((K, D), -1)
    gain = np.zeros((K, D))
    for k in range(K):
        for d in range(D):
            for m in assignment.members(d):
                lp = geometry.links[k][m]
                if len(lp) == 0:
                    continue
                ell = int(np.argmax(lp.gain_var))
                if lp.gain_var[ell] > gain[k, d]:
                    gain[k, d] = lp.gain_var[ell]
                    ap[k, d], path[k, d] = m, ell
            if ap[k, d] >= 0:
                lp = geometry.links[k][ap[k, d]]
                aod[k, d] = nearest_grid_index(lp.aod[path[k, d]], N_AP)
                aoa[k, d] = nearest_grid_index(lp.aoa[path[k, d]], N_UE)
    return GroundTruth(ap, path, aod, aoa, gain)


def evaluate_detection(estimates, truth, N_D):
    """Per-UE success flags over the N_D best detectable patterns.

    ``estimates`` maps (k, d) to a PairEstimate and needs entries only for
    the patterns being scored. Returns (flags, excluded) where flags[k] is a
    list of booleans and ``excluded`` counts trials lost to UEs with fewer
    than N_D detectable patterns.
    """
    flags, excluded = [], 0
    for k in range(truth.ap.shape[0]):
        best = truth.ranked_patterns(k)[:N_D]
        excluded += N_D - len(best)
        row = []
        for d in best:
            est = estimates[(k, int(d))]
            row.append(bool(est.detected and est.aod_index == truth.aod_index[k, d]
                            and est.aoa_index == truth.aoa_index[k, d]))
        flags.append(row)
    return flags, excluded


def associate_ues(reports, ue_positions, ap_positions, assignment):
    """Network-side association from the UE reports alone.

    Each reported pattern is resolved to the AP of that pattern nearest to the
    reporting UE. Returns {ue: [(ap, aod_index, aoa_index), ...]}.
    """
    ap_positions = np.asarray(ap_positions, dtype=float)
    out = {}
    for k, pairs in reports.items():
        chosen = []
        for est in pairs:
            members = assignment.members(est.pattern)
            if len(members) == 0 or not est.detected:
                continue
            dist = np.linalg.norm(ap_positions[members] - np.asarray(ue_positions[k]), axis=1)
            chosen.append((int(members[np.argmin(dist)]), est.aod_index, est.aoa_index))
        out[k] = chosen
    return out


@dataclass
class DetectionStats:
    """Trial and success counts per configuration point; merging is a plain sum."""

    counts: dict = field(default_factory=dict)  # StatKey -> [trials, successes, excluded]

    def add(self, key, trials, successes, excluded=0):
        row = self.counts.setdefault(StatKey(*key), [0, 0, 0])
        row[0] += trials
        row[1] += successes
        row[2] += excluded

    def merge(self, other):
        out = DetectionStats({k: list(v) for k, v in self.counts.items()})
        for key, (t, s, e) in other.counts.items():
            out.add(key, t, s, e)
        return out

    def keys(self):
        return sorted(self.counts)

    def select(self, **filters):
        """The unique row whose key matches every filter."""
        hits = [k for k in self.counts if all(getattr(k, f) == v for f, v in filters.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {filters}")
        return hits[0]

    def trials(self, key):
        return self.counts[key][0]

    def successes(self, key):
        return self.counts[key][1]

    def excluded(self, key):
        return self.counts[key][2]

    def prob(self, key=None, **filters):
        key = key or self.select(**filters)
        t, s, _ = self.counts[key]
        return s / t if t else 0.0

    def ci95(self, key=None, **filters):
        """Half-width of the normal-approximation 95% binomial interval."""
        key = key or self.select(**filters)
        t = self.counts[key][0]
        if not t:
            return 0.0
        p = self.prob(key)
        return 1.96 * math.sqrt(p * (1 - p) / t)

    def rows(self):
        out = []
        for key in self.keys():
            t, s, e = self.counts[key]
            row = key._asdict()
            row.update(trials=t, successes=s, excluded=e, prob=self.prob(key), ci95=self.ci95(key))
            out.append(row)
        return out

    def to_dict(self):
        return {"rows": self.rows()}

    @classmethod
    def from_dict(cls, data):
        stats = cls()
        for row in data["rows"]:
            stats.add(tuple(row[f] for f in StatKey._fields), row["trials"], row["successes"],
                      row.get("excluded", 0))
        return stats

    def __eq__(self, other):
        return isinstance(other, DetectionStats) and self.counts == other.counts


@dataclass
class RunConfig:
    params: SimParams = field(default_factory=SimParams)
    n_drops: int = 100
    T_values: tuple = (1, 2, 5, 10, 15, 20)
    estimators: tuple = ("mco", "sco")
    assignments: tuple = ("lb", "ra")
    N_D_values: tuple = (1, 2)
    geometry: str = "stochastic"  # or "single_path" (on-grid, one path per link)
    noiseless: bool = False
    noise_method: str = "chi2"
    seed: int | None = None
    workers: int = 1
    nnls_tol: float = 1e-8
    nnls_max_iters: int = 5000
    all_patterns: bool = False
    mco_normalize: bool = True  # argmax of the per-visit mean; False uses the raw sum

    def __post_init__(self):
        self.T_values = tuple(sorted(int(t) for t in self.T_values))
        self.estimators = tuple(self.estimators)
        self.assignments = tuple(self.assignments)
        self.N_D_values = tuple(self.N_D_values)
        if self.n_drops < 1:
            raise ValueError("n_drops must be at least 1")
        if not self.T_values or self.T_values[0] < 1:
            raise ValueError("T values must be positive")
        if self.T_values[-1] > self.params.T_max:
            raise ValueError(f"T = {self.T_values[-1]} exceeds T_max = {self.params.T_max}")
        for name in self.estimators:
            if name not in ("mco", "sco"):
                raise ValueError(f"unknown estimator {name!r}")
        for name in self.assignments:
            if name not in ("lb", "ra"):
                raise ValueError(f"unknown assignment {name!r}")
        if self.geometry not in ("stochastic", "single_path"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        D = self.params.D
        if max(self.N_D_values) > D or min(self.N_D_values) < 1:
            raise ValueError(f"N_D values must lie in 1..D={D}")

    @property
    def master_seed(self):
        return self.params.seed if self.seed is None else self.seed

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["params"] = dataclasses.asdict(self.params)
        return out


def drop_seed(master_seed, drop_index):
    return np.random.SeedSequence(master_seed, spawn_key=(drop_index,))


def make_drop(params, seed, geometry="stochastic"):
    """Scenario, geometry, patterns and UE codebook of one drop."""
    rng = substream(seed, _GEOMETRY)
    drop = generate_drop(params, rng)
    if geometry == "single_path":
        geo = build_single_path_geometry(drop, params, rng)
    else:
        geo = build_channel_geometry(drop, params, rng)
    D = params.D
    patterns = build_patterns(D, params.T_max, params.n_AP, params.Q, params.nu_AP, params.N_AP,
                              substream(seed, _PATTERNS), N_C=params.N_C)
    codebook = build_ue_codebook(params.K, params.T_max, params.n_UE, params.nu_UE, params.N_UE,
                                 substream(seed, _CODEBOOK))
    return drop, geo, patterns, codebook


def make_assignment(mode, drop, D, seed):
    if mode == "lb":
        return assign_patterns_lb(drop.ap_positions, D, substream(seed, _LB))
    return assign_patterns_random(drop.M, D, substream(seed, _RA))


def estimate_pattern(estimator, c_kd, tx_masks, rx_masks, sigma2, T_values, k, d, config):
    """Estimates of one (UE, pattern) for every T, reusing the slot prefix."""
    out = {}
    if estimator == "mco":
        C = np.zeros((rx_masks.shape[-1], tx_masks.shape[-1]))
        start = 0
        for T in T_values:
            mco_accumulate(c_kd[:T], tx_masks, rx_masks, out=C, start=start)
            start = T
            visits = mco_visits(tx_masks, rx_masks, T) if config.mco_normalize else None
            out[T] = mco_estimate(C, visits, ue=k, pattern=d)
    else:
        x0 = None
        N_AP, N_UE = tx_masks.shape[-1], rx_masks.shape[-1]
        for T in T_values:
            res = sco_solve(c_kd[:T], tx_masks, rx_masks, sigma2, config.nnls_tol,
                            config.nnls_max_iters, x0)
            x0 = res.x
            out[T] = pair_from_power_map(res.x.reshape(N_AP, N_UE), k, d)
    return out


def simulate_drop(config, drop_index):
    params = config.params
    seed = drop_seed(config.master_seed, drop_index)
    drop, geo, patterns, codebook = make_drop(params, seed, config.geometry)
    D = len(patterns)
    T_values = config.T_values
    stats = DetectionStats()
    for mode in config.assignments:
        assignment = make_assignment(mode, drop, D, seed)
        truth = compute_ground_truth(geo, assignment, params.N_AP, params.N_UE)
        obs = synthesize_observables(geo, assignment, patterns, codebook, params,
                                     substream_seed(seed, _AIR), T=T_values[-1],
                                     noiseless=config.noiseless, method=config.noise_method)
        N_D_max = max(config.N_D_values)
        for estimator in config.estimators:
            per_T = {T: {} for T in T_values}
            for k in range(params.K):
                wanted = range(D) if config.all_patterns else truth.ranked_patterns(k)[:N_D_max]
                for d in wanted:
                    d = int(d)
                    ests = estimate_pattern(estimator, obs.c[k, d], patterns[d].tx_masks,
                                            codebook.rx_masks[k], obs.sigma2, T_values, k, d, config)
                    for T, est in ests.items():
                        per_T[T][(k, d)] = est
            for T in T_values:
                for N_D in config.N_D_values:
                    flags, excluded = evaluate_detection(per_T[T], truth, N_D)
                    trials = sum(len(f) for f in flags)
                    hits = sum(sum(f) for f in flags)
                    key = (estimator, mode, D, params.nu_AP, params.nu_UE, N_D, T)
                    stats.add(key, trials, hits, excluded)
    return stats


def substream_seed(seed, *key):
    return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key))


def _run_chunk(args):
    config, indices = args
    total = DetectionStats()
    for i in indices:
        total = total.merge(simulate_drop(config, i))
    return total


def run_monte_carlo(config, progress=None):
    """Detection statistics over ``config.n_drops`` independent drops.

    Drop i always uses the sub-stream i of the master seed, so the result does
    not depend on ``workers`` or on completion order.
    """
    total = DetectionStats()
    if config.workers > 1:
        chunks = [(config, list(range(w, config.n_drops, config.workers)))
                  for w in range(config.workers)]
        with ProcessPoolExecutor(config.workers) as pool:
            for part in pool.map(_run_chunk, chunks):
                total = total.merge(part)
        return total
    for i in range(config.n_drops):
        total = total.merge(simulate_drop(config, i))
        if progress is not None:
            progress(i + 1, config.n_drops)
    return total


def export_results(stats, path, format="csv"):
    """Write stats in long format, one row per configuration point."""
    try:
        if format == "csv":
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, extrasaction="ignore")
                writer.writeheader()
                for row in stats.rows():
                    writer.writerow(row)
        elif format == "json":
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(stats.to_dict(), fh, indent=1)
        else:
            raise ValueError(f"unknown format {format!r}")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def load_results(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return DetectionStats.from_dict(json.load(fh))
    except OSError as exc:
        raise OSError(f"cannot read results from {path}: {exc}") from exc
