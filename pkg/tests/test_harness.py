import csv
import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cfbeam.estimators import PairEstimate
from cfbeam.harness import (CSV_FIELDS, DetectionStats, GroundTruth, RunConfig, associate_ues,
                            compute_ground_truth, evaluate_detection, export_results, load_results,
                            make_drop, drop_seed, run_monte_carlo, simulate_drop)
from cfbeam.beamspace import nearest_grid_index
from cfbeam.patterns import PatternAssignment
from cfbeam.scenario import ChannelGeometry, LinkPaths, SimParams, build_channel_geometry, generate_drop


def link(gains, aod=None, aoa=None):
    n = len(gains)
    return LinkPaths(np.array(gains, float), np.zeros(n) if aoa is None else np.array(aoa),
                     np.zeros(n) if aod is None else np.array(aod), np.zeros(n))


def test_ground_truth_single_path():
    geo = ChannelGeometry([[link([1e-9], aod=[0.3], aoa=[-0.2])]])
    truth = compute_ground_truth(geo, PatternAssignment(np.array([0]), 1), 32, 16)
    assert truth.ap[0, 0] == 0 and truth.path[0, 0] == 0
    assert truth.aod_index[0, 0] == nearest_grid_index(0.3, 32)
    assert truth.aoa_index[0, 0] == nearest_grid_index(-0.2, 16)


def test_ground_truth_picks_stronger_ap():
    geo = ChannelGeometry([[link([1e-10]), link([1e-12])]])
    truth = compute_ground_truth(geo, PatternAssignment(np.array([0, 0]), 1), 32, 16)
    assert truth.ap[0, 0] == 0


def test_ground_truth_marks_blocked_links():
    geo = ChannelGeometry([[LinkPaths.empty(), link([1e-9])]])
    truth = compute_ground_truth(geo, PatternAssignment(np.array([0, 1]), 2), 32, 16)
    assert not truth.detectable(0, 0) and truth.detectable(0, 1)
    assert list(truth.ranked_patterns(0)) == [1]


def test_ground_truth_matches_exhaustive_scan():
    params = SimParams(M=12, K=4, N_s=60)
    for seed in range(5):
        rng = np.random.default_rng(seed)
        drop = generate_drop(params, rng)
        geo = build_channel_geometry(drop, params, rng)
        assign = PatternAssignment(rng.integers(0, 3, 12), 3)
        truth = compute_ground_truth(geo, assign, 32, 16)
        for k, d in itertools.product(range(4), range(3)):
            best = (0.0, -1, -1)
            for m in assign.members(d):
                for ell, g in enumerate(geo.links[k][m].gain_var):
                    if g > best[0]:
                        best = (g, m, ell)
            assert (truth.ap[k, d], truth.path[k, d]) == best[1:]


def make_truth(aod, aoa, gain):
    aod, aoa, gain = (np.atleast_2d(np.array(x)) for x in (aod, aoa, gain))
    ap = np.where(gain > 0, 0, -1)
    return GroundTruth(ap, np.zeros_like(ap), aod, aoa, gain)


def test_evaluate_detection_exact_match():
    truth = make_truth([[3, 4]], [[1, 2]], [[2.0, 1.0]])
    ests = {(0, 0): PairEstimate(0, 0, 3, 1, 1.0), (0, 1): PairEstimate(0, 1, 4, 2, 1.0)}
    flags, excluded = evaluate_detection(ests, truth, 2)
    assert flags == [[True, True]] and excluded == 0


def test_evaluate_detection_off_by_one_fails():
    truth = make_truth([[3]], [[1]], [[2.0]])
    flags, _ = evaluate_detection({(0, 0): PairEstimate(0, 0, 3, 2, 1.0)}, truth, 1)
    assert flags == [[False]]


def test_evaluate_detection_half_credit():
    truth = make_truth([[3, 4]], [[1, 2]], [[2.0, 1.0]])
    ests = {(0, 0): PairEstimate(0, 0, 3, 1, 1.0), (0, 1): PairEstimate(0, 1, 0, 0, 1.0)}
    flags, _ = evaluate_detection(ests, truth, 2)
    assert np.mean(flags[0]) == 0.5


def test_evaluate_detection_excludes_blocked():
    truth = make_truth([[3, -1]], [[1, -1]], [[2.0, 0.0]])
    flags, excluded = evaluate_detection({(0, 0): PairEstimate(0, 0, 3, 1, 1.0)}, truth, 2)
    assert flags == [[True]] and excluded == 1


def test_associate_ues():
    aps = np.array([[0, 0], [100, 0], [50, 50]], float)
    ues = np.array([[90, 0], [10, 0]], float)
    assign = PatternAssignment(np.array([0, 0, 1]), 2)
    reports = {0: [PairEstimate(0, 0, 1, 2, 1.0), PairEstimate(0, 1, 3, 4, 0.5)],
               1: [PairEstimate(1, 0, 5, 6, 1.0)]}
    out = associate_ues(reports, ues, aps, assign)
    assert out == {0: [(1, 1, 2), (2, 3, 4)], 1: [(0, 5, 6)]}


def test_stats_merge_and_ci():
    a, b = DetectionStats(), DetectionStats()
    key = ("mco", "lb", 8, 8, 4, 1, 20)
    a.add(key, 10, 5)
    b.add(key, 30, 15, 2)
    m = a.merge(b)
    assert m.trials(m.keys()[0]) == 40 and m.successes(m.keys()[0]) == 20
    assert m.excluded(m.keys()[0]) == 2
    assert m.prob(estimator="mco") == 0.5
    assert m.ci95(estimator="mco") == pytest.approx(1.96 * np.sqrt(0.25 / 40))
    assert b.merge(a) == m


@given(st.lists(st.tuples(st.sampled_from(["mco", "sco"]), st.integers(1, 20),
                          st.integers(0, 50)), max_size=12))
def test_stats_merge_commutative_associative(rows):
    parts = []
    for est, T, n in rows:
        s = DetectionStats()
        s.add((est, "lb", 8, 8, 4, 1, T), n, n // 2)
        parts.append(s)
    fwd = DetectionStats()
    for p in parts:
        fwd = fwd.merge(p)
    rev = DetectionStats()
    for p in reversed(parts):
        rev = rev.merge(p)
    assert fwd == rev


def test_export_empty_csv(tmp_path):
    path = tmp_path / "s.csv"
    export_results(DetectionStats(), path)
    assert path.read_text().strip() == ",".join(CSV_FIELDS)


def test_export_one_row_and_json_roundtrip(tmp_path):
    s = DetectionStats()
    s.add(("sco", "ra", 16, 8, 4, 2, 5), 100, 37, 3)
    export_results(s, tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv", encoding="utf-8")))
    assert rows[0] == list(CSV_FIELDS) and len(rows) == 2
    assert rows[1][:8] == ["sco", "ra", "16", "8", "4", "2", "5", "100"]
    export_results(s, tmp_path / "s.json", "json")
    assert load_results(tmp_path / "s.json") == s


def test_export_io_error_mentions_path(tmp_path):
    bad = tmp_path / "missing" / "s.csv"
    with pytest.raises(OSError, match="missing"):
        export_results(DetectionStats(), bad)
    with pytest.raises(ValueError):
        export_results(DetectionStats(), tmp_path / "x", "xml")


def small_config(**kw):
    params = SimParams(M=10, K=4, N_s=40, T_max=5)
    base = dict(params=params, n_drops=2, T_values=(1, 3, 5), N_D_values=(1, 2))
    base.update(kw)
    return RunConfig(**base)


def test_run_determinism_and_bookkeeping():
    cfg = small_config()
    a = run_monte_carlo(cfg)
    b = run_monte_carlo(cfg)
    assert a == b
    for key in a.keys():
        assert a.trials(key) + a.excluded(key) == cfg.n_drops * cfg.params.K * key.N_D


def test_run_is_merge_of_drops():
    cfg = small_config()
    total = simulate_drop(cfg, 0).merge(simulate_drop(cfg, 1))
    assert run_monte_carlo(cfg) == total


def test_parallel_matches_serial():
    cfg = small_config(n_drops=3)
    serial = run_monte_carlo(cfg)
    parallel = run_monte_carlo(small_config(n_drops=3, workers=2))
    assert serial == parallel


def test_all_patterns_flag_keeps_scored_trials():
    a = run_monte_carlo(small_config(n_drops=1, estimators=("mco",)))
    b = run_monte_carlo(small_config(n_drops=1, estimators=("mco",), all_patterns=True))
    assert a == b


def test_noiseless_mco_monotone_in_T():
    cfg = small_config(n_drops=3, geometry="single_path", noiseless=True, estimators=("mco",),
                       mco_normalize=False, T_values=(1, 2, 3, 4, 5), N_D_values=(1,))
    stats = run_monte_carlo(cfg)
    for mode in ("lb", "ra"):
        probs = [stats.prob(assignment=mode, T=T) for T in cfg.T_values]
        assert all(b >= a for a, b in zip(probs, probs[1:]))


def test_drop_matches_between_assignments():
    params = SimParams(M=10, K=4, N_s=40, T_max=5)
    seed = drop_seed(0, 3)
    a = make_drop(params, seed)
    b = make_drop(params, seed)
    np.testing.assert_array_equal(a[0].ap_positions, b[0].ap_positions)


@pytest.mark.parametrize("bad", [dict(n_drops=0), dict(T_values=(0,)), dict(T_values=(50,)),
                                 dict(estimators=("ls",)), dict(assignments=("x",)),
                                 dict(geometry="flat"), dict(N_D_values=(9,))])
def test_run_config_validation(bad):
    with pytest.raises(ValueError):
        small_config(**bad)
