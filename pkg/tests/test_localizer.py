import itertools
import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from incvoronoi.floorplan import AccessPoint, Floorplan
from incvoronoi.geometry import Point2D
from incvoronoi.gridder import build_grid, cell_points
from incvoronoi.localizer import (
    ConstraintMatch,
    EmptyScanError,
    Filter,
    Relation,
    ScanSample,
    ScanWindow,
    Tracker,
    TrackerConfig,
    compare_aps,
    compensate_walls,
    estimate,
    evaluate_constraints,
    histogram,
    locate_window,
    normalize_power,
    prob_stronger,
    smooth_track,
)
from incvoronoi.simulator import PropagationModel, mean_rss_matrix

FILTERS = list(Filter)


def brute_force_eq(a, b):
    """Double loop over 1 dB bins: sum_i Pr(A = i) * Pr(B <= i)."""
    a = np.floor(np.clip(a, -120, 0))
    b = np.floor(np.clip(b, -120, 0))
    total = 0.0
    for i in range(-120, 1):
        pa = np.count_nonzero(a == i) / len(a)
        if pa == 0:
            continue
        for j in range(-120, i + 1):
            total += pa * np.count_nonzero(b == j) / len(b)
    return total


@pytest.fixture(scope="module")
def ideal():
    plan = Floorplan(26, 17, tuple(
        AccessPoint(f"b{i}", Point2D(x, y), 0.0)
        for i, (x, y) in enumerate(itertools.product([2.6, 7.8, 13.0, 18.2, 23.4], [4.25, 12.75]))
    ))
    return plan, build_grid(plan, 0.5)


def noiseless_window(plan, point, model=PropagationModel(shadowing_sigma=0.0), w=1):
    rss = mean_rss_matrix(np.array([point], dtype=float), plan, model)[0]
    return ScanWindow({ap.id: np.full(w, rss[j]) for j, ap in enumerate(plan.aps)}, w)


# -- normalisation and wall compensation --------------------------------------------


def test_normalize_examples():
    plan = Floorplan(10, 10, (AccessPoint("a", Point2D(1, 1), -77.0), AccessPoint("b", Point2D(5, 5), -59.0)))
    out = normalize_power(ScanWindow.from_lists({"a": [-70.0], "b": [-70.0]}), plan)
    assert out.samples["a"].tolist() == [7.0]
    assert out.samples["b"].tolist() == [-11.0]
    same = normalize_power(ScanWindow.from_lists({"a": [-77.0]}), plan)
    assert same.samples["a"].tolist() == [0.0]


def test_normalize_drops_unknown_ap(caplog):
    plan = Floorplan(10, 10, (AccessPoint("a", Point2D(1, 1), 0.0),))
    with caplog.at_level(logging.WARNING):
        out = normalize_power(ScanWindow.from_lists({"a": [-50.0], "ghost": [-40.0]}), plan)
    assert out.heard == ("a",)
    assert "ghost" in caplog.text


def test_compensate_walls_examples(ideal):
    _, grid = ideal
    gp = grid.point(0)
    gp2 = type(gp)(gp.position, gp.ap_distance, np.array([2] * 10), gp.voronoi_owner, gp.expected_relation)
    assert compensate_walls(-80.0, gp2, 0, 5.0) == -70.0
    assert compensate_walls(-80.0, gp, 0, 5.0) == -80.0
    assert compensate_walls(-80.0, gp2, 0, 0.0) == -80.0
    with pytest.raises(ValueError):
        compensate_walls(-80.0, gp, 0, -1.0)


# -- comparator ------------------------------------------------------------------------


@pytest.mark.parametrize("kind", FILTERS)
def test_disjoint_supports(kind):
    assert compare_aps([-50] * 4, [-70] * 4, kind) is Relation.A_STRONGER
    assert compare_aps([-70] * 4, [-50] * 4, kind) is Relation.B_STRONGER


def test_point_masses_equal():
    assert prob_stronger([-60.0], [-60.0]) == 1.0
    assert compare_aps([-60.0], [-60.0], "prob") is Relation.A_STRONGER


def test_two_bin_uniform_is_three_quarters():
    assert prob_stronger([-70, -60], [-70, -60]) == 0.75
    assert compare_aps([-70, -60], [-70, -60], "prob") is Relation.A_STRONGER


def test_filters_diverge():
    a, b = [-60, -60, -80], [-61, -61, -61]
    assert compare_aps(a, b, "avg") is Relation.B_STRONGER
    assert compare_aps(a, b, "median") is Relation.A_STRONGER


def test_empty_samples():
    with pytest.raises(ValueError, match="no samples for AP"):
        compare_aps([], [-50], "avg")


# readings kept off bin edges: integer dBm plus a fraction in [0, 0.999]
reading = st.builds(lambda i, f: i + f, st.integers(-125, 4), st.floats(0.0, 0.999))
samples = st.lists(reading, min_size=1, max_size=12)


@given(samples, samples)
def test_prob_matches_double_loop(a, b):
    assert abs(prob_stronger(a, b) - brute_force_eq(np.array(a), np.array(b))) <= 1e-12


@given(samples, samples)
def test_prob_complement(a, b):
    # Pr(B <= A) + Pr(A < B) == 1
    a_ = np.floor(np.clip(a, -120, 0))
    b_ = np.floor(np.clip(b, -120, 0))
    strict = np.mean(a_[:, None] < b_[None, :])
    assert prob_stronger(a, b) + strict == pytest.approx(1.0, abs=1e-12)


@given(st.lists(st.integers(-110, -10), min_size=1, max_size=10), st.lists(st.integers(-110, -10), min_size=1, max_size=10))
def test_prob_monotone_in_shift(a, b):
    a = np.array(a, dtype=float)
    assert prob_stronger(a + 1, b) >= prob_stronger(a, b) - 1e-15


def test_histogram():
    lo, counts = histogram([-60.2, -60.9, -59.0])
    assert lo == -61 and counts.tolist() == [2, 0, 1]


def test_scan_sample_range():
    ScanSample("a", -120.0)
    with pytest.raises(ValueError):
        ScanSample("a", 3.0)


# -- constraint evaluation ------------------------------------------------------------


def test_empty_scan(ideal):
    plan, grid = ideal
    with pytest.raises(EmptyScanError, match="empty scan"):
        evaluate_constraints(ScanWindow({}, 7), grid, plan, TrackerConfig())


def test_single_ap_degenerates_to_cell_centroid(ideal):
    plan, grid = ideal
    m = evaluate_constraints(ScanWindow.from_lists({"b3": [-60.0]}), grid, plan, TrackerConfig())
    assert m.n_pairs == 0 and (m.counts == 0).all()
    cell = cell_points(grid, 3)
    assert m.subset.tolist() == cell.tolist()
    est = estimate(m, grid)
    assert est.position.x == pytest.approx(grid.positions[cell, 0].mean())
    assert est.position.y == pytest.approx(grid.positions[cell, 1].mean())


@pytest.mark.parametrize("kind", [Filter.AVERAGE, Filter.MEDIAN])
def test_ideal_grid_points_attain_full_match(ideal, kind, rng):
    plan, grid = ideal
    cfg = TrackerConfig(filter=kind, wall_c=0.0)
    full = math.comb(plan.n_aps, 2)
    for k in rng.choice(len(grid), 60, replace=False):
        m = evaluate_constraints(noiseless_window(plan, grid.positions[k]), grid, plan, cfg)
        assert m.counts.max() <= full
        row = np.flatnonzero(m.subset == k)
        assert len(row) == 1 and m.counts[row[0]] == full
        # the estimate is the centroid of an argmax set that contains the
        # truth, so the error is bounded by that set's extent
        region = grid.positions[m.subset[m.counts == full]]
        extent = np.hypot(*(region - grid.positions[k]).T).max()
        assert estimate(m, grid).position.distance(Point2D(*grid.positions[k])) <= extent + 1e-9


def test_prob_filter_ideal_counts_bounded(ideal, rng):
    # with one sample per AP, readings in the same 1 dB bin compare as equal,
    # so the full count is not guaranteed; the bound still is
    plan, grid = ideal
    cfg = TrackerConfig(wall_c=0.0)
    for k in rng.choice(len(grid), 30, replace=False):
        m = evaluate_constraints(noiseless_window(plan, grid.positions[k]), grid, plan, cfg)
        assert 0 <= m.counts.min() and m.counts.max() <= math.comb(plan.n_aps, 2)


def _full_grid_estimate(plan, grid, window):
    means = {a: np.mean(v) for a, v in window.samples.items()}
    idx = [plan.ap_index(a) for a in means]
    counts = np.zeros(len(grid), dtype=int)
    for i, j in itertools.combinations(sorted(idx), 2):
        c = grid.pair_index(i, j)
        a_wins = means[plan.aps[i].id] >= means[plan.aps[j].id]
        e = grid.expected[:, c]
        counts += np.where(a_wins, e >= 0, e <= 0)
    best = grid.positions[counts == counts.max()]
    return best.mean(axis=0)


def test_clustering_is_pure_optimisation_in_ideal_case(ideal, rng):
    plan, grid = ideal
    cfg = TrackerConfig(filter="avg", wall_c=0.0)
    for k in rng.choice(len(grid), 40, replace=False):
        win = noiseless_window(plan, grid.positions[k])
        est = locate_window(win, grid, plan, cfg).position
        ref = _full_grid_estimate(plan, grid, win)
        assert (est.x, est.y) == pytest.approx(tuple(ref), abs=1e-9)


def test_swapping_two_strongest_crosses_their_bisector(ideal):
    plan, grid = ideal
    win = noiseless_window(plan, (6.0, 5.0))
    ranked = sorted(win.samples, key=lambda a: -win.samples[a][0])
    s1, s2 = ranked[:2]
    swapped = dict(win.samples)
    swapped[s1], swapped[s2] = win.samples[s2], win.samples[s1]
    cfg = TrackerConfig(filter="avg", wall_c=0.0)
    p1, p2 = plan.aps[plan.ap_index(s1)].position, plan.aps[plan.ap_index(s2)].position

    def side(q):
        return math.hypot(q[0] - p1.x, q[1] - p1.y) - math.hypot(q[0] - p2.x, q[1] - p2.y)

    for w, sign in ((win, -1), (ScanWindow(swapped, 1), 1)):
        m = evaluate_constraints(w, grid, plan, cfg)
        cand = grid.positions[m.subset[m.counts == m.counts.max()]]
        assert all(np.sign(side(q)) == sign for q in cand)


def random_window(rng, n_aps=10, w=7):
    ids = [f"b{i}" for i in range(n_aps)]
    heard = rng.choice(ids, int(rng.integers(1, n_aps + 1)), replace=False)
    return ScanWindow({str(a): rng.uniform(-95, -30, int(rng.integers(1, w + 1))).round(int(rng.integers(0, 3)))
                       for a in heard}, w)


@given(st.integers(0, 2**32 - 1), st.floats(-20, 20), st.sampled_from(FILTERS), st.sampled_from([0.0, 2.5, 5.0]))
def test_constant_offset_invariance(ideal, seed, c, kind, wall_c):
    plan, grid = ideal
    win = random_window(np.random.default_rng(seed))
    cfg = TrackerConfig(filter=kind, wall_c=wall_c)
    a = evaluate_constraints(win, grid, plan, cfg)
    b = evaluate_constraints(win.shifted(c), grid, plan, cfg)
    assert np.array_equal(a.subset, b.subset) and np.array_equal(a.counts, b.counts)
    assert estimate(a, grid) == estimate(b, grid)


def test_tx_power_invariance_on_integer_readings(ideal, rng):
    # integer dBm readings and integer tx changes are exact in floating point
    plan, grid = ideal
    for _ in range(200):
        win = random_window(rng)
        win = ScanWindow({a: np.round(v) for a, v in win.samples.items()}, win.w)
        k = int(rng.integers(0, plan.n_aps))
        delta = float(rng.integers(-20, 21))
        ap_id = plan.aps[k].id
        moved_plan = plan.with_aps(
            AccessPoint(ap.id, ap.position, ap.tx_power_dbm + (delta if ap.id == ap_id else 0.0)) for ap in plan.aps)
        moved = ScanWindow({a: (v + delta if a == ap_id else v) for a, v in win.samples.items()}, win.w)
        for kind in FILTERS:
            cfg = TrackerConfig(filter=kind)
            assert locate_window(win, grid, plan, cfg) == locate_window(moved, grid, moved_plan, cfg)


def test_grid_from_other_plan_rejected(ideal):
    plan, grid = ideal
    other = Floorplan(26, 17, (AccessPoint("x", Point2D(1, 1), 0.0),))
    with pytest.raises(ValueError):
        evaluate_constraints(ScanWindow.from_lists({"x": [-50.0]}), grid, other, TrackerConfig())


# -- estimate and smoothing ----------------------------------------------------------------


def _match(subset, counts):
    return ConstraintMatch(np.array(subset), np.array(counts), 0, (0, 1), 1)


def test_estimate_examples(ideal):
    _, grid = ideal
    assert estimate(_match([5, 6, 7], [0, 3, 1]), grid).position == Point2D(*grid.positions[6])
    # a 2 x 2 block of argmax points: indices k, k+1, k+nx, k+nx+1
    k, nx = 100, grid.nx
    e = estimate(_match([k, k + 1, k + nx, k + nx + 1, 3], [4, 4, 4, 4, 1]), grid)
    centre = grid.positions[[k, k + 1, k + nx, k + nx + 1]].mean(axis=0)
    assert (e.position.x, e.position.y) == pytest.approx(tuple(centre))
    assert e.candidate_count == 4 and e.max_matches == 4
    subset = list(range(30))
    flat = estimate(_match(subset, [2] * 30), grid)
    assert (flat.position.x, flat.position.y) == pytest.approx(tuple(grid.positions[subset].mean(axis=0)))
    with pytest.raises(ValueError, match="empty candidate set"):
        estimate(_match([], []), grid)


def test_smooth_track_examples():
    assert smooth_track([Point2D(0, 0), Point2D(2, 2)]) == Point2D(1, 1)
    assert smooth_track([Point2D(3.3, 1.1)]) == Point2D(3.3, 1.1)
    with pytest.raises(ValueError):
        smooth_track([])


def test_tracker_t1_is_raw_and_constant_stream_is_fixed(ideal):
    plan, grid = ideal
    scan = {a: float(v[0]) for a, v in noiseless_window(plan, (9.1, 3.3)).samples.items()}
    one = Tracker(plan, grid, TrackerConfig(t=1))
    six = Tracker(plan, grid, TrackerConfig(t=6))
    outs = []
    for _ in range(8):
        est = one.step(scan)
        assert est.position == est.raw_position
        outs.append(six.step(scan).position)
    assert all(p == outs[0] for p in outs)


def test_tracker_window_holds_last_w_rounds(ideal):
    plan, grid = ideal
    tr = Tracker(plan, grid, TrackerConfig(w=3))
    for v in range(5):
        tr.push([ScanSample("b0", -50.0 - v)])
    assert tr.window().samples["b0"].tolist() == [-52.0, -53.0, -54.0]
    tr.reset()
    assert tr.window().samples == {}


def test_config_validation():
    with pytest.raises(ValueError):
        TrackerConfig(w=0)
    with pytest.raises(ValueError):
        TrackerConfig(wall_c=-1)
    assert TrackerConfig(filter="median").filter is Filter.MEDIAN
