import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epiworkbench.env import load_scenario
from epiworkbench.pareto import (
    FrontPoint,
    crowding_distance,
    dominates,
    front_from_json,
    front_to_csv,
    front_to_json,
    non_dominated_filter,
    policy_grid,
    reference_front,
)


def brute_force_front(vectors):
    """O(n^2) reference: pairwise dominance, duplicates kept once."""
    keep = []
    seen = []
    for i, u in enumerate(vectors):
        dominated = False
        for j, v in enumerate(vectors):
            if i != j and np.all(v >= u) and np.any(v > u):
                dominated = True
                break
        if dominated:
            keep.append(False)
            continue
        if any(np.array_equal(u, s) for s in seen):
            keep.append(False)
            continue
        seen.append(u)
        keep.append(True)
    return np.array(keep)


class TestDominates:
    def test_componentwise(self):
        assert dominates((-1, -1, -1), (-2, -2, -2))
        assert not dominates((-2, -2, -2), (-1, -1, -1))

    def test_not_reflexive(self):
        assert not dominates((1, 2, 3), (1, 2, 3))

    def test_incomparable(self):
        assert not dominates((-1, -3, 0), (-2, -2, 0))
        assert not dominates((-2, -2, 0), (-1, -3, 0))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            dominates((1, 2), (1, 2, 3))

    @given(st.lists(st.tuples(*[st.integers(-5, 5)] * 3), min_size=3, max_size=3))
    @settings(max_examples=300)
    def test_strict_partial_order(self, triple):
        u, v, w = (np.array(x) for x in triple)
        assert not dominates(u, u)
        if dominates(u, v):
            assert not dominates(v, u)
        if dominates(u, v) and dominates(v, w):
            assert dominates(u, w)


class TestFilter:
    def test_single_point(self):
        pts = [FrontPoint((1.0, 2.0, 3.0))]
        assert non_dominated_filter(pts) == pts

    def test_dominated_chain(self):
        chain = np.array([[-k, -k, -k] for k in range(5)])
        out = non_dominated_filter(chain)
        assert out.shape == (1, 3)
        assert np.array_equal(out[0], [0, 0, 0])

    def test_duplicates_kept_once(self):
        pts = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        out = non_dominated_filter(pts)
        assert len(out) == 2

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(123)
        for _ in range(20):
            vectors = rng.integers(-4, 4, size=(100, 3)).astype(float)
            expected = brute_force_front(vectors)
            got = np.zeros(len(vectors), dtype=bool)
            kept = non_dominated_filter(vectors)
            # reconstruct mask from kept rows (duplicates keep first copy)
            used = set()
            for row in kept:
                for idx in range(len(vectors)):
                    if idx not in used and np.array_equal(vectors[idx], row):
                        got[idx] = True
                        used.add(idx)
                        break
            assert np.array_equal(got, expected)

    @given(st.lists(st.tuples(*[st.integers(-6, 6)] * 3), min_size=1, max_size=40))
    @settings(max_examples=100)
    def test_idempotent_subset_and_internally_nondominated(self, raw):
        vectors = np.array(raw, dtype=float)
        front = non_dominated_filter(vectors)
        assert len(front) >= 1
        rows = {tuple(r) for r in vectors}
        assert all(tuple(r) in rows for r in front)
        again = non_dominated_filter(front)
        assert np.array_equal(np.sort(again, axis=0), np.sort(front, axis=0))
        for i, u in enumerate(front):
            for j, v in enumerate(front):
                if i != j:
                    assert not dominates(v, u)


class TestCrowdingDistance:
    def test_two_point_front(self):
        d = crowding_distance(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.all(np.isinf(d))

    def test_three_collinear_evenly_spaced(self):
        # Direct formula: per objective the middle point's gap is the whole
        # range divided by the range, so it accumulates 1.0 per objective.
        front = np.array([[0.0, 0.0, 0.0], [0.5, 0.5, 0.5], [1.0, 1.0, 1.0]])
        d = crowding_distance(front)
        assert np.isinf(d[0]) and np.isinf(d[2])
        assert d[1] == pytest.approx(3.0)

    def test_identical_points_interior_zero(self):
        front = np.tile([2.0, 2.0, 2.0], (5, 1))
        d = crowding_distance(front)
        assert np.sum(np.isinf(d)) >= 2
        assert np.all(d[np.isfinite(d)] == 0.0)


class TestReferenceFront:
    def test_grid_size_two_levels(self):
        spec = load_scenario("covid_uk")
        grid = policy_grid(spec, 2)
        assert grid.shape == (8, 3)

    def test_masked_channel_pinned(self):
        spec = load_scenario("measles_cov85")
        grid = policy_grid(spec, 3)
        assert grid.shape == (9, 3)
        assert np.all(grid[:, 1] == 0)

    def test_economic_corner_has_no_costly_interventions(self):
        # The r3-maximal corner of the enumerated front applies no closures
        # and no quarantine (both carry economic cost); it attains exactly
        # r3 = 0, which the do-nothing policy can only tie.  Cost-free
        # vaccination means the all-zero policy itself is dominated at the
        # corner, so we assert the corner's structure rather than membership.
        spec = load_scenario("covid_uk")
        front = reference_front(spec, deterministic=True, levels_per_channel=4)
        corner = max(front, key=lambda p: p.vector[2])
        assert corner.vector[2] == 0.0
        assert corner.provenance["policy"]["c"] == 0
        assert corner.provenance["policy"]["q"] == 0
        assert all(p.vector[2] <= 0.0 for p in front)

    def test_deterministic_reproducible(self):
        spec = load_scenario("covid_uk")
        a = reference_front(spec, deterministic=True, levels_per_channel=3)
        b = reference_front(spec, deterministic=True, levels_per_channel=3)
        assert [p.vector for p in a] == [p.vector for p in b]

    def test_serialization_round_trip(self, tmp_path):
        spec = load_scenario("covid_uk")
        front = reference_front(spec, deterministic=True, levels_per_channel=2)
        payload = front_to_json(front, tmp_path / "front.json")
        assert all("return" in e and "policy" in e for e in payload)
        loaded = front_from_json(tmp_path / "front.json")
        assert [p.vector for p in loaded] == [p.vector for p in front]
        csv_path = front_to_csv(front, tmp_path / "front.csv")
        header = csv_path.read_text().splitlines()[0]
        assert header == "r1,r2,r3,a_c,a_v,a_q"
