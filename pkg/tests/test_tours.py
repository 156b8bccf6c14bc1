import itertools
import json
import math
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from equityfront.errors import CacheMismatchError, SizeLimitError
from equityfront.instance import distance_matrix, generate_family, make_instance
from equityfront.tours import (
    CONVENTIONAL,
    TSP_CONSTRAINED,
    all_tour_lengths,
    build_cache,
    cache_path,
    dedup_lengths,
    feasible_subsets,
    load_cache,
    load_or_build_cache,
    members,
    save_cache,
    tsp_optimal_length,
    tsp_optimal_lengths,
)


def _mask(cs):
    return sum(1 << c for c in cs)


def test_feasible_subsets_small_capacity():
    inst = make_instance((0, 0), [(1, 0), (0, 1), (1, 1)], vehicles=2, capacity=2)
    assert feasible_subsets(inst) == sorted(_mask(s) for k in (1, 2) for s in itertools.combinations(range(3), k))


def test_feasible_subsets_all():
    inst = make_instance((0, 0), [(1, 0), (0, 1), (1, 1), (2, 2)], vehicles=2, capacity=4)
    assert feasible_subsets(inst) == list(range(1, 16))


def test_feasible_subsets_binomial_count():
    inst = generate_family(1, 0, 14, 2, 0)
    assert len(feasible_subsets(inst)) == sum(comb(14, k) for k in range(1, 8)) == 9907


def test_feasible_subsets_respect_heterogeneous_demands():
    inst = make_instance((0, 0), [(1, 0), (0, 1), (1, 1)], vehicles=2, capacity=3, demands=[2, 1, 2])
    got = {tuple(members(m)) for m in feasible_subsets(inst)}
    assert got == {(0,), (1,), (2,), (0, 1), (1, 2)}


def test_too_many_customers():
    inst = make_instance((0, 0), [(i, i) for i in range(33)], vehicles=2, capacity=20)
    with pytest.raises(SizeLimitError):
        feasible_subsets(inst)


def test_singleton_and_pair_lengths():
    inst = generate_family(4, 0, 6, 2, 0)
    d = distance_matrix(inst)
    assert tsp_optimal_length(_mask([2]), d) == 2 * d[0, 3]
    a, b = 1, 4
    assert math.isclose(tsp_optimal_length(_mask([a, b]), d), d[0, a + 1] + d[a + 1, b + 1] + d[b + 1, 0], rel_tol=1e-15)
    assert all_tour_lengths(_mask([2]), d).all_lengths == (2 * d[0, 3],)
    assert len(all_tour_lengths(_mask([a, b]), d).all_lengths) == 1


@pytest.mark.parametrize("seed", range(10))
def test_dp_matches_permutation_brute_force(seed):
    inst = generate_family(100 + seed, 0, 7, 2, 0)
    d = distance_matrix(inst)
    dm = oracles.oracle_matrix(inst)
    masks = [m for m in range(1, 1 << 7)]
    dp = tsp_optimal_lengths(masks, d, 7)
    for m in masks:
        want = oracles.brute_lengths_np(dm, members(m)).min()
        assert abs(dp[m] - want) <= 1e-9
        assert tsp_optimal_length(m, d) == dp[m]


def test_three_customers_have_three_lengths():
    inst = generate_family(9, 0, 3, 2, 1)
    d = distance_matrix(inst)
    res = all_tour_lengths(0b111, d)
    want = oracles.distinct(oracles.brute_lengths(oracles.points(inst), [0, 1, 2]))
    assert len(res.all_lengths) == 3
    assert np.allclose(res.all_lengths, want, rtol=0, atol=1e-9)


def test_square_corners():
    inst = make_instance((0, 0), [(0, 1), (1, 1), (1, 0)], vehicles=2, capacity=3)
    d = distance_matrix(inst)
    res = all_tour_lengths(0b111, d)
    r2 = math.sqrt(2)
    assert np.allclose(res.all_lengths, [4.0, 2 + 2 * r2], atol=1e-12)
    assert res.tsp_optimal == res.all_lengths[0] == tsp_optimal_length(0b111, d)


@pytest.mark.parametrize("seed", range(5))
def test_all_lengths_match_oracle(seed):
    inst = generate_family(200 + seed, 0, 6, 2, 0)
    d = distance_matrix(inst)
    dm = oracles.oracle_matrix(inst)
    for m in range(1, 1 << 6):
        res = all_tour_lengths(m, d)
        want = oracles.distinct(oracles.brute_lengths_np(dm, members(m)).tolist())
        assert len(res.all_lengths) == len(want)
        assert np.allclose(res.all_lengths, want, rtol=0, atol=1e-9)
        assert list(res.all_lengths) == sorted(res.all_lengths)
        assert np.all(np.diff(res.all_lengths) > 1e-9)


def test_oversized_subset_names_the_limit():
    inst = generate_family(1, 0, 6, 2, 0)
    with pytest.raises(SizeLimitError, match="max_perm_size"):
        all_tour_lengths(0b111111, distance_matrix(inst), max_perm_size=5)


def test_dedup_keeps_smaller_of_close_values():
    vals = np.array([1.0, 1.0 + 5e-10, 2.0, 2.0 + 2e-9])
    assert list(dedup_lengths(vals, 1e-9)) == [1.0, 2.0, 2.0 + 2e-9]


@given(st.integers(0, 10_000))
@settings(max_examples=20)
def test_adding_a_customer_never_shortens_the_optimum(seed):
    inst = generate_family(seed, 0, 8, 2, 0)
    d = distance_matrix(inst)
    order = np.random.default_rng(seed).permutation(8)
    mask, prev = 0, 0.0
    for c in order:
        mask |= 1 << int(c)
        cur = tsp_optimal_length(mask, d)
        assert cur >= prev - 1e-9
        prev = cur


def test_cache_contents_by_mode():
    inst = generate_family(3, 0, 7, 3, 0)
    conv = build_cache(inst, CONVENTIONAL)
    tsp = build_cache(inst, TSP_CONSTRAINED)
    assert len(conv) == len(tsp) == len(feasible_subsets(inst))
    for m in tsp.sets:
        assert tsp.lengths(m) == (tsp.tsp(m),)
        assert conv.tsp(m) == tsp.tsp(m)
        assert conv.lengths(m)[0] == conv.tsp(m)


def test_cache_for_n14_has_9907_entries():
    assert len(build_cache(generate_family(1, 0, 14, 2, 0), TSP_CONSTRAINED)) == 9907


def test_cache_build_deterministic_and_round_trip(tmp_path):
    inst = generate_family(3, 1, 7, 2, 1)
    a, b = build_cache(inst), build_cache(inst)
    assert a.to_dict() == b.to_dict()
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_cache(a, p1)
    save_cache(b, p2)
    assert p1.read_bytes() == p2.read_bytes()
    back = load_cache(p1, inst, CONVENTIONAL)
    assert back.to_dict() == a.to_dict()


def test_cache_rejects_other_instance(tmp_path):
    a = generate_family(3, 0, 6, 2, 0)
    b = generate_family(3, 1, 6, 2, 0)
    p = tmp_path / "c.json"
    save_cache(build_cache(a, TSP_CONSTRAINED), p)
    with pytest.raises(CacheMismatchError):
        load_cache(p, b, TSP_CONSTRAINED)
    with pytest.raises(CacheMismatchError):
        load_cache(p, a, CONVENTIONAL)


def test_mismatched_cache_is_rebuilt(tmp_path):
    a = generate_family(3, 0, 6, 2, 0)
    path = cache_path(tmp_path, a, TSP_CONSTRAINED)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = build_cache(a, TSP_CONSTRAINED).to_dict()
    doc["instance_hash"] = "0" * 64
    path.write_text(json.dumps(doc))
    cache = load_or_build_cache(a, TSP_CONSTRAINED, tmp_path)
    assert cache.instance_hash == a.content_hash()
    assert json.loads(path.read_text())["instance_hash"] == a.content_hash()


def test_cache_dir_env_override(tmp_path, monkeypatch):
    from equityfront.tours import cache_dir

    monkeypatch.setenv("EQUITYFRONT_CACHE_DIR", str(tmp_path / "elsewhere"))
    assert cache_dir("default") == tmp_path / "elsewhere"
    monkeypatch.delenv("EQUITYFRONT_CACHE_DIR")
    assert str(cache_dir("default")) == "default"
