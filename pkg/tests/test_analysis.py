import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from published_rows import MARK_MEASURES, ROWS
from equityfront.analysis import (
    InstanceAnalysis,
    SolutionSpaceIndex,
    agreement_matrix,
    analyze_instance,
    annotate,
    check_two_tour_theorem,
    flag_inconsistent,
    flag_tsp_optimal,
    is_constant_sum,
    marginal_cost_stats,
    mean_agreement,
    summarize,
    verify_theorems,
)
from equityfront.frontier import ParetoSet, Solution, pareto_enumerate_many
from equityfront.instance import generate_family, make_instance
from equityfront.measures import MONOTONIC_MEASURES, CORE_MEASURES, Measure
from equityfront.tours import CONVENTIONAL, MODES, TSP_CONSTRAINED, SubsetCache, TourLengthSet, build_cache

FIVE_BLOCKS = [1 << k for k in range(5)]


def _sol(lengths, blocks=FIVE_BLOCKS):
    return Solution.build(blocks, lengths)


def _front(measure, sols, mode=CONVENTIONAL, tsp=None, cons=None, h="h"):
    return ParetoSet(Measure(measure), mode, list(sols), "inst", h, tsp_optimal=tsp, consistent=cons)


# ------------------------------------------------------------------ TSP flag


def _published_cache():
    optima = [83.04, 78.04, 68.96, 68.61, 43.17]
    sets = {b: TourLengthSet(b, x, (x,)) for b, x in zip(FIVE_BLOCKS, optima)}
    sets[FIVE_BLOCKS[2]] = TourLengthSet(FIVE_BLOCKS[2], 68.96, (68.96, 71.44))
    return SubsetCache("h", CONVENTIONAL, 5, 9, 1e-9, sets)


def test_published_rows_two_and_three_tsp_flag():
    cache = _published_cache()
    row2 = _sol([83.04, 78.04, 68.96, 68.61, 43.17])
    row3 = _sol([83.04, 78.04, 71.44, 68.61, 43.17])
    assert flag_tsp_optimal(row2, cache)
    assert not flag_tsp_optimal(row3, cache)


def test_constrained_solutions_always_tsp_optimal():
    inst = generate_family(5, 0, 7, 3, 1)
    cache = build_cache(inst, TSP_CONSTRAINED)
    for f in pareto_enumerate_many(inst, cache, CORE_MEASURES, TSP_CONSTRAINED).values():
        assert all(flag_tsp_optimal(s, cache) for s in f.solutions)


def test_second_smallest_length_is_not_optimal():
    inst = generate_family(6, 0, 6, 2, 0)
    cache = build_cache(inst, CONVENTIONAL)
    three = next(m for m in cache.sets if bin(m).count("1") == 3)
    rest = ((1 << 6) - 1) ^ three
    s = Solution.build([three, rest], [cache.lengths(three)[1], cache.tsp(rest)])
    assert not flag_tsp_optimal(s, cache)


# ------------------------------------------------------------------ inconsistency


@pytest.fixture(scope="module")
def published_index():
    return SolutionSpaceIndex(np.array([r[1] for r in ROWS]))


def test_published_row_sixteen_is_inconsistent(published_index):
    row16 = _sol(ROWS[15][1])
    for m in MARK_MEASURES:
        assert flag_inconsistent(row16, published_index, Measure(m)), m
    for m in MONOTONIC_MEASURES:
        assert not flag_inconsistent(row16, published_index, m)


def test_published_consistent_marks_never_flagged(published_index):
    # the rows are a subset of the real space, so a consistent mark admits no witness among them
    for _, lengths, _, marks in ROWS:
        for m, mark in zip(MARK_MEASURES, marks):
            if mark == "o":
                assert not flag_inconsistent(_sol(lengths), published_index, Measure(m)), (lengths, m)


def test_published_row_sixteen_witness_is_row_thirteen(published_index):
    w = published_index.find_inconsistency(ROWS[15][1], Measure.RANGE)
    assert tuple(w) == ROWS[12][1]


def test_single_partition_space_is_consistent():
    inst = make_instance((0, 0), [(1, 0), (0, 2)], vehicles=2, capacity=1)
    cache = build_cache(inst, CONVENTIONAL)
    res = analyze_instance(inst, {CONVENTIONAL: cache}, CORE_MEASURES, modes=(CONVENTIONAL,))
    for f in res.fronts[CONVENTIONAL].values():
        assert f.consistent == [True]


def _brute_inconsistent(s, vectors, measure):
    from equityfront.measures import evaluate, lex_key

    s_sorted = sorted(s, reverse=True)
    for v in vectors:
        v_sorted = sorted(v, reverse=True)
        if sum(v_sorted) >= sum(s_sorted) - 1e-9:
            continue
        if any(a > b for a, b in zip(v_sorted, s_sorted)):
            continue
        if measure is Measure.LEX:
            if lex_key(s) < lex_key(v):
                return True
        elif evaluate(measure, s) < evaluate(measure, v) - 1e-12 * max(1.0, evaluate(measure, v)):
            return True
    return False


@given(st.lists(st.lists(st.integers(1, 12), min_size=3, max_size=3), min_size=1, max_size=25))
def test_flag_matches_brute_force(rows):
    vectors = [tuple(float(x) for x in r) for r in rows]
    idx = SolutionSpaceIndex(np.array([sorted(v, reverse=True) for v in vectors]))
    for v in vectors:
        for m in Measure:
            assert flag_inconsistent(_sol(v, FIVE_BLOCKS[:3]), idx, m) == _brute_inconsistent(v, vectors, m)


def test_monotonic_fronts_never_inconsistent():
    inst = generate_family(8, 0, 8, 3, 1)
    res = analyze_instance(inst, {m: build_cache(inst, m) for m in MODES}, CORE_MEASURES)
    for fronts in res.fronts.values():
        for m in MONOTONIC_MEASURES:
            assert all(fronts[m].consistent) and all(fronts[m].tsp_optimal)


def test_index_collapses_duplicates_and_orders_by_cost():
    idx = SolutionSpaceIndex(np.array([[3.0, 1.0], [2.0, 2.0], [3.0, 1.0], [4.0, 0.0], [1.0, 1.0]]))
    assert len(idx) == 4
    assert list(idx.costs) == sorted(idx.costs)
    assert {tuple(r) for r in idx.vectors} == {(3.0, 1.0), (2.0, 2.0), (4.0, 0.0), (1.0, 1.0)}


# ------------------------------------------------------------------ constant sum


def test_constant_sum_single_vector():
    assert is_constant_sum(SolutionSpaceIndex(np.array([[5.0, 2.0]])))


def test_constant_sum_permuted_copies():
    rows = np.array([[5.0, 2.0, 1.0], [5.0, 2.0, 1.0], [5.0, 2.0, 1.0]])
    assert is_constant_sum(SolutionSpaceIndex(rows))


def test_tour_length_space_is_variable_sum():
    inst = generate_family(9, 0, 7, 2, 0)
    res = analyze_instance(inst, {m: build_cache(inst, m) for m in MODES}, [Measure.RANGE])
    assert res.constant_sum == {CONVENTIONAL: False, TSP_CONSTRAINED: False}


def test_constant_sum_needs_rows():
    with pytest.raises(ValueError):
        is_constant_sum(SolutionSpaceIndex(np.zeros((0, 2))))


# ------------------------------------------------------------------ agreement


def test_identical_fronts_agree_fully():
    sols = [_sol([3.0, 2.0, 1.0, 1.0, 1.0])]
    mx = agreement_matrix({Measure.RANGE: _front("range", sols), Measure.GINI: _front("gini", sols)})
    assert mx["pairs"][(Measure.RANGE, Measure.GINI)] == {"share_of_a": 1.0, "share_of_b": 1.0, "jaccard": 1.0}
    assert mx["share_all"] == 1.0


def test_disjoint_fronts_do_not_agree():
    a = _front("range", [_sol([3.0, 2.0, 1.0, 1.0, 1.0])])
    b = _front("gini", [_sol([4.0, 2.0, 1.0, 1.0, 1.0])])
    mx = agreement_matrix({Measure.RANGE: a, Measure.GINI: b})
    assert mx["pairs"][(Measure.RANGE, Measure.GINI)] == {"share_of_a": 0.0, "share_of_b": 0.0, "jaccard": 0.0}
    assert mx["share_unique_one"] == 1.0


def test_global_shares():
    s1, s2, s3 = (_sol([float(k), 1.0, 1.0, 1.0, 1.0]) for k in (2, 3, 4))
    mx = agreement_matrix({
        Measure.MINMAX: _front("minmax", [s1, s2]),
        Measure.LEX: _front("lex", [s1, s2]),
        Measure.RANGE: _front("range", [s1, s3]),
    })
    assert mx["share_all"] == pytest.approx(1 / 3)
    assert mx["share_exactly_two"] == pytest.approx(1 / 3)
    assert mx["share_unique_one"] == pytest.approx(1 / 3)
    assert mx["pairs"][(Measure.MINMAX, Measure.RANGE)]["jaccard"] == pytest.approx(1 / 3)


def test_agreement_rejects_mixed_instances():
    with pytest.raises(ValueError):
        agreement_matrix({Measure.RANGE: _front("range", [], h="a"), Measure.GINI: _front("gini", [], h="b")})


def test_agreement_on_real_fronts():
    inst = generate_family(10, 0, 8, 3, 0)
    fronts = pareto_enumerate_many(inst, build_cache(inst, CONVENTIONAL), CORE_MEASURES, CONVENTIONAL)
    mx = agreement_matrix(fronts)
    for a in CORE_MEASURES:
        assert mx["pairs"][(a, a)]["jaccard"] == 1.0
        for b in CORE_MEASURES:
            assert mx["pairs"][(a, b)]["jaccard"] == mx["pairs"][(b, a)]["jaccard"]
    assert mx["pairs"][(Measure.MINMAX, Measure.LEX)]["share_of_a"] == 1.0
    avg = mean_agreement([mx, mx])
    assert avg["pairs"][(Measure.MINMAX, Measure.LEX)] == mx["pairs"][(Measure.MINMAX, Measure.LEX)]


# ------------------------------------------------------------------ marginal cost


def test_published_marginal_cost():
    rows = [_sol(ROWS[0][1]), _sol(ROWS[1][1])]
    f = _front("range", rows, tsp=[True, True], cons=[True, True])
    st_ = marginal_cost_stats(f)
    # tour lengths are printed to two decimals, so the cost ratio carries about 1e-4 of rounding
    assert st_["cost_increase"] == pytest.approx(0.0041, abs=1e-4)
    assert st_["range_reduction"] == pytest.approx(0.261, abs=5e-4)
    assert st_["imbalance_ratio"] == pytest.approx(97.15 / 43.17)


def test_single_solution_front_has_no_second():
    f = _front("range", [_sol(ROWS[0][1])], tsp=[True], cons=[True])
    st_ = marginal_cost_stats(f)
    assert st_["cost_increase"] is None and st_["range_reduction"] is None


def test_equal_cost_front_all_within_ten_percent():
    sols = [_sol([4.0, 1.0, 1.0, 1.0, 1.0]), _sol([2.0, 2.0, 2.0, 1.0, 1.0])]
    f = _front("range", sols, tsp=[True, True], cons=[True, True])
    assert marginal_cost_stats(f)["share_within_10pct"] == 1.0


def test_second_solution_skips_flagged_ones():
    sols = [_sol(ROWS[k][1]) for k in (0, 2, 1)]
    f = _front("gini", sols, tsp=[True, False, True], cons=[True, False, True])
    assert marginal_cost_stats(f)["cost_increase"] == pytest.approx((341.83 - 340.45) / 340.45, abs=1e-4)


def test_marginal_cost_empty_front():
    with pytest.raises(ValueError):
        marginal_cost_stats(_front("gini", []))


# ------------------------------------------------------------------ summaries


def test_summary_arithmetic():
    sols = [_sol([float(k), 1.0, 1.0, 1.0, 1.0]) for k in range(2, 7)]
    f = _front("range", sols, tsp=[True, True, False, False, False], cons=[True] * 5)
    (row,) = summarize([{Measure.RANGE: f}], CONVENTIONAL)
    assert (row.avg_cardinality, row.avg_tsp_optimal, row.share_tsp_optimal) == (5.0, 2.0, 0.4)
    assert row.share_consistent == 1.0 and row.avg_new is None


def test_summary_ratio_of_averages_versus_average_of_ratios():
    big = _front("range", [_sol([float(k), 1.0, 1.0, 1.0, 1.0]) for k in range(2, 6)],
                 tsp=[True] * 4, cons=[True] * 4)
    small = _front("range", [_sol([2.0, 1.0, 1.0, 1.0, 1.0])], tsp=[False], cons=[True])
    (row,) = summarize([{Measure.RANGE: big}, {Measure.RANGE: small}], CONVENTIONAL)
    assert row.share_tsp_optimal == pytest.approx(2.0 / 2.5)
    assert row.mean_share_tsp_optimal == pytest.approx(0.5)


def test_summary_counts_new_solutions():
    a, b, c = (_sol([float(k), 1.0, 1.0, 1.0, 1.0]) for k in (2, 3, 4))
    conv = _front("range", [a, b], tsp=[True, True], cons=[True, True])
    tsp = _front("range", [a, c], TSP_CONSTRAINED, tsp=[True, True], cons=[True, True])
    (row,) = summarize([{Measure.RANGE: tsp}], TSP_CONSTRAINED, [{Measure.RANGE: conv}])
    assert (row.avg_new, row.share_new) == (1.0, 0.5)


def test_summary_rejects_unflagged_fronts():
    with pytest.raises(ValueError):
        summarize([{Measure.RANGE: _front("range", [_sol([2.0, 1.0, 1.0, 1.0, 1.0])])}], CONVENTIONAL)


def test_monotonic_summary_shares_are_exactly_one():
    batch = []
    for b in range(2):
        inst = generate_family(12, b, 7, 3, 1)
        batch.append(analyze_instance(inst, {m: build_cache(inst, m) for m in MODES}, CORE_MEASURES))
    rows = summarize([r.fronts[CONVENTIONAL] for r in batch], CONVENTIONAL)
    for row in rows:
        assert 0 <= row.share_tsp_optimal <= 1 and 0 <= row.share_consistent <= 1
        if Measure(row.measure) in MONOTONIC_MEASURES:
            assert row.share_tsp_optimal == 1.0 and row.share_consistent == 1.0


# ------------------------------------------------------------------ theorems


@given(st.lists(st.tuples(st.floats(0.5, 50), st.floats(0.5, 50)), min_size=1, max_size=40, unique=True))
def test_two_tour_claim_holds_for_any_pair_set(pairs):
    idx = SolutionSpaceIndex(np.array([sorted(p, reverse=True) for p in pairs]))
    assert check_two_tour_theorem(idx, list(Measure))["violations"] == []


def test_two_tour_check_requires_two_columns():
    with pytest.raises(ValueError):
        check_two_tour_theorem(SolutionSpaceIndex(np.ones((2, 3))), [Measure.RANGE])


def test_verify_theorems_clean_batch():
    batch = []
    for v in (2, 3):
        inst = generate_family(13, 0, 7, v, 1)
        batch.append(analyze_instance(inst, {m: build_cache(inst, m) for m in MODES}, CORE_MEASURES))
    rep = verify_theorems(batch)
    assert rep.ok
    assert rep.two_tour_spaces == 2 and rep.two_tour_checked > 0
    assert rep.tsp_optimality_checked == rep.consistency_checked > 0
    assert rep.constant_sum_instances == []
    assert set(rep.witnesses) >= {"non_tsp_optimal_in_front", "inconsistent_in_front"}


def test_verify_theorems_reports_violations():
    inst = generate_family(14, 0, 6, 2, 0)
    res = analyze_instance(inst, {m: build_cache(inst, m) for m in MODES}, CORE_MEASURES)
    f = res.fronts[CONVENTIONAL][Measure.MINMAX]
    f.tsp_optimal = [False] * len(f)
    f.consistent = [False] * len(f)
    rep = verify_theorems([res])
    assert not rep.ok
    assert len(rep.tsp_optimality_violations) == len(rep.consistency_violations) == len(f)
