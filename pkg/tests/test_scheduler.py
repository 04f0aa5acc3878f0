import random

import pytest
from hypothesis import given, strategies as st

from conftest import random_graph, seq_of, small_sequences
from oracles import reference_window_schedule
from oocsched.graph import footprint_stats, sequence_for
from oocsched.scheduler import (
    InfeasibleBudget,
    Schedule,
    WindowConfig,
    build_schedule,
    min_feasible_budget,
    validate_schedule,
    window_end,
)

GOLDEN_USES = [["v1", "v2"], ["v2", "v3"], ["v3", "v4"], ["v4", "v5"], ["v5", "v6"], ["v6", "v1"]]
GOLDEN_SIZES = {"v1": 4, "v2": 4, "v3": 2, "v4": 2, "v5": 1, "v6": 1}


def lists(s: Schedule) -> dict:
    return {k: [list(x) for x in getattr(s, k)] for k in ("swap_in", "wait_out", "reserve_out", "free")}


def funcs_of(seq):
    return [[seq.occurrences[k].var for k in range(lo, hi)] for lo, hi in seq.fn_ranges]


def test_golden_chain_with_skip_back():
    # traced by hand: v2's reservation is dropped when f2's window reaches it,
    # v1 is waited for to make room for v3, and comes back only at f6 because
    # f5's 6-byte window stops one occurrence short of it
    seq = seq_of(GOLDEN_USES, GOLDEN_SIZES)
    s = build_schedule(seq, WindowConfig(6, 8))
    assert lists(s) == {
        "swap_in": [["v1", "v2"], ["v3"], ["v4"], ["v5", "v6"], [], ["v1"]],
        "wait_out": [[], ["v1"], [], [], [], []],
        "reserve_out": [["v1"], [], [], [], [], []],
        "free": [[], ["v2"], ["v3"], ["v4"], ["v5"], ["v6", "v1"]],
    }
    assert tuple(s.stats) == (18, 4, 14, 8)
    assert validate_schedule(s, seq, 8).ok


def test_golden_matches_reference():
    seq = seq_of(GOLDEN_USES, GOLDEN_SIZES)
    assert lists(build_schedule(seq, WindowConfig(6, 8))) == reference_window_schedule(GOLDEN_USES, GOLDEN_SIZES, 6, 8)


def test_window_covering_everything_swaps_in_up_front():
    seq = seq_of(GOLDEN_USES, GOLDEN_SIZES)
    total = footprint_stats(seq).total_bytes
    s = build_schedule(seq, WindowConfig(10**9, total))
    assert set(s.swap_in[0]) == set(GOLDEN_SIZES)
    assert not any(s.reserve_out) and not any(s.wait_out)


def test_infeasible_when_one_function_exceeds_budget():
    seq = seq_of([["a", "b"]], {"a": 5, "b": 5})
    with pytest.raises(InfeasibleBudget) as ei:
        build_schedule(seq, WindowConfig(100, 9))
    assert ei.value.function == 0 and ei.value.needed == 10 and ei.value.budget == 9


def test_window_floor_is_function_end():
    seq = seq_of([["a", "b", "c"], ["c"]], {"a": 10, "b": 10, "c": 10})
    assert window_end(seq, 0, 1) == 2
    assert window_end(seq, 0, 30) == 2
    assert window_end(seq, 0, 40) == 3


class TestValidator:
    def seq_and_sched(self):
        seq = seq_of(GOLDEN_USES, GOLDEN_SIZES)
        return seq, lists(build_schedule(seq, WindowConfig(6, 8)))

    def test_removing_swap_in_breaks_residency(self):
        seq, ls = self.seq_and_sched()
        ls["swap_in"][5].remove("v1")
        rep = validate_schedule(Schedule.from_lists(seq.function_ids, **ls), seq, 8)
        assert rep.first.check == 1 and rep.first.variable == "v1" and rep.first.function == 5

    def test_swap_out_of_dead_variable(self):
        seq, ls = self.seq_and_sched()
        ls["free"][5].remove("v6")
        ls["reserve_out"][5].append("v6")
        rep = validate_schedule(Schedule.from_lists(seq.function_ids, **ls), seq, 8)
        assert [v.check for v in rep.violations] == [3]

    def test_budget_exceeded(self):
        seq, ls = self.seq_and_sched()
        rep = validate_schedule(Schedule.from_lists(seq.function_ids, **ls), seq, 7)
        assert rep.first.check == 2 and rep.first.function == 0

    def test_redundant_swap_in(self):
        seq, ls = self.seq_and_sched()
        ls["swap_in"][1].append("v2")
        rep = validate_schedule(Schedule.from_lists(seq.function_ids, **ls), seq, None)
        assert rep.first.check == 4

    def test_wait_without_reservation(self):
        seq, ls = self.seq_and_sched()
        ls["wait_out"][2].append("v3")
        assert not validate_schedule(Schedule.from_lists(seq.function_ids, **ls), seq, None).ok

    def test_function_order_mismatch(self):
        seq, ls = self.seq_and_sched()
        s = Schedule.from_lists(list(reversed(seq.function_ids)), **ls)
        assert validate_schedule(s, seq, None).first.check == 0


def test_json_round_trip():
    seq = seq_of(GOLDEN_USES, GOLDEN_SIZES)
    s = build_schedule(seq, WindowConfig(6, 8))
    assert Schedule.from_json(s.to_json()) == s
    assert Schedule.from_json(s.to_json(), seq).stats == s.stats


def test_thousand_random_graphs_validate():
    rng = random.Random(2024)
    checked = 0
    for _ in range(1000):
        g = random_graph(rng)
        seq = sequence_for(g)
        fp = footprint_stats(seq)
        window = rng.randint(1, max(1, fp.total_bytes))
        budget = rng.randint(fp.max_function_bytes, max(fp.max_function_bytes, fp.total_bytes))
        try:
            s = build_schedule(seq, WindowConfig(window, budget))
        except InfeasibleBudget:
            assert reference_window_schedule(funcs_of(seq), seq.sizes, window, budget) is None
            continue
        rep = validate_schedule(s, seq, budget)
        assert rep.ok, rep.first
        checked += 1
    assert checked > 500


@given(small_sequences(), st.integers(1, 200), st.integers(1, 400))
def test_matches_reference(seq, window, budget):
    ref = reference_window_schedule(funcs_of(seq), seq.sizes, window, budget)
    try:
        got = lists(build_schedule(seq, WindowConfig(window, budget)))
    except InfeasibleBudget:
        got = None
    assert got == ref


@given(small_sequences(), st.integers(1, 200))
def test_min_feasible_budget_matches_linear_scan(seq, window):
    fp = footprint_stats(seq)
    linear = None
    for b in range(fp.max_function_bytes, fp.total_bytes + 1):
        if reference_window_schedule(funcs_of(seq), seq.sizes, window, b) is not None:
            linear = b
            break
    assert min_feasible_budget(seq, window) == linear


@given(small_sequences())
def test_min_budget_with_tiny_window_is_largest_working_set(seq):
    # waits for f_i are placed before f_{i+1}'s loads count, so adjacent sets never need to coexist
    fp = footprint_stats(seq)
    linear = next(b for b in range(1, fp.total_bytes + 1)
                  if reference_window_schedule(funcs_of(seq), seq.sizes, 1, b) is not None)
    assert min_feasible_budget(seq, 1) == linear == fp.max_function_bytes


@given(small_sequences(), st.integers(1, 200), st.integers(0, 100))
def test_feasibility_is_monotone_in_budget(seq, window, extra):
    b = min_feasible_budget(seq, window)
    s = build_schedule(seq, WindowConfig(window, b + extra))
    assert validate_schedule(s, seq, b + extra).ok


@given(small_sequences(), st.integers(1, 200))
def test_conservation_and_dead_rule(seq, window):
    total = footprint_stats(seq).total_bytes
    s = build_schedule(seq, WindowConfig(window, total))
    st_ = s.stats
    assert st_.bytes_in == st_.bytes_out + st_.bytes_freed
    assert st_.bytes_freed == total
    for i, outs in enumerate(s.reserve_out):
        for v in outs:
            assert seq.next_use_after(i, v) is not None


@given(small_sequences(), st.integers(1, 200))
def test_deterministic(seq, window):
    b = footprint_stats(seq).total_bytes
    a1 = build_schedule(seq, WindowConfig(window, b))
    a2 = build_schedule(seq, WindowConfig(window, b))
    assert a1.to_json() == a2.to_json()


@given(small_sequences())
def test_unbounded_budget_and_window_never_swaps_out(seq):
    total = footprint_stats(seq).total_bytes
    s = build_schedule(seq, WindowConfig(10**12, total))
    assert s.stats.bytes_out == 0 and s.stats.bytes_in == total
