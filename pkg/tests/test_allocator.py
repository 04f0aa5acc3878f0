import io

import pytest
from hypothesis import given, strategies as st

from oracles import RegionMapBestFit
from oocsched.allocator import (
    BestFitAllocator,
    DeviceOOM,
    DoubleFree,
    TraceOp,
    UnknownHandle,
    VirtualAddressAllocator,
    adversarial_trace,
    make_allocator,
    random_trace,
    read_trace,
    worst_case_external_frag,
    write_trace,
)
from oocsched.units import MiB


class TestVirtualAddress:
    def test_ceiling_rounding(self):
        va = VirtualAddressAllocator(1000 * MiB, 40 * MiB)
        h = va.allocate(100 * MiB)
        assert va.allocated_size(h) == 120 * MiB
        assert va.stats().internal_frag_bytes == 20 * MiB

    def test_exact_multiple_has_no_waste(self):
        va = VirtualAddressAllocator(1000 * MiB, 40 * MiB)
        va.allocate(120 * MiB)
        assert va.stats().internal_frag_bytes == 0

    def test_fresh_pool(self):
        st_ = VirtualAddressAllocator(400 * MiB, 40 * MiB).stats()
        assert st_.capacity_bytes == 400 * MiB
        assert (st_.live_requested_bytes, st_.live_allocated_bytes, st_.device_in_use_bytes,
                st_.peak_device_bytes, st_.live_alloc_count) == (0, 0, 0, 0, 0)

    def test_capacity_floors_to_chunks(self):
        assert VirtualAddressAllocator(100 * MiB, 40 * MiB).capacity_bytes == 80 * MiB

    def test_chunk_floor(self):
        with pytest.raises(ValueError):
            VirtualAddressAllocator(100 * MiB, 1 * MiB)
        VirtualAddressAllocator(100 * MiB, 1 * MiB, min_chunk_bytes=1 * MiB)

    def test_alloc_free_restores_live_state(self):
        va = VirtualAddressAllocator(400 * MiB, 40 * MiB)
        va.allocate(50 * MiB)
        before = va.stats()
        va.deallocate(va.allocate(70 * MiB))
        after = va.stats()
        assert (after.live_requested_bytes, after.live_allocated_bytes, after.live_alloc_count) == \
            (before.live_requested_bytes, before.live_allocated_bytes, before.live_alloc_count)
        assert va.free_chunks == 8

    def test_any_chunks_serve_any_request(self):
        # free every other allocation; the scattered chunks still serve a big request
        va = VirtualAddressAllocator(10 * 4, 4, min_chunk_bytes=1)
        hs = [va.allocate(4) for _ in range(10)]
        for h in hs[::2]:
            va.deallocate(h)
        h = va.allocate(20)
        assert sorted(va.chunk_ids(h)) == [0, 2, 4, 6, 8]

    def test_oom_only_when_chunks_short(self):
        va = VirtualAddressAllocator(3 * 4, 4, min_chunk_bytes=1)
        va.allocate(5)
        with pytest.raises(DeviceOOM):
            va.allocate(5)
        va.allocate(4)

    def test_handle_errors(self):
        va = VirtualAddressAllocator(400 * MiB, 40 * MiB)
        h = va.allocate(1)
        va.deallocate(h)
        with pytest.raises(DoubleFree):
            va.deallocate(h)
        with pytest.raises(UnknownHandle):
            va.deallocate(999)

    def test_handles_not_reused(self):
        va = VirtualAddressAllocator(40, 4, min_chunk_bytes=1)
        seen = set()
        for _ in range(50):
            h = va.allocate(3)
            assert h not in seen
            seen.add(h)
            va.deallocate(h)

    def test_counting_oracle_10k_ops(self):
        m_c = 8
        va = VirtualAddressAllocator(64 * m_c, m_c, min_chunk_bytes=1)
        live_k: dict[int, int] = {}
        handles = {}
        for op in random_trace(10_000, seed=5, max_bytes=40, live_target=12):
            if op.op == "alloc":
                k = -(-op.bytes // m_c)
                try:
                    handles[op.id] = va.allocate(op.bytes)
                    live_k[op.id] = k
                except DeviceOOM:
                    assert 64 - sum(live_k.values()) < k
            elif op.id in handles:
                va.deallocate(handles.pop(op.id))
                live_k.pop(op.id)
            assert va.free_chunks == 64 - sum(live_k.values())


class TestBestFit:
    def test_reuse_split_then_oom(self):
        bf = BestFitAllocator(10)
        a = bf.allocate(10)
        bf.deallocate(a)
        bf.allocate(6)
        assert bf.region_map() == [(0, 6, False), (6, 4, True)]
        assert bf.stats().cached_bytes == 4
        with pytest.raises(DeviceOOM) as ei:
            bf.allocate(5)
        assert ei.value.free_bytes == 4

    def test_smallest_fit_wins(self):
        bf = BestFitAllocator(100)
        hs = [bf.allocate(s) for s in (30, 10, 20)]
        for h in hs:
            bf.deallocate(h)
        bf.allocate(9)
        assert bf.region_map()[1] == (30, 9, False)

    def test_equal_sizes_lowest_region_first(self):
        bf = BestFitAllocator(100)
        hs = [bf.allocate(10) for _ in range(3)]
        for h in reversed(hs):
            bf.deallocate(h)
        bf.allocate(10)
        assert bf.region_map()[0] == (0, 10, False)

    def test_carves_do_not_merge_unless_asked(self):
        for full, expect in ((False, [(0, 5, True), (5, 5, True)]), (True, [(0, 10, True)])):
            bf = BestFitAllocator(10, full_coalesce=full)
            a, b = bf.allocate(5), bf.allocate(5)
            bf.deallocate(a)
            bf.deallocate(b)
            assert bf.region_map() == expect

    def test_split_pieces_merge_back(self):
        bf = BestFitAllocator(10)
        bf.deallocate(bf.allocate(10))
        a, b = bf.allocate(3), bf.allocate(3)
        bf.deallocate(a)
        bf.deallocate(b)
        assert bf.region_map() == [(0, 10, True)]

    def test_handle_errors(self):
        bf = BestFitAllocator(10)
        h = bf.allocate(3)
        bf.deallocate(h)
        with pytest.raises(DoubleFree):
            bf.deallocate(h)
        with pytest.raises(UnknownHandle):
            bf.deallocate(42)


def replay_against_region_map(trace, capacity, full=False):
    bf = BestFitAllocator(capacity, full_coalesce=full)
    ref = RegionMapBestFit(capacity, full)
    handles = {}
    ooms = []
    for step, op in enumerate(trace):
        if op.op == "alloc":
            ok = ref.alloc(op.id, op.bytes)
            try:
                handles[op.id] = bf.allocate(op.bytes)
                assert ok
            except DeviceOOM:
                assert not ok
                ooms.append((step, ref.cached()))
        elif op.id in handles:
            bf.deallocate(handles.pop(op.id))
            ref.free(op.id)
        assert bf.region_map() == [(r[0], r[1], r[2]) for r in ref.regions]
    return ooms


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("full", [False, True])
def test_best_fit_matches_region_map(seed, full):
    replay_against_region_map(random_trace(600, seed, max_bytes=50, live_target=10), 400, full)


def test_adversarial_external_fragmentation_matches_region_map():
    cap, trace = adversarial_trace(unit=MiB)
    ooms = replay_against_region_map(trace, cap)
    rep = worst_case_external_frag(trace, BestFitAllocator(cap))
    assert rep.oom_count == 1 and ooms[0][0] == rep.events[0].step
    assert rep.worst_bytes == ooms[0][1] == 4 * MiB
    ev = rep.events[0]
    assert ev.free_bytes >= ev.requested


def test_va_never_fragments_externally():
    cap, trace = adversarial_trace(unit=MiB)
    assert worst_case_external_frag(trace, VirtualAddressAllocator(cap, 2 * MiB)).worst_bytes == 0
    assert worst_case_external_frag([], BestFitAllocator(10)).worst_bytes == 0


@given(st.integers(0, 10**6), st.integers(1, 64), st.integers(1, 12))
def test_internal_fragmentation_bounds(seed, m_c, live_target):
    va = VirtualAddressAllocator(32 * m_c, m_c, min_chunk_bytes=1)
    handles = {}
    per_alloc_if = {}
    for op in random_trace(300, seed, max_bytes=4 * m_c, live_target=live_target):
        if op.op == "alloc":
            try:
                h = va.allocate(op.bytes)
            except DeviceOOM:
                continue
            handles[op.id] = h
            waste = va.allocated_size(h) - op.bytes
            assert 0 <= waste < m_c
            per_alloc_if[op.id] = waste
        elif op.id in handles:
            va.deallocate(handles.pop(op.id))
            per_alloc_if.pop(op.id)
        s = va.stats()
        assert s.internal_frag_bytes == sum(per_alloc_if.values())
        if s.live_alloc_count:
            assert s.internal_frag_bytes < s.live_alloc_count * m_c <= s.max_live_alloc_count * m_c


def test_trace_io_round_trip():
    trace = random_trace(50, 1, 100)
    text = "\n".join(write_trace(trace))
    assert read_trace(io.StringIO(text)) == trace
    with pytest.raises(ValueError):
        read_trace(['{"op": "poke", "id": 1}'])


def test_make_allocator():
    assert isinstance(make_allocator("va", 80 * MiB), VirtualAddressAllocator)
    assert isinstance(make_allocator("bestfit", 80), BestFitAllocator)
    with pytest.raises(ValueError):
        make_allocator("slab", 80)


def test_best_fit_deterministic():
    trace = random_trace(2000, 9, 64)
    cap = 500
    a = worst_case_external_frag(trace, BestFitAllocator(cap))
    b = worst_case_external_frag(trace, BestFitAllocator(cap))
    assert a.events == b.events
