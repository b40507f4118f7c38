import pytest
from hypothesis import given, strategies as st

from fsmfabric.memsys import (plan_tiles, offchip_traffic, bandwidth_bound_runtime, stream_bytes,
                              arithmetic_intensity, sram_sweep, InfeasibleTiling, Bound,
                              TrafficReport)


def test_fits_on_chip_is_one_phase():
    s = plan_tiles(64, 64, 64, 400, 64 * 64)
    assert s.n_phases == 1
    r = offchip_traffic(s)
    assert r.bytes_in_A == stream_bytes(400, 64)


def test_twice_sram_is_two_phases():
    s = plan_tiles(32, 64, 64, 100, 64 * 32)
    assert s.n_phases == 2
    r = offchip_traffic(s)
    assert r.bytes_in_A == 2 * stream_bytes(100, 32)
    assert r.bytes_in_B == 64 * 64
    assert r.bytes_out_C == 32 * 64


def test_dense_64_cubed_single_phase():
    r = offchip_traffic(plan_tiles(64, 64, 64, 64 * 64, 1 << 20))
    assert r.bytes_in_B == 4096 and r.bytes_out_C == 4096
    assert r.bytes_in_A == 64 * 64 * 3 + 64 * 2
    assert r.total == r.bytes_in_A + r.bytes_in_B + r.bytes_out_C


def test_zero_nnz_is_rowend_bytes_only():
    r = offchip_traffic(plan_tiles(10, 8, 8, 0, 4096))
    assert r.bytes_in_A == 10 * 2


def test_infeasible():
    with pytest.raises(InfeasibleTiling):
        plan_tiles(8, 64, 8, 10, 63)
    with pytest.raises(ValueError):
        plan_tiles(0, 8, 8, 0, 100)


def test_runtime_examples():
    cyc, b = bandwidth_bound_runtime(TrafficReport(1700, 0, 0), 50, 17)
    assert (cyc, b) == (100, Bound.BANDWIDTH)
    cyc, b = bandwidth_bound_runtime(TrafficReport(10, 0, 0), 10**6, 17)
    assert (cyc, b) == (10**6, Bound.COMPUTE)
    with pytest.raises(ValueError):
        bandwidth_bound_runtime(TrafficReport(), 1, 0)


@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(1, 64))
def test_runtime_is_max_law(total, compute, bw):
    r = TrafficReport(total, 0, 0)
    cyc, bound = bandwidth_bound_runtime(r, compute, bw)
    mem = -(-total // bw)
    assert cyc == max(compute, mem)
    assert (bound == Bound.BANDWIDTH) == (mem > compute)


@given(st.integers(1, 64), st.integers(1, 64), st.integers(1, 64), st.integers(0, 500),
       st.lists(st.integers(64, 8192), min_size=2, max_size=8))
def test_traffic_monotone_in_sram(M, K, N, nnz, srams):
    srams = sorted(s for s in srams if s >= K)
    tot = [offchip_traffic(plan_tiles(M, K, N, nnz, s)).total for s in srams]
    assert all(a >= b for a, b in zip(tot, tot[1:]))
    # flat once B is resident
    res = [t for s, t in zip(srams, tot) if s >= K * N]
    assert len(set(res)) <= 1


@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 40), st.integers(1, 4000))
def test_b_fetched_at_least_once(M, K, N, sram):
    try:
        s = plan_tiles(M, K, N, 0, sram)
    except InfeasibleTiling:
        assert sram < K
        return
    cols = [c for ph in s.phases for c in range(*ph.b_cols)]
    assert cols == list(range(N))
    if sram >= K * N:
        assert s.n_phases == 1


def test_traffic_per_mac_rises_with_sparsity():
    M = K = N = 64
    ai = []
    for rate in (0.0, 0.5, 0.8, 0.95):
        nnz = round((1 - rate) * M * K)
        r = offchip_traffic(plan_tiles(M, K, N, nnz, 1 << 20))
        ai.append(arithmetic_intensity(nnz * N, r))
    assert ai == sorted(ai, reverse=True)


def test_sram_sweep_rows():
    rows = sram_sweep(64, 64, 64, 1000, [1024, 2048, 4096, 8192], 100)
    assert [r["phases"] for r in rows] == [4, 2, 1, 1]
    assert rows[-1]["total_bytes"] == rows[-2]["total_bytes"]
