"""Smoke test for the ifdma extension module.

Build and install first, e.g.

    maturin build --release -m crates/py/Cargo.toml --out dist
    pip install dist/ifdma-*.whl
    python python/smoke_test.py
"""

import cmath

import ifdma


def main():
    p8 = ifdma.RadixScheme.power_of_two(3)
    assert ifdma.permutation(p8) == [0, 4, 2, 6, 1, 5, 3, 7]
    assert ifdma.bit_reverse(1, 3) == 4

    p12 = ifdma.RadixScheme.parse("2,2,3")
    assert p12.bins == 12
    assert p12.allowed_sizes == [1, 3, 6, 12]
    assert ifdma.permutation(p12) == [0, 4, 8, 2, 6, 10, 1, 5, 9, 3, 7, 11]
    assert ifdma.range_to_subcarriers(6, 3, p12) == [1, 5, 9]

    batch = ifdma.allocate_batch(p8, [1, 4, 2])
    assert [subs for _, _, subs in batch] == [[0, 2, 4, 6], [1, 5], [3]]
    try:
        ifdma.allocate_batch(p8, [8, 1])
    except ifdma.InfeasibleError:
        pass
    else:
        raise AssertionError("overloaded batch was granted")

    state = ifdma.BinState(ifdma.RadixScheme.power_of_two(2))
    assert state.admit(0, 1) == ("granted", [(0, 1)])
    assert state.admit(1, 1) == ("granted", [(1, 1)])
    assert state.admit(2, 1) == ("granted", [(2, 1)])
    state.release(1)
    # Bins 1 and 3 are free but not buddies.
    assert state.admit(3, 2) == ("fragmentation", [])
    assert state.admit(4, 4) == ("overload", [])
    assert state.admit_multistream(5, 2) == ("granted", [(1, 1), (3, 1)])
    assert state.subcarriers_of(5) == [2, 3]
    state.check_invariants()

    dcr = ifdma.BinState(p8, dc=4)
    assert dcr.free_bins == 7
    assert ifdma.partition_multistream(7, p8) == [4, 2, 1]

    assert ifdma.strict_threshold(10) == 64
    assert ifdma.full_load_ok(3, [4, 2, 1, 1])
    assert not ifdma.dcr_load_ok(3, [4, 2, 1, 1])
    assert not ifdma.strict_ok(2, [1, 1, 2])

    assert [ifdma.f_rec(m) for m in range(4)] == [2, 5, 26, 677]
    assert ifdma.g_rec(4) == 2279
    assert ifdma.count_fine(3) == 677
    assert ifdma.count_super(3) == 67

    block = [1 + 0j, 1j, -1 + 0j, -1j]
    fast = ifdma.stream_time(block, 16, 3)
    slow = ifdma.stream_freq_oracle(block, 16, 3)
    assert max(abs(a - b) for a, b in zip(fast, slow)) < 1e-9
    assert all(abs(abs(x) - 0.25) < 1e-12 for x in fast)
    assert abs(fast[1] - 0.25 * cmath.exp(2j * cmath.pi * 3 / 16) * 1j) < 1e-12

    result = ifdma.simulate(5, 0.5, policy="min", sim_time=500.0, warmup_time=50.0, replications=3)
    assert abs(result.offered_load - 0.5) < 1e-12
    assert 0.0 <= result.p_f <= result.p_b <= 1.0
    ofdma = ifdma.simulate(5, 0.5, policy="ofdma", sim_time=500.0, warmup_time=50.0, replications=3)
    assert ofdma.p_f == 0.0

    print("ifdma smoke test passed")


if __name__ == "__main__":
    main()
