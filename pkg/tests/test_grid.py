import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from progroute.grid import (Benchmark, BenchmarkParseError, BenchmarkValidationError,
                            CapacityError, Net, RoutingGrid, apply_route, check_legality,
                            count_components, emit_benchmark, encode_features, is_trivial,
                            mask_from_tiles, parse_benchmark, spanning_moves)

SIMPLE = """\
grid 8 8
capacity 2 2
net a 2
pin 0 0
pin 3 4
"""


class TestParse:
    def test_header_and_net(self):
        b = parse_benchmark(SIMPLE)
        assert b.grid.n == 8
        assert (b.grid.h_cap == 2).all() and (b.grid.v_cap == 2).all()
        assert b.nets == [Net("a", ((0, 0), (3, 4)))]

    def test_out_of_range_pin(self):
        with pytest.raises(BenchmarkValidationError):
            parse_benchmark(SIMPLE.replace("pin 3 4", "pin 9 0"))

    @pytest.mark.parametrize("bad, lineno", [
        ("grid 8 8\ncapacity 2\n", 2),
        ("grid 8 8\nnet a 2\npin 0 0\n", 3),
        ("grid 8 8\nfoo 1\n", 2),
        ("grid 8 8\npin 0 0\n", 2),
        ("grid 8 8\nnet a 2\npin 0 x\n", 3),
    ])
    def test_malformed_reports_line(self, bad, lineno):
        with pytest.raises(BenchmarkParseError) as err:
            parse_benchmark(bad)
        assert err.value.lineno == lineno

    def test_non_power_of_two_rejected(self):
        with pytest.raises(BenchmarkValidationError):
            parse_benchmark("grid 12 12\n")
        with pytest.raises(BenchmarkValidationError):
            parse_benchmark("grid 4 4\n", core_size=8)
        assert parse_benchmark("grid 32 32\n", core_size=8).grid.n == 32

    def test_duplicate_net_ids(self):
        text = SIMPLE + "net a 1\npin 1 1\n"
        with pytest.raises(BenchmarkValidationError):
            parse_benchmark(text)

    def test_blockage_and_comments(self):
        b = parse_benchmark("# header\ngrid 4 4\ncapacity 3 1\nblockage 1 2 0 0  # wall\n")
        assert b.grid.h_cap[1, 2] == 0 and b.grid.v_cap[1, 2] == 0
        assert b.grid.h_cap[0, 0] == 3 and b.grid.v_cap[0, 0] == 1

    def test_round_trip_three_nets(self):
        grid = RoutingGrid.uniform(16, 2)
        grid.h_cap[3, 3] = 0
        grid.v_cap[5, 7] = 1
        bench = Benchmark(grid, [
            Net("n1", ((0, 0), (15, 15))),
            Net("n2", ((4, 4), (4, 5), (9, 1))),
            Net("n3", ((7, 7), (7, 7))),
        ])
        assert parse_benchmark(emit_benchmark(bench)) == bench

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip_random(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.choice([4, 8, 16]))
        grid = RoutingGrid(rng.integers(0, 4, (n, n)), rng.integers(0, 4, (n, n)))
        nets = []
        for i in range(int(rng.integers(0, 5))):
            k = int(rng.integers(1, 5))
            flat = rng.choice(n * n, size=k, replace=False)
            nets.append(Net(f"x{i}", tuple((int(f // n), int(f % n)) for f in flat)))
        bench = Benchmark(grid, nets)
        assert parse_benchmark(emit_benchmark(bench)) == bench


class TestNet:
    def test_trivial(self):
        assert is_trivial(Net("t", ((3, 3), (3, 3))))
        assert not is_trivial(Net("t", ((0, 0), (0, 1))))

    def test_partial_duplicates_rejected(self):
        with pytest.raises(ValueError):
            Net("bad", ((0, 0), (0, 0), (1, 1)))
        with pytest.raises(ValueError):
            Net("empty", ())

    def test_trivial_fraction_uniform_pins(self):
        # exact probability for two uniform pins on 8x8 is 1/64
        rng = np.random.default_rng(5)
        small = sum(is_trivial(Net("x", tuple(map(tuple, rng.integers(0, 8, (2, 2))))))
                    for _ in range(100))
        assert small <= 8          # P(X > 8) < 1e-4 for Binomial(100, 1/64)
        trials = 20000
        big = sum(is_trivial(Net("x", tuple(map(tuple, rng.integers(0, 8, (2, 2))))))
                  for _ in range(trials))
        mean, sd = trials / 64, np.sqrt(trials * (1 / 64) * (63 / 64))
        assert abs(big - mean) < 4 * sd


class TestFeatures:
    def test_saturated_grid(self):
        grid = RoutingGrid.uniform(8, 2)
        f = encode_features(grid, Net("a", ((1, 1), (6, 2))), cap_max=2)
        assert f.shape == (8, 8, 3) and f.dtype == np.float32
        assert (f[..., :2] == 1.0).all()
        assert f[..., 2].sum() == 2

    def test_linear_scaling(self):
        grid = RoutingGrid.uniform(8, 2)
        grid.v_cap[2, 3] = 1
        f = encode_features(grid, Net("a", ((0, 0), (1, 1))), cap_max=2)
        assert f[2, 3, 0] == 0.5
        assert f[2, 3, 1] == 1.0

    def test_bad_cap_max(self):
        grid = RoutingGrid.uniform(8, 2)
        with pytest.raises(ValueError):
            encode_features(grid, Net("a", ((0, 0),)), cap_max=0)
        with pytest.raises(ValueError):
            encode_features(grid, Net("a", ((0, 0),)), cap_max=1)

    def test_random_pin_counts_and_purity(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            grid = RoutingGrid(rng.integers(0, 3, (16, 16)), rng.integers(0, 3, (16, 16)))
            k = int(rng.integers(1, 6))
            flat = rng.choice(256, size=k, replace=False)
            net = Net("r", tuple((int(f // 16), int(f % 16)) for f in flat))
            f = encode_features(grid, net, 2)
            assert int(f[..., 2].sum()) == k
            assert ((0 <= f) & (f <= 1)).all()
            np.testing.assert_array_equal(f, encode_features(grid, net, 2))


class TestApplyRoute:
    def test_horizontal_run(self):
        grid = RoutingGrid.uniform(8, 2)
        mask = mask_from_tiles(8, [(2, 1), (2, 2), (2, 3), (2, 4)])
        out = apply_route(grid, mask)
        expected = np.full((8, 8), 2)
        expected[2, 1:4] = 1
        np.testing.assert_array_equal(out.h_cap, expected)
        np.testing.assert_array_equal(out.v_cap, grid.v_cap)

    def test_vertical_run_uses_upper_tile(self):
        grid = RoutingGrid.uniform(4, 1)
        out = apply_route(grid, mask_from_tiles(4, [(0, 2), (1, 2)]))
        assert out.v_cap[0, 2] == 0 and out.v_cap[1, 2] == 1

    def test_empty_mask(self):
        grid = RoutingGrid.uniform(8, 2)
        assert apply_route(grid, np.zeros((8, 8), np.uint8)) == grid

    def test_exhaustion(self):
        grid = RoutingGrid.uniform(8, 1)
        mask = mask_from_tiles(8, [(0, 0), (0, 1), (1, 1)])
        once = apply_route(grid, mask)
        snapshot = once.copy()
        with pytest.raises(CapacityError):
            apply_route(once, mask)
        assert once == snapshot

    def test_zero_capacity_connected_mask_illegal(self):
        grid = RoutingGrid.uniform(4, 0)
        assert not check_legality(mask_from_tiles(4, [(1, 1), (1, 2)]), grid)
        assert check_legality(np.zeros((4, 4), np.uint8), grid)


@st.composite
def grid_and_mask(draw):
    n = draw(st.integers(2, 6))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    grid = RoutingGrid(rng.integers(0, 3, (n, n)), rng.integers(0, 3, (n, n)))
    mask = (rng.random((n, n)) < draw(st.floats(0, 1))).astype(np.uint8)
    return grid, mask


@settings(max_examples=200, deadline=None)
@given(grid_and_mask())
def test_apply_route_accounting(gm):
    grid, mask = gm
    before = grid.copy()
    try:
        out = apply_route(grid, mask)
    except CapacityError:
        assert grid == before
        assert not check_legality(mask, grid)
        return
    assert check_legality(mask, grid)
    assert (out.h_cap >= 0).all() and (out.v_cap >= 0).all()
    moves, _ = spanning_moves(mask, grid)
    deducted = int((grid.h_cap - out.h_cap).sum() + (grid.v_cap - out.v_cap).sum())
    assert deducted == len(moves) == int(mask.sum()) - count_components(mask)
    assert grid == before
