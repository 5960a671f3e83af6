import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from progroute.evaluation import (EvalReport, check_connectivity, emit_report, evaluate_model,
                                  read_curves, read_report, threshold, wirelength)
from progroute.grid import Benchmark, Net, RoutingGrid, check_legality, mask_from_tiles
from progroute.nn import ShapeError
from progroute.oracle import route_net

from oracles import brute_connected, brute_legal

PIN_SETS_3 = [((0, 0), (2, 2)), ((0, 2), (2, 0), (1, 1)), ((1, 0), (1, 2)), ((0, 1),)]


def all_masks(n):
    for bits in itertools.product((0, 1), repeat=n * n):
        yield np.array(bits, dtype=np.uint8).reshape(n, n)


class TestThreshold:
    def test_examples(self):
        np.testing.assert_array_equal(threshold(np.array([[0.49, 0.5], [0.51, 0.0]])),
                                      [[0, 1], [1, 0]])

    def test_channel_axis_dropped(self):
        assert threshold(np.full((4, 4, 1), 0.7)).shape == (4, 4)

    def test_wirelength(self):
        assert wirelength(np.zeros((8, 8))) == 0
        assert wirelength(mask_from_tiles(8, [(0, 0), (0, 1), (5, 5)])) == 3


class TestBruteForce:
    def test_connectivity_exhaustive_3x3(self):
        for mask in all_masks(3):
            for pins in PIN_SETS_3:
                assert check_connectivity(mask, Net("x", pins)) == brute_connected(mask, pins)

    def test_legality_exhaustive_3x3(self):
        rng = np.random.default_rng(0)
        grids = [RoutingGrid.uniform(3, 1), RoutingGrid.uniform(3, 0)]
        grids += [RoutingGrid(rng.integers(0, 2, (3, 3)), rng.integers(0, 2, (3, 3)))
                  for _ in range(4)]
        for grid in grids:
            for mask in all_masks(3):
                assert check_legality(mask, grid) == brute_legal(mask, grid.h_cap, grid.v_cap)

    def test_sampled_4x4(self):
        rng = np.random.default_rng(1)
        for _ in range(2000):
            mask = (rng.random((4, 4)) < rng.random()).astype(np.uint8)
            grid = RoutingGrid(rng.integers(0, 2, (4, 4)), rng.integers(0, 2, (4, 4)))
            flat = rng.choice(16, size=int(rng.integers(1, 4)), replace=False)
            pins = tuple((int(f // 4), int(f % 4)) for f in flat)
            assert check_connectivity(mask, Net("x", pins)) == brute_connected(mask, pins)
            assert check_legality(mask, grid) == brute_legal(mask, grid.h_cap, grid.v_cap)

    def test_zero_grid_legality(self):
        grid = RoutingGrid.uniform(3, 0)
        assert check_legality(mask_from_tiles(3, [(1, 1)]), grid)
        assert not check_legality(mask_from_tiles(3, [(0, 0), (0, 1)]), grid)


def two_net_bench():
    return Benchmark(RoutingGrid.uniform(8, 2), [
        Net("a", ((0, 0), (0, 5))),
        Net("b", ((3, 1), (6, 1))),
        Net("t", ((7, 7), (7, 7))),
    ], name="two")


class TestEvaluateModel:
    def test_empty_model_collapses(self):
        rep = evaluate_model(lambda f: np.zeros(f.shape[:2]), two_net_bench())
        assert rep.routability_model == 0.0 and rep.collapse_flag
        assert rep.relative_routability == 0.0
        assert rep.nontrivial == 2

    def test_oracle_replay_is_100_percent(self):
        bench = two_net_bench()

        def replay(feats):
            pins = tuple(map(tuple, np.argwhere(feats[..., 2] > 0.5)))
            net = next(n for n in bench.nets if set(n.pins) == set(pins))
            # features carry the capacities left by earlier nets
            grid = RoutingGrid(np.rint(feats[..., 1] * 2).astype(int),
                               np.rint(feats[..., 0] * 2).astype(int))
            return route_net(grid, net).mask.astype(float)

        rep = evaluate_model(replay, bench)
        assert rep.relative_routability == 100.0
        assert rep.wirelength_model == rep.wirelength_oracle
        assert not rep.collapse_flag

    def test_one_of_two_is_fifty_percent(self):
        bench = two_net_bench()
        row = mask_from_tiles(8, [(0, c) for c in range(6)]).astype(float)
        rep = evaluate_model(lambda f: row, bench)
        assert rep.model_routed == 1 and rep.oracle_routed == 2
        assert rep.relative_routability == 50.0
        assert [r.reason for r in rep.records] == ["", "disconnected", "trivial"]

    def test_over_capacity_reason(self):
        grid = RoutingGrid.uniform(4, 1)
        grid.h_cap[0, 1] = 0
        bench = Benchmark(grid, [Net("a", ((0, 0), (0, 3)))])
        row = mask_from_tiles(4, [(0, c) for c in range(4)]).astype(float)
        rep = evaluate_model(lambda f: row, bench)
        assert rep.records[0].reason == "over capacity"

    def test_no_oracle_successes(self):
        bench = Benchmark(RoutingGrid.uniform(4, 0), [Net("a", ((0, 0), (3, 3)))])
        assert evaluate_model(lambda f: np.zeros((4, 4)), bench).relative_routability is None

    def test_benchmark_not_mutated(self):
        bench = two_net_bench()
        before = bench.grid.copy()
        evaluate_model(lambda f: np.ones(f.shape[:2]), bench)
        assert bench.grid == before

    def test_renaming_invariance(self):
        bench = two_net_bench()
        renamed = Benchmark(bench.grid, [Net("z" + n.id, n.pins) for n in bench.nets])
        row = mask_from_tiles(8, [(0, c) for c in range(6)]).astype(float)
        a, b = evaluate_model(lambda f: row, bench), evaluate_model(lambda f: row, renamed)
        assert a.relative_routability == b.relative_routability

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            evaluate_model(lambda f: np.zeros((4, 4)), two_net_bench())


class TestReportFiles:
    def test_round_trip(self, tmp_path):
        row = mask_from_tiles(8, [(0, c) for c in range(6)]).astype(float)
        curves = {"core": [(i, 1.0 / (i + 1), 1e-3, -0.5 * i) for i in range(7)]}
        rep = evaluate_model(lambda f: row, two_net_bench(), curves=curves)
        files = emit_report(rep, tmp_path / "rep")
        assert [f.name for f in files] == ["summary.json", "curves_core.csv"]
        back = read_report(tmp_path / "rep")
        assert isinstance(back, EvalReport)
        assert back.relative_routability == pytest.approx(rep.relative_routability, abs=1e-6)
        assert back.records == rep.records
        assert len(read_curves(files[1])) == 7
        assert back.curves == curves

    def test_unwritable_target(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        rep = evaluate_model(lambda f: np.zeros((8, 8)), two_net_bench())
        with pytest.raises(OSError):
            emit_report(rep, blocker / "sub")


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_connectivity_matches_labeling(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    mask = (rng.random((n, n)) < 0.6).astype(np.uint8)
    flat = rng.choice(n * n, size=int(rng.integers(1, 5)), replace=False)
    pins = tuple((int(f // n), int(f % n)) for f in flat)
    assert check_connectivity(mask, Net("x", pins)) == brute_connected(mask, pins)
