import json

import numpy as np
import pytest

from progroute.data import SynthParams, build_dataset
from progroute.grid import encode_features, pin_mask
from progroute.data import synth_instance
from progroute.nn import (Conv2D, Deconv2D, Dense, LossKind, LossSpec, Network, ShapeError,
                          load_checkpoint)
from progroute.progressive import (ConfigError, GrowthConfig, build_core, build_flat,
                                   current_stage, grow, lock_inherited, pretrain_route_free,
                                   train_flat, train_progressive, train_stage)


def tiny(**kw):
    base = dict(core_channels=(4, 8), bottleneck=16, outer_width=4, width_cap=8,
                batch_size=8, core_epochs=2, stage_epochs=2, route_free_epochs=1,
                learning_rate=1e-3, seed=3)
    base.update(kw)
    return GrowthConfig(**base)


@pytest.fixture(scope="module")
def data():
    p = SynthParams((2, 3))
    return {
        8: build_dataset(8, 24, p, seed=1),
        16: build_dataset(16, 16, p, seed=2),
        32: build_dataset(32, 8, p, seed=3),
        "rf8": build_dataset(8, 16, p, seed=4, kind="RouteFree"),
        "rf16": build_dataset(16, 8, p, seed=5, kind="RouteFree"),
    }


def closed_form_core_params(cfg):
    c0, c1 = cfg.core_channels
    q = cfg.core_resolution // 2
    flat = q * q * c1
    return ((9 * 3 * c0 + c0) + (9 * c0 * c1 + c1) + (flat * cfg.bottleneck + cfg.bottleneck)
            + (cfg.bottleneck * flat + flat) + (9 * c1 * c0 + c0) + (c0 + 1))


class TestConfig:
    def test_ladder(self):
        assert GrowthConfig().ladder == [8, 16, 32, 64]
        assert GrowthConfig(target_resolution=8).ladder == [8]

    @pytest.mark.parametrize("kw", [dict(target_resolution=48), dict(core_resolution=7),
                                    dict(core_channels=(4,)), dict(schedule="warm"),
                                    dict(stage_widths=(0,))])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            GrowthConfig(**kw)

    def test_default_widths_double_inward(self):
        cfg = GrowthConfig()
        assert [cfg.width_for(s) for s in (1, 2, 3)] == [64, 32, 16]
        assert GrowthConfig(target_resolution=16).width_for(1) == 16
        assert GrowthConfig(stage_widths=(5, 6)).width_for(3) == 6

    def test_dict_round_trip(self):
        cfg = tiny(loss=LossSpec(LossKind.MSE))
        assert GrowthConfig(**json.loads(json.dumps(cfg.to_dict()))) == cfg


class TestCore:
    def test_shapes(self):
        net = build_core(GrowthConfig())
        assert net.input_shape == (8, 8, 3)
        out = net.forward(np.zeros((1, 8, 8, 3), np.float32))
        assert out.shape == (1, 8, 8, 1)
        assert ((out > 0) & (out < 1)).all()

    @pytest.mark.parametrize("cfg", [GrowthConfig(), tiny(), tiny(core_resolution=4,
                                                                  target_resolution=16)])
    def test_parameter_count(self, cfg):
        net = build_core(cfg)
        assert sum(p.values.size for p in net.parameters()) == closed_form_core_params(cfg)


class TestGrow:
    def test_doubles_and_shares(self):
        cfg = tiny(target_resolution=64)
        core = build_core(cfg)
        interior = [p for l in core.layers if l.tag == "interior" for p in l.params]
        before = [p.digest() for p in interior]
        nets = [core]
        for stage in (1, 2, 3):
            nets.append(grow(nets[-1], stage, cfg))
        assert [n.input_shape[0] for n in nets] == [8, 16, 32, 64]
        for net in nets:
            r = net.input_shape[0]
            assert net.forward(np.zeros((1, r, r, 3), np.float32)).shape == (1, r, r, 1)
        ids = {id(p) for p in nets[-1].parameters()}
        assert all(id(p) in ids for p in interior)
        assert [p.digest() for p in interior] == before

    def test_layer_count_delta_constant(self):
        cfg = tiny(target_resolution=64)
        nets = [build_core(cfg)]
        for stage in (1, 2, 3):
            nets.append(grow(nets[-1], stage, cfg))
        deltas = {len(b.layers) - len(a.layers) for a, b in zip(nets, nets[1:])}
        assert len(deltas) == 1
        added = [l for l in nets[2].layers if l.stage == 2]
        kinds = [type(l).__name__ for l in added]
        assert kinds.count("Conv2D") == 3 and kinds.count("Deconv2D") == 1
        assert kinds.count("MaxPool2x2") == 1 and kinds.count("Upsample2x2") == 1

    def test_adapters_are_fresh(self):
        cfg = tiny()
        core = build_core(cfg)
        grown = grow(core, 1, cfg)
        old = {id(p) for l in core.layers if l.tag != "interior" for p in l.params}
        assert not old & {id(p) for p in grown.parameters()}

    def test_beyond_target(self):
        cfg = tiny(target_resolution=16)
        net = grow(build_core(cfg), 1, cfg)
        with pytest.raises(ConfigError):
            grow(net, 2, cfg)
        with pytest.raises(ConfigError):
            grow(build_core(cfg), 2, cfg)

    def test_flat_matches_grown_topology(self):
        cfg = tiny(target_resolution=32)
        grown = grow(grow(build_core(cfg), 1, cfg), 2, cfg)
        flat = build_flat(cfg, 32)
        assert flat.describe() == grown.describe()
        with pytest.raises(ConfigError):
            build_flat(cfg, 24)


class TestTraining:
    def test_locked_hashes_unchanged(self, data):
        cfg = tiny(target_resolution=16)
        net = grow(build_core(cfg), 1, cfg)
        inherited = [p for l in net.layers if l.stage == 0 for p in l.params]
        before = [p.digest() for p in inherited]
        fresh = [p for l in net.layers if l.stage == 1 for p in l.params]
        fresh_before = [p.digest() for p in fresh]
        train_stage(net, data[16], cfg, lock_interior=True)
        assert [p.digest() for p in inherited] == before
        assert [p.digest() for p in fresh] != fresh_before

    def test_overfit_one_sample(self, data):
        cfg = tiny(algorithm="SGD", learning_rate=0.5, dropout=0.0, batch_size=1)
        one = data[8]
        one = type(one)(8, one.kind, one.features[:1], one.labels[:1], one.seed, one.params)
        net = build_core(cfg)
        log = train_stage(net, one, cfg, lock_interior=False, epochs=6,
                          loss=LossSpec(LossKind.MSE))
        assert all(b < a for a, b in zip(log.epoch_loss, log.epoch_loss[1:]))

    def test_resolution_mismatch(self, data):
        with pytest.raises(ShapeError):
            train_stage(build_core(tiny()), data[16], tiny(), lock_interior=False)

    def test_route_free_zero_epochs_identity(self, data):
        cfg = tiny(route_free_epochs=0)
        net = build_core(cfg)
        before = net.digest()
        log = pretrain_route_free(net, data["rf8"], cfg)
        assert net.digest() == before and log.kind == "RouteFree" and log.epoch_loss == []

    def test_route_free_needs_pin_labels(self, data):
        with pytest.raises(ConfigError):
            pretrain_route_free(build_core(tiny()), data[8], tiny())

    def test_route_free_lifts_pins(self):
        params = SynthParams()
        cfg = GrowthConfig(route_free_epochs=3, learning_rate=1e-3, seed=0)
        net = build_core(cfg)
        pretrain_route_free(net, build_dataset(8, 500, params, seed=11, kind="RouteFree"), cfg)
        rng = np.random.default_rng(12345)
        at_pins, elsewhere = [], []
        for _ in range(100):
            grid, net_ = synth_instance(8, params, rng)
            pred = net.predict(encode_features(grid, net_, params.cap_max)[None])[0, ..., 0]
            pins = pin_mask(8, net_).astype(bool)
            at_pins.append(pred[pins].mean())
            elsewhere.append(pred[~pins].mean())
        assert np.mean(at_pins) > np.mean(elsewhere)


class TestProgressive:
    def test_ladder_and_logs(self, data, tmp_path):
        cfg = tiny(target_resolution=32)
        net, series, logs = train_progressive(cfg, [data[8], data[16], data[32]],
                                              [data["rf8"], data["rf16"]], tmp_path)
        assert series.resolutions == [8, 16, 32]
        assert net.input_shape == (32, 32, 3)
        assert [(l.resolution, l.kind) for l in logs] == [
            (8, "RouteFree"), (8, "Routed"), (16, "RouteFree"), (16, "Routed"), (32, "Routed")]
        manifest = json.loads((tmp_path / "series.json").read_text())
        assert [s["file"] for s in manifest["stages"]] == ["stage0_8.pvwt", "stage1_16.pvwt",
                                                           "stage2_32.pvwt"]
        load_checkpoint(tmp_path / "stage2_32.pvwt", net)

    def test_locked_count_bookkeeping(self, data):
        cfg = tiny(target_resolution=32)
        _, series, logs = train_progressive(cfg, [data[8], data[16], data[32]])
        routed = [l for l in logs if l.kind == "Routed"]
        assert routed[0].locked_scalars == 0
        for i in (1, 2):
            prev = series.stages[i - 1][1]
            interior_prev = sum(p.values.size for l in prev.layers if l.tag == "interior"
                                for p in l.params)
            assert routed[i].locked_scalars == interior_prev
            assert sum(p.values.size for p in series.shared_parameters(i)) == interior_prev

    def test_missing_intermediate_is_skipped(self, data):
        cfg = tiny(target_resolution=32)
        net, series, logs = train_progressive(cfg, [data[8], data[32]])
        assert series.resolutions == [8, 16, 32]
        skipped = [l for l in logs if l.skipped]
        assert [(l.stage, l.resolution) for l in skipped] == [(1, 16)]
        assert net.input_shape[0] == 32

    def test_missing_core_is_error(self, data):
        with pytest.raises(ConfigError):
            train_progressive(tiny(), [data[16]])

    def test_deterministic(self, data, tmp_path):
        cfg = tiny(target_resolution=16)
        for run in ("a", "b"):
            train_progressive(cfg, [data[8], data[16]], [data["rf8"]], tmp_path / run)
        for name in ("stage0_8.pvwt", "stage1_16.pvwt", "series.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_locks_released_after_stage(self, data):
        cfg = tiny(target_resolution=16)
        net, _, _ = train_progressive(cfg, [data[8], data[16]])
        assert not any(p.locked for p in net.parameters())

    def test_fine_tune_trains_everything(self, data):
        cfg = tiny(target_resolution=16, fine_tune_epochs=1)
        net, series, logs = train_progressive(cfg, [data[8], data[16]])
        assert len(logs) == 3 and logs[-1].locked_scalars == 0

    def test_flat_baseline(self, data):
        net, log = train_flat(tiny(target_resolution=16), data[16], epochs=1)
        assert net.input_shape == (16, 16, 3) and len(log.epoch_loss) == 1
        assert not any(p.locked for p in net.parameters())
