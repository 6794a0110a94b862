"""Network wiring, initialization, parameter accounting, training-state checks."""

import numpy as np
import pytest

from uwnet import losses, model, ops


@pytest.fixture(scope="module")
def small_store():
    return model.build_network(
        model.NetworkConfig(feature_maps=6, num_blocks=2), init_seed=9
    )


def manual_forward(store, image, train=False, seed=0):
    """The wiring written out longhand; tests compare forward() against this."""
    cfg = store.config
    layers = store.layers
    site = 0

    def drop(x):
        nonlocal site
        out, _ = ops.dropout(x, cfg.dropout_rate, train, model._dropout_seed(seed, site))
        site += 1
        return out

    x = ops.relu(ops.conv2d_forward(image, layers["head.conv"]))
    for b in range(1, cfg.num_blocks + 1):
        x = ops.relu(drop(ops.conv2d_forward(x, layers[f"block{b}.conv1"])))
        x = ops.relu(drop(ops.conv2d_forward(x, layers[f"block{b}.conv2"])))
        x = ops.concat_channels(x, image)
        x = ops.relu(ops.conv2d_forward(x, layers[f"block{b}.conv3"]))
    return ops.conv2d_forward(x, layers["final.conv"])


def test_forward_matches_manual_wiring_infer(small_store):
    x = np.random.default_rng(0).random((1, 3, 10, 12), dtype=np.float32)
    np.testing.assert_array_equal(
        model.forward(small_store, x, mode="infer"), manual_forward(small_store, x)
    )


def test_forward_matches_manual_wiring_train(small_store):
    x = np.random.default_rng(1).random((1, 3, 9, 9), dtype=np.float32)
    got = model.forward(small_store, x, mode="train", seed=123)
    want = manual_forward(small_store, x, train=True, seed=123)
    np.testing.assert_array_equal(got, want)


def test_forward_is_fully_convolutional(small_store):
    for h, w in [(3, 3), (7, 16), (32, 20)]:
        x = np.zeros((1, 3, h, w), dtype=np.float32)
        assert model.forward(small_store, x).shape == (1, 3, h, w)


def test_forward_rejects_bad_inputs(small_store):
    with pytest.raises(ops.ShapeMismatchError):
        model.forward(small_store, np.zeros((1, 4, 8, 8), dtype=np.float32))
    with pytest.raises(ops.ShapeMismatchError):
        model.forward(small_store, np.zeros((1, 3, 2, 8), dtype=np.float32))
    with pytest.raises(ValueError):
        model.forward(small_store, np.zeros((1, 3, 8, 8), dtype=np.float32), mode="test")


def test_infer_mode_has_no_randomness(small_store):
    x = np.random.default_rng(2).random((1, 3, 8, 8), dtype=np.float32)
    a = model.forward(small_store, x, mode="infer", seed=1)
    b = model.forward(small_store, x, mode="infer", seed=2)
    np.testing.assert_array_equal(a, b)


def test_train_mode_seed_controls_dropout(small_store):
    x = np.random.default_rng(3).random((1, 3, 8, 8), dtype=np.float32)
    a = model.forward(small_store, x, mode="train", seed=5)
    b = model.forward(small_store, x, mode="train", seed=5)
    c = model.forward(small_store, x, mode="train", seed=6)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


# ---------------------------------------------------------------------------
# structure and initialization


def test_layer_plan_channel_progression():
    plan = model.NetworkConfig().layer_plan()
    assert plan[0] == ("head.conv", 3, 64)
    assert plan[-1] == ("final.conv", 64, 3)
    for b in (1, 2, 3):
        assert (f"block{b}.conv1", 64, 64) in plan
        assert (f"block{b}.conv2", 64, 64) in plan
        # the third conv of each block sees the 64 features plus the 3
        # re-concatenated image channels
        assert (f"block{b}.conv3", 67, 64) in plan


def test_build_network_shapes_and_zero_bias():
    store = model.build_network(model.NetworkConfig(), init_seed=0)
    assert store.layers["block2.conv3"].weight.shape == (64, 67, 3, 3)
    for name, p in store.layers.items():
        assert p.weight.dtype == np.float32
        assert np.all(p.bias == 0.0), name


def test_init_respects_fan_in_bound():
    store = model.build_network(model.NetworkConfig(), init_seed=4)
    for name, p in store.layers.items():
        c_in = p.weight.shape[1]
        bound = np.sqrt(6.0 / (c_in * 9))
        assert np.abs(p.weight).max() <= bound, name
        # and it actually uses the range, not a tiny slice of it
        assert np.abs(p.weight).max() > 0.5 * bound, name


def test_init_is_seed_deterministic():
    a = model.build_network(model.NetworkConfig(), init_seed=11)
    b = model.build_network(model.NetworkConfig(), init_seed=11)
    c = model.build_network(model.NetworkConfig(), init_seed=12)
    for name in a.layers:
        np.testing.assert_array_equal(a.layers[name].weight, b.layers[name].weight)
    assert any(
        not np.array_equal(a.layers[n].weight, c.layers[n].weight) for n in a.layers
    )


def test_parameter_count_per_layer_formula():
    store = model.build_network(model.NetworkConfig(), init_seed=0)
    total, rows = model.count_parameters(store)
    by_layer = {r["layer"]: r["params"] for r in rows}
    assert by_layer["head.conv"] == (3 * 9 + 1) * 64  # 1792
    for b in (1, 2, 3):
        assert by_layer[f"block{b}.conv1"] == (64 * 9 + 1) * 64  # 36928
        assert by_layer[f"block{b}.conv2"] == (64 * 9 + 1) * 64
        assert by_layer[f"block{b}.conv3"] == (67 * 9 + 1) * 64  # 38656
    assert by_layer["final.conv"] == (64 * 9 + 1) * 3  # 1731
    assert total == 341_059
    assert total == sum(by_layer.values())


def test_parameter_count_agrees_with_stored_arrays(small_store):
    total, rows = model.count_parameters(small_store)
    array_total = sum(p.weight.size + p.bias.size for p in small_store.layers.values())
    assert total == array_total
    for row in rows:
        p = small_store.layers[row["layer"]]
        assert row["params"] == p.weight.size + p.bias.size


def test_config_validation():
    with pytest.raises(ValueError):
        model.NetworkConfig(kernel_size=4)
    with pytest.raises(ValueError):
        model.NetworkConfig(num_blocks=0)
    with pytest.raises(ValueError):
        model.NetworkConfig(dropout_rate=1.0)


# ---------------------------------------------------------------------------
# training state


def test_train_step_advances_and_reports():
    cfg = model.NetworkConfig(feature_maps=4, num_blocks=1)
    state = model.init_train_state(cfg, seed=3, lr=1e-3)
    rng = np.random.default_rng(8)
    raw = rng.random((1, 3, 8, 8), dtype=np.float32)
    ref = rng.random((1, 3, 8, 8), dtype=np.float32)
    loss_fn = losses.make_total_loss(losses.FeatureExtractor.identity())
    new_state, report = model.train_step(state, (raw, ref), loss_fn)
    assert new_state.step == 1
    assert report.l_total == report.l_mse + report.l_vgg
    assert np.isfinite(report.l_total)
    # functional update: the input state is untouched
    assert state.step == 0
    changed = [
        n
        for n in state.params.layers
        if not np.array_equal(
            state.params.layers[n].weight, new_state.params.layers[n].weight
        )
    ]
    assert changed


def test_train_step_is_reproducible():
    cfg = model.NetworkConfig(feature_maps=4, num_blocks=1)
    rng = np.random.default_rng(9)
    raw = rng.random((1, 3, 8, 8), dtype=np.float32)
    ref = rng.random((1, 3, 8, 8), dtype=np.float32)
    loss_fn = losses.make_total_loss(losses.FeatureExtractor.identity())
    s1, r1 = model.train_step(model.init_train_state(cfg, seed=3), (raw, ref), loss_fn)
    s2, r2 = model.train_step(model.init_train_state(cfg, seed=3), (raw, ref), loss_fn)
    assert r1 == r2
    for n in s1.params.layers:
        np.testing.assert_array_equal(s1.params.layers[n].weight, s2.params.layers[n].weight)


def test_train_step_loss_decreases_on_repetition():
    cfg = model.NetworkConfig(feature_maps=8, num_blocks=1)
    state = model.init_train_state(cfg, seed=0, lr=1e-2)
    rng = np.random.default_rng(10)
    raw = rng.random((1, 3, 8, 8), dtype=np.float32)
    ref = (raw * 0.5 + 0.25).astype(np.float32)
    loss_fn = losses.make_total_loss(losses.FeatureExtractor.identity())
    first = None
    for _ in range(30):
        state, report = model.train_step(state, (raw, ref), loss_fn)
        if first is None:
            first = report.l_total
    assert report.l_total < first


def test_store_astype_float64_flows_through_forward(small_store):
    store64 = small_store.astype(np.float64)
    x = np.random.default_rng(11).random((1, 3, 8, 8))
    out = model.forward(store64, x, mode="infer")
    assert out.dtype == np.float64


# ---------------------------------------------------------------------------
# serialization


def test_save_load_round_trip(small_store):
    blob = model.save_weights(small_store)
    loaded = model.load_weights(blob)
    assert loaded.config.feature_maps == small_store.config.feature_maps
    assert loaded.config.num_blocks == small_store.config.num_blocks
    for name in small_store.layers:
        np.testing.assert_array_equal(
            loaded.layers[name].weight, small_store.layers[name].weight
        )
        np.testing.assert_array_equal(
            loaded.layers[name].bias, small_store.layers[name].bias
        )
    # and saving the loaded store reproduces the file byte for byte
    assert model.save_weights(loaded) == blob


def test_save_orders_weight_then_bias_per_layer(small_store):
    from uwnet import weights as wt

    names = list(wt.read_tensors(model.save_weights(small_store)))
    assert names[0] == "head.conv"
    assert names[1] == "head.conv.bias"
    assert names[-2] == "final.conv"
    assert names[-1] == "final.conv.bias"
    for weight_name, bias_name in zip(names[0::2], names[1::2]):
        assert bias_name == weight_name + ".bias"


def test_load_rejects_missing_tensor(small_store):
    from uwnet import weights as wt

    tensors = wt.read_tensors(model.save_weights(small_store))
    tensors.pop("block1.conv2.bias")
    blob = wt.write_tensors(list(tensors.items()))
    with pytest.raises(wt.WeightsFormatError):
        model.load_weights(blob)


def test_load_rejects_extra_tensor(small_store):
    from uwnet import weights as wt

    tensors = wt.read_tensors(model.save_weights(small_store))
    tensors["stray"] = np.zeros((2,), dtype=np.float32)
    blob = wt.write_tensors(list(tensors.items()))
    with pytest.raises(wt.WeightsFormatError) as info:
        model.load_weights(blob)
    assert "stray" in str(info.value)


def test_load_rejects_wrong_shape(small_store):
    from uwnet import weights as wt

    tensors = wt.read_tensors(model.save_weights(small_store))
    tensors["final.conv"] = tensors["final.conv"][:, :-1]
    blob = wt.write_tensors(list(tensors.items()))
    with pytest.raises(wt.WeightsFormatError):
        model.load_weights(blob)
