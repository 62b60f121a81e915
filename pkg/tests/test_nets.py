"""Network stack: shapes, dropout behavior, GRL schedule, checkpoints."""
import json
import math
import os

import numpy as np
import pytest

from utep import ndgrad as nd
from utep.errors import ShapeError
from utep.ndgrad import RngStream
from utep.nets import (LAYER_NAMES, ModelBundle, class_probs,
                       forward_classifier, forward_discriminator,
                       forward_features, grl_lambda, load_checkpoint,
                       save_checkpoint)


def make_bundle(seed=0, **kw):
    defaults = dict(input_dim=2, num_classes=3)
    defaults.update(kw)
    return ModelBundle(rng=RngStream(seed, "init"), **defaults)


def test_feature_and_classifier_shapes():
    b = make_bundle()
    x = RngStream(1, "x").uniform(-1.0, 1.0, (7, 2))
    f = forward_features(b, x)
    assert f.shape == (7, 32)
    g = class_probs(b, f)
    assert g.shape == (7, 3)
    np.testing.assert_allclose(g.value.sum(axis=1), np.ones(7), atol=1e-9)


def test_zero_classifier_weights_give_uniform_rows():
    b = make_bundle()
    b.gy_w.value[:] = 0.0
    b.gy_b.value[:] = 0.0
    x = RngStream(2, "x").uniform(-1.0, 1.0, (5, 2))
    g = forward_classifier(b, x)
    np.testing.assert_allclose(g.value, np.full((5, 3), 1.0 / 3.0), atol=1e-12)


def test_discriminator_output_in_open_unit_interval():
    b = make_bundle()
    x = RngStream(3, "x").uniform(-3.0, 3.0, (9, 2))
    f = forward_features(b, x)
    p = forward_discriminator(b, f, train=False)
    assert p.shape == (9, 1)
    assert np.all(p.value > 0.0) and np.all(p.value < 1.0)


def test_discriminator_fixed_mask_repeatable():
    b = make_bundle()
    x = RngStream(4, "x").uniform(-1.0, 1.0, (6, 2))
    f = forward_features(b, x)
    mask = np.ones((6, 32))
    p1 = forward_discriminator(b, f, mask=mask, train=True)
    p2 = forward_discriminator(b, f, mask=mask, train=True)
    np.testing.assert_array_equal(p1.value, p2.value)


def test_discriminator_fresh_masks_vary_when_dropout_active():
    b = make_bundle()
    x = RngStream(5, "x").uniform(-1.0, 1.0, (1, 2))
    f = forward_features(b, x)
    rng = RngStream(6, "mc")
    outs = {forward_discriminator(b, f, rng=rng, train=True).value[0, 0]
            for _ in range(8)}
    assert len(outs) >= 2


def test_discriminator_rho_zero_is_deterministic():
    b = make_bundle(dropout_rate=0.0)
    x = RngStream(7, "x").uniform(-1.0, 1.0, (4, 2))
    f = forward_features(b, x)
    rng = RngStream(8, "mc")
    vals = [forward_discriminator(b, f, rng=rng, train=True).value
            for _ in range(3)]
    np.testing.assert_array_equal(vals[0], vals[1])
    np.testing.assert_array_equal(vals[1], vals[2])


def test_eval_mode_ignores_dropout_rng():
    b = make_bundle()
    x = RngStream(9, "x").uniform(-1.0, 1.0, (4, 2))
    f = forward_features(b, x)
    p1 = forward_discriminator(b, f, train=False)
    p2 = forward_discriminator(b, f, train=False)
    np.testing.assert_array_equal(p1.value, p2.value)


def test_grl_lambda_schedule_values():
    assert grl_lambda(0.0) == 0.0
    assert grl_lambda(1.0) == pytest.approx(2.0 / (1.0 + math.exp(-10.0)) - 1.0)
    assert grl_lambda(1.0) == pytest.approx(0.99991, abs=1e-5)
    assert grl_lambda(0.5) == pytest.approx(0.98661, abs=1e-5)


def test_grl_lambda_clamps_and_warns(caplog):
    with caplog.at_level("WARNING", logger="utep.nets"):
        assert grl_lambda(-0.5) == 0.0
        assert grl_lambda(1.5) == grl_lambda(1.0)
    assert sum("clamping" in rec.message for rec in caplog.records) == 2


def test_grl_reverses_feature_gradients_algebraically():
    b = make_bundle()
    b.grl_lam = 0.6
    x = RngStream(10, "x").uniform(-1.0, 1.0, (5, 2))
    mask = RngStream(11, "m").keep_mask((5, 32), 0.5)
    grads = {}
    for use_grl in (False, True):
        f = forward_features(b, x)
        p = forward_discriminator(b, f, mask=mask, train=True, grl=use_grl)
        loss = nd.scale(nd.mean(nd.log(p, floor=1e-12)), -1.0)
        nd.zero_grad(b.params())
        nd.backward(loss)
        grads[use_grl] = [q.grad.copy() for q in b.feature_params()]
    for g_plain, g_rev in zip(grads[False], grads[True]):
        np.testing.assert_allclose(g_rev, -0.6 * g_plain, atol=1e-15)


def test_param_order_and_layer_names():
    b = make_bundle()
    assert tuple(b.named_params()) == LAYER_NAMES


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    b = make_bundle(seed=42)
    path = os.path.join(tmp_path, "ckpt.json")
    save_checkpoint(b, path)
    b2 = load_checkpoint(path)
    for name in LAYER_NAMES:
        assert (b.named_params()[name].value.tobytes()
                == b2.named_params()[name].value.tobytes())


def test_checkpoint_format_flat_json(tmp_path):
    b = make_bundle()
    path = os.path.join(tmp_path, "ckpt.json")
    save_checkpoint(b, path)
    with open(path, encoding="utf-8") as fh:
        blob = json.load(fh)
    assert set(blob) == set(LAYER_NAMES)
    entry = blob["gf_w0"]
    assert entry["rows"] == 2 and entry["cols"] == 64
    assert len(entry["data"]) == 2 * 64


def test_input_dim_mismatch_rejected():
    b = make_bundle()
    with pytest.raises(ShapeError):
        forward_features(b, np.ones((3, 5)))


def test_init_is_seed_deterministic():
    b1 = make_bundle(seed=7)
    b2 = make_bundle(seed=7)
    for name in LAYER_NAMES:
        assert (b1.named_params()[name].value.tobytes()
                == b2.named_params()[name].value.tobytes())


def test_biases_start_at_zero():
    b = make_bundle()
    assert np.all(b.gf_b0.value == 0.0)
    assert np.all(b.gd_b1.value == 0.0)
