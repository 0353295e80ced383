import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pasta_hdr.datasets import Scene, load_training_set, make_synthetic_dataset, make_synthetic_scene
from pasta_hdr.hdr_io import make_inputs
from pasta_hdr.model import ModelConfig, PASTANet
from pasta_hdr.training import (
    OptimizerState, TrainConfig, adam_step, augment, crop_patches, lr_at, read_loss_log,
    sample_batch, train_loop, train_step,
)

SMALL = ModelConfig.preset("pasta-i", tiny=True, C=4)


def scene(h=64, w=64, seed=0):
    stack, gt = make_synthetic_scene(h, w, seed)
    return Scene(f"s{seed}", make_inputs(stack).as_array(), gt)


def marker(n=4):
    img = np.zeros((1, n, n))
    img[0, 0, 0] = 1.0
    return img


# ---------------------------------------------------------------- schedule and config

def test_config_defaults_and_desk():
    cfg = TrainConfig()
    assert (cfg.patch, cfg.stride, cfg.lr) == (128, 64, 2e-4)
    assert (cfg.beta1, cfg.beta2, cfg.adam_eps) == (0.9, 0.999, 1e-8)
    assert (cfg.total_iters, cfg.halve_every) == (300_000, 50_000)
    desk = TrainConfig.desk()
    assert (desk.batch, desk.total_iters, desk.halve_every, desk.patch) == (2, 2000, 500, 64)
    with pytest.raises(ValueError):
        TrainConfig(batch=0)


def test_lr_schedule():
    cfg = TrainConfig()
    assert lr_at(0, cfg) == 2e-4
    assert lr_at(49_999, cfg) == 2e-4
    assert lr_at(50_000, cfg) == 1e-4
    assert lr_at(300_000, cfg) == 2e-4 / 64
    with pytest.raises(ValueError):
        lr_at(-1, cfg)


# ---------------------------------------------------------------- adam

def test_adam_first_step_moves_by_lr():
    p = {"w": np.array([1.0])}
    adam_step(p, {"w": np.array([1.0])}, OptimizerState(), lr=0.1)
    # m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    assert p["w"][0] == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8), abs=1e-12)


def test_adam_zero_gradient_leaves_params():
    p = {"w": np.array([0.5, -2.0])}
    state = OptimizerState()
    for _ in range(3):
        adam_step(p, {"w": np.zeros(2)}, state, lr=0.1)
    np.testing.assert_array_equal(p["w"], [0.5, -2.0])
    assert state.step == 3


def test_adam_converges_on_quadratic():
    p = {"w": np.array([0.0])}
    state = OptimizerState()
    for _ in range(200):
        adam_step(p, {"w": 2 * (p["w"] - 3.0)}, state, lr=0.1)
    assert abs(p["w"][0] - 3.0) < 1e-2


def test_adam_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, OptimizerState(), lr=0.1)


def test_optimizer_state_round_trip():
    state = OptimizerState(m={"a": np.ones(2, np.float32)}, v={"a": np.full(2, 2, np.float32)}, step=5)
    back = OptimizerState.from_arrays(state.arrays(), 5)
    assert back.step == 5
    np.testing.assert_array_equal(back.v["a"], state.v["a"])


# ---------------------------------------------------------------- patches

def test_crop_counts_and_coordinates():
    assert len(crop_patches(scene(128, 128), 128, 64)) == 1
    inputs = np.arange(3 * 6 * 256 * 256, dtype=np.float32).reshape(3, 6, 256, 256)
    gt = np.arange(3 * 256 * 256, dtype=np.float32).reshape(3, 256, 256)
    patches = crop_patches((inputs, gt), 128, 64)
    assert len(patches) == 9
    for n, p in enumerate(patches):
        i, j = divmod(n, 3)
        np.testing.assert_array_equal(p[3], gt[:, 64 * i:64 * i + 128, 64 * j:64 * j + 128])
        for f in range(3):
            np.testing.assert_array_equal(p[f], inputs[f, :, 64 * i:64 * i + 128, 64 * j:64 * j + 128])


def test_crop_errors():
    with pytest.raises(ValueError, match="smaller"):
        crop_patches(scene(64, 64), 128, 64)


# ---------------------------------------------------------------- augmentation

def test_augment_identity_and_involution():
    p = (np.random.default_rng(0).random((2, 4, 4)),) * 4
    assert all(np.array_equal(a, b) for a, b in zip(augment(p, 0), p))
    twice = augment(augment(p, 1), 1)
    assert all(np.array_equal(a, b) for a, b in zip(twice, p))


def test_rotation_moves_marker_top_right():
    (out,) = augment((marker(),), 4)
    assert out[0, 0, 3] == 1.0 and out.sum() == 1.0


def test_augment_applies_same_transform_to_all():
    base = np.random.default_rng(1).random((1, 4, 4))
    for mode in range(8):
        outs = augment((base, base * 2, base * 3, base * 4), mode)
        for k, o in enumerate(outs):
            np.testing.assert_array_equal(o, outs[0] * (k + 1))


def test_augment_modes_are_distinct_and_closed():
    img = np.arange(16.0).reshape(1, 4, 4)
    images = [augment((img,), m)[0] for m in range(8)]
    keys = {im.tobytes(): m for m, im in enumerate(images)}
    assert len(keys) == 8
    for a, b in itertools.product(range(8), repeat=2):
        assert augment((images[a],), b)[0].tobytes() in keys


def test_augment_errors():
    with pytest.raises(ValueError, match="square"):
        augment((np.zeros((1, 4, 6)),), 4)
    augment((np.zeros((1, 4, 6)),), 3)
    with pytest.raises(ValueError, match="mode"):
        augment((np.zeros((1, 4, 4)),), 8)


@given(st.integers(0, 2 ** 32 - 1))
def test_sample_batch_is_seeded(seed):
    pool = [tuple(np.full((1, 2, 2), float(i)) for _ in range(4)) for i in range(5)]
    a = sample_batch(pool, 3, np.random.default_rng(seed))
    b = sample_batch(pool, 3, np.random.default_rng(seed))
    assert a[0].shape == (3, 3, 1, 2, 2) and a[1].shape == (3, 1, 2, 2)
    np.testing.assert_array_equal(a[0], b[0])


# ---------------------------------------------------------------- loop

def tiny_cfg(**kw):
    base = dict(batch=1, total_iters=3, halve_every=2, patch=64, stride=64, seed=5)
    base.update(kw)
    return TrainConfig(**base)


def test_moments_track_nonzero_gradients():
    model = PASTANet(SMALL)
    state = OptimizerState()
    pool = crop_patches(scene(), 64, 64)
    x, gt = sample_batch(pool, 1, np.random.default_rng(0))
    values = train_step(model, state, x, gt, 1e-4, tiny_cfg())
    assert set(values) == {"l1", "lp", "le", "total"}
    params = dict(model.named_parameters())
    assert sorted(state.m) == sorted(params)
    for name, p in params.items():
        assert np.any(state.v[name] != 0) == np.any(p.grad != 0), name
    # zero-initialised residual tails block the bodies' gradient only until they move
    assert not np.any(params["stages.0.rcab.conv1.weight"].grad)
    train_step(model, state, x, gt, 1e-4, tiny_cfg())
    assert all(np.any(state.v[n] != 0) for n in params)


def test_loop_log_rows_and_determinism(tmp_path):
    scenes = [scene()]
    a = train_loop(scenes, None, tiny_cfg(), tmp_path / "a", model_config=SMALL)
    b = train_loop(scenes, None, tiny_cfg(), tmp_path / "b", model_config=SMALL)
    rows = read_loss_log(tmp_path / "a" / "loss.csv")
    assert [r["iter"] for r in rows] == [1, 2, 3]
    assert [r["lr"] for r in rows] == [2e-4, 2e-4, 1e-4]
    assert (tmp_path / "a" / "loss.csv").read_text().splitlines()[0] == "iter,lr,l1,lp,le,total"
    assert a.checkpoint.read_bytes() == b.checkpoint.read_bytes()


def test_resume_matches_uninterrupted_run(tmp_path):
    scenes = [scene()]
    full = train_loop(scenes, None, tiny_cfg(total_iters=4), tmp_path / "full", model_config=SMALL)
    part = train_loop(scenes, None, tiny_cfg(total_iters=2), tmp_path / "part", model_config=SMALL)
    resumed = train_loop(scenes, None, tiny_cfg(total_iters=4), tmp_path / "part", resume=part.checkpoint)
    assert resumed.state.step == 4
    assert [r["iter"] for r in read_loss_log(tmp_path / "part" / "loss.csv")] == [1, 2, 3, 4]
    assert resumed.checkpoint.read_bytes() == full.checkpoint.read_bytes()


def test_empty_dataset_and_missing_gt(tmp_path):
    with pytest.raises(ValueError, match="empty"):
        train_loop([], None, tiny_cfg(), model_config=SMALL)
    make_synthetic_dataset(tmp_path, 2)
    (tmp_path / "scene_001" / "gt.pfm").unlink()
    with pytest.raises(FileNotFoundError, match="scene_001"):
        load_training_set(tmp_path)


def test_nan_aborts_with_iteration(tmp_path):
    s = scene()
    s.gt[0, 0, 0] = np.nan
    with pytest.raises(FloatingPointError, match="aborted at iteration 1"):
        train_loop([s], None, tiny_cfg(), model_config=SMALL)
