"""Tests for the train/eval preprocessing transforms."""

from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from lesionbench.pipeline.transforms import (
    EvalTransform,
    TrainTransform,
    TransformConfig,
    build_transform,
    default_transform_config,
    load_image,
)


def checker_image(h=100, w=140):
    rng = np.random.default_rng(0)
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


class TestTransformConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(target_size=(0, 10)),
            dict(pre_resize=(100, 100), target_size=(200, 200)),
            dict(hflip_prob=1.5),
            dict(vflip_prob=-0.1),
            dict(rotation_degrees=-5),
            dict(std=(0.0, 0.1, 0.1)),
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            TransformConfig(**kwargs)

    def test_dict_round_trip(self):
        cfg = TransformConfig(target_size=(64, 64), pre_resize=(73, 73))
        assert TransformConfig.from_dict(cfg.to_dict()) == cfg

    def test_default_transform_config_scaling(self):
        cfg = default_transform_config((224, 224))
        assert cfg.target_size == (224, 224) and cfg.pre_resize == (256, 256)
        small = default_transform_config((64, 64))
        assert small.pre_resize >= small.target_size


class TestEvalTransform:
    def test_output_shape_is_target(self):
        tf = EvalTransform(TransformConfig(target_size=(224, 224)))
        for size in [(50, 50), (300, 200), (224, 224), (1, 1)]:
            out = tf(checker_image(*size))
            assert out.shape == (3, 224, 224) and out.dtype == np.float32

    def test_constant_image_normalization_arithmetic(self):
        cfg = TransformConfig(target_size=(8, 8))
        tf = EvalTransform(cfg)
        img = np.full((32, 32, 3), 128, dtype=np.uint8)
        out = tf(img)
        for ch in range(3):
            expected = (128 / 255 - cfg.mean[ch]) / cfg.std[ch]
            np.testing.assert_allclose(out[ch], expected, atol=1e-6)

    def test_deterministic(self):
        tf = EvalTransform(TransformConfig(target_size=(32, 32)))
        img = checker_image()
        np.testing.assert_array_equal(tf(img), tf(img))

    def test_accepts_pil_and_grayscale(self):
        tf = EvalTransform(TransformConfig(target_size=(16, 16)))
        pil = Image.fromarray(checker_image(20, 20))
        assert tf(pil).shape == (3, 16, 16)
        gray = np.zeros((20, 20), dtype=np.uint8)
        assert tf(gray).shape == (3, 16, 16)

    def test_rejects_bad_array(self):
        tf = EvalTransform(TransformConfig(target_size=(16, 16)))
        with pytest.raises(ValueError):
            tf(np.zeros((4, 4, 5), dtype=np.uint8))


class TestTrainTransform:
    def test_output_shape(self):
        cfg = TransformConfig(target_size=(64, 64), pre_resize=(73, 73))
        tf = TrainTransform(cfg, seed=3)
        assert tf(checker_image(), index=0).shape == (3, 64, 64)

    def test_deterministic_given_seed_and_index(self):
        cfg = TransformConfig(target_size=(32, 32), pre_resize=(40, 40))
        tf1 = TrainTransform(cfg, seed=9)
        tf2 = TrainTransform(cfg, seed=9)
        img = checker_image()
        np.testing.assert_array_equal(tf1(img, index=17), tf2(img, index=17))

    def test_different_index_changes_output(self):
        cfg = TransformConfig(target_size=(32, 32), pre_resize=(48, 48))
        tf = TrainTransform(cfg, seed=9)
        img = checker_image()
        assert not np.array_equal(tf(img, index=0), tf(img, index=1))

    def test_different_seed_changes_output(self):
        cfg = TransformConfig(target_size=(32, 32), pre_resize=(48, 48))
        img = checker_image()
        a = TrainTransform(cfg, seed=0)(img, index=5)
        b = TrainTransform(cfg, seed=1)(img, index=5)
        assert not np.array_equal(a, b)

    def test_no_augmentation_degenerates_to_eval(self):
        # crop window == pre-resize == target, no flips, no rotation
        cfg = TransformConfig(
            target_size=(24, 24),
            pre_resize=(24, 24),
            hflip_prob=0.0,
            vflip_prob=0.0,
            rotation_degrees=0.0,
        )
        img = checker_image()
        train_out = TrainTransform(cfg, seed=0)(img, index=0)
        eval_out = EvalTransform(cfg)(img)
        np.testing.assert_array_equal(train_out, eval_out)

    def test_mode_factory(self):
        cfg = TransformConfig()
        assert isinstance(build_transform(cfg, "eval"), EvalTransform)
        assert isinstance(build_transform(cfg, "train", seed=1), TrainTransform)
        with pytest.raises(ValueError, match="mode"):
            build_transform(cfg, "validate")


class TestLoadImage:
    def test_reads_rgb(self, tmp_path):
        arr = checker_image(10, 12)
        Image.fromarray(arr).save(tmp_path / "x.png")
        loaded = load_image(tmp_path / "x.png")
        np.testing.assert_array_equal(loaded, arr)

    def test_converts_palette_to_rgb(self, tmp_path):
        img = Image.fromarray(checker_image(10, 10)).convert("P")
        img.save(tmp_path / "p.png")
        assert load_image(tmp_path / "p.png").shape == (10, 10, 3)
