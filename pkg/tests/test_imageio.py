import numpy as np
import pytest
from PIL import Image

from strokewave.imageio import (
    AugmentConfig,
    MaskConfig,
    PreprocessConfig,
    augment,
    load_image,
    mask_annotations,
    preprocess_image,
    resize_bilinear,
    rotate_bilinear,
    save_pgm,
)
from strokewave.rng import RngStream


def _write_pgm(path, arr):
    save_pgm(np.asarray(arr, dtype=np.float64) / 255.0, path)


def test_load_pgm_full_scale(tmp_path):
    p = tmp_path / "one.pgm"
    _write_pgm(p, [[255]])
    img = load_image(p)
    assert img.shape == (1, 1)
    assert img[0, 0] == 1.0


def test_load_pgm_zero(tmp_path):
    p = tmp_path / "zero.pgm"
    _write_pgm(p, [[0]])
    assert load_image(p)[0, 0] == 0.0


def test_load_pgm_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(0)
    raw = rng.integers(0, 256, size=(37, 23)).astype(np.uint8)
    p = tmp_path / "r.pgm"
    _write_pgm(p, raw)
    img = load_image(p)
    assert np.array_equal(np.rint(img * 255).astype(np.uint8), raw)


def test_load_pgm_with_comment(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n2 1\n255\n\x00\xff")
    img = load_image(p)
    assert img.shape == (1, 2)
    assert img[0, 1] == 1.0


def test_load_truncated_pgm_rejected(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n4 4\n255\nxx")
    with pytest.raises(ValueError, match="truncated"):
        load_image(p)


def test_load_rgb_red_luma(tmp_path):
    p = tmp_path / "red.png"
    Image.new("RGB", (1, 1), (255, 0, 0)).save(p)
    img = load_image(p)
    assert img[0, 0] == pytest.approx(0.299, abs=1e-12)


def test_load_grayscale_png(tmp_path):
    p = tmp_path / "g.png"
    Image.fromarray(np.full((3, 4), 128, dtype=np.uint8), "L").save(p)
    img = load_image(p)
    assert img.shape == (3, 4)
    assert np.allclose(img, 128 / 255.0)


def test_load_16bit_rejected(tmp_path):
    p = tmp_path / "deep.png"
    Image.fromarray(np.full((2, 2), 1000, dtype=np.uint16), "I;16").save(p)
    with pytest.raises(ValueError, match="unsupported"):
        load_image(p)


def test_load_missing_file():
    with pytest.raises(OSError):
        load_image("/nonexistent/image.png")


def test_resize_identity_is_exact():
    img = np.random.default_rng(1).random((256, 256))
    assert np.array_equal(resize_bilinear(img, 256, 256), img)


def test_resize_2x2_to_center_mean():
    img = np.array([[0.0, 1.0], [1.0, 0.0]])
    out = resize_bilinear(img, 1, 1)
    assert out.shape == (1, 1)
    assert out[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_resize_constant_extension():
    out = resize_bilinear(np.array([[0.7]]), 4, 4)
    assert out.shape == (4, 4)
    assert np.all(out == 0.7)


@pytest.mark.parametrize("shape", [(8, 8), (31, 17)])
def test_resize_constant_any_size(shape):
    out = resize_bilinear(np.full(shape, 0.311), 13, 9)
    assert np.allclose(out, 0.311, atol=1e-15)


def test_resize_preserves_unit_range():
    rng = np.random.default_rng(2)
    for _ in range(5):
        img = rng.random((40, 56))
        out = resize_bilinear(img, 17, 29)
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_resize_rejects_empty_output():
    with pytest.raises(ValueError):
        resize_bilinear(np.ones((4, 4)), 0, 4)


def test_mask_kills_bright_border_pixel():
    img = np.zeros((128, 128))
    img[2, 2] = 1.0
    out = mask_annotations(img, MaskConfig(margin=32, threshold=0.78))
    assert out[2, 2] == 0.0


def test_mask_keeps_bright_center():
    img = np.zeros((128, 128))
    img[64, 64] = 1.0
    out = mask_annotations(img, MaskConfig(margin=32, threshold=0.78))
    assert out[64, 64] == 1.0


def test_mask_noop_on_dark_image():
    img = np.zeros((64, 64))
    out = mask_annotations(img, MaskConfig(margin=8, threshold=0.5))
    assert np.array_equal(out, img)


def test_mask_idempotent():
    rng = np.random.default_rng(3)
    cfg = MaskConfig(margin=16, threshold=0.6)
    img = rng.random((96, 80))
    once = mask_annotations(img, cfg)
    twice = mask_annotations(once, cfg)
    assert np.array_equal(once, twice)


def test_mask_margin_too_large():
    with pytest.raises(ValueError):
        mask_annotations(np.zeros((32, 32)), MaskConfig(margin=16, threshold=0.5))


def _img256(seed=0):
    return np.random.default_rng(seed).random((256, 256))


def test_augment_degenerate_is_identity():
    img = _img256()
    cfg = AugmentConfig(max_rotation_deg=0.0, hflip_prob=0.0,
                        brightness_range=(1.0, 1.0))
    out = augment(img, cfg, RngStream(9))
    assert np.array_equal(out, img)


def test_augment_flip_is_involution():
    img = _img256(1)
    cfg = AugmentConfig(max_rotation_deg=0.0, hflip_prob=1.0,
                        brightness_range=(1.0, 1.0))
    once = augment(img, cfg, RngStream(5))
    twice = augment(once, cfg, RngStream(5))
    assert np.array_equal(twice, img)


def test_augment_brightness_clamps():
    img = np.full((256, 256), 0.95)
    cfg = AugmentConfig(max_rotation_deg=0.0, hflip_prob=0.0,
                        brightness_range=(1.1, 1.1))
    out = augment(img, cfg, RngStream(0))
    assert np.all(out == 1.0)  # 0.95 * 1.1 = 1.045 clamps


def test_augment_seed_reproducible():
    img = _img256(2)
    cfg = AugmentConfig()
    a = augment(img, cfg, RngStream(77))
    b = augment(img, cfg, RngStream(77))
    assert np.array_equal(a, b)
    c = augment(img, cfg, RngStream(78))
    assert not np.array_equal(a, c)


def test_augment_output_in_range():
    img = _img256(3)
    out = augment(img, AugmentConfig(), RngStream(1))
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_augment_rejects_wrong_size():
    with pytest.raises(ValueError):
        augment(np.zeros((64, 64)), AugmentConfig(), RngStream(0))


def test_rotation_zero_fill_corners():
    out = rotate_bilinear(np.ones((256, 256)), 45.0)
    assert out[0, 0] == 0.0  # corner leaves the source support
    assert out[128, 128] == pytest.approx(1.0, abs=1e-12)


def test_preprocess_masks_then_resizes(tmp_path):
    img = np.zeros((300, 300))
    img[1, 1] = 1.0  # annotation in the border band
    out = preprocess_image(img, PreprocessConfig())
    assert out.shape == (256, 256)
    assert out.max() == 0.0


def test_save_pgm_deterministic(tmp_path):
    img = np.random.default_rng(4).random((32, 32))
    p1, p2 = tmp_path / "a.pgm", tmp_path / "b.pgm"
    save_pgm(img, p1)
    save_pgm(img, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_config_validation():
    with pytest.raises(ValueError):
        MaskConfig(margin=-1)
    with pytest.raises(ValueError):
        MaskConfig(threshold=1.5)
    with pytest.raises(ValueError):
        AugmentConfig(hflip_prob=1.5)
    with pytest.raises(ValueError):
        AugmentConfig(brightness_range=(0.0, 1.0))
