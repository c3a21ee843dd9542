import cv2
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from syncmapv2 import image_io
from syncmapv2.image_io import ConfigurationError, ImageFormatError


@pytest.mark.parametrize("shape,out", [((40, 30, 3), (288, 288)), ((481, 321, 3), (288, 288)),
                                       ((17, 23), (9, 31)), ((288, 288, 3), (96, 96))])
def test_bilinear_matches_opencv(shape, out, rng):
    img = rng.random(shape)
    ours = image_io.resize_bilinear(img, *out)
    ref = cv2.resize(img, (out[1], out[0]), interpolation=cv2.INTER_LINEAR)
    assert ours.shape == ref.shape
    np.testing.assert_allclose(ours, ref, atol=1e-9)


def test_bilinear_identity_and_constant():
    img = np.full((5, 7, 3), 0.25)
    assert np.array_equal(image_io.resize_bilinear(img, 5, 7), img)
    assert np.allclose(image_io.resize_bilinear(img, 13, 2), 0.25)


def test_nearest_matches_opencv(rng):
    lab = rng.integers(0, 9, size=(24, 24)).astype(np.uint16)
    ours = image_io.resize_nearest(lab, 288, 288)
    # exact integer upscale: every source cell becomes a 12x12 block
    assert np.array_equal(ours, np.kron(lab, np.ones((12, 12), dtype=np.uint16)))


def test_split_patches_shapes():
    img = np.zeros((288, 288, 3))
    g = image_io.split_patches(img, 48, 48)
    assert g.patches.shape == (2304, 6, 6, 3)
    assert (g.patch_h, g.patch_w) == (6, 6)
    with pytest.raises(ConfigurationError):
        image_io.split_patches(np.zeros((290, 288, 3)), 48, 48)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 5), st.integers(1, 5))
@settings(max_examples=40, deadline=None)
def test_split_assemble_roundtrip(rows, cols, ph, pw):
    img = np.arange(rows * ph * cols * pw * 3, dtype=float).reshape(rows * ph, cols * pw, 3)
    g = image_io.split_patches(img, rows, cols)
    assert np.array_equal(image_io.assemble_patches(g), img)
    # patch i is the row-major i-th block
    r, c = g.coord(rows * cols - 1)
    assert np.array_equal(g.patches[-1], img[r * ph:(r + 1) * ph, c * pw:(c + 1) * pw])


def test_temporize_hand_example():
    # 2x2 patch, K=2: columns of [R; G; B] stacked, repeated twice
    p = np.arange(12, dtype=float).reshape(2, 2, 3)
    seq = image_io.temporize_patch(p, K=2)
    assert seq.shape == (4, 6)
    col0 = [p[0, 0, 0], p[1, 0, 0], p[0, 0, 1], p[1, 0, 1], p[0, 0, 2], p[1, 0, 2]]
    col1 = [p[0, 1, 0], p[1, 1, 0], p[0, 1, 1], p[1, 1, 1], p[0, 1, 2], p[1, 1, 2]]
    assert np.array_equal(seq, np.array([col0, col1, col0, col1]))


def test_temporize_defaults_shape(rng):
    seq = image_io.temporize_patch(rng.random((6, 6, 3)), K=3)
    assert seq.shape == (18, 18)
    batch = image_io.temporize_patches(rng.random((5, 6, 6, 3)), K=3)
    assert batch.shape == (5, 18, 18)
    p = rng.random((4, 6, 6, 3))
    assert np.array_equal(image_io.temporize_patches(p, 3)[2], image_io.temporize_patch(p[2], 3))


def test_labels_to_pixels_blocks():
    grid = np.array([[0, 1], [2, 3]])
    pix = image_io.labels_to_pixels(grid, 4, 6, intermediate=288)
    assert pix.shape == (4, 6)
    assert np.array_equal(pix[:2, :3], np.zeros((2, 3)))
    assert np.array_equal(pix[2:, 3:], np.full((2, 3), 3))


def test_label_map_roundtrip(tmp_path, rng):
    lab = rng.integers(0, 70000, size=(7, 9)) % 65536
    for name in ("a.png", "a.txt"):
        image_io.save_label_map(lab, tmp_path / name)
        assert np.array_equal(image_io.load_label_map(tmp_path / name), lab)


def test_image_roundtrip_and_errors(tmp_path, rng):
    img = rng.random((8, 10, 3))
    image_io.save_image(img, tmp_path / "x.png")
    back = image_io.load_image(tmp_path / "x.png")
    assert back.shape == img.shape and np.abs(back - img).max() <= 0.5 / 255 + 1e-12
    (tmp_path / "bad.png").write_bytes(b"not an image")
    with pytest.raises(ImageFormatError):
        image_io.load_image(tmp_path / "bad.png")
    with pytest.raises(FileNotFoundError):
        image_io.load_image(tmp_path / "none.png")
