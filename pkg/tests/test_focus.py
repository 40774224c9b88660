import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

import oracles
from conftest import small_spec
from msmitosis import synth
from msmitosis.errors import BandOutOfRange, DimensionMismatch, EmptyMask, ImageTooSmall
from msmitosis.focus import average_gradient, masked_histogram, rank_planes
from msmitosis.stack import GrayImage, MultispectralHPF


def test_constant_image_has_zero_gradient():
    assert average_gradient(np.full((6, 9), 40, dtype=np.uint8)) == 0.0


def test_step_image_matches_convolution_oracle():
    img = np.zeros((5, 5), dtype=np.uint8)
    img[:, 2:] = 100
    expected = oracles.sobel_mean(img.tolist())
    # interior columns 1 and 2 each see |gx| = 400; column 3 sees nothing
    assert expected == pytest.approx(800 / 3)
    assert average_gradient(GrayImage(img)) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 9), st.integers(3, 9), st.integers(0, 2**32 - 1))
def test_random_images_match_oracle(h, w, seed):
    img = np.random.default_rng(seed).integers(0, 256, size=(h, w))
    assert average_gradient(img) == pytest.approx(oracles.sobel_mean(img.tolist()), rel=1e-12)


def test_too_small():
    with pytest.raises(ImageTooSmall):
        average_gradient(np.zeros((2, 10)))


def test_blur_lowers_gradient(small_scene):
    stack, _, _ = small_scene
    img = stack.images[0, 6].astype(float)
    assert average_gradient(img) > average_gradient(ndimage.gaussian_filter(img, 2.0))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 10), st.integers(0, 10))
def test_translation_inside_constant_frame(seed, dx, dy):
    rng = np.random.default_rng(seed)
    content = rng.integers(0, 256, size=(8, 8)).astype(float)
    a = np.zeros((30, 30))
    b = np.zeros((30, 30))
    a[4:12, 4:12] = content
    b[4 + dy : 12 + dy, 4 + dx : 12 + dx] = content
    assert average_gradient(a) == pytest.approx(average_gradient(b), rel=1e-12)


def test_rank_planes_puts_sharpest_first():
    stack, _ = synth.generate(small_spec())
    r = rank_planes(stack, 3, keep=6)
    assert r.selected[0] == 6
    assert len(r.selected) == 6
    assert sorted(p for p, _ in r.scores) == list(range(17))
    scores = dict(r.scores)
    assert [scores[p] for p in r.selected] == sorted((scores[p] for p in r.selected), reverse=True)


def test_keep_all_is_permutation(small_scene):
    stack, _, _ = small_scene
    r = rank_planes(stack, 0, keep=stack.planes)
    assert sorted(r.selected) == list(range(stack.planes))


def test_identical_planes_tie_break_by_index():
    img = np.random.default_rng(0).integers(0, 256, size=(16, 16))
    stack = MultispectralHPF("x", np.broadcast_to(img, (2, 5, 16, 16)))
    assert rank_planes(stack, 1, keep=1).selected == (0,)


def test_affine_rescale_keeps_ranking(small_scene):
    stack, _, _ = small_scene
    # gain 3, offset 20 stays exact in 16 bits
    scaled = MultispectralHPF("y", stack.images[:1].astype(np.uint16) * 3 + 20, bit_depth=16)
    assert rank_planes(stack, 0, 17).selected == rank_planes(scaled, 0, 17).selected


def test_bad_band():
    stack = MultispectralHPF("x", np.zeros((2, 3, 5, 5), dtype=np.uint8))
    with pytest.raises(BandOutOfRange):
        rank_planes(stack, 2)


def test_histogram_of_constant_image():
    img = GrayImage(np.full((10, 10), 50, dtype=np.uint8))
    h = masked_histogram(img, np.ones((10, 10), bool), 256)
    assert h.total == 100 and h.counts[50] == 100 and h.counts.sum() == 100
    assert h.bin_edges[0] == 0 and h.bin_edges[-1] == 256
    assert np.all(np.diff(h.bin_edges) > 0)


def test_histogram_counts_only_masked_pixels():
    img = GrayImage(np.arange(100, dtype=np.uint8).reshape(10, 10))
    mask = np.zeros((10, 10), bool)
    mask.flat[:10] = True
    h = masked_histogram(img, mask)
    assert h.total == 10 and h.bin_count == 256
    assert masked_histogram(GrayImage(np.zeros((4, 4), np.uint16), 16), np.ones((4, 4), bool)).bin_count == 1024


def test_histogram_errors():
    img = GrayImage(np.zeros((4, 4), np.uint8))
    with pytest.raises(DimensionMismatch):
        masked_histogram(img, np.ones((3, 4), bool))
    with pytest.raises(EmptyMask):
        masked_histogram(img, np.zeros((4, 4), bool))


def test_mitosis_and_background_modes_separate():
    spec = small_spec()
    stack, _, blobs = synth.generate_with_layout(spec)
    img = stack.image(8, 6)
    mit = np.zeros(img.pixels.shape, bool)
    for b in blobs:
        if b.kind == "mitosis":
            mit[b.pixels[:, 1], b.pixels[:, 0]] = True
    background = ~np.zeros_like(mit)
    for b in blobs:
        background[b.pixels[:, 1], b.pixels[:, 0]] = False
    hm = masked_histogram(img, mit)
    hb = masked_histogram(img, background)
    assert hb.mode_center() - hm.mode_center() >= spec.mitosis_darkness / 2
