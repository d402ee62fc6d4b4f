import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from protectkit import imageio as I


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, st.tuples(st.just(3), st.integers(1, 9), st.integers(1, 9))))
def test_ppm_roundtrip(pixels):
    np.testing.assert_array_equal(I.decode_ppm(I.encode_ppm(pixels)), pixels)


def test_ppm_layout():
    px = np.zeros((3, 1, 2), dtype=np.uint8)
    px[:, 0, 1] = [1, 2, 3]
    assert I.encode_ppm(px) == b"P6\n2 1\n255\n\x00\x00\x00\x01\x02\x03"


def test_header_comments_are_skipped():
    raw = b"P6\n# made by hand\n1 1\n# depth\n255\n\x07\x08\x09"
    np.testing.assert_array_equal(I.decode_ppm(raw)[:, 0, 0], [7, 8, 9])


@pytest.mark.parametrize(
    "raw,msg",
    [
        (b"P3\n1 1\n255\n", "header"),
        (b"P6\n1 1\n65535\n\x00\x00\x00", "maxval"),
        (b"P6\n2 2\n255\n\x00\x00", "truncated"),
        (b"P6\n0 2\n255\n", "extent"),
    ],
)
def test_bad_ppm(raw, msg):
    with pytest.raises(I.PPMError, match=msg):
        I.decode_ppm(raw)


def test_to_bytes_rounds_and_clips():
    np.testing.assert_array_equal(I.to_bytes(np.array([-0.1, 0.5, 1 / 255 * 0.49, 2.0])), [0, 128, 0, 255])


def test_save_and_load(tmp_path):
    img = I.synth_corpus_arrays(1, 16, seed=0)
    I.save_image(img, tmp_path / "a.ppm")
    back = I.load_image(tmp_path / "a.ppm")
    # the corpus is already 8-bit, so the file roundtrip is exact
    np.testing.assert_array_equal(back, img[0])
    with pytest.raises(ValueError):
        I.save_image(np.zeros((2, 3, 4, 4)), tmp_path / "b.ppm")


def test_synth_corpus_is_seeded(tmp_path):
    a = I.synth_corpus_arrays(3, 32, seed=4)
    assert a.shape == (3, 3, 32, 32) and a.dtype == np.float32
    assert a.tobytes() == I.synth_corpus_arrays(3, 32, seed=4).tobytes()
    assert a.tobytes() != I.synth_corpus_arrays(3, 32, seed=5).tobytes()
    assert 0.0 <= a.min() and a.max() <= 1.0
    paths = I.synth_corpus(3, 32, 4, tmp_path / "corpus")
    assert [p.name for p in paths] == ["img_0000.ppm", "img_0001.ppm", "img_0002.ppm"]
    loaded, names = I.load_corpus(tmp_path / "corpus")
    np.testing.assert_array_equal(loaded, a)
    assert names[0] == "img_0000.ppm"


def test_synth_size_must_be_multiple_of_16():
    with pytest.raises(ValueError):
        I.synth_corpus_arrays(1, 40, seed=0)


def test_load_corpus_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        I.load_corpus(tmp_path)
    I.save_image(np.zeros((3, 4, 4)), tmp_path / "a.ppm")
    I.save_image(np.zeros((3, 8, 8)), tmp_path / "b.ppm")
    with pytest.raises(ValueError):
        I.load_corpus(tmp_path)
