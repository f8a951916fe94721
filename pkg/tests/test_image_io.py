import numpy as np
import pytest

from pyrolens.image_io import read_image, read_pgm, write_image, write_pgm


@pytest.fixture
def rng():
    return np.random.default_rng(11)


def test_pgm_round_trip_bit_exact(tmp_path, rng):
    img = rng.integers(0, 256, (13, 29), dtype=np.uint8)
    path = tmp_path / "a.pgm"
    write_pgm(path, img)
    again = read_pgm(path)
    assert np.array_equal(again, img)
    # Writing the read-back image reproduces identical bytes.
    path2 = tmp_path / "b.pgm"
    write_pgm(path2, again)
    assert path.read_bytes() == path2.read_bytes()


def test_pgm_header_shape(tmp_path):
    img = np.zeros((2, 3), np.uint8)
    path = tmp_path / "tiny.pgm"
    write_pgm(path, img)
    assert path.read_bytes().startswith(b"P5\n3 2\n255\n")


def test_pgm_with_comment_lines(tmp_path):
    raw = b"P5\n# a comment\n2 2\n255\n\x01\x02\x03\x04"
    path = tmp_path / "c.pgm"
    path.write_bytes(raw)
    assert np.array_equal(read_pgm(path), np.array([[1, 2], [3, 4]], np.uint8))


def test_pgm_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ValueError):
        read_pgm(path)


def test_pgm_rejects_truncated_raster(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
    with pytest.raises(ValueError):
        read_pgm(path)


def test_png_gray_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (20, 15), dtype=np.uint8)
    path = tmp_path / "g.png"
    write_image(path, img)
    assert np.array_equal(read_image(path), img)


def test_png_rgb_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (10, 12, 3), dtype=np.uint8)
    path = tmp_path / "c.png"
    write_image(path, img)
    assert np.array_equal(read_image(path), img)


def test_write_image_dispatches_to_pgm(tmp_path, rng):
    img = rng.integers(0, 256, (6, 6), dtype=np.uint8)
    path = tmp_path / "d.pgm"
    write_image(path, img)
    assert np.array_equal(read_image(path), img)


def test_write_rejects_bad_shape(tmp_path):
    with pytest.raises(ValueError):
        write_image(tmp_path / "x.png", np.zeros((4, 4, 2), np.uint8))
