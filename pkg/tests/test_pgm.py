import numpy as np
import pytest

from vpe.errors import PgmError
from vpe.pgm import read_pgm, write_pgm


def test_round_trip(tmp_path):
    rng = np.random.default_rng(600)
    image = rng.integers(0, 256, (24, 32), dtype=np.uint8)
    path = tmp_path / "frame.pgm"
    write_pgm(path, image)
    assert np.array_equal(read_pgm(path), image)


def test_header_comments_and_whitespace(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment\n 3 # inline\n2\n255\n" + bytes(6))
    image = read_pgm(path)
    assert image.shape == (2, 3)


def test_rejects_wrong_magic(tmp_path):
    path = tmp_path / "x.pgm"
    path.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(PgmError):
        read_pgm(path)


def test_rejects_16_bit(tmp_path):
    path = tmp_path / "deep.pgm"
    path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(PgmError):
        read_pgm(path)


def test_rejects_truncated_pixels(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n4 4\n255\n" + bytes(7))
    with pytest.raises(PgmError):
        read_pgm(path)


def test_missing_file():
    with pytest.raises(PgmError):
        read_pgm("/nonexistent/frame.pgm")


def test_write_rejects_wrong_dtype(tmp_path):
    with pytest.raises(PgmError):
        write_pgm(tmp_path / "bad.pgm", np.zeros((2, 2), dtype=np.int32))
