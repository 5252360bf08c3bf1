"""Tests for data/pgm.py: byte-exact binary PGM I/O."""

from __future__ import annotations

import numpy as np
import pytest

from core.errors import PgmHeaderError, PgmMaxvalError, PgmTruncatedError, ShapeError
from data.pgm import load_pgm, read_pgm, save_pgm, write_pgm


class TestWritePgm:
    def test_single_white_pixel(self) -> None:
        """A 1x1 image of value 1.0 encodes to the header plus 0xFF."""
        assert write_pgm(np.ones((1, 1, 1))) == b"P5\n1 1\n255\n\xff"

    def test_header_names_width_then_height(self) -> None:
        """Header order is width, height."""
        assert write_pgm(np.zeros((1, 2, 3))).startswith(b"P5\n3 2\n255\n")

    def test_round_half_up(self) -> None:
        """Bytes are floor(255 * v + 0.5)."""
        data = write_pgm(np.array([[[0.0, 0.5, 0.25, 1.0]]]))
        assert list(data[-4:]) == [0, 128, 64, 255]

    def test_multichannel_rejected(self) -> None:
        """Only single-channel images are written."""
        with pytest.raises(ShapeError):
            write_pgm(np.zeros((3, 2, 2)))


class TestReadPgm:
    def test_ramp_round_trip(self) -> None:
        """A 2x3 ramp comes back within half a quantization step."""
        image = np.linspace(0.0, 1.0, 6).reshape(1, 2, 3)
        back = read_pgm(write_pgm(image))
        assert back.shape == (1, 2, 3)
        assert np.max(np.abs(back - image)) <= 1 / 510

    def test_rewrite_is_byte_identical(self) -> None:
        """write(read(write(x))) == write(x)."""
        image = np.random.default_rng(0).random((1, 5, 7))
        first = write_pgm(image)
        assert write_pgm(read_pgm(first)) == first

    def test_comments_and_whitespace_accepted(self) -> None:
        """Header comments and extra whitespace are skipped."""
        data = b"P5 # made by hand\n2  1\n# max\n255\n\x00\xff"
        np.testing.assert_array_equal(read_pgm(data), [[[0.0, 1.0]]])

    def test_bad_magic(self) -> None:
        """Only P5 is accepted."""
        with pytest.raises(PgmHeaderError):
            read_pgm(b"P2\n1 1\n255\n0")

    def test_non_numeric_dimension(self) -> None:
        """Dimensions must be decimal integers."""
        with pytest.raises(PgmHeaderError):
            read_pgm(b"P5\nx 1\n255\n\x00")

    def test_other_maxval(self) -> None:
        """maxval other than 255 has its own error."""
        with pytest.raises(PgmMaxvalError):
            read_pgm(b"P5\n1 1\n65535\n\x00\x00")

    def test_truncated_payload(self) -> None:
        """Fewer than W*H bytes is a truncation error."""
        with pytest.raises(PgmTruncatedError):
            read_pgm(b"P5\n2 2\n255\n\x00\x00\x00")

    def test_errors_share_a_base(self) -> None:
        """All parse errors are ValueErrors."""
        with pytest.raises(ValueError):
            read_pgm(b"")


def test_save_and_load(tmp_path) -> None:
    """Files round-trip through disk and parent directories are created."""
    image = np.full((1, 3, 3), 0.2)
    path = tmp_path / "nested" / "img.pgm"
    save_pgm(path, image)
    assert np.max(np.abs(load_pgm(path) - image)) <= 1 / 510
