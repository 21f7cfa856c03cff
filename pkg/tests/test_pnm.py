"""Binary PPM/PGM format: canonical round trips and malformed inputs."""

import numpy as np
import pytest

from coattn.errors import ParseError
from coattn.pnm import read_pgm, read_ppm, write_pgm, write_ppm


class TestRoundTrip:
    def test_ppm_values(self, tmp_path, rng):
        img = rng.integers(0, 256, (5, 7, 3), dtype=np.uint8)
        path = tmp_path / "x.ppm"
        write_ppm(path, img)
        np.testing.assert_array_equal(read_ppm(path), img)

    def test_pgm_values(self, tmp_path, rng):
        mask = rng.integers(0, 256, (4, 6), dtype=np.uint8)
        path = tmp_path / "x.pgm"
        write_pgm(path, mask)
        np.testing.assert_array_equal(read_pgm(path), mask)

    def test_write_read_write_is_byte_identical(self, tmp_path, rng):
        img = rng.integers(0, 256, (3, 3, 3), dtype=np.uint8)
        p1, p2 = tmp_path / "a.ppm", tmp_path / "b.ppm"
        write_ppm(p1, img)
        write_ppm(p2, read_ppm(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_is_canonical(self, tmp_path):
        path = tmp_path / "c.pgm"
        write_pgm(path, np.zeros((2, 3), dtype=np.uint8))
        assert path.read_bytes().startswith(b"P5\n3 2\n255\n")

    def test_non_square_orientation(self, tmp_path):
        mask = np.arange(6, dtype=np.uint8).reshape(2, 3)
        path = tmp_path / "d.pgm"
        write_pgm(path, mask)
        got = read_pgm(path)
        assert got.shape == (2, 3)
        np.testing.assert_array_equal(got, mask)


class TestMalformed:
    def test_comments_in_header_accepted(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5 # comment\n# another\n2 2\n255\n" + bytes(4))
        assert read_pgm(path).shape == (2, 2)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "m.pgm"
        path.write_bytes(b"P6\n1 1\n255\n" + bytes(3))
        with pytest.raises(ParseError, match="expected P5"):
            read_pgm(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n2")
        with pytest.raises(ParseError, match="truncated header"):
            read_pgm(path)

    def test_non_numeric_field(self, tmp_path):
        path = tmp_path / "n.pgm"
        path.write_bytes(b"P5\nwide 2\n255\n")
        with pytest.raises(ParseError, match="non-numeric"):
            read_pgm(path)

    def test_unsupported_maxval(self, tmp_path):
        path = tmp_path / "v.pgm"
        path.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
        with pytest.raises(ParseError, match="maxval"):
            read_pgm(path)

    def test_bad_dimensions(self, tmp_path):
        path = tmp_path / "z.pgm"
        path.write_bytes(b"P5\n0 2\n255\n")
        with pytest.raises(ParseError, match="bad dimensions"):
            read_pgm(path)

    def test_truncated_pixels(self, tmp_path):
        path = tmp_path / "p.pgm"
        path.write_bytes(b"P5\n3 3\n255\n" + bytes(5))
        with pytest.raises(ParseError, match="truncated pixel data"):
            read_pgm(path)

    def test_write_shape_contracts(self, tmp_path):
        with pytest.raises(ParseError):
            write_ppm(tmp_path / "bad.ppm", np.zeros((2, 2), dtype=np.uint8))
        with pytest.raises(ParseError):
            write_pgm(tmp_path / "bad.pgm", np.zeros((2, 2, 3), dtype=np.uint8))
