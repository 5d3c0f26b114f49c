"""Binary array container round trips and malformed-input rejection."""

import struct

import numpy as np
import pytest

from ctbridge.arrayio import MAGIC, FormatError, load_array, save_array, save_pgm


class TestRoundTrip:
    def test_2d_round_trip(self, tmp_path):
        path = tmp_path / "img.ctb"
        arr = np.arange(12.0).reshape(3, 4) * np.pi
        save_array(path, arr)
        back = load_array(path)
        np.testing.assert_array_equal(back, arr)
        assert back.dtype == np.float64

    def test_1d_and_3d(self, tmp_path):
        for arr in (np.linspace(0, 1, 7), np.zeros((2, 3, 4))):
            path = tmp_path / "a.ctb"
            save_array(path, arr)
            np.testing.assert_array_equal(load_array(path), arr)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "h.ctb"
        save_array(path, np.zeros((5, 9)))
        raw = path.read_bytes()
        assert raw[:8] == MAGIC
        rank, d0, d1 = struct.unpack_from("<III", raw, 8)
        assert (rank, d0, d1) == (2, 5, 9)
        assert len(raw) == 8 + 4 + 8 + 5 * 9 * 8

    def test_payload_is_little_endian(self, tmp_path):
        path = tmp_path / "le.ctb"
        save_array(path, np.array([1.0]))
        raw = path.read_bytes()
        assert raw[-8:] == struct.pack("<d", 1.0)


class TestRejection:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ctb"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(FormatError):
            load_array(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.ctb"
        save_array(path, np.zeros((4, 4)))
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(FormatError):
            load_array(path)

    def test_absurd_rank(self, tmp_path):
        path = tmp_path / "r.ctb"
        path.write_bytes(MAGIC + struct.pack("<I", 99))
        with pytest.raises(FormatError):
            load_array(path)


class TestPgm:
    def test_pgm_header_and_window(self, tmp_path):
        path = tmp_path / "img.pgm"
        img = np.array([[0.0, 0.5], [1.0, 2.0]])
        save_pgm(path, img, window=(0.0, 1.0))
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n2 2\n255\n")
        pixels = np.frombuffer(raw[-4:], dtype=np.uint8).reshape(2, 2)
        assert pixels[0, 0] == 0
        assert pixels[0, 1] == 128
        assert pixels[1, 0] == 255
        assert pixels[1, 1] == 255  # clipped above the window

    def test_pgm_rejects_3d(self, tmp_path):
        with pytest.raises(FormatError):
            save_pgm(tmp_path / "x.pgm", np.zeros((2, 2, 2)))

    def test_constant_image(self, tmp_path):
        path = tmp_path / "c.pgm"
        save_pgm(path, np.full((3, 3), 7.0))
        assert path.exists()
