import io
import struct

import numpy as np
import pytest

from src.core.errors import FormatError, ShapeError
from src.core.formats import (decode_ppm, encode_ppm, encode_tensor,
                              format_kv_document, format_kv_record,
                              load_cores, load_ppm, load_ppm_sequence,
                              load_tensor, parse_kv_document,
                              read_tensor_stream, save_cores, save_ppm,
                              save_tensor)
from src.core.tensor import DenseTensor


class TestTrt1:
    """Binary tensor container"""

    def test_layout(self, counting_tensor):
        blob = encode_tensor(counting_tensor)
        assert blob[:4] == b"TRT1"
        assert struct.unpack("<I", blob[4:8]) == (3,)
        assert struct.unpack("<3Q", blob[8:32]) == (2, 3, 4)
        values = np.frombuffer(blob[32:], dtype="<f8")
        np.testing.assert_array_equal(values, np.arange(1, 25))

    def test_save_load(self, tmp_path, rng):
        X = DenseTensor(rng.standard_normal((3, 1, 4, 2)))
        path = tmp_path / "x.trt1"
        save_tensor(X, path)
        assert load_tensor(path) == X

    def test_bad_magic(self, counting_tensor):
        blob = b"TRT2" + encode_tensor(counting_tensor)[4:]
        with pytest.raises(FormatError):
            read_tensor_stream(io.BytesIO(blob))

    def test_truncated_payload(self, counting_tensor):
        blob = encode_tensor(counting_tensor)[:-3]
        with pytest.raises(FormatError):
            read_tensor_stream(io.BytesIO(blob))

    @pytest.mark.parametrize("dim", [2**40, 2**61])
    def test_huge_declared_dims(self, tmp_path, dim):
        path = tmp_path / "huge.trt1"
        path.write_bytes(struct.pack("<4sIQ", b"TRT1", 1, dim) + bytes(16))
        with pytest.raises(FormatError):
            load_tensor(path)
        with pytest.raises(FormatError):
            read_tensor_stream(io.BytesIO(path.read_bytes()))

    def test_trailing_bytes(self, tmp_path, counting_tensor):
        path = tmp_path / "x.trt1"
        path.write_bytes(encode_tensor(counting_tensor) + b"\x00")
        with pytest.raises(FormatError):
            load_tensor(path)


class TestTrc1:
    def test_cores_roundtrip(self, tmp_path, rng):
        cores = [DenseTensor(rng.standard_normal((2, 3, 4))), DenseTensor(rng.standard_normal((4, 5, 2)))]
        path = tmp_path / "ring.trc1"
        save_cores(cores, path)
        assert load_cores(path) == cores

    def test_bad_header(self, tmp_path):
        path = tmp_path / "ring.trc1"
        path.write_bytes(b"TRX d=2\n")
        with pytest.raises(FormatError):
            load_cores(path)


class TestPpm:
    def test_white_pixel(self):
        image = decode_ppm(b"P6\n1 1\n255\n\xff\xff\xff")
        assert image.dims == (1, 1, 3)
        np.testing.assert_array_equal(image.data.ravel(), [255, 255, 255])

    def test_header_comments(self):
        image = decode_ppm(b"P6\n# made by hand\n2 1\n255\n\x01\x02\x03\x04\x05\x06")
        assert image.dims == (1, 2, 3)
        np.testing.assert_array_equal(image.data[0, 1], [4, 5, 6])

    def test_rejects_other_magic(self):
        with pytest.raises(FormatError):
            decode_ppm(b"P3\n1 1\n255\n255 255 255\n")

    def test_rejects_maxval(self):
        with pytest.raises(FormatError):
            decode_ppm(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00")

    def test_truncated_raster(self):
        with pytest.raises(FormatError):
            decode_ppm(b"P6\n2 2\n255\n\x00\x00\x00")

    def test_save_clamps_and_rounds(self):
        image = DenseTensor(np.array([[[-4.0, 2.5, 300.0]]]))
        raster = encode_ppm(image).split(b"255\n", 1)[1]
        assert list(raster) == [0, 3, 255]

    def test_roundtrip_after_rounding(self, tmp_path, rng):
        image = DenseTensor(rng.uniform(0, 255, size=(5, 7, 3)))
        path = tmp_path / "img.ppm"
        save_ppm(image, path)
        np.testing.assert_array_equal(load_ppm(path).data, np.floor(image.data + 0.5))

    def test_save_needs_three_channels(self):
        with pytest.raises(ShapeError):
            encode_ppm(DenseTensor(np.zeros((2, 2))))

    def test_sequence_stacks_frames(self, tmp_path, rng):
        paths = []
        for k in range(3):
            path = tmp_path / f"frame{k}.ppm"
            save_ppm(DenseTensor(np.full((2, 4, 3), 10.0 * k)), path)
            paths.append(path)
        video = load_ppm_sequence(paths)
        assert video.dims == (2, 4, 3, 3)
        assert video.entry((1, 1, 1, 3)) == 20.0


class TestKeyValue:
    def test_repeated_keys_form_lists(self):
        document = parse_kv_document("sr = 0.3\n# comment\nsr = 0.5  # trailing\n\ntask = rtrc\n")
        assert document == {"sr": ["0.3", "0.5"], "task": ["rtrc"]}

    def test_rejects_line_without_equals(self):
        with pytest.raises(FormatError):
            parse_kv_document("task rtrc\n")

    def test_document_roundtrip(self):
        text = format_kv_document({"dims": (6, 6, 6, 6), "sr": [0.3, 0.5], "weights": None})
        assert parse_kv_document(text) == {"dims": ["6,6,6,6"], "sr": ["0.3", "0.5"]}

    def test_record_is_one_line(self):
        assert format_kv_record({"re": 0.0, "ssim": 1.0}) == "re=0.0 ssim=1.0"
