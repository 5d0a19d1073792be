"""
Description:
Author: hikonv contributors
Date: 2022-04-21 06:31:27
LastEditors: hikonv contributors
LastEditTime: 2022-04-21 06:31:27
"""
import io
import os
import struct
import tempfile
import unittest

import numpy as np

from hikonv.exceptions import BadMagic, BadVersion, RangeError, ShapeMismatch, TruncatedStream
from hikonv.op.bitpack_op import QuantSeq
from hikonv.op.kernel_op import Tensor3, Tensor4
from hikonv.qtensor import (
    MAGIC,
    VERSION,
    QTensor,
    decode_qtensor,
    encode_qtensor,
    header_size,
    payload_size,
    read_qtensor,
    write_qtensor,
)


class TestQTensor(unittest.TestCase):
    def test_layout(self):
        blob = encode_qtensor(QTensor.from_seq(QuantSeq([3, 1, 2], 2)))
        self.assertEqual(len(blob), 13)
        self.assertEqual(blob, MAGIC + bytes([VERSION, 2, 0, 1]) + struct.pack("<I", 3) + b"\x27")
        self.assertEqual(header_size(1), 12)
        self.assertEqual(payload_size(3, 2), 1)
        self.assertEqual(payload_size(3, 32), 12)

    def test_seq_round_trip(self):
        seq = QuantSeq([-4, 3, 0, -1, 2], 3, True)
        tensor = decode_qtensor(encode_qtensor(QTensor.from_seq(seq)))
        self.assertEqual(tensor.to_seq(), seq)
        self.assertEqual(tensor.dims, (5,))

    def test_tensor_round_trip(self):
        rng = np.random.default_rng(5)
        w = Tensor4.random(rng, (3, 2, 3, 3), 5, True)
        x = Tensor3.random(rng, (2, 4, 6), 1, False)
        self.assertEqual(read_qtensor(encode_qtensor(QTensor.from_tensor(w))).to_tensor4(), w)
        self.assertEqual(read_qtensor(encode_qtensor(QTensor.from_tensor(x))).to_tensor3(), x)

    def test_full_precision(self):
        values = [-(1 << 31), -1, 0, 7, (1 << 31) - 1]
        blob = encode_qtensor(QTensor.from_values(values))
        self.assertEqual(len(blob), header_size(1) + 4 * len(values))
        self.assertEqual(decode_qtensor(blob).values.tolist(), values)
        unsigned = QTensor.from_values([0, (1 << 32) - 1], 32, False)
        self.assertEqual(decode_qtensor(encode_qtensor(unsigned)), unsigned)

    def test_file_and_stream(self):
        seq = QuantSeq([1, 0, 1, 1, 0, 0, 1, 0, 1], 1)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "seq.qt")
            nbytes = write_qtensor(path, seq, dims=(3, 3))
            self.assertEqual(nbytes, os.path.getsize(path))
            tensor = read_qtensor(path)
        self.assertEqual(tensor.dims, (3, 3))
        self.assertEqual(tensor.values.tolist(), list(seq.values))
        buffer = io.BytesIO()
        write_qtensor(buffer, tensor)
        buffer.seek(0)
        self.assertEqual(read_qtensor(buffer), tensor)

    def test_bad_headers(self):
        blob = encode_qtensor(QTensor.from_seq(QuantSeq([3, 1, 2], 2)))
        with self.assertRaises(BadMagic):
            decode_qtensor(b"QTSX" + blob[4:])
        with self.assertRaises(BadVersion):
            decode_qtensor(blob[:4] + bytes([VERSION + 1]) + blob[5:])
        with self.assertRaises(RangeError):
            decode_qtensor(blob[:6] + bytes([2]) + blob[7:])
        with self.assertRaises(RangeError):
            decode_qtensor(blob[:5] + bytes([9]) + blob[6:])

    def test_truncated(self):
        blob = encode_qtensor(QTensor.from_seq(QuantSeq([3, 1, 2, 0, 1], 2)))
        for end in (2, 6, 10, len(blob) - 1):
            with self.assertRaises(TruncatedStream):
                decode_qtensor(blob[:end])

    def test_trailing_bytes_are_ignored(self):
        seq = QuantSeq([3, 1, 2], 2)
        blob = encode_qtensor(QTensor.from_seq(seq))
        self.assertEqual(decode_qtensor(blob + b"\x00\x00").to_seq(), seq)

    def test_invalid_tensors(self):
        with self.assertRaises(ShapeMismatch):
            QTensor((2, 2), [1, 2, 3], 4)
        with self.assertRaises(RangeError):
            QTensor((1,), [16], 4)
        with self.assertRaises(RangeError):
            QTensor((1, 1, 1, 1, 1), [0], 4)
        with self.assertRaises(RangeError):
            write_qtensor(io.BytesIO(), QuantSeq([], 4))
        with self.assertRaises(RangeError):
            QTensor.from_values([1, 2], 32, True).to_seq()
        with self.assertRaises(ShapeMismatch):
            QTensor.from_seq(QuantSeq([1, 2], 4)).to_tensor3()


if __name__ == "__main__":
    unittest.main()
