import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from legrad.data import (
    IMAGES_MAGIC,
    LABELS_MAGIC,
    BadMagicError,
    IdxFormatError,
    TruncatedIdxError,
    balanced_subset,
    binary_patterns,
    encode_idx,
    load_idx_pair,
    parse_idx,
    read_idx,
    two_class_blobs,
    write_idx,
)


def write_pair(tmp_path, images, labels):
    ip, lp = tmp_path / "images.idx", tmp_path / "labels.idx"
    write_idx(ip, images.astype(np.uint8))
    write_idx(lp, labels.astype(np.uint8))
    return ip, lp


class TestIdx:
    def test_header_layout(self):
        raw = encode_idx(np.zeros((2, 3, 4), dtype=np.uint8))
        assert struct.unpack(">IIII", raw[:16]) == (IMAGES_MAGIC, 2, 3, 4)
        assert len(raw) == 16 + 24

    def test_labels_magic(self):
        assert struct.unpack(">I", encode_idx(np.zeros(5, dtype=np.uint8))[:4])[0] == LABELS_MAGIC

    def test_bad_magic(self):
        raw = b"\x12\x34\x08\x01" + struct.pack(">I", 0)
        with pytest.raises(BadMagicError):
            parse_idx(raw)

    def test_unexpected_magic(self):
        with pytest.raises(BadMagicError):
            parse_idx(encode_idx(np.zeros(3, dtype=np.uint8)), IMAGES_MAGIC)

    @pytest.mark.parametrize("cut", [2, 6, 16, 39])
    def test_truncated(self, cut):
        raw = encode_idx(np.arange(24, dtype=np.uint8).reshape(2, 3, 4))
        with pytest.raises(TruncatedIdxError):
            parse_idx(raw[:cut])

    def test_errors_are_distinct(self):
        assert not issubclass(BadMagicError, TruncatedIdxError)
        assert not issubclass(TruncatedIdxError, BadMagicError)
        assert issubclass(BadMagicError, IdxFormatError)

    @settings(max_examples=50, deadline=None)
    @given(arrays(st.sampled_from([np.uint8, np.int8, np.int16, np.int32, np.float32, np.float64]),
                  st.lists(st.integers(1, 4), min_size=1, max_size=3).map(tuple)))
    def test_round_trip(self, array):
        back = parse_idx(encode_idx(array))
        assert back.shape == array.shape
        np.testing.assert_array_equal(back.view(np.uint8), array.astype(back.dtype).view(np.uint8))

    def test_file_and_gzip_round_trip(self, tmp_path):
        a = np.arange(60, dtype=np.uint8).reshape(5, 3, 4)
        write_idx(tmp_path / "a.idx", a)
        np.testing.assert_array_equal(read_idx(tmp_path / "a.idx", IMAGES_MAGIC), a)
        (tmp_path / "a.idx.gz").write_bytes(gzip.compress(encode_idx(a)))
        np.testing.assert_array_equal(read_idx(tmp_path / "a.idx.gz"), a)

    def test_unsupported_dtype(self):
        with pytest.raises(IdxFormatError):
            encode_idx(np.zeros(3, dtype=np.uint16))


class TestLoadPair:
    def test_scaling_filtering_and_limit(self, tmp_path):
        images = np.array([[[0, 255]], [[128, 64]], [[255, 255]], [[10, 200]]])
        labels = np.array([2, 7, 3, 7])
        ip, lp = write_pair(tmp_path, images, labels)
        X, y = load_idx_pair(ip, lp, classes=(2, 7), limit=2)
        np.testing.assert_allclose(X, [[0, 1], [128 / 255, 64 / 255]])
        np.testing.assert_array_equal(y, [2, 7])

    def test_binarize(self, tmp_path):
        ip, lp = write_pair(tmp_path, np.array([[[127, 128, 255]]]), np.array([1]))
        X, _ = load_idx_pair(ip, lp, binarize=True)
        np.testing.assert_array_equal(X, [[0, 1, 1]])

    def test_count_mismatch(self, tmp_path):
        ip, lp = write_pair(tmp_path, np.zeros((3, 2, 2)), np.zeros(2))
        with pytest.raises(IdxFormatError):
            load_idx_pair(ip, lp)

    def test_swapped_files(self, tmp_path):
        ip, lp = write_pair(tmp_path, np.zeros((3, 2, 2)), np.zeros(3))
        with pytest.raises(BadMagicError):
            load_idx_pair(lp, ip)


class TestGenerators:
    def test_balanced_subset(self):
        labels = np.array([0] * 10 + [1] * 3 + [2] * 7)
        idx = balanced_subset(labels, 5, np.random.default_rng(0))
        assert np.bincount(labels[idx]).tolist() == [5, 3, 5]
        assert len(set(idx.tolist())) == len(idx)

    def test_blobs_shape_and_labels(self):
        X, y = two_class_blobs(features=7, examples=300, seed=1)
        assert X.shape == (300, 7)
        assert set(np.unique(y)) == {-1.0, 1.0}

    def test_blobs_seeded(self):
        np.testing.assert_array_equal(two_class_blobs(seed=4)[0], two_class_blobs(seed=4)[0])

    def test_patterns_binary(self):
        Y = binary_patterns(examples=50, pixels=16, seed=2)
        assert Y.shape == (50, 16)
        assert set(np.unique(Y)) <= {0.0, 1.0}

    def test_patterns_without_noise_are_prototypes(self):
        Y = binary_patterns(examples=100, pixels=32, prototypes=3, flip=0.0, seed=0)
        assert len(np.unique(Y, axis=0)) <= 3
