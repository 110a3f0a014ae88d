"""Datasets: synthetic generators and an IDX (MNIST-style) reader/writer."""

import gzip
import struct

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

# IDX type byte -> big-endian numpy dtype
_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {v.newbyteorder(">"): k for k, v in _IDX_TYPES.items()}


class IdxFormatError(ValueError):
    pass


class BadMagicError(IdxFormatError):
    pass


class TruncatedIdxError(IdxFormatError):
    pass


def _read_bytes(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw, expected_magic=None):
    """Decode IDX bytes into an ndarray."""
    if len(raw) < 4:
        raise TruncatedIdxError("file shorter than the 4-byte magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    if expected_magic is not None and magic != expected_magic:
        raise BadMagicError(f"magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    zero, code, ndim = magic >> 16, (magic >> 8) & 0xFF, magic & 0xFF
    if zero != 0 or code not in _IDX_TYPES or ndim == 0:
        raise BadMagicError(f"not an IDX magic number: 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedIdxError("dimension header is incomplete")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = _IDX_TYPES[code]
    need = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(raw) - header < need:
        raise TruncatedIdxError(f"expected {need} data bytes, found {len(raw) - header}")
    data = np.frombuffer(raw, dtype=dtype, count=need // dtype.itemsize, offset=header)
    return data.reshape(dims).astype(dtype.newbyteorder("="))


def read_idx(path, expected_magic=None):
    return parse_idx(_read_bytes(path), expected_magic)


def encode_idx(array):
    array = np.asarray(array)
    dtype = array.dtype.newbyteorder(">")
    if dtype not in _IDX_CODES:
        raise IdxFormatError(f"dtype {array.dtype} has no IDX code")
    magic = (_IDX_CODES[dtype] << 8) | array.ndim
    head = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    return head + array.astype(dtype).tobytes()


def write_idx(path, array):
    with open(path, "wb") as fh:
        fh.write(encode_idx(array))


def load_idx_pair(images_path, labels_path, classes=None, limit=None, binarize=False):
    """Images scaled to [0, 1] (flattened) and labels, optionally filtered.

    ``binarize`` thresholds scaled pixels at 0.5.
    """
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError("image and label counts differ")
    X = images.reshape(images.shape[0], -1).astype(float) / 255.0
    if classes is not None:
        keep = np.isin(labels, list(classes))
        X, labels = X[keep], labels[keep]
    if limit is not None:
        X, labels = X[:limit], labels[:limit]
    if binarize:
        X = (X > 0.5).astype(float)
    return X, labels.astype(int)


def balanced_subset(labels, per_class, rng):
    """Indices with up to ``per_class`` examples of every label."""
    picks = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        picks.append(rng.choice(idx, size=min(per_class, idx.size), replace=False))
    return np.sort(np.concatenate(picks))


def two_class_blobs(features=20, examples=500, separation=1.0, seed=0):
    """Two Gaussian clouds with means at +-separation/2 along a random unit direction."""
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(features)
    direction /= np.linalg.norm(direction)
    labels = np.where(rng.random(examples) < 0.5, -1.0, 1.0)
    X = rng.standard_normal((examples, features)) + 0.5 * separation * labels[:, None] * direction
    return X, labels


def binary_patterns(examples=200, pixels=64, prototypes=8, flip=0.05, seed=0):
    """Noisy copies of random binary prototypes."""
    rng = np.random.default_rng(seed)
    protos = (rng.random((prototypes, pixels)) < 0.5).astype(float)
    which = rng.integers(prototypes, size=examples)
    noise = rng.random((examples, pixels)) < flip
    return np.abs(protos[which] - noise)
