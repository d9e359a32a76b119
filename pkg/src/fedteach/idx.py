"""Reader and writer for the big-endian IDX format used by MNIST."""
import struct

import numpy as np

from .datagen import Dataset
from .errors import IdxCountMismatchError, IdxFormatError, IdxTruncatedError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read(path, magic, n_dims):
    with open(path, "rb") as f:
        raw = f.read()
    header_len = 4 + 4 * n_dims
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: {len(raw)} bytes is too short for a magic number")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IdxFormatError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < header_len:
        raise IdxTruncatedError(f"{path}: header needs {header_len} bytes, file has {len(raw)}")
    dims = struct.unpack(f">{n_dims}I", raw[4:header_len])
    n_bytes = int(np.prod(dims, dtype=np.int64))
    if len(raw) - header_len < n_bytes:
        raise IdxTruncatedError(
            f"{path}: payload has {len(raw) - header_len} bytes, header promises {n_bytes}"
        )
    data = np.frombuffer(raw, dtype=np.uint8, count=n_bytes, offset=header_len)
    return data.reshape(dims)


def load_idx(images_path, labels_path, num_classes=None):
    """Images flattened to float vectors in [0, 1] plus their labels."""
    images = _read(images_path, IMAGES_MAGIC, 3)
    labels = _read(labels_path, LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    if num_classes is None:
        num_classes = int(y.max()) + 1 if len(y) else 1
    return Dataset(X, y, num_classes)


def write_idx(images_path, labels_path, images, labels):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())
