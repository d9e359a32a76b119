import os
import struct

import numpy as np
import pytest

from fedteach.errors import IdxCountMismatchError, IdxFormatError, IdxTruncatedError
from fedteach.idx import IMAGES_MAGIC, LABELS_MAGIC, load_idx, write_idx

IMAGES = np.array([[[0, 255], [128, 1]], [[10, 20], [30, 40]]], dtype=np.uint8)


@pytest.fixture
def idx_pair(tmp_path):
    img = tmp_path / "img.idx"
    lab = tmp_path / "lab.idx"
    # byte-for-byte construction, independent of write_idx
    img.write_bytes(struct.pack(">4I", 0x803, 2, 2, 2) + IMAGES.tobytes())
    lab.write_bytes(struct.pack(">2I", 0x801, 2) + bytes([3, 7]))
    return img, lab


def test_handcrafted_pair(idx_pair):
    data = load_idx(*idx_pair)
    assert data.X.shape == (2, 4)
    np.testing.assert_array_equal(data.X[0], np.array([0, 255, 128, 1]) / 255.0)
    np.testing.assert_array_equal(data.X[1], np.array([10, 20, 30, 40]) / 255.0)
    assert data.y.tolist() == [3, 7]
    assert data.num_classes == 8


def test_write_then_read(tmp_path):
    write_idx(tmp_path / "i", tmp_path / "l", IMAGES, [1, 0])
    assert (tmp_path / "i").read_bytes()[:4] == struct.pack(">I", IMAGES_MAGIC)
    assert (tmp_path / "l").read_bytes()[:4] == struct.pack(">I", LABELS_MAGIC)
    data = load_idx(tmp_path / "i", tmp_path / "l")
    assert data.y.tolist() == [1, 0]


def test_bad_magic(idx_pair):
    img, lab = idx_pair
    with pytest.raises(IdxFormatError):
        load_idx(lab, lab)


def test_truncated(idx_pair):
    img, lab = idx_pair
    img.write_bytes(img.read_bytes()[:-1])
    with pytest.raises(IdxTruncatedError):
        load_idx(img, lab)
    img.write_bytes(struct.pack(">2I", 0x803, 2))
    with pytest.raises(IdxTruncatedError):
        load_idx(img, lab)


def test_count_mismatch(idx_pair):
    img, lab = idx_pair
    lab.write_bytes(struct.pack(">2I", 0x801, 3) + bytes([1, 2, 3]))
    with pytest.raises(IdxCountMismatchError):
        load_idx(img, lab)


MNIST_DIR = os.environ.get("MNIST_DIR", "data/mnist")


@pytest.mark.skipif(not os.path.exists(os.path.join(MNIST_DIR, "train-images-idx3-ubyte")),
                    reason="MNIST files not present")
def test_mnist_train_if_present():
    path = os.path.join(MNIST_DIR, "train-images-idx3-ubyte")
    with open(path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">4I", f.read(16))
    assert (magic, n, rows, cols) == (0x803, 60000, 28, 28)
    data = load_idx(path, os.path.join(MNIST_DIR, "train-labels-idx1-ubyte"))
    assert len(data) == 60000 and data.dim == 784
    assert set(np.unique(data.y)) <= set(range(10))
