import gzip
import struct
from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parent.parent
MNIST_DIR = REPO / "data" / "mnist"


def write_idx_images(path, images, gz=False):
    payload = struct.pack(">IIII", 0x00000803, *images.shape) + images.tobytes()
    opener = gzip.open if gz else open
    with opener(path, "wb") as f:
        f.write(payload)


def write_idx_labels(path, labels, gz=False):
    payload = struct.pack(">II", 0x00000801, len(labels)) + labels.tobytes()
    opener = gzip.open if gz else open
    with opener(path, "wb") as f:
        f.write(payload)


@pytest.fixture
def idx_pair(tmp_path):
    """Four tiny 28x28 images (one all-zero) with labels, in plain IDX."""
    rng = np.random.default_rng(5)
    images = rng.integers(0, 256, size=(4, 28, 28), dtype=np.uint8)
    images[2] = 0
    labels = np.array([3, 1, 4, 1], dtype=np.uint8)
    ip = tmp_path / "img.idx"
    lp = tmp_path / "lbl.idx"
    write_idx_images(ip, images)
    write_idx_labels(lp, labels)
    return ip, lp, images, labels
