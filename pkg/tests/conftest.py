import numpy as np
import pytest

from resmps.data import Dataset, save_idx

ACCEPTANCE_LINES = []


def make_blobs(n, side=6, n_classes=3, seed=0):
    """Quantized synthetic images: each class lights up its own block of pixels."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)
    imgs = rng.uniform(0.0, 0.25, size=(n, side, side))
    band = side // n_classes
    for i, c in enumerate(labels):
        imgs[i, c * band:(c + 1) * band, :] += rng.uniform(0.5, 0.75, size=(band, side))
    pixels = np.rint(np.clip(imgs, 0, 1) * 255).astype(np.uint8)
    return Dataset(pixels.reshape(n, -1) / 255.0, labels, n_classes, (side, side))


@pytest.fixture(scope="session")
def blob_dir(tmp_path_factory):
    """MNIST-layout directory with a small learnable synthetic problem."""
    root = tmp_path_factory.mktemp("blobs")
    save_idx(make_blobs(120, seed=1), root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte")
    save_idx(make_blobs(60, seed=2), root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte")
    return root


@pytest.fixture
def blobs():
    return make_blobs(90, seed=3), make_blobs(45, seed=4)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
