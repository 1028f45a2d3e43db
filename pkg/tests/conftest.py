import time
from pathlib import Path

import numpy as np
import pytest

from jpgdefense.model import RELU, ArchitectureSpec, ModelWeights, affine, conv, init_weights, maxpool

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = Path(__file__).resolve().parent / "fixtures"
MNIST_DIR = ROOT / "data" / "mnist"
TIMINGS = {}


def small_cnn(seed, in_ch=1, size=8, classes=4, pad=0):
    """Two conv layers and one affine layer on a tiny input."""
    arch = ArchitectureSpec(
        (in_ch, size, size),
        (conv(3, 3, padding=pad), RELU, maxpool(2), conv(4, 3, padding=1), RELU, affine(classes)),
    )
    w = init_weights(arch, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    # non-zero biases so that every layer's bias path is exercised
    w.params = [tuple(p if p.ndim > 1 else rng.normal(0, 0.1, p.shape).astype(np.float32) for p in g)
                for g in w.params]
    return w


def sign_stub(gain=10.0):
    """Two classes on a 1x1 gray image: logits (+gain*s, -gain*s) for standardized pixel s.

    Pixels above 127.5 are class 0. FGSM against class 0 lowers the pixel, so a
    large enough epsilon flips the argmax while the clean top label stays 0.
    """
    arch = ArchitectureSpec((1, 1, 1), (affine(2),))
    return ModelWeights(arch, [(np.array([[gain], [-gain]]), np.zeros(2))], std_mean=0.5, std_scale=0.5)


def stub_dataset(pixels, labels):
    from jpgdefense.pipeline import Dataset

    imgs = np.asarray(pixels, dtype=np.uint8).reshape(-1, 1, 1, 1)
    return Dataset(imgs, labels, "test", ["0", "1"])


def random_gray_dataset(n=12, size=8, classes=4, seed=0):
    from jpgdefense.pipeline import Dataset

    rng = np.random.default_rng(seed)
    imgs = rng.integers(0, 256, (n, size, size, 1), dtype=np.uint8)
    return Dataset(imgs, rng.integers(0, classes, n), "test", [str(k) for k in range(classes)],
                   ids=np.arange(100, 100 + n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


def mnist_available():
    return (MNIST_DIR / "t10k-images-idx3-ubyte.gz").exists()


@pytest.fixture(scope="session")
def mnist_model():
    """Reference CNN trained from scratch with default hyperparameters (about 1.5 min)."""
    if not mnist_available():
        pytest.skip("MNIST files not present; run scripts/fetch_mnist.py")
    from jpgdefense.model import TrainConfig, reference_arch, train
    from jpgdefense.pipeline import load_dataset

    data = load_dataset(MNIST_DIR, "mnist-idx", "train")
    val = load_dataset(MNIST_DIR, "mnist-idx", "validation")
    t = time.perf_counter()
    weights = train(reference_arch(), data, TrainConfig(), validation=val, class_names=data.class_names)
    TIMINGS["train_seconds"] = time.perf_counter() - t
    return weights


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion at the end of the run

ACCEPTANCE = []


def record(criterion, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
