import numpy as np
import pytest

from radialkit import imaging


def gradient_image(size=64):
    """Diagonal gray ramp."""
    xs, ys = np.meshgrid(np.arange(size), np.arange(size))
    return ((xs + ys) * 255 / (2 * (size - 1))).astype(np.uint8)


def checker_image(size=64, cell=8):
    xs, ys = np.meshgrid(np.arange(size), np.arange(size))
    return np.where(((xs // cell) + (ys // cell)) % 2 == 0, 40, 215).astype(np.uint8)


def radial_image(size=64):
    """Dark center, bright edges."""
    xs, ys = np.meshgrid(np.arange(size), np.arange(size))
    c = (size - 1) / 2
    r = np.hypot(xs - c, ys - c) / np.hypot(c, c)
    return np.clip(r * 255, 0, 255).astype(np.uint8)


def noise_image(size=64, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(size, size), dtype=np.uint8)


def rgb_image(size=64, seed=1):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)


def textured_image(seed, size=96):
    """Smoothed random texture; distinct per seed, structured enough that
    warping visibly moves content."""
    rng = np.random.default_rng(seed)
    coarse = rng.random((size // 8 + 2, size // 8 + 2))
    img = np.asarray(imaging.Image.fromarray(
        (coarse * 255).astype(np.uint8)).resize((size, size), imaging.Image.BILINEAR))
    fine = rng.integers(-25, 26, size=(size, size))
    return np.clip(img.astype(int) + fine, 0, 255).astype(np.uint8)


@pytest.fixture
def test_images():
    """Five diverse 8-bit test images."""
    return [gradient_image(), checker_image(), radial_image(),
            noise_image(), rgb_image()]
