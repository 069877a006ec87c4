import math

import numpy as np
import pytest

from graspkit import GraspRect5D, RgbImage, rect5d_to_corners
from graspkit.dataset_io import render_paired_image
from graspkit.kinematics import anukul_arm


def render(rect: GraspRect5D, size: int = 256, background=None, line_width: int = 3) -> RgbImage:
    img = background if background is not None else RgbImage.blank(size, size)
    return render_paired_image(img, rect5d_to_corners(rect), line_width)


def random_rect(rng, size=256, hmin=10.0, hmax=80.0, wmin=10.0, wmax=120.0, margin=3.0):
    """Random rectangle with h, w in the given ranges, fully inside the image."""
    while True:
        h = rng.uniform(hmin, hmax)
        w = rng.uniform(wmin, wmax)
        theta = rng.uniform(-math.pi, math.pi)
        half = 0.5 * math.hypot(h, w) + margin
        if 2 * half >= size:
            continue
        x = rng.uniform(half, size - 1 - half)
        y = rng.uniform(half, size - 1 - half)
        return GraspRect5D(x, y, theta, h, w)


def random_in_limits(dh, rng, n=None):
    lo, hi = dh.limits[:, 0], dh.limits[:, 1]
    shape = (7,) if n is None else (n, 7)
    return lo + (hi - lo) * rng.random(shape)


@pytest.fixture(scope="session")
def arm():
    return anukul_arm()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
        terminalreporter.write_line(line)
