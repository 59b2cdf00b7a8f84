import numpy as np
import pytest

from cloudecode.glyph import build_atlas
from cloudecode.raster import RasterImage


@pytest.fixture(scope="session")
def atlas():
    return build_atlas()


def paint(mask, color=(0, 0, 0), background=(255, 255, 255)) -> RasterImage:
    """RasterImage with `mask` pixels in `color` on `background`."""
    mask = np.asarray(mask, dtype=bool)
    px = np.empty(mask.shape + (3,), dtype=np.uint8)
    px[...] = background
    px[mask] = color
    return RasterImage(px)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
