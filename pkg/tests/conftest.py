import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings
from hypothesis.extra import numpy as hnp
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from voltage import synthscript  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def bitmaps(max_side=16, min_side=1):
    shape = st.tuples(st.integers(min_side, max_side), st.integers(min_side, max_side))
    return shape.flatmap(lambda s: hnp.arrays(np.uint8, s, elements=st.integers(0, 1)))


def inked(max_side=16):
    return bitmaps(max_side).filter(lambda a: a.any())


def random_bitmaps(n, seed=0, max_side=16, density=None):
    """Deterministic fuzz set of non-blank bitmaps with random shape and density."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        h, w = rng.integers(1, max_side + 1, size=2)
        p = density if density is not None else rng.uniform(0.15, 0.85)
        img = (rng.random((h, w)) < p).astype(np.uint8)
        if img.any():
            out.append(img)
    return out


@pytest.fixture(scope="session")
def charset():
    return synthscript.gen_charset(1)


@pytest.fixture(scope="session")
def protos(charset):
    return synthscript.prototypes(charset, n=5, jitter=1)


# criterion number -> one-line verdict, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
