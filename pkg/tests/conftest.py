from pathlib import Path

import numpy as np
import pytest

from hkcone import DiscreteMeasure

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_measure(rng, n, dim=1, spread=0.25, center=0.0, mass_range=(0.5, 1.5)):
    pts = center + rng.uniform(-spread, spread, size=(n, dim))
    return DiscreteMeasure(pts, rng.uniform(*mass_range, size=n), dim)


def mapped_pair(rng, n, dim=1, shift=0.03, growth=1.3):
    """A jittered lattice and its image under a small smooth shift with slowly varying growth.

    Lattice spacing dominates both the displacement and the change in mass ratio
    between neighbours, so the exact plan is a bijection for n <= 8 in 1-D and
    n <= 36 in 2-D.
    """
    side = int(np.ceil(n ** (1 / dim)))
    gap = 1.2 / max(side - 1, 1)
    grid = np.stack(np.meshgrid(*[np.arange(side)] * dim, indexing="ij"), -1).reshape(-1, dim)[:n]
    x = (grid - grid.mean(0)) * gap / np.sqrt(dim) + rng.uniform(-0.1, 0.1, size=(n, dim)) * gap
    a = rng.uniform(0.8, 1.2, size=n)
    y = x + shift * (1 + 0.3 * np.sin(2 * x))
    b = a * growth * (1 + 0.05 * np.cos(2 * x[:, 0]))
    return DiscreteMeasure(x, a, dim), DiscreteMeasure(y, b, dim)


# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
