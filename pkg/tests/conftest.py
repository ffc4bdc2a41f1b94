import sys

import numpy as np
import pytest

from fbcpe import Params, build_grid


@pytest.fixture
def params():
    return Params(gamma=2.0, g=1.0, mu=1.0, lam=1.0)


@pytest.fixture
def grid1(params):
    return build_grid(1, 32, None, 16, params.alpha)


@pytest.fixture
def grid2(params):
    return build_grid(2, 16, 16, 8, params.alpha)


def smooth_state(grid, params, seed, eps=1e-2):
    """Random smooth state built from a few Fourier/cosine modes."""
    from fbcpe import perturbed_ic
    return perturbed_ic(grid, params, eps, seed=seed)


def xmesh(grid):
    X, _ = grid.mesh()
    return X


def rng(seed):
    return np.random.default_rng(seed)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance criterion lines at the end of the run."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
