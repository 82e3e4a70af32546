import numpy as np
import pytest

from fatmt.panel_io import PanelData


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_panel(rng, n=8, t=12, p=1):
    return PanelData(rng.standard_normal((n, t)), rng.standard_normal((t, p)))


@pytest.fixture
def small_panel(rng):
    return random_panel(rng)
