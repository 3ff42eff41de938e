import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthetic import synthetic_panel  # noqa: E402

from stvine import marginals  # noqa: E402


@pytest.fixture(scope="session")
def small_panel():
    return synthetic_panel(n_stations=12, n_times=24, seed=1)


@pytest.fixture(scope="session")
def small_fit(small_panel):
    """Marginal table + uniform panel of the small synthetic panel."""
    table = marginals.fit_marginal_table(small_panel, "gumbel")
    upanel = marginals.pit_transform(small_panel, table)
    return table, upanel


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
