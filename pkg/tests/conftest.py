import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from butterfly_sft.geometry import PRESETS, attach_random_charges, sample_curve_2d  # noqa: E402

# error thresholds per p, shared by unit and acceptance tests
EPS = {5: 5e-3, 7: 5e-5, 9: 5e-7}


@pytest.fixture(scope="session")
def ellipse_problem():
    """Charged sources and targets on the ellipse preset, keyed by N."""
    cache = {}

    def make(N, seed=1):
        if (N, seed) not in cache:
            X = sample_curve_2d(PRESETS["ellipse"], N, 5)
            K = attach_random_charges(sample_curve_2d(PRESETS["ellipse-small"], N, 5), seed)
            cache[N, seed] = (K, X)
        return cache[N, seed]

    return make
