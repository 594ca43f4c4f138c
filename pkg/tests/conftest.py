import os

# Pin BLAS threading before numpy loads so timing and bitwise-determinism
# checks see a stable execution environment.
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from quantforecast.datapipe import (MackeyGlassParams, gen_mackey_glass,  # noqa: E402
                                    make_windows, normalize_and_split)


@pytest.fixture(scope="session")
def mg_series():
    """Short Mackey-Glass series shared by pipeline-level tests."""
    return gen_mackey_glass(MackeyGlassParams(steps=400), seed=11)


@pytest.fixture(scope="session")
def mg_dataset(mg_series):
    return normalize_and_split(make_windows(mg_series, 5, 3), seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
