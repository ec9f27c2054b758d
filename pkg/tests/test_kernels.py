import os
import subprocess
import sys

import numpy as np
import pytest

from graphdive import kernels


def test_compiled_backend_built():
    # the build is optional, but this checkout is expected to have it
    assert kernels.BACKEND == "cython"


@pytest.mark.parametrize("seed", range(5))
def test_backends_bit_identical(seed):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(300, 7))
    idx = rng.integers(0, 40, size=300).astype(np.intp)
    assert np.array_equal(kernels.segment_sum(vals, idx, 40), kernels.py_segment_sum(vals, idx, 40))
    h = rng.normal(size=(40, 7))
    assert np.array_equal(kernels.gather_rows(h, idx), kernels.py_gather_rows(h, idx))


def test_segment_sum_semantics():
    vals = np.array([[1.0], [2.0], [4.0]])
    out = kernels.segment_sum(vals, np.array([2, 0, 2], dtype=np.intp), 3)
    assert out.ravel().tolist() == [2.0, 0.0, 5.0]


def test_empty_inputs():
    out = kernels.segment_sum(np.zeros((0, 3)), np.zeros(0, dtype=np.intp), 2)
    assert out.shape == (2, 3) and not out.any()


def test_fallback_selected_by_env():
    env = dict(os.environ, GRAPHDIVE_KERNELS="python")
    out = subprocess.run(
        [sys.executable, "-c", "from graphdive.kernels import BACKEND; print(BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
