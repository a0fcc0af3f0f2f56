import os
import subprocess
import sys

import numpy as np
import pytest

from wumkit import kernels
from wumkit.iforest import IForestParams, fit_iforest, score_points
from wumkit.learn.trees import Encoded

native = pytest.mark.skipif("native" not in kernels.backends(),
                            reason="compiled extension not built")


def tree_inputs(seed, n=400, d=6):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(n, d)), 1)
    y = (X[:, 0] + X[:, 1] > 0).astype(np.int64) + (X[:, 2] > 1)
    return X, y, Encoded(X), rng


@native
@pytest.mark.parametrize("seed", range(5))
def test_backends_grow_identical_trees(seed):
    X, y, enc, rng = tree_inputs(seed)
    w = rng.integers(0, 3, len(y)).astype(float)
    resid = rng.normal(size=len(y))
    b = kernels.backends()
    for crit, target, k, feats in ((kernels.GINI, np.zeros(len(y)), 3, 2),
                                   (kernels.MSE, resid, 1, 6)):
        labels = y if crit == kernels.GINI else np.zeros(len(y), np.int64)
        args = (enc.codes, enc.n_bins, enc.values, enc.offsets, labels, k, target, w, crit,
                6, 2.0, 1.0, feats, seed)
        a, c = b["python"].build_tree(*args), b["native"].build_tree(*args)
        for x, z in zip(a, c):
            assert np.array_equal(np.asarray(x), np.asarray(z))
        t = a[:4]
        assert np.array_equal(b["python"].apply_tree(*t, X), b["native"].apply_tree(*t, X))


@native
def test_backends_grow_identical_isolation_trees():
    pts = np.ascontiguousarray(np.random.default_rng(0).lognormal(size=(256, 2)))
    b = kernels.backends()
    for key in range(10):
        for x, z in zip(b["python"].build_itree(pts, 8, key), b["native"].build_itree(pts, 8, key)):
            assert np.array_equal(np.asarray(x), np.asarray(z))


def test_forced_fallback_gives_the_same_scores():
    code = ("import numpy as np; from wumkit import kernels; "
            "from wumkit.iforest import IForestParams, fit_iforest, score_points; "
            "x = np.random.default_rng(5).lognormal(size=2000); "
            "print(kernels.BACKEND, score_points(fit_iforest(x, IForestParams(seed=1)), x).tobytes().hex())")
    env = dict(os.environ, WUMKIT_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out[0] == "python"
    x = np.random.default_rng(5).lognormal(size=2000)
    here = score_points(fit_iforest(x, IForestParams(seed=1)), x)
    assert out[1] == here.tobytes().hex()
