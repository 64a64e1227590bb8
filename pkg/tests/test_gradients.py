import numpy as np
import pytest

import gradcheck as gc

SEEDS = range(100)


@pytest.mark.parametrize("op", sorted(gc.SUITE))
def test_analytic_gradient_matches_central_differences(op):
    worst = max(gc.SUITE[op](s) for s in SEEDS)
    assert worst < gc.TOL, f"{op}: relative error {worst:.2e}"


@pytest.mark.parametrize("seed", range(3))
def test_detector_composed_gradient_on_8x8_patches(seed):
    assert gc.check_detector(seed, size=8) < gc.TOL


def test_lstm_longer_unroll():
    assert max(gc.check_lstm_unroll(s, steps=8) for s in range(5)) < gc.TOL


def test_rel_error_floor():
    assert gc.rel_error([0.0], [1e-9]) < 1e-2
    assert gc.rel_error([1.0], [1.1]) == pytest.approx(0.1 / 1.1)


def test_numeric_grad_of_square():
    x = np.array([1.0, -2.0, 3.0])
    g = gc.numeric_grad(lambda: float(np.sum(x ** 2)), x)
    np.testing.assert_allclose(g, 2 * x, rtol=1e-8)
