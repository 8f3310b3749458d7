"""
Finite-difference suites: objective gradient, decomposition identity and
backprop through the unrolled layers.
Run with: pytest tests/test_gradcheck.py
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.gradcheck import (
    BACKWARD_TOL,
    check_backward,
    check_decomposition,
    check_grad_rho,
    numerical_gradient,
    relative_error,
)


def test_numerical_gradient_quadratic():
    g = numerical_gradient(lambda x: float(np.sum(x ** 2)), np.array([0.3, -1.2, 2.0]))
    np.testing.assert_allclose(g, [0.6, -2.4, 4.0], rtol=1e-8)


def test_numerical_gradient_steps_inward_at_bounds():
    """At x = 0 with lower bound 0 the stencil never evaluates f below 0."""
    seen = []

    def f(x):
        seen.append(float(x[0]))
        return float(x[0] ** 3 + x[0])

    g = numerical_gradient(f, np.array([0.0]), h=1e-4, lower=0.0, upper=1.0)
    assert min(seen) >= 0.0
    assert g[0] == pytest.approx(1.0, rel=1e-6)
    g = numerical_gradient(f, np.array([1.0]), h=1e-4, lower=0.0, upper=1.0)
    assert g[0] == pytest.approx(4.0, rel=1e-6)


def test_relative_error_scale():
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_error(np.array([100.0]), np.array([101.0])) == pytest.approx(1 / 101)


def test_grad_rho_suite():
    result = check_grad_rho(n_cases=20, sizes=(1, 2, 5, 10))
    assert result.cases == 80
    assert result.passed, result


def test_decomposition_suite():
    result = check_decomposition(n_cases=100)
    assert result.passed, result


def test_backward_suite_both_variants():
    result = check_backward(variants=("scalar_step", "mlp_layer"), layer_counts=(1, 3, 5),
                            link_counts=(2, 4), n_cases=2)
    assert result.cases == 2 * 3 * 2 * 2
    assert result.max_rel_error <= BACKWARD_TOL, result


def test_backward_error_is_normalised_per_network():
    """A parameter with a 1e-12 gradient and rounding-level error does not fail the case."""
    analytic = np.concatenate([np.array([0.3, -0.2]), np.array([1e-12])])
    numeric = np.concatenate([np.array([0.3, -0.2]), np.array([1.5e-12])])
    assert relative_error(analytic, numeric) < 1e-11
    assert relative_error(analytic[2:], numeric[2:], floor=1e-300) > 0.3


def test_backward_suite_mlp_deep_stacks():
    result = check_backward(variants=("mlp_layer",), layer_counts=(5,), link_counts=(4,), n_cases=4, seed=3)
    assert result.cases == 4
    assert result.passed, result


def test_backward_suite_with_step_scale():
    result = check_backward(variants=("scalar_step",), layer_counts=(1, 3), link_counts=(2, 4),
                            n_cases=2, p_max=2.0)
    assert result.passed, result
