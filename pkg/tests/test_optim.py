import unittest

import numpy as np

from distortion_lab.errors import ConfigurationError
from distortion_lab.model import ModelState
from distortion_lab.optim import sgd_step


class TestSGD(unittest.TestCase):
    def setUp(self):
        self.state = ModelState({"0.weight": np.array([[1.0, -2.0]]), "0.bias": np.array([0.5])})

    def test_plain_step(self):
        grads = {"0.weight": np.array([[0.5, 0.5]]), "0.bias": np.array([1.0])}
        sgd_step(self.state, grads, lr=0.1)
        np.testing.assert_allclose(self.state.params["0.weight"], [[0.95, -2.05]])
        np.testing.assert_allclose(self.state.params["0.bias"], [0.4])

    def test_momentum_accumulates(self):
        grads = {"0.weight": np.zeros((1, 2)), "0.bias": np.array([1.0])}
        sgd_step(self.state, grads, lr=0.1, momentum=0.9)
        sgd_step(self.state, grads, lr=0.1, momentum=0.9)
        # v1 = 1, v2 = 0.9 + 1
        np.testing.assert_allclose(self.state.momentum_buffers["0.bias"], [1.9])
        np.testing.assert_allclose(self.state.params["0.bias"], [0.5 - 0.1 * (1.0 + 1.9)])

    def test_weight_decay_pulls_towards_zero(self):
        zero = {"0.weight": np.zeros((1, 2)), "0.bias": np.zeros(1)}
        sgd_step(self.state, zero, lr=0.1, weight_decay=0.5)
        np.testing.assert_allclose(self.state.params["0.weight"], [[0.95, -1.9]])

    def test_zero_gradient_is_a_fixed_point(self):
        before = self.state.copy()
        zero = {"0.weight": np.zeros((1, 2)), "0.bias": np.zeros(1)}
        for _ in range(3):
            sgd_step(self.state, zero, lr=0.1, momentum=0.9, weight_decay=0.0)
        for key in before.params:
            np.testing.assert_array_equal(self.state.params[key], before.params[key])
            np.testing.assert_array_equal(self.state.momentum_buffers[key], np.zeros_like(before.params[key]))

    def test_mismatched_keys(self):
        with self.assertRaises(ConfigurationError):
            sgd_step(self.state, {"0.weight": np.zeros((1, 2))}, lr=0.1)

    def test_mismatched_shapes(self):
        with self.assertRaises(ConfigurationError):
            sgd_step(self.state, {"0.weight": np.zeros(2), "0.bias": np.zeros(1)}, lr=0.1)


if __name__ == '__main__':
    unittest.main()
