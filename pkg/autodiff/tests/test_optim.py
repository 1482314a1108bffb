"""
Unit tests for the RMSProp update and the learning-rate schedule.
"""

import math

import numpy as np
from django.test import SimpleTestCase

from autodiff.optim import rmsprop_step, step_decay_lr
from autodiff.tensor import Parameter


class RMSPropTest(SimpleTestCase):
    """Tests for rmsprop_step."""

    def test_zero_gradient_leaves_parameter(self):
        """A zero gradient changes neither the value nor the sign of anything."""
        p = Parameter([1.0, -2.0])
        p.grad = np.zeros(2)
        rmsprop_step([p], lr=0.1)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])
        np.testing.assert_array_equal(p.accumulator, [0.0, 0.0])

    def test_single_step_closed_form(self):
        """rho=0.9, g=1, acc=0: acc becomes 0.1 and theta drops by lr/(sqrt(0.1)+eps)."""
        p = Parameter(0.0)
        p.grad = np.array(1.0)
        rmsprop_step([p], lr=0.0005, decay_rate=0.9, eps=1e-8)
        self.assertAlmostEqual(float(p.accumulator), 0.1, places=15)
        self.assertAlmostEqual(float(p.data), -0.0005 / (math.sqrt(0.1) + 1e-8), places=15)
        self.assertIsNone(p.grad)

    def test_three_step_recurrence(self):
        """Three updates follow the scalar recurrence exactly."""
        grads = [0.5, -1.2, 2.0]
        p = Parameter(3.0)
        acc, theta = 0.0, 3.0
        for g in grads:
            p.grad = np.array(g)
            rmsprop_step([p], lr=0.01, decay_rate=0.9, eps=1e-8)
            acc = 0.9 * acc + 0.1 * g * g
            theta = theta - 0.01 * g / (math.sqrt(acc) + 1e-8)
        self.assertAlmostEqual(float(p.data), theta, places=12)
        self.assertAlmostEqual(float(p.accumulator), acc, places=12)

    def test_parameters_without_gradient_are_skipped(self):
        """A parameter that received no gradient is left alone."""
        p = Parameter([4.0])
        p.accumulator[:] = 0.3
        rmsprop_step([p], lr=1.0)
        np.testing.assert_array_equal(p.data, [4.0])
        np.testing.assert_array_equal(p.accumulator, [0.3])


class ScheduleTest(SimpleTestCase):
    """Tests for step_decay_lr."""

    def test_decay_every_two_epochs(self):
        """The rate drops by 0.9 every two epochs."""
        rates = [step_decay_lr(0.0005, 0.9, 2, epoch) for epoch in range(5)]
        self.assertEqual(rates[0], 0.0005)
        self.assertEqual(rates[1], 0.0005)
        self.assertAlmostEqual(rates[2], 0.0005 * 0.9)
        self.assertAlmostEqual(rates[4], 0.0005 * 0.9 ** 2)
