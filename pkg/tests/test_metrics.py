import unittest
from fractions import Fraction

import numpy as np

from distortion_lab.attacks import AttackSpec
from distortion_lab.datasets import LabeledBatch
from distortion_lab.errors import ConfigurationError
from distortion_lab.layers import Dense
from distortion_lab.metrics import (
    estimate_distortion,
    gamma,
    input_grad_l2,
    label_changes_along,
    perturbation_l1_mean,
    probe_scales,
    robust_accuracy,
    robust_accuracy_table,
)
from distortion_lab.model import Model, ModelSpec, ModelState

from .stubs import AffineLossStub, ConcaveLossStub, RegionStub, blobs, line_batch, make_model, mlp_spec

THRESHOLD_XS = [0.1, 0.2, 0.3, 0.42, 0.45, 0.6, 0.7, 0.8, 0.9, 0.95]


def _robust_linear_model():
    """1-D model predicting class 0 everywhere on [0, 1] with a nonzero input gradient."""
    spec = ModelSpec((1,), (Dense(1, 2),), 2)
    return Model(spec, ModelState({"0.weight": np.array([[0.0], [1.0]]), "0.bias": np.array([2.0, 0.0])}))


def _grid_oracle(stub, x, epsilon, label=0):
    """Whether any point of the open FGSM segment is misclassified, on a 1e-4 grid."""
    ks = np.arange(1, 10000) * 1e-4
    points = np.clip(x + ks * epsilon * np.sign(stub.gradient), 0.0, 1.0).reshape(-1, 1)
    return bool(np.any(stub.logits(points).argmax(axis=1) != label))


class TestDistortion(unittest.TestCase):
    def test_distorted_fixture(self):
        """Correct at both ends, wrong exactly for k in (0.3, 0.5): d = 1."""
        stub = RegionStub(0.35, 0.45)
        estimate = estimate_distortion(stub, line_batch([0.2]), 0.5, n_samples=100)
        self.assertEqual(estimate.d, 1.0)
        self.assertEqual((estimate.n_S_N, estimate.n_S_D_and_S_N), (1, 1))
        self.assertTrue(_grid_oracle(stub, 0.2, 0.5))

    def test_matches_dense_grid_oracle(self):
        stub = RegionStub(0.35, 0.45)
        xs = [0.0, 0.1, 0.2, 0.3, 0.5, 0.6, 0.9]
        estimate = estimate_distortion(stub, line_batch(xs), 0.5, n_samples=100)
        for x, member, distorted in zip(xs, estimate.in_S_N, estimate.distorted):
            if member:
                self.assertEqual(bool(distorted), _grid_oracle(stub, x, 0.5), x)

    def test_linear_model_has_no_distortion(self):
        estimate = estimate_distortion(_robust_linear_model(), line_batch(np.linspace(0, 1, 11)), 0.3)
        self.assertEqual(estimate.d, 0.0)
        self.assertEqual(estimate.n_S_N, 11)

    def test_undefined_when_nothing_is_correct(self):
        estimate = estimate_distortion(RegionStub(-1.0, 2.0), line_batch([0.2, 0.5]), 0.1)
        self.assertIsNone(estimate.d)
        self.assertFalse(estimate.defined)
        self.assertEqual(estimate.n_S_N, 0)
        self.assertIsNone(estimate.to_dict()["d"])

    def test_wrong_endpoint_excludes_example(self):
        estimate = estimate_distortion(RegionStub(0.6, 2.0), line_batch([0.2]), 0.5)
        self.assertFalse(estimate.in_S_N[0])
        self.assertIsNone(estimate.d)

    def test_probe_grid(self):
        self.assertEqual(probe_scales(3), [0.25, 0.5, 0.75])
        self.assertTrue(set(probe_scales(1)) <= set(probe_scales(3)))
        with self.assertRaises(ConfigurationError):
            estimate_distortion(RegionStub(0.3, 0.4), line_batch([0.2]), 0.1, n_samples=0)

    def test_label_changes(self):
        changes = label_changes_along(RegionStub(0.35, 0.45), line_batch([0.2, 0.9]), 0.5)
        self.assertEqual(list(changes), [2, 1])


class TestGamma(unittest.TestCase):
    def test_affine_loss_gives_zero(self):
        rng = np.random.default_rng(5)
        stub = AffineLossStub(rng.normal(size=3), bias=0.7)
        batch = LabeledBatch(rng.uniform(size=(20, 3)), np.zeros(20), 2)
        for epsilon in rng.uniform(1e-3, 0.5, size=10):
            stats = gamma(stub, batch, epsilon)
            self.assertLessEqual(np.max(np.abs(stats.per_example_gamma)), 1e-9)

    def test_concave_loss(self):
        """For 1 − (x − x0)², γ = −ε² whenever the gradient is nonzero."""
        stats = gamma(ConcaveLossStub(0.5), line_batch([0.2, 0.9]), 0.1)
        np.testing.assert_allclose(stats.per_example_gamma, [-0.01, -0.01], rtol=0, atol=1e-12)
        self.assertEqual(stats.fraction_negative, 1.0)

    def test_zero_radius(self):
        stats = gamma(make_model(mlp_spec(), seed=1), blobs(n_per_class=10), 0.0)
        np.testing.assert_array_equal(stats.per_example_gamma, np.zeros(20))

    def test_mean_and_histogram(self):
        stats = gamma(make_model(mlp_spec(), seed=1), blobs(n_per_class=25), 0.1)
        self.assertAlmostEqual(stats.mean_gamma, float(np.mean(stats.per_example_gamma)), places=12)
        counts, edges = stats.histogram(bins=5)
        self.assertEqual(int(counts.sum()), 50)
        self.assertEqual(len(edges), 6)

    def test_empty_batch(self):
        stats = gamma(AffineLossStub([1.0]), line_batch([]), 0.1)
        self.assertEqual(stats.mean_gamma, 0.0)


class TestRobustAccuracy(unittest.TestCase):
    def setUp(self):
        self.fgsm = AttackSpec("fgsm", 0.1)

    def test_constant_correct(self):
        self.assertEqual(robust_accuracy(RegionStub(2.0, 3.0), line_batch([0.1, 0.5, 0.9]), self.fgsm), 1.0)

    def test_always_wrong(self):
        self.assertEqual(robust_accuracy(RegionStub(-1.0, 2.0), line_batch([0.1, 0.5, 0.9]), self.fgsm), 0.0)

    def test_restrict_to_correct(self):
        """Half the clean set is wrong; restricting halves the denominator (3 of 5 survive)."""
        stub = RegionStub(0.5, np.inf)
        batch = line_batch(THRESHOLD_XS)
        self.assertEqual(robust_accuracy(stub, batch, self.fgsm), 0.3)
        self.assertEqual(robust_accuracy(stub, batch, self.fgsm, restrict_to_correct=True), 0.6)

    def test_nothing_correct_reports_zero(self):
        with self.assertLogs("distortion_lab.metrics", level="WARNING"):
            value = robust_accuracy(RegionStub(-1.0, 2.0), line_batch([0.5]), self.fgsm, restrict_to_correct=True)
        self.assertEqual(value, 0.0)

    def test_table(self):
        stub = RegionStub(0.5, np.inf)
        rows = robust_accuracy_table(stub, line_batch(THRESHOLD_XS), [self.fgsm, AttackSpec("pgd", 0.1, steps=5)],
                                     np.random.default_rng(0))
        self.assertEqual([row.attack for row in rows], ["Clean", "FGSM", "PGD-5"])
        self.assertEqual((rows[0].accuracy, rows[0].n_correct), (0.5, 5))
        self.assertEqual((rows[1].accuracy, rows[1].accuracy_on_correct), (0.3, 0.6))
        self.assertEqual(rows[2].to_dict()["attack"], "PGD-5")


class TestNorms(unittest.TestCase):
    def test_perturbation_l1_mean(self):
        self.assertAlmostEqual(perturbation_l1_mean(np.array([[0.1, -0.2], [0.0, 0.3]])), 0.15, places=15)
        self.assertEqual(perturbation_l1_mean(np.zeros((0, 2))), 0.0)

    def test_perturbation_l1_mean_saturated(self):
        epsilon = 8 / 255
        signs = np.random.default_rng(3).choice([-1.0, 1.0], size=(50, 3, 8, 8))
        self.assertAlmostEqual(perturbation_l1_mean(epsilon * signs), epsilon, places=15)

    def test_perturbation_l1_mean_exact_oracle(self):
        deltas = np.random.default_rng(4).uniform(-0.3, 0.3, size=(40, 7, 9))
        exact = sum(Fraction(float(v)) for v in np.abs(deltas).ravel()) / deltas.size
        self.assertLessEqual(abs(perturbation_l1_mean(deltas) - float(exact)), 1e-15 * float(exact))

    def test_input_grad_l2(self):
        stub = AffineLossStub([3.0, 4.0])
        batch = LabeledBatch(np.full((4, 2), 0.5), np.zeros(4), 2)
        self.assertEqual(input_grad_l2(stub, batch), (5.0, 25.0))


if __name__ == '__main__':
    unittest.main()
