"""Hand-built classifiers and fixtures shared by the test suites."""
import numpy as np

from distortion_lab.datasets import LabeledBatch, SyntheticSpec, gen_gaussian_blobs
from distortion_lab.layers import Conv2d, Dense, Flatten, ReLU
from distortion_lab.model import Gradients, Model, ModelSpec, softmax_cross_entropy


def mlp_spec(n_in=2, hidden=8, n_classes=2):
    return ModelSpec((n_in,), (Dense(n_in, hidden), ReLU(), Dense(hidden, n_classes)), n_classes)


def conv_spec(stride=1, pad=1):
    conv = Conv2d(1, 2, 3, stride=stride, pad=pad)
    out = conv.output_shape((1, 5, 5))
    flat = int(np.prod(out))
    return ModelSpec((1, 5, 5), (conv, ReLU(), Flatten(), Dense(flat, 3)), 3)


def make_model(spec, seed=0):
    return Model.initialize(spec, np.random.default_rng(seed))


def blobs(n_per_class=50, sigma=0.05, seed=0, means=((0.2, 0.2), (0.8, 0.8))):
    return gen_gaussian_blobs(SyntheticSpec(means=[list(m) for m in means], sigma=sigma,
                                            n_per_class=n_per_class, seed=seed))


def line_batch(values, label=0):
    """1-D examples with the given pixel values, all labelled `label`."""
    values = np.asarray(values, dtype=np.float64)
    return LabeledBatch(values.reshape(-1, 1), np.full(len(values), label), 2)


class _Stub:
    """Counts passes like Model and scales input gradients by the reduction."""

    n_classes = 2

    def __init__(self):
        self.forward_count = 0
        self.backward_count = 0

    def logits(self, images):
        raise NotImplementedError

    def per_example(self, images, labels):
        return softmax_cross_entropy(self.logits(images), labels, reduction="none")

    def input_gradient(self, images):
        raise NotImplementedError

    def forward(self, images):
        self.forward_count += 1
        return self.logits(np.asarray(images, dtype=np.float64))

    def losses(self, images, labels):
        self.forward_count += 1
        return self.per_example(np.asarray(images, dtype=np.float64), labels)

    def gradients(self, images, labels, reduction="mean", wrt_params=False):
        images = np.asarray(images, dtype=np.float64)
        self.forward_count += 1
        self.backward_count += 1
        losses = self.per_example(images, labels)
        grad = self.input_gradient(images)
        if reduction == "mean" and len(images):
            grad = grad / len(images)
        total = float(losses.sum())
        return Gradients(
            logits=self.logits(images),
            loss=total if reduction == "sum" else total / max(len(images), 1),
            losses=losses,
            input=grad,
        )


class RegionStub(_Stub):
    """
    Two-class stub on the first pixel: class 1 strictly inside (lo, hi), class 0
    elsewhere. The input gradient is the constant `gradient` everywhere.
    """

    def __init__(self, lo, hi, gradient=1.0):
        super().__init__()
        self.lo, self.hi, self.gradient = lo, hi, gradient

    def logits(self, images):
        x = images.reshape(len(images), -1)[:, 0]
        inside = (x > self.lo) & (x < self.hi)
        return np.where(inside[:, None], [[0.0, 4.0]], [[4.0, 0.0]])

    def input_gradient(self, images):
        return np.full(images.shape, float(self.gradient))


class AffineLossStub(_Stub):
    """Per-example loss w·x + b, so the loss is exactly affine in the input."""

    def __init__(self, weights, bias=1.0):
        super().__init__()
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = bias

    def logits(self, images):
        return np.zeros((len(images), 2))

    def per_example(self, images, labels):
        flat = images.reshape(len(images), -1)
        return flat @ self.weights.ravel() + self.bias

    def input_gradient(self, images):
        return np.broadcast_to(self.weights, images.shape).copy()


class ConcaveLossStub(_Stub):
    """1-D loss −(x − x0)² + 1."""

    def __init__(self, x0):
        super().__init__()
        self.x0 = x0

    def logits(self, images):
        return np.zeros((len(images), 2))

    def per_example(self, images, labels):
        return 1.0 - (images[:, 0] - self.x0) ** 2

    def input_gradient(self, images):
        return -2.0 * (images - self.x0)


class ScriptedStub(_Stub):
    """
    Replays per-call correctness: call t of gradients/forward predicts the true
    label where script[t] is True and another label elsewhere.
    """

    def __init__(self, script, labels):
        super().__init__()
        self.script = [np.asarray(row, dtype=bool) for row in script]
        self.labels = np.asarray(labels)
        self.calls = 0

    def logits(self, images):
        correct = self.script[min(self.calls, len(self.script) - 1)]
        pred = np.where(correct, self.labels, (self.labels + 1) % self.n_classes)
        out = np.zeros((len(images), self.n_classes))
        out[np.arange(len(images)), pred] = 1.0
        return out

    def input_gradient(self, images):
        return np.ones(images.shape)

    def forward(self, images):
        logits = super().forward(images)
        self.calls += 1
        return logits

    def gradients(self, images, labels, reduction="mean", wrt_params=False):
        result = super().gradients(images, labels, reduction, wrt_params)
        self.calls += 1
        return result
