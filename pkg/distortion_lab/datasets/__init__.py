from .batch import LabeledBatch
from .cifar10 import load_cifar10_bin
from .idx import load_idx
from .synthetic import SyntheticSpec, gen_gaussian_blobs

__all__ = ["LabeledBatch", "SyntheticSpec", "gen_gaussian_blobs", "load_cifar10_bin", "load_idx"]
