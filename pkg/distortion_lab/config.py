"""
YAML run configuration.

Key tree (version 1); unknown keys are rejected at every level:

    version: 1
    seed: 0
    precision: float64            # or float32
    dataset:                      # kind: synthetic | cifar10 | idx
      kind: synthetic
      means: [[0.2, 0.2], [0.8, 0.8]]
      sigma: 0.05
      n_per_class: 200
      image_shape: null           # e.g. [1, 4, 4] for convolutional models
      limit: null                 # keep only the first n examples
    model:
      input_shape: [2]
      n_classes: 2
      layers: [{kind: dense, in_features: 2, out_features: 16}, relu, {kind: dense, in_features: 16, out_features: 2}]
    train:                        # TrainConfig without seed, precision and metrics
      method: {kind: proposed, c: 3}
      epsilon: 0.25
      epochs: 10
      batch_size: 64
    metrics: {cadence: epoch, scope: batch, eval_pgd_steps: 7}
    eval:
      epsilon: null               # defaults to train.epsilon
      attacks: [{kind: fgsm}, {kind: pgd, steps: 50, restarts: 10}]
      dataset: null               # defaults to the training dataset
    surface: {anchor_index: 0, v1_source: fgsm, resolution: 21, symmetric: false}
    output: {runs_dir: ./runs}
"""
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from .attacks import AttackSpec
from .datasets import LabeledBatch, SyntheticSpec, gen_gaussian_blobs, load_cifar10_bin, load_idx
from .errors import ConfigurationError
from .model import ModelSpec
from .rng import stream
from .training import MetricsConfig, TrainConfig

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
DATASET_KINDS = ("synthetic", "cifar10", "idx")


def _check_keys(section: str, data, allowed) -> Dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"'{section}' must be a mapping")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigurationError(f"Unknown key '{section}.{unknown[0]}'")
    return dict(data)


@dataclass
class DatasetConfig:
    """Where the examples come from."""

    kind: str = "synthetic"
    synthetic: Optional[SyntheticSpec] = None
    paths: List[str] = field(default_factory=list)
    images: Optional[str] = None
    labels: Optional[str] = None
    add_channel_axis: bool = False
    limit: Optional[int] = None

    def load(self) -> LabeledBatch:
        if self.kind == "synthetic":
            batch = gen_gaussian_blobs(self.synthetic)
        elif self.kind == "cifar10":
            batch = load_cifar10_bin(self.paths)
        else:
            batch = load_idx(self.images, self.labels, add_channel_axis=self.add_channel_axis)
        if self.limit is not None:
            batch = batch.subset(np.arange(min(self.limit, len(batch))))
        return batch

    def to_dict(self) -> Dict:
        data: Dict = {"kind": self.kind}
        if self.kind == "synthetic":
            data.update({k: v for k, v in self.synthetic.to_dict().items() if k != "kind"})
        elif self.kind == "cifar10":
            data["paths"] = list(self.paths)
        else:
            data.update({"images": self.images, "labels": self.labels, "add_channel_axis": self.add_channel_axis})
        data["limit"] = self.limit
        return data

    @classmethod
    def from_dict(cls, data: Dict, seed: int, section: str = "dataset") -> "DatasetConfig":
        data = dict(data or {})
        kind = data.pop("kind", "synthetic")
        limit = data.pop("limit", None)
        if kind not in DATASET_KINDS:
            raise ConfigurationError(f"Unknown {section}.kind '{kind}', expected one of {', '.join(DATASET_KINDS)}")
        if limit is not None and int(limit) < 0:
            raise ConfigurationError(f"{section}.limit must be non-negative")
        limit = None if limit is None else int(limit)
        if kind == "synthetic":
            if "seed" not in data:
                # derived from the run seed through the data stream
                data["seed"] = int(stream(seed, "data").integers(2 ** 31))
            return cls(kind=kind, synthetic=SyntheticSpec.from_dict(data), limit=limit)
        if kind == "cifar10":
            data = _check_keys(section, data, ("paths",))
            paths = data.get("paths") or []
            return cls(kind=kind, paths=[paths] if isinstance(paths, str) else list(paths), limit=limit)
        data = _check_keys(section, data, ("images", "labels", "add_channel_axis"))
        if not data.get("images") or not data.get("labels"):
            raise ConfigurationError(f"{section} of kind idx needs 'images' and 'labels' paths")
        return cls(kind=kind, images=data["images"], labels=data["labels"],
                   add_channel_axis=bool(data.get("add_channel_axis", False)), limit=limit)


@dataclass
class EvalConfig:
    epsilon: Optional[float] = None
    attacks: List[Dict] = field(default_factory=lambda: [{"kind": "fgsm"}, {"kind": "pgd", "steps": 50, "restarts": 10}])
    dataset: Optional[DatasetConfig] = None

    def attack_specs(self, default_epsilon: float) -> List[AttackSpec]:
        """AttackSpecs with missing ε filled in; PGD α defaults to ε/4."""
        epsilon = self.epsilon if self.epsilon is not None else default_epsilon
        specs = []
        for item in self.attacks:
            item = {"epsilon": epsilon, **item}
            if item.get("kind") == "pgd" and "alpha" not in item:
                item["alpha"] = item["epsilon"] / 4
            specs.append(AttackSpec.from_dict(item))
        return specs

    def to_dict(self) -> Dict:
        return {
            "epsilon": self.epsilon,
            "attacks": [dict(a) for a in self.attacks],
            "dataset": None if self.dataset is None else self.dataset.to_dict(),
        }


@dataclass
class SurfaceConfig:
    anchor_index: int = 0
    v1_source: str = "fgsm"
    resolution: int = 21
    symmetric: bool = False
    a_range: Tuple[float, float] = (0.0, 1.0)
    b_range: Tuple[float, float] = (0.0, 1.0)
    epsilon: Optional[float] = None

    def __post_init__(self):
        if self.resolution < 2:
            raise ConfigurationError(f"surface.resolution must be >= 2, got {self.resolution}")
        if self.v1_source not in ("fgsm", "fast"):
            raise ConfigurationError(f"surface.v1_source must be fgsm or fast, got '{self.v1_source}'")
        self.a_range = tuple(float(v) for v in self.a_range)
        self.b_range = tuple(float(v) for v in self.b_range)

    def to_dict(self) -> Dict:
        return {
            "anchor_index": self.anchor_index,
            "v1_source": self.v1_source,
            "resolution": self.resolution,
            "symmetric": self.symmetric,
            "a_range": list(self.a_range),
            "b_range": list(self.b_range),
            "epsilon": self.epsilon,
        }


@dataclass
class OutputConfig:
    runs_dir: str = field(default_factory=lambda: os.getenv("DLAB_RUNS_DIR", "./runs"))

    def to_dict(self) -> Dict:
        return {"runs_dir": self.runs_dir}


@dataclass
class LabConfig:
    """A complete, resolved run configuration."""

    seed: int
    precision: str
    dataset: DatasetConfig
    model: ModelSpec
    train: TrainConfig
    eval: EvalConfig = field(default_factory=EvalConfig)
    surface: SurfaceConfig = field(default_factory=SurfaceConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def metrics(self) -> MetricsConfig:
        return self.train.metrics

    def to_dict(self) -> Dict:
        train = self.train.to_dict()
        metrics = train.pop("metrics")
        train.pop("seed")
        train.pop("precision")
        return {
            "version": CONFIG_VERSION,
            "seed": self.seed,
            "precision": self.precision,
            "dataset": self.dataset.to_dict(),
            "model": self.model.to_dict(),
            "train": train,
            "metrics": metrics,
            "eval": self.eval.to_dict(),
            "surface": self.surface.to_dict(),
            "output": self.output.to_dict(),
        }

    def derive(self, train: Optional[Dict] = None, **top) -> "LabConfig":
        """Copy with some train keys and top-level sections replaced."""
        data = self.to_dict()
        data["train"].update(train or {})
        data.update(top)
        return LabConfig.from_dict(data)

    @classmethod
    def from_dict(cls, data: Dict) -> "LabConfig":
        data = _check_keys("", data, ("version", "seed", "precision", "dataset", "model", "train",
                                      "metrics", "eval", "surface", "output"))
        version = data.get("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigurationError(f"Unsupported config version {version}")
        seed = int(data.get("seed", 0))
        precision = data.get("precision", "float64")
        if "model" not in data:
            raise ConfigurationError("Missing key 'model'")
        train = _check_keys("train", data.get("train"), set(TrainConfig.__dataclass_fields__) - {"seed", "precision", "metrics"})
        train_config = TrainConfig.from_dict({**train, "seed": seed, "precision": precision,
                                              "metrics": data.get("metrics") or {}})
        eval_data = _check_keys("eval", data.get("eval"), ("epsilon", "attacks", "dataset"))
        eval_config = EvalConfig(
            epsilon=None if eval_data.get("epsilon") is None else float(eval_data["epsilon"]),
            attacks=list(eval_data.get("attacks") or EvalConfig().attacks),
            dataset=None if eval_data.get("dataset") is None else DatasetConfig.from_dict(eval_data["dataset"], seed, "eval.dataset"),
        )
        for attack in eval_config.attacks:
            _check_keys("eval.attacks", attack, AttackSpec.__dataclass_fields__)
        surface = _check_keys("surface", data.get("surface"), SurfaceConfig.__dataclass_fields__)
        output = _check_keys("output", data.get("output"), ("runs_dir",))
        model_data = data["model"]
        if not isinstance(model_data, dict):
            raise ConfigurationError("'model' must be a mapping")
        return cls(
            seed=seed,
            precision=precision,
            dataset=DatasetConfig.from_dict(data.get("dataset"), seed),
            model=ModelSpec.from_dict(model_data),
            train=train_config,
            eval=eval_config,
            surface=SurfaceConfig(**surface),
            output=OutputConfig(**output),
        )


def load_config(path: Union[str, Path]) -> LabConfig:
    """Read and validate a YAML configuration file."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Invalid YAML in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} does not contain a configuration mapping")
    config = LabConfig.from_dict(data)
    logger.debug(f"Loaded configuration from {path}")
    return config


def save_config(config: LabConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=False)
    return path
