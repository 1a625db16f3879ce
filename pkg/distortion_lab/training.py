"""
Adversarial training loops.

Every method shares one loop: shuffle, build the training inputs for the
batch (clean, FGSM, fast, PGD-n, checkpointed or fast with a per-epoch ε),
take one SGD step, then log a BatchRecord. Pass counters cover only the
training step; metric evaluation runs afterwards on the updated parameters.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .attacks import AttackOutcome, checkpointed_single_step, fast_single_step, fgsm, pgd
from .datasets.batch import LabeledBatch
from .errors import ConfigurationError
from .metrics import estimate_distortion, gamma, input_grad_l2, perturbation_l1_mean
from .model import Model, ModelSpec, ModelState
from .monitor import collapse_monitor
from .optim import sgd_step
from .rng import stream
from .runlog import BatchRecord, RunLog, read_run_log
from .schedules import LrSchedule, check_schedule, eps_schedule_from_log, lr_at, schedule_from_dict

logger = logging.getLogger(__name__)

METHOD_KINDS = ("standard", "fgsm", "fast", "pgd", "proposed", "fast_eps_schedule")
CADENCES = ("trace", "epoch")
SCOPES = ("batch", "dataset")
# smallest step size of the PGD rule α = max(2/255, ε/n)
PGD_MIN_ALPHA = 2 / 255


def _strict(cls_name: str, data: Dict, allowed) -> Dict:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{cls_name} must be a mapping, got {data!r}")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigurationError(f"Unknown {cls_name} keys: {', '.join(sorted(unknown))}")
    return data


@dataclass
class MethodSpec:
    """Training method and its parameters."""

    kind: str = "standard"
    steps: int = 7
    c: int = 3
    reference: str = "noisy"
    schedule_source: Optional[str] = None
    epsilons: Optional[List[float]] = None

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ConfigurationError(f"Unknown method '{self.kind}', expected one of {', '.join(METHOD_KINDS)}")
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {self.steps}")
        if self.c < 1:
            raise ConfigurationError(f"c must be >= 1, got {self.c}")
        if self.reference not in ("noisy", "clean"):
            raise ConfigurationError(f"reference must be 'noisy' or 'clean', got '{self.reference}'")
        if self.kind == "fast_eps_schedule" and self.schedule_source is None and self.epsilons is None:
            raise ConfigurationError("fast_eps_schedule needs a schedule_source run log or explicit epsilons")

    def label(self) -> str:
        if self.kind == "pgd":
            return f"pgd{self.steps}"
        if self.kind == "proposed":
            return f"proposed-c{self.c}"
        return self.kind

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "steps": self.steps,
            "c": self.c,
            "reference": self.reference,
            "schedule_source": self.schedule_source,
            "epsilons": None if self.epsilons is None else list(self.epsilons),
        }

    @classmethod
    def from_dict(cls, data) -> "MethodSpec":
        if isinstance(data, str):
            data = {"kind": data}
        return cls(**_strict("method", data, cls.__dataclass_fields__))


@dataclass
class AlphaRule:
    """
    Step size of the training attack.

    kinds: "fixed" (α = value), "times_epsilon" (α = value·ε, value defaults
    to 1.25) and "pgd_rule" (α = max(2/255, ε/steps)).
    """

    kind: str = "times_epsilon"
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("fixed", "times_epsilon", "pgd_rule"):
            raise ConfigurationError(f"Unknown alpha rule '{self.kind}'")
        if self.kind == "fixed" and self.value is None:
            raise ConfigurationError("A fixed alpha rule needs a value")
        if self.value is not None and (not math.isfinite(self.value) or self.value < 0):
            raise ConfigurationError(f"alpha rule value must be finite and non-negative, got {self.value}")

    def alpha(self, epsilon: float, steps: int = 1) -> float:
        if self.kind == "fixed":
            return float(self.value)
        if self.kind == "times_epsilon":
            return (1.25 if self.value is None else self.value) * epsilon
        return max(PGD_MIN_ALPHA, epsilon / steps)

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "value": self.value}

    @classmethod
    def from_dict(cls, data) -> "AlphaRule":
        if isinstance(data, str):
            return cls(kind=data)
        if isinstance(data, (int, float)) and not isinstance(data, bool):
            return cls(kind="fixed", value=float(data))
        return cls(**_strict("alpha_rule", data, ("kind", "value")))


def default_alpha_rule(method: MethodSpec) -> AlphaRule:
    if method.kind == "pgd":
        return AlphaRule("pgd_rule")
    return AlphaRule("times_epsilon")


@dataclass
class MetricsConfig:
    """What is evaluated while training, how often and on which examples."""

    cadence: str = "epoch"
    scope: str = "batch"
    eval_pgd_steps: int = 7
    eval_pgd_alpha_ratio: float = 0.25
    distortion_samples: int = 100
    collapse_window: int = 3
    collapse_pgd_floor: float = 0.1
    collapse_fgsm_ceiling: float = 0.5

    def __post_init__(self):
        if self.cadence not in CADENCES:
            raise ConfigurationError(f"metrics cadence must be one of {', '.join(CADENCES)}, got '{self.cadence}'")
        if self.scope not in SCOPES:
            raise ConfigurationError(f"metrics scope must be one of {', '.join(SCOPES)}, got '{self.scope}'")
        if self.eval_pgd_steps < 1 or self.distortion_samples < 1 or self.collapse_window < 1:
            raise ConfigurationError("eval_pgd_steps, distortion_samples and collapse_window must be >= 1")

    def to_dict(self) -> Dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: Dict) -> "MetricsConfig":
        return cls(**_strict("metrics", data, cls.__dataclass_fields__))


@dataclass
class TrainConfig:
    """Everything that determines a training run besides the data and the architecture."""

    method: MethodSpec = field(default_factory=MethodSpec)
    epsilon: float = 8 / 255
    alpha_rule: Optional[AlphaRule] = None
    epochs: int = 1
    batch_size: int = 128
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_schedule: Optional[Dict] = None
    seed: int = 0
    precision: str = "float64"
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise ConfigurationError(f"epsilon must be finite and non-negative, got {self.epsilon}")
        if self.precision not in ("float64", "float32"):
            raise ConfigurationError(f"precision must be float64 or float32, got '{self.precision}'")
        if self.alpha_rule is not None and self.method.kind in ("standard", "fgsm"):
            raise ConfigurationError(f"alpha_rule does not apply to method '{self.method.kind}'")
        self.schedule()

    def schedule(self) -> LrSchedule:
        return schedule_from_dict(self.lr_schedule, self.lr, self.epochs)

    def alpha_for(self, epsilon: float) -> Optional[float]:
        """Training-attack step size at radius ε, None for standard training."""
        if self.method.kind == "standard":
            return None
        if self.method.kind == "fgsm":
            return epsilon
        return (self.alpha_rule or default_alpha_rule(self.method)).alpha(epsilon, self.method.steps)

    def resolved(self) -> "TrainConfig":
        """Copy with a schedule_source replaced by the per-epoch ε it yields."""
        method = self.method
        if method.kind != "fast_eps_schedule" or method.epsilons is not None:
            return self
        source = read_run_log(method.schedule_source)
        epsilons = eps_schedule_from_log(source, self.epochs)
        logger.info(f"Loaded a {len(epsilons)}-epoch ε schedule from {method.schedule_source}")
        resolved_method = MethodSpec(**{**method.to_dict(), "epsilons": epsilons})
        return TrainConfig(**{**self.__dict__, "method": resolved_method})

    def epsilons(self) -> List[float]:
        if self.method.kind == "fast_eps_schedule":
            return check_schedule(self.resolved().method.epsilons, self.epochs)[:self.epochs]
        return [self.epsilon] * self.epochs

    def to_dict(self) -> Dict:
        return {
            "method": self.method.to_dict(),
            "epsilon": self.epsilon,
            "alpha_rule": None if self.alpha_rule is None else self.alpha_rule.to_dict(),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "lr_schedule": self.schedule().to_dict(),
            "seed": self.seed,
            "precision": self.precision,
            "metrics": self.metrics.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "TrainConfig":
        data = dict(_strict("train", data, cls.__dataclass_fields__))
        if "method" in data:
            data["method"] = MethodSpec.from_dict(data["method"])
        if data.get("alpha_rule") is not None:
            data["alpha_rule"] = AlphaRule.from_dict(data["alpha_rule"])
        if "metrics" in data:
            data["metrics"] = MetricsConfig.from_dict(data["metrics"] or {})
        for key in ("epsilon", "lr", "momentum", "weight_decay"):
            if key in data:
                data[key] = float(data[key])
        return cls(**data)


def initial_model(spec: ModelSpec, config: TrainConfig) -> Model:
    """Model initialised from the run's `init` stream."""
    return Model.initialize(spec, stream(config.seed, "init"), config.precision)


def training_inputs(model: Model, batch: LabeledBatch, method: MethodSpec, epsilon: float,
                    alpha: Optional[float], rng: np.random.Generator) -> Optional[AttackOutcome]:
    """The perturbation a method trains on, or None for clean training."""
    if method.kind == "standard":
        return None
    if method.kind == "fgsm":
        return fgsm(model, batch, epsilon)
    if method.kind in ("fast", "fast_eps_schedule"):
        return fast_single_step(model, batch, epsilon, alpha, rng)
    if method.kind == "pgd":
        return pgd(model, batch, epsilon, alpha, method.steps, 1, rng, keep_best=False)
    return checkpointed_single_step(model, batch, epsilon, alpha, method.c, rng, method.reference)


def evaluate_batch(model: Model, batch: LabeledBatch, epsilon: float, metrics: MetricsConfig,
                   rng: np.random.Generator) -> Dict[str, Optional[float]]:
    """Robustness metrics of the current parameters on `batch`, keyed by BatchRecord field."""
    if len(batch) == 0:
        return {}
    y = batch.labels
    fgsm_out = fgsm(model, batch, epsilon)
    pgd_out = pgd(model, batch, epsilon, metrics.eval_pgd_alpha_ratio * epsilon, metrics.eval_pgd_steps, 1, rng)
    grad_l2, grad_sq_l2 = input_grad_l2(model, batch)
    stats = gamma(model, batch, epsilon)
    return {
        "fgsm_acc": float(np.mean(model.predict(fgsm_out.adv_images) == y)),
        "pgd_acc": float(np.mean(model.predict(pgd_out.adv_images) == y)),
        "distortion_d": estimate_distortion(model, batch, epsilon, metrics.distortion_samples).d,
        "mean_abs_pgd_perturbation": perturbation_l1_mean(pgd_out.delta),
        "input_grad_l2": grad_l2,
        "input_grad_sq_l2": grad_sq_l2,
        "mean_gamma": stats.mean_gamma,
        "gamma_negative_fraction": stats.fraction_negative,
    }


def train(config: TrainConfig, dataset: LabeledBatch, model: Model, header: Optional[Dict] = None,
          on_batch: Optional[Callable[[BatchRecord], None]] = None) -> Tuple[ModelState, RunLog]:
    """
    Train `model` in place and log every batch.

    Args:
        config: training configuration
        dataset: training examples
        model: model to train, usually from initial_model
        header: config mapping embedded in the run-log header; defaults to
            the resolved TrainConfig
        on_batch: called with each BatchRecord as soon as it is logged

    Returns:
        Final ModelState and the RunLog
    """
    config = config.resolved()
    dataset.validate(model.spec.n_classes)
    n = len(dataset)
    if config.batch_size > n:
        raise ConfigurationError(f"batch_size {config.batch_size} exceeds dataset size {n}")
    epsilons = config.epsilons()
    schedule = config.schedule()
    metrics = config.metrics
    batches = math.ceil(n / config.batch_size)
    log = RunLog(config=header if header is not None else config.to_dict())
    logger.info(f"Training {config.method.label()} for {config.epochs} epochs of {batches} batches")

    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = stream(config.seed, "shuffle", epoch).permutation(n)
        epsilon = epsilons[epoch]
        alpha = config.alpha_for(epsilon)
        for b in range(batches):
            batch = dataset.subset(order[b * config.batch_size:(b + 1) * config.batch_size])
            lr = lr_at(schedule, epoch + b / batches)
            forwards, backwards = model.forward_count, model.backward_count

            outcome = training_inputs(model, batch, config.method, epsilon, alpha,
                                      stream(config.seed, "attack", epoch, b))
            inputs = batch.images if outcome is None else outcome.adv_images
            grads = model.gradients(inputs, batch.labels, wrt_params=True)
            sgd_step(model.state, grads.params, lr, config.momentum, config.weight_decay)
            forwards, backwards = model.forward_count - forwards, model.backward_count - backwards

            record = BatchRecord(
                epoch=epoch,
                batch_index=b,
                train_loss=grads.loss,
                clean_acc=float(np.mean(model.predict(batch.images) == batch.labels)),
                mean_delta_linf=float(outcome.linf().mean()) if outcome is not None else 0.0,
                zero_k_fraction=float(np.mean(outcome.selected_j == 0)) if outcome is not None and outcome.selected_j is not None else None,
                epsilon_used=epsilon,
                alpha_used=alpha,
                lr_used=lr,
                forward_passes=forwards,
                backward_passes=backwards,
            )
            if metrics.cadence == "trace" or b == batches - 1:
                target = batch if metrics.scope == "batch" else dataset
                evaluated = evaluate_batch(model, target, config.epsilon, metrics, stream(config.seed, "eval", epoch, b))
                for name, value in evaluated.items():
                    setattr(record, name, value)
            log.records.append(record)
            if on_batch is not None:
                on_batch(record)

        seconds = time.perf_counter() - started
        log.epoch_seconds.append(seconds)
        last = log.records[-1]
        logger.info(
            f"Epoch {epoch + 1}/{config.epochs}: lr={last.lr_used:.4g} clean={last.clean_acc:.3f} "
            f"fgsm={_fmt(last.fgsm_acc)} pgd={_fmt(last.pgd_acc)} d={_fmt(last.distortion_d)} ({seconds:.1f}s)"
        )

    log.collapse = collapse_monitor(log.records, metrics.collapse_window, metrics.collapse_pgd_floor,
                                    metrics.collapse_fgsm_ceiling)
    if log.collapse is not None:
        logger.warning(
            f"Catastrophic overfitting at epoch {log.collapse.epoch}, batch {log.collapse.batch_index}: "
            f"PGD accuracy {log.collapse.pgd_mean:.3f}, FGSM accuracy {log.collapse.fgsm_mean:.3f}"
        )
    return model.state, log


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.3f}"
