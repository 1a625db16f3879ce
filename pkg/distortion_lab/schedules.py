"""Learning-rate schedules and per-epoch ε schedules taken from earlier runs."""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .errors import ConfigurationError


@dataclass(frozen=True)
class Constant:
    lr: float
    kind = "constant"

    def lr_at(self, epoch: float) -> float:
        return self.lr

    def to_dict(self) -> Dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class StepDecay:
    """lr = base · factor^(number of milestones ≤ epoch)."""

    base: float
    factor: float
    milestones: Tuple[int, ...] = field(default_factory=tuple)
    kind = "step"

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ConfigurationError(f"Milestones must be strictly increasing, got {list(self.milestones)}")

    def lr_at(self, epoch: float) -> float:
        passed = sum(1 for m in self.milestones if m <= epoch)
        return self.base * self.factor ** passed

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "factor": self.factor, "milestones": list(self.milestones)}


@dataclass(frozen=True)
class Cyclic:
    """Piecewise-linear ramp 0 → max_lr at peak_epoch → 0 at total."""

    max_lr: float
    peak_epoch: float
    total: float
    kind = "cyclic"

    def __post_init__(self):
        if not 0 < self.peak_epoch < self.total:
            raise ConfigurationError(f"Cyclic schedule needs 0 < peak_epoch < total, got {self.peak_epoch} and {self.total}")

    def lr_at(self, epoch: float) -> float:
        if epoch <= self.peak_epoch:
            return self.max_lr * epoch / self.peak_epoch
        if epoch >= self.total:
            return 0.0
        return self.max_lr * (self.total - epoch) / (self.total - self.peak_epoch)

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "max_lr": self.max_lr, "peak_epoch": self.peak_epoch, "total": self.total}


LrSchedule = Union[Constant, StepDecay, Cyclic]


def lr_at(schedule: LrSchedule, epoch: float) -> float:
    """Learning rate at a (possibly fractional) epoch ≥ 0."""
    return schedule.lr_at(max(0.0, epoch))


def schedule_from_dict(data: Optional[Dict], base_lr: float, epochs: int) -> LrSchedule:
    """
    Build a schedule from its config mapping.

    Args:
        data: {"kind": "constant"|"step"|"cyclic", ...}; None means constant
        base_lr: the configured learning rate, used by constant and step
        epochs: default `total` for cyclic schedules

    Returns:
        The schedule
    """
    data = dict(data or {"kind": "constant"})
    kind = data.pop("kind", "constant")
    allowed = {"constant": set(), "step": {"factor", "milestones"}, "cyclic": {"max_lr", "peak_epoch", "total"}}
    if kind not in allowed:
        raise ConfigurationError(f"Unknown lr_schedule kind '{kind}'")
    unknown = set(data) - allowed[kind]
    if unknown:
        raise ConfigurationError(f"Unknown keys for lr_schedule '{kind}': {', '.join(sorted(unknown))}")
    if kind == "constant":
        return Constant(base_lr)
    if kind == "step":
        return StepDecay(base_lr, float(data.get("factor", 0.2)), tuple(data.get("milestones", ())))
    total = float(data.get("total", epochs))
    return Cyclic(float(data.get("max_lr", base_lr)), float(data.get("peak_epoch", total / 2)), total)


def eps_schedule_from_log(run_log, epochs: Optional[int] = None) -> List[float]:
    """
    Per-epoch ε equal to the epoch mean of a run's logged mean_delta_linf.

    Args:
        run_log: RunLog (or any object with `records`) of the source run
        epochs: number of epochs the schedule must cover; defaults to the
            source run's epoch count

    Returns:
        One ε per epoch, starting at epoch 0
    """
    per_epoch: Dict[int, List[float]] = {}
    for record in run_log.records:
        if record.mean_delta_linf is None:
            raise ConfigurationError(f"Source run has no mean_delta_linf at epoch {record.epoch}, batch {record.batch_index}")
        per_epoch.setdefault(record.epoch, []).append(record.mean_delta_linf)
    if not per_epoch:
        raise ConfigurationError("Source run log has no records")
    available = max(per_epoch) + 1
    missing = [e for e in range(available) if e not in per_epoch]
    if missing:
        raise ConfigurationError(f"Source run log is missing epochs {missing}")
    epochs = available if epochs is None else epochs
    if epochs > available:
        raise ConfigurationError(f"Source run covers {available} epochs but {epochs} are needed")
    return [math.fsum(per_epoch[e]) / len(per_epoch[e]) for e in range(epochs)]


def check_schedule(epsilons: Sequence[float], epochs: int) -> List[float]:
    values = [float(v) for v in epsilons]
    if len(values) < epochs:
        raise ConfigurationError(f"ε schedule has {len(values)} entries but training runs {epochs} epochs")
    if any(not math.isfinite(v) or v < 0 for v in values):
        raise ConfigurationError("ε schedule entries must be finite and non-negative")
    return values
