"""Detection of catastrophic overfitting in a run's batch records."""
import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, Optional

from .errors import ConfigurationError


@dataclass(frozen=True)
class CollapseEvent:
    """The record at which PGD accuracy collapsed while FGSM accuracy stayed high."""

    epoch: int
    batch_index: int
    pgd_mean: float
    fgsm_mean: float

    def to_dict(self) -> Dict:
        return asdict(self)


def collapse_monitor(records: Iterable, window: int = 3, pgd_floor: float = 0.1,
                     fgsm_ceiling: float = 0.5) -> Optional[CollapseEvent]:
    """
    First record whose trailing-window means satisfy pgd < floor and fgsm > ceiling.

    Only records where both accuracies were evaluated take part; the window
    holds the last `window` of them (fewer at the start of a run).

    Args:
        records: BatchRecords in training order
        window: window length, ≥ 1
        pgd_floor: PGD accuracy below which robustness is considered lost
        fgsm_ceiling: FGSM accuracy above which the single-step attack is considered beaten

    Returns:
        CollapseEvent or None
    """
    if window < 1:
        raise ConfigurationError(f"window must be >= 1, got {window}")
    pgd, fgsm = [], []
    for record in records:
        if record.pgd_acc is None or record.fgsm_acc is None:
            continue
        pgd.append(record.pgd_acc)
        fgsm.append(record.fgsm_acc)
        pgd_mean = math.fsum(pgd[-window:]) / len(pgd[-window:])
        fgsm_mean = math.fsum(fgsm[-window:]) / len(fgsm[-window:])
        if pgd_mean < pgd_floor and fgsm_mean > fgsm_ceiling:
            return CollapseEvent(record.epoch, record.batch_index, pgd_mean, fgsm_mean)
    return None
