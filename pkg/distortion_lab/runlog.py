"""
Run logs: one JSON object per line.

The first line is a header, {"schema": "distortion-lab/runlog", "version": 1,
"config": {...}}; each following line is exactly one BatchRecord with the
fields of BATCH_FIELDS. Metrics that were not evaluated on a batch are null.
Floats are written in their shortest round-trip form, so reading a written log
reproduces every value bit for bit.
"""
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Union

from .errors import FormatError
from .monitor import CollapseEvent

logger = logging.getLogger(__name__)

SCHEMA = "distortion-lab/runlog"
VERSION = 1


@dataclass
class BatchRecord:
    """What one training batch logged."""

    epoch: int
    batch_index: int
    train_loss: float
    clean_acc: float
    fgsm_acc: Optional[float] = None
    pgd_acc: Optional[float] = None
    distortion_d: Optional[float] = None
    mean_abs_pgd_perturbation: Optional[float] = None
    input_grad_l2: Optional[float] = None
    input_grad_sq_l2: Optional[float] = None
    mean_gamma: Optional[float] = None
    gamma_negative_fraction: Optional[float] = None
    mean_delta_linf: Optional[float] = None
    zero_k_fraction: Optional[float] = None
    epsilon_used: Optional[float] = None
    alpha_used: Optional[float] = None
    lr_used: Optional[float] = None
    forward_passes: int = 0
    backward_passes: int = 0

    def to_dict(self) -> Dict:
        return asdict(self)


BATCH_FIELDS = tuple(f.name for f in fields(BatchRecord))
INT_FIELDS = {"epoch", "batch_index", "forward_passes", "backward_passes"}
REQUIRED_FIELDS = {"epoch", "batch_index", "train_loss", "clean_acc"}


@dataclass
class RunLog:
    """Header config plus the per-batch records of one training run."""

    config: Dict
    records: List[BatchRecord] = field(default_factory=list)
    collapse: Optional[CollapseEvent] = field(default=None, compare=False)
    epoch_seconds: List[float] = field(default_factory=list, compare=False)

    def epochs(self) -> int:
        return max((r.epoch for r in self.records), default=-1) + 1

    def values(self, name: str) -> List:
        """(epoch, batch_index, value) for every record where `name` was evaluated."""
        return [(r.epoch, r.batch_index, getattr(r, name)) for r in self.records if getattr(r, name) is not None]


def dumps_run_log(log: RunLog) -> str:
    lines = [json.dumps({"schema": SCHEMA, "version": VERSION, "config": log.config}, sort_keys=False)]
    lines.extend(json.dumps(record.to_dict(), allow_nan=False) for record in log.records)
    return "\n".join(lines) + "\n"


def write_run_log(log: RunLog, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_run_log(log), encoding="utf-8")
    logger.info(f"Wrote {len(log.records)} records to {path}")
    return path


def loads_run_log(text: str, path: Optional[str] = None) -> RunLog:
    lines = text.splitlines()
    if not lines:
        raise FormatError("Run log is empty", path=path, line=1)
    header = _parse_line(lines[0], path, 1)
    if set(header) != {"schema", "version", "config"} or header.get("schema") != SCHEMA:
        raise FormatError("Missing run-log header", path=path, line=1)
    if header["version"] != VERSION:
        raise FormatError(f"Unsupported run-log version {header['version']}", path=path, line=1)
    if not isinstance(header["config"], dict):
        raise FormatError("Header config must be an object", path=path, line=1)
    records = [_record_from(_parse_line(line, path, number), path, number)
               for number, line in enumerate(lines[1:], start=2) if line.strip()]
    return RunLog(config=header["config"], records=records)


def read_run_log(path: Union[str, Path]) -> RunLog:
    path = Path(path)
    return loads_run_log(path.read_text(encoding="utf-8"), str(path))


def _parse_line(line: str, path, number: int) -> Dict:
    try:
        value = json.loads(line)
    except json.JSONDecodeError as e:
        raise FormatError(f"Invalid JSON: {e.msg}", path=path, line=number) from e
    if not isinstance(value, dict):
        raise FormatError("Expected a JSON object", path=path, line=number)
    return value


def _record_from(data: Dict, path, number: int) -> BatchRecord:
    unknown = set(data) - set(BATCH_FIELDS)
    if unknown:
        raise FormatError(f"Unknown fields {', '.join(sorted(unknown))}", path=path, line=number)
    missing = set(BATCH_FIELDS) - set(data)
    if missing:
        raise FormatError(f"Missing fields {', '.join(sorted(missing))}", path=path, line=number)
    for name in BATCH_FIELDS:
        value = data[name]
        if name in INT_FIELDS:
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif value is None:
            ok = name not in REQUIRED_FIELDS
        else:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if not ok:
            raise FormatError(f"Field '{name}' has invalid value {value!r}", path=path, line=number)
    return BatchRecord(**{name: _number(name, data[name]) for name in BATCH_FIELDS})


def _number(name: str, value):
    if value is None or name in INT_FIELDS:
        return value
    return float(value)
