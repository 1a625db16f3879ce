from .base import Attack, AttackKind, AttackOutcome, AttackSpec, clamp_pixels, project_linf
from .checkpointed import CheckpointedAttack, checkpointed_single_step
from .fast import FastAttack, fast_single_step
from .fgsm import FGSMAttack, fgsm
from .pgd import PGDAttack, pgd

ATTACKS = {
    AttackKind.FGSM: FGSMAttack,
    AttackKind.FAST: FastAttack,
    AttackKind.PGD: PGDAttack,
    AttackKind.CHECKPOINTED: CheckpointedAttack,
}


def build_attack(spec: AttackSpec) -> Attack:
    """Attack instance for an AttackSpec."""
    return ATTACKS[spec.kind](spec)


__all__ = [
    "Attack", "AttackKind", "AttackOutcome", "AttackSpec", "build_attack",
    "fgsm", "fast_single_step", "pgd", "checkpointed_single_step",
    "project_linf", "clamp_pixels",
    "FGSMAttack", "FastAttack", "PGDAttack", "CheckpointedAttack",
]
