from .fgsm import (
    AttackError,
    AttackMethod,
    AttackSpec,
    apply_perturbation,
    attack_direction,
    generate,
    generate_batch_split,
    target_labels,
)

__all__ = [
    "AttackError",
    "AttackMethod",
    "AttackSpec",
    "apply_perturbation",
    "attack_direction",
    "generate",
    "generate_batch_split",
    "target_labels",
]
