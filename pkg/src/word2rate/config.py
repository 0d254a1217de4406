"""Run configuration shared by the trainer, the analysis helpers and the CLI."""

from __future__ import annotations

import math
from dataclasses import dataclass

MODES = ("cbow", "cmow", "fos", "fop", "sos", "hybrid-fos-fop", "hybrid-fos-sos")
RATE_MODES = ("fos", "fop", "sos")
HYBRID_MODES = ("hybrid-fos-fop", "hybrid-fos-sos")
TARGET_POLICIES = ("with_replacement", "without_replacement")

# Step-size defaults per composition mode. The series truncations need a
# small step; sum/product baselines ignore the value.
DEFAULT_EPSILON = {
    "fos": 0.01,
    "fop": 0.001,
    "sos": 0.001,
    "hybrid-fos-fop": 0.0001,
    "hybrid-fos-sos": 0.0001,
    "cbow": 0.01,
    "cmow": 0.01,
}


def is_rate_mode(mode: str) -> bool:
    return mode in RATE_MODES


def is_hybrid(mode: str) -> bool:
    return mode in HYBRID_MODES


def hybrid_components(mode: str) -> tuple[str, str]:
    """Component composition kinds of a hybrid mode, in concatenation order."""
    if mode == "hybrid-fos-fop":
        return ("fos", "fop")
    if mode == "hybrid-fos-sos":
        return ("fos", "sos")
    raise ValueError(f"not a hybrid mode: {mode!r}")


def component_dims(dim: int) -> tuple[int, int]:
    """Split a hybrid embedding dimension into two component dimensions.

    The components must sum to the total; an odd total puts the extra
    coordinate in the first component.
    """
    return dim - dim // 2, dim // 2


def cmow_side(dim: int) -> int:
    """Side length of the square word matrices that unroll to `dim` entries."""
    side = math.isqrt(dim)
    if side * side != dim:
        raise ValueError(f"cmow requires a perfect-square dimension, got {dim}")
    return side


@dataclass
class TrainConfig:
    """Hyperparameters for one training run.

    `epsilon=None` resolves to the per-mode default from DEFAULT_EPSILON.
    `lr_split` switches the objective to the left-right context split and
    is independent of the composition mode.
    """

    mode: str = "fos"
    dim: int = 25
    epsilon: float | None = None
    learning_rate: float = 0.001
    batch_size: int = 1000
    epochs: int = 10
    window: int = 4
    negatives: int = 5
    lr_split: bool = False
    seed: int = 0
    neg_exponent: float = 0.75
    min_count: int = 1
    min_len: int = 1
    max_len: int = 1_000_000
    target_policy: str = "with_replacement"

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.epsilon is None:
            self.epsilon = DEFAULT_EPSILON[self.mode]
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.neg_exponent <= 0:
            raise ValueError("neg_exponent must be > 0")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.target_policy not in TARGET_POLICIES:
            raise ValueError(f"unknown target_policy {self.target_policy!r}")
        if self.mode == "cmow":
            cmow_side(self.dim)
        if is_hybrid(self.mode):
            da, db = component_dims(self.dim)
            if min(da, db) < 1:
                raise ValueError("hybrid modes need dim >= 2")

    @property
    def len_bounds(self) -> tuple[int, int]:
        return self.min_len, self.max_len
