"""
Multi-level temporal contrastive objective.

Queries and keys are flattened to B*F rows indexed by (b, i) -> b*F + i. For
a query (b, i) the level-l positives are the same-sequence keys at temporal
distance |i - j| == l; the level-l denominator holds the same-sequence keys
with distance >= l plus every cross-sequence key. Each level uses its own
temperature tau_l = tau0 + l * tau_skip.
"""

import logging
import sys
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from mooss.core.tensor import (
    Parameter,
    Tensor,
    add,
    as_tensor,
    logsumexp,
    matmul,
    mul,
    reshape,
    sub,
    tensor_sum,
    transpose,
)
from utils.constants import FULL_SCALE_LOSS_WEIGHT, FULL_SCALE_TAU0, FULL_SCALE_TAU_SKIP, DEFAULT_WINDOW_SIZE
from utils.validation import ConfigError, UsageError, validate_finite, validate_range

logger = logging.getLogger(__name__)


class BilinearSimilarity:
    """sim(q, k) = q^T W k with a learnable d x d W, initialized to the identity."""

    def __init__(self, d: int, name: str = 'similarity.W'):
        self.W = Parameter(np.eye(d), name)

    def parameters(self) -> List[Parameter]:
        return [self.W]


@dataclass(frozen=True)
class TemperatureSchedule:
    tau0: float = FULL_SCALE_TAU0
    skip: float = FULL_SCALE_TAU_SKIP

    def validate(self) -> None:
        if self.tau0 <= 0:
            raise ConfigError(f"contrastive.tau0 must be > 0, got {self.tau0}")
        if self.skip <= 0:
            raise ConfigError(f"contrastive.tau_skip must be > 0 (temperatures strictly increase), got {self.skip}")

    def tau(self, level: int) -> float:
        return self.tau0 + level * self.skip


@dataclass
class ContrastiveConfig:
    L: int = DEFAULT_WINDOW_SIZE
    tau0: float = FULL_SCALE_TAU0
    tau_skip: float = FULL_SCALE_TAU_SKIP
    lam: float = FULL_SCALE_LOSS_WEIGHT

    @property
    def schedule(self) -> TemperatureSchedule:
        return TemperatureSchedule(self.tau0, self.tau_skip)

    def validate(self) -> None:
        if isinstance(self.L, bool) or not isinstance(self.L, (int, np.integer)) or self.L < 0:
            raise ConfigError(f"contrastive.L must be an integer >= 0, got {self.L}")
        validate_range(self.lam, 'contrastive.lam', 0.0)
        self.schedule.validate()


@dataclass(frozen=True)
class LevelPartition:
    """
    Temporal distance between every query row and key column.

    delta[m, n] = |i - j| when rows m = (b, i) and n = (b, j) share a sequence,
    -1 for cross-sequence pairs.
    """
    B: int
    F: int
    L: int
    delta: np.ndarray

    def positives(self, level: int) -> np.ndarray:
        return self.delta == level

    def denominator(self, level: int) -> np.ndarray:
        return (self.delta >= level) | (self.delta < 0)

    def negative_pool(self) -> np.ndarray:
        return (self.delta > self.L) | (self.delta < 0)

    def keys_at_level(self, query: int, level: int) -> np.ndarray:
        return np.flatnonzero(self.delta[query] == level)

    def negatives(self, query: int) -> np.ndarray:
        return np.flatnonzero(self.negative_pool()[query])


@lru_cache(maxsize=32)
def _delta_matrix(B: int, F: int) -> np.ndarray:
    seq = np.repeat(np.arange(B), F)
    step = np.tile(np.arange(F), B)
    delta = np.abs(step[:, None] - step[None, :])
    delta = np.where(seq[:, None] == seq[None, :], delta, -1)
    delta.setflags(write=False)
    return delta


def level_partition(B: int, F: int, L: int) -> LevelPartition:
    if B < 1 or F < 1 or L < 0:
        raise ConfigError(f"level partition needs B >= 1, F >= 1, L >= 0, got B={B}, F={F}, L={L}")
    return LevelPartition(B, F, L, _delta_matrix(B, F))


def similarity_matrix(q, k, W) -> Tensor:
    """
    (B*F, B*F) matrix with entry (m, n) = q_m^T W k_n.

    Raises:
        UsageError: If q, k and W disagree on shape
    """
    q, k, W = as_tensor(q), as_tensor(k), as_tensor(W)
    if q.ndim != 3 or k.shape != q.shape or W.shape != (q.shape[2], q.shape[2]):
        raise UsageError(
            f"similarity needs q and k of equal shape (B, F, d) and W of shape (d, d), "
            f"got q {q.shape}, k {k.shape}, W {W.shape}"
        )
    B, F, d = q.shape
    q_rows = reshape(q, (B * F, d))
    k_rows = reshape(k, (B * F, d))
    return matmul(matmul(q_rows, W), transpose(k_rows))


def level_loss(sims, partition: LevelPartition, level: int, tau: float) -> Tuple[Tensor, np.ndarray]:
    """
    Per-query level loss -log(sum_pos exp(s/tau) / sum_denominator exp(s/tau)).

    Queries without a key at this distance get 0 and are marked invalid.

    Returns:
        (per-query losses (B*F,), boolean validity mask (B*F,))
    """
    sims = as_tensor(sims)
    positives = partition.positives(level)
    valid = positives.any(axis=1)
    logits = mul(sims, 1.0 / tau)
    numerator = logsumexp(logits, axis=-1, mask=positives)
    denominator = logsumexp(logits, axis=-1, mask=partition.denominator(level))
    return mul(sub(denominator, numerator), valid.astype(np.float64)), valid


@dataclass
class MoossLossResult:
    """
    Total loss and its per-level breakdown.

    level_losses[l] is the mean level-l loss over queries that have a key at
    distance l (NaN when none do); total is their sum.
    """
    total: Tensor
    level_losses: List[float]
    level_counts: List[int]
    sims: np.ndarray
    partition: LevelPartition


def mooss_loss(
    q_states,
    k_states,
    W,
    config: ContrastiveConfig,
    q_producer: str = 'decoder',
    k_producer: str = 'key_encoder',
) -> MoossLossResult:
    """
    Sum over levels 0..L of the mean level loss.

    Key states are treated as constants.

    Raises:
        NumericalError: If either embedding batch holds NaN or Inf
    """
    q_states = as_tensor(q_states)
    validate_finite(q_states.data, q_producer)
    k_values = k_states.data if isinstance(k_states, Tensor) else np.asarray(k_states, dtype=np.float64)
    validate_finite(k_values, k_producer)

    sims = similarity_matrix(q_states, Tensor(k_values), W)
    B, F, _ = q_states.shape
    partition = level_partition(B, F, config.L)
    schedule = config.schedule

    total: Optional[Tensor] = None
    level_losses, level_counts = [], []
    for level in range(config.L + 1):
        per_query, valid = level_loss(sims, partition, level, schedule.tau(level))
        count = int(valid.sum())
        level_counts.append(count)
        if count == 0:
            level_losses.append(float('nan'))
            continue
        term = mul(tensor_sum(per_query), 1.0 / count)
        level_losses.append(term.item())
        total = term if total is None else add(total, term)

    return MoossLossResult(total, level_losses, level_counts, sims.data.copy(), partition)


def total_loss(task_loss, mooss, lam: float) -> Tensor:
    """task_loss + lam * mooss."""
    return add(as_tensor(task_loss), mul(mooss, float(lam)))


def similarity_by_delta(sims: np.ndarray, partition: LevelPartition) -> Tuple[List[float], float]:
    """
    Mean similarity per temporal distance 0..L and over cross-sequence pairs.

    Empty buckets are NaN.
    """
    sims = np.asarray(sims)
    buckets = []
    for level in range(partition.L + 1):
        selected = partition.positives(level)
        buckets.append(float(sims[selected].mean()) if selected.any() else float('nan'))
    cross = partition.delta < 0
    return buckets, float(sims[cross].mean()) if cross.any() else float('nan')
