"""
Representation quality measures for a frozen encoder.

eval_smoothness buckets bilinear similarities of unmasked encodings by
temporal distance and reports how well the bucket means follow distance
order. eval_probe fits a closed-form ridge regression from embeddings to
the true dot position and reports the held-out error.
"""

import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from mooss.core.contrastive import level_partition, similarity_matrix
from mooss.core.encoder import ConvEncoder
from mooss.core.tensor import no_grad
from mooss.env.replay_buffer import ReplayBuffer
from utils.constants import PROBE_RIDGE
from utils.validation import UsageError

logger = logging.getLogger(__name__)

# Latent columns used as probe targets: x, y
PROBE_TARGETS = (0, 1)


@dataclass
class SmoothnessReport:
    """
    Mean similarity per temporal distance 0..L and across sequences.

    spearman is the rank correlation between distance and bucket mean over
    the non-empty distance buckets; degenerate is set when it is undefined
    (constant ranks or fewer than two buckets) and spearman is then 0.
    """
    bucket_means: List[float]
    cross_mean: float
    spearman: float
    degenerate: bool

    @property
    def strictly_ordered(self) -> bool:
        """sim_d0 > sim_d1 > ... > sim_dL > sim_cross."""
        chain = list(self.bucket_means) + [self.cross_mean]
        return all(a > b for a, b in zip(chain, chain[1:]))

    def as_dict(self) -> dict:
        row = {f"sim_d{l}": v for l, v in enumerate(self.bucket_means)}
        row.update({'sim_cross': self.cross_mean, 'spearman': self.spearman, 'degenerate': self.degenerate})
        return row


def spearman_rank(x: Sequence[float], y: Sequence[float]) -> Tuple[float, bool]:
    """
    Spearman correlation (average ranks for ties) over the pairs where both
    values are present.

    Returns:
        (rho, degenerate); rho is 0.0 when degenerate
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = ~(np.isnan(x) | np.isnan(y))
    x, y = x[keep], y[keep]
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0, True
    rho, _ = spearmanr(x, y)
    return float(rho), False


def smoothness_from_embeddings(batches: Sequence[np.ndarray], W: np.ndarray, L: int) -> SmoothnessReport:
    """
    Aggregate e^T W e similarities of (B, F, d) embedding batches by distance.

    Sums and counts are accumulated batch by batch in order.
    """
    sums = np.zeros(L + 2)
    counts = np.zeros(L + 2, dtype=np.int64)
    for embeddings in batches:
        B, F, _ = embeddings.shape
        sims = similarity_matrix(embeddings, embeddings, W).data
        delta = level_partition(B, F, L).delta
        for level in range(L + 1):
            selected = delta == level
            sums[level] += sims[selected].sum()
            counts[level] += int(selected.sum())
        cross = delta < 0
        sums[L + 1] += sims[cross].sum()
        counts[L + 1] += int(cross.sum())

    with np.errstate(invalid='ignore', divide='ignore'):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    rho, degenerate = spearman_rank(np.arange(L + 1), means[:L + 1])
    return SmoothnessReport([float(m) for m in means[:L + 1]], float(means[L + 1]), rho, degenerate)


def encode_frames(encoder: ConvEncoder, frames: np.ndarray) -> np.ndarray:
    """(B, F, d) embeddings of (B, F, c, H, W) frames, no trace recorded."""
    with no_grad():
        return encoder.encode(frames).data


def eval_smoothness(
    encoder: ConvEncoder,
    W: np.ndarray,
    buffer: ReplayBuffer,
    n_batches: int,
    B: int,
    F: int,
    L: int,
    rng: np.random.Generator,
) -> SmoothnessReport:
    """Similarity buckets over n_batches held-out batches of unmasked frames."""
    W = np.asarray(getattr(W, 'data', W))
    batches = [encode_frames(encoder, buffer.sample_batch(B, F, rng).frames) for _ in range(n_batches)]
    return smoothness_from_embeddings(batches, W, L)


@dataclass
class RidgeProbe:
    """Centered ridge regression: y = y_mean + (x - x_mean) @ weights."""
    x_mean: np.ndarray
    y_mean: np.ndarray
    weights: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.y_mean + (np.asarray(X) - self.x_mean) @ self.weights


def fit_ridge(X: np.ndarray, Y: np.ndarray, ridge: float = PROBE_RIDGE) -> RidgeProbe:
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xc = X - x_mean
    gram = Xc.T @ Xc + ridge * np.eye(X.shape[1])
    weights = np.linalg.solve(gram, Xc.T @ (Y - y_mean))
    return RidgeProbe(x_mean, y_mean, weights)


def probe_mse(
    train_X: np.ndarray,
    train_Y: np.ndarray,
    test_X: np.ndarray,
    test_Y: np.ndarray,
    ridge: float = PROBE_RIDGE,
) -> float:
    probe = fit_ridge(train_X, train_Y, ridge)
    return float(np.mean((probe.predict(test_X) - np.asarray(test_Y)) ** 2))


def embed_episodes(encoder: ConvEncoder, episodes: Sequence) -> Tuple[np.ndarray, np.ndarray]:
    """Embeddings (N, d) and latents (N, 4) of every frame of the given episodes."""
    embeddings, latents = [], []
    for episode in episodes:
        embeddings.append(encode_frames(encoder, episode.frames[None])[0])
        latents.append(episode.latents)
    return np.concatenate(embeddings), np.concatenate(latents)


def eval_probe(encoder: ConvEncoder, buffer: ReplayBuffer, ridge: float = PROBE_RIDGE) -> float:
    """
    Held-out MSE of a ridge probe from frozen embeddings to (x, y).

    The first half of the buffer's episodes trains the probe, the rest tests it.

    Raises:
        UsageError: If the buffer holds fewer than two episodes
    """
    episodes = list(buffer.episodes)
    if len(episodes) < 2:
        raise UsageError(f"probe needs at least 2 episodes, buffer holds {len(episodes)}")
    split = len(episodes) // 2
    train_X, train_latents = embed_episodes(encoder, episodes[:split])
    test_X, test_latents = embed_episodes(encoder, episodes[split:])
    targets = list(PROBE_TARGETS)
    return probe_mse(train_X, train_latents[:, targets], test_X, test_latents[:, targets], ridge)
