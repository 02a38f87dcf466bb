"""
Episode replay buffer with uniform window sampling.
"""

import logging
import sys
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from mooss.core.st_graph import ObservationSequence
from mooss.env.moving_dot import EnvConfig, Episode, generate_episodes
from utils.validation import UsageError, validate_positive_int

logger = logging.getLogger(__name__)


@dataclass
class SequenceBatch:
    """
    B aligned windows of F steps.

    frames (B, F, c, H, W); actions (B, F); rewards (B, F); latents (B, F, 4);
    episodes and starts (B,) locate each window in the buffer.
    """
    frames: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    latents: np.ndarray
    episodes: np.ndarray
    starts: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.frames.shape[0]

    @property
    def sequence_length(self) -> int:
        return self.frames.shape[1]

    def sequences(self) -> List[ObservationSequence]:
        return [
            ObservationSequence(self.frames[b], self.actions[b], self.rewards[b], int(self.starts[b]), self.latents[b])
            for b in range(self.batch_size)
        ]


class ReplayBuffer:
    """Holds whole episodes; the oldest episode is dropped once capacity is reached."""

    def __init__(self, capacity: int):
        validate_positive_int(capacity, 'run.buffer_capacity')
        self.capacity = capacity
        self.episodes: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.episodes)

    def add_episode(self, episode: Episode) -> None:
        self.episodes.append(episode)

    def sample_batch(self, B: int, F: int, rng: np.random.Generator) -> SequenceBatch:
        """
        Draw B (episode, start) pairs uniformly; windows never cross episode ends.

        Raises:
            UsageError: If the buffer is empty or an episode is shorter than F
        """
        if not self.episodes:
            raise UsageError("cannot sample from an empty replay buffer")
        validate_positive_int(B, 'batch size')
        validate_positive_int(F, 'sequence length F')
        shortest = min(ep.length for ep in self.episodes)
        if F > shortest:
            raise UsageError(f"sequence length F={F} exceeds the shortest episode (T={shortest})")

        episode_ids = rng.integers(len(self.episodes), size=B)
        starts = np.array(
            [rng.integers(self.episodes[e].length - F + 1) for e in episode_ids], dtype=np.int64
        )
        windows = [(self.episodes[e], s) for e, s in zip(episode_ids, starts)]
        return SequenceBatch(
            frames=np.stack([ep.frames[s:s + F] for ep, s in windows]),
            actions=np.stack([ep.actions[s:s + F] for ep, s in windows]),
            rewards=np.stack([ep.rewards[s:s + F] for ep, s in windows]),
            latents=np.stack([ep.latents[s:s + F] for ep, s in windows]),
            episodes=episode_ids.astype(np.int64),
            starts=starts,
        )


def sample_batch(buffer: ReplayBuffer, B: int, F: int, rng: np.random.Generator) -> SequenceBatch:
    return buffer.sample_batch(B, F, rng)


def fill_buffer(
    config: EnvConfig,
    count: int,
    rng: np.random.Generator,
    capacity: Optional[int] = None,
    desc: str = "Generating episodes",
) -> ReplayBuffer:
    """A buffer holding count freshly generated random-policy episodes."""
    buffer = ReplayBuffer(capacity or count)
    for episode in generate_episodes(config, rng, count, desc=desc):
        buffer.add_episode(episode)
    logger.debug(f"Filled replay buffer with {len(buffer)} episodes of length {config.T}")
    return buffer
