"""Toy pixel environment and episode storage."""

from .moving_dot import EnvConfig, Episode, LatentState, generate_episode, render, step
from .replay_buffer import ReplayBuffer, SequenceBatch, fill_buffer, sample_batch

__all__ = [
    'EnvConfig',
    'Episode',
    'LatentState',
    'generate_episode',
    'render',
    'step',
    'ReplayBuffer',
    'SequenceBatch',
    'fill_buffer',
    'sample_batch',
]
