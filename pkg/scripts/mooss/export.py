"""
Writers for run artifacts: PGM frames, episode trajectories, embeddings,
the metrics log and ablation reports.
"""

import logging
import sys
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from mooss.env.moving_dot import Episode
from utils.validation import UsageError

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ['step', 'action', 'x', 'y', 'vx', 'vy']


def write_pgm(path, image: np.ndarray) -> None:
    """Binary PGM (P5, maxval 255) of a 2-D image with values in [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise UsageError(f"PGM images must be 2-D, got shape {image.shape}")
    height, width = image.shape
    pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    with open(path, 'wb') as f:
        f.write(f"P5\n{width} {height}\n255\n".encode('ascii'))
        f.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    """Inverse of write_pgm (header laid out exactly as write_pgm writes it)."""
    magic, size, maxval, payload = Path(path).read_bytes().split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise UsageError(f"{path} is not an 8-bit binary PGM")
    width, height = (int(v) for v in size.split())
    pixels = np.frombuffer(payload, dtype=np.uint8, count=width * height)
    return pixels.reshape(height, width) / 255.0


def write_frame_pgms(directory, frames: np.ndarray) -> List[Path]:
    """
    One PGM per frame, named frame_{t:03}.pgm.

    Multi-channel frames are written as their channel mean.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for t, frame in enumerate(np.asarray(frames)):
        path = directory / f"frame_{t:03}.pgm"
        write_pgm(path, frame.mean(axis=0))
        paths.append(path)
    return paths


def write_trajectory_csv(path, episode: Episode) -> None:
    df = pd.DataFrame({
        'step': np.arange(episode.length),
        'action': episode.actions,
        'x': episode.latents[:, 0],
        'y': episode.latents[:, 1],
        'vx': episode.latents[:, 2],
        'vy': episode.latents[:, 3],
    }, columns=TRAJECTORY_COLUMNS)
    df.to_csv(path, index=False)


def dump_episode(episode: Episode, directory) -> Path:
    """Episode dump: frame PGMs plus trajectory.csv."""
    directory = Path(directory)
    write_frame_pgms(directory, episode.frames)
    write_trajectory_csv(directory / 'trajectory.csv', episode)
    return directory


def write_embeddings_csv(path, embeddings: np.ndarray) -> None:
    """Rows (b, i, e0..e{d-1}) for a (B, F, d) embedding batch."""
    embeddings = np.asarray(embeddings)
    B, F, d = embeddings.shape
    df = pd.DataFrame(embeddings.reshape(B * F, d), columns=[f"e{k}" for k in range(d)])
    df.insert(0, 'i', np.tile(np.arange(F), B))
    df.insert(0, 'b', np.repeat(np.arange(B), F))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)


def metrics_columns(L: int) -> List[str]:
    return (
        ['step', 'total_loss']
        + [f"loss_l{l}" for l in range(L + 1)]
        + [f"sim_d{l}" for l in range(L + 1)]
        + ['sim_cross', 'grad_norm', 'probe_mse', 'wall_ms']
    )


class MetricsLog:
    """Append-only metrics CSV; the header is written with the first row and every row is flushed."""

    def __init__(self, path, L: int):
        self.path = Path(path)
        self.columns = metrics_columns(L)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._header_written = False
        if self.path.exists():
            self.path.unlink()

    def append(self, row: Dict[str, object]) -> None:
        df = pd.DataFrame([row], columns=self.columns)
        with open(self.path, 'a', encoding='utf-8', newline='') as f:
            df.to_csv(f, header=not self._header_written, index=False)
            f.flush()
        self._header_written = True

    def read(self) -> pd.DataFrame:
        return pd.read_csv(self.path)


def write_ablation_csv(path, rows: Sequence[Dict[str, object]]) -> pd.DataFrame:
    df = pd.DataFrame(list(rows))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    return df
