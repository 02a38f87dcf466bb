"""
Moving-dot pixel POMDP.

The latent state is a point (x, y) in the unit square with velocity (vx, vy).
Actions accelerate the dot along one axis; walls reflect it elastically. The
observation is a soft disc centred at (x * W, y * H) in pixel coordinates,
where pixel (row, col) has its centre at (row, col).
"""

import logging
import math
import sys
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Tuple

import numpy as np
from tqdm import tqdm

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from utils.constants import (
    ACTION_DIRECTIONS,
    ACTION_NAMES,
    DEFAULT_ACCEL,
    DEFAULT_CHANNELS,
    DEFAULT_DOT_RADIUS,
    DEFAULT_DT,
    DEFAULT_EDGE_SOFTNESS,
    DEFAULT_EPISODE_LENGTH,
    DEFAULT_FRAME_SIZE,
    DEFAULT_V_MAX,
    NUM_ACTIONS,
)
from utils.validation import ConfigError, UsageError, validate_positive_int, validate_range

logger = logging.getLogger(__name__)

# Radial profile sampling
PROFILE_STEP = 0.02
PROFILE_RADIAL_SAMPLES = 401
PROFILE_SUPPORT_SIGMAS = 8.0

# Initial state ranges for generated episodes
START_POSITION_RANGE = (0.15, 0.85)
START_SPEED_FRACTION = 0.5


@dataclass
class EnvConfig:
    H: int = DEFAULT_FRAME_SIZE
    W: int = DEFAULT_FRAME_SIZE
    c: int = DEFAULT_CHANNELS
    dt: float = DEFAULT_DT
    accel: float = DEFAULT_ACCEL
    v_max: float = DEFAULT_V_MAX
    radius: float = DEFAULT_DOT_RADIUS
    softness: float = DEFAULT_EDGE_SOFTNESS
    T: int = DEFAULT_EPISODE_LENGTH
    seed: int = 0

    def validate(self) -> None:
        validate_positive_int(self.H, 'env.H')
        validate_positive_int(self.W, 'env.W')
        validate_positive_int(self.c, 'env.c')
        validate_positive_int(self.T, 'env.T')
        validate_range(self.radius, 'env.radius', 1.0)
        validate_range(self.dt, 'env.dt', 0.0)
        validate_range(self.accel, 'env.accel', 0.0)
        validate_range(self.v_max, 'env.v_max', 0.0)
        if self.softness <= 0:
            raise ConfigError(f"env.softness must be > 0, got {self.softness}")
        if self.v_max * self.dt >= 1.0:
            raise ConfigError(
                f"env.v_max * env.dt must be < 1 so one step crosses at most one wall, "
                f"got {self.v_max * self.dt}"
            )


@dataclass(frozen=True)
class LatentState:
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy])


@dataclass
class Episode:
    """frames (T, c, H, W), actions (T,), rewards (T,), latents (T, 4) as (x, y, vx, vy)."""
    frames: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    latents: np.ndarray

    @property
    def length(self) -> int:
        return self.frames.shape[0]


def _reflect(position: float, velocity: float) -> Tuple[float, float]:
    if position > 1.0:
        return 2.0 - position, -velocity
    if position < 0.0:
        return -position, -velocity
    return position, velocity


def step(state: LatentState, action: int, config: EnvConfig) -> LatentState:
    """
    Advance one timestep.

    Raises:
        UsageError: If action is not in 0..4
    """
    if isinstance(action, bool) or not isinstance(action, (int, np.integer)) or not 0 <= action < NUM_ACTIONS:
        raise UsageError(
            f"action id must be an integer in [0, {NUM_ACTIONS - 1}] ({', '.join(ACTION_NAMES)}), got {action!r}"
        )
    ax, ay = ACTION_DIRECTIONS[int(action)]
    vx = float(np.clip(state.vx + config.accel * ax, -config.v_max, config.v_max))
    vy = float(np.clip(state.vy + config.accel * ay, -config.v_max, config.v_max))
    x, vx = _reflect(state.x + vx * config.dt, vx)
    y, vy = _reflect(state.y + vy * config.dt, vy)
    return LatentState(x, y, vx, vy)


def _scaled_i0(z: np.ndarray) -> np.ndarray:
    """I0(z) * exp(-z) for z >= 0, switching to the asymptotic series where I0 overflows."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    small = z < 600.0
    out[small] = np.i0(z[small]) * np.exp(-z[small])
    big = z[~small]
    out[~small] = (1.0 + 1.0 / (8.0 * big) + 9.0 / (128.0 * big * big)) / np.sqrt(2.0 * math.pi * big)
    return out


@lru_cache(maxsize=16)
def radial_profile(radius: float, softness: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Disc of the given radius convolved with an isotropic Gaussian (sigma = softness),
    tabulated against distance from the centre, non-increasing and normalized to 1 at
    the centre.

    Returns:
        (distances, intensities); intensities reach 0 at the last distance
    """
    sigma2 = softness * softness
    support = radius + PROFILE_SUPPORT_SIGMAS * softness
    distances = np.arange(0.0, support + PROFILE_STEP, PROFILE_STEP)
    rho = np.linspace(0.0, radius, PROFILE_RADIAL_SAMPLES)

    d = distances[:, None]
    r = rho[None, :]
    integrand = r * np.exp(-((d - r) ** 2) / (2.0 * sigma2)) * _scaled_i0(d * r / sigma2)
    spacing = rho[1] - rho[0]
    values = spacing * (integrand.sum(axis=1) - 0.5 * (integrand[:, 0] + integrand[:, -1])) / sigma2
    # quadrature error can lift the table slightly above its value at the centre
    values = np.minimum.accumulate(values)
    values = np.clip(values / values[0], 0.0, 1.0)
    values[-1] = 0.0
    return distances, values


def render(state: LatentState, config: EnvConfig) -> np.ndarray:
    """Soft disc frame of shape (c, H, W) with values in [0, 1]."""
    distances, values = radial_profile(float(config.radius), float(config.softness))
    rows = np.arange(config.H, dtype=np.float64)[:, None]
    cols = np.arange(config.W, dtype=np.float64)[None, :]
    dist = np.hypot(cols - state.x * config.W, rows - state.y * config.H)
    frame = np.interp(dist, distances, values, right=0.0)
    return np.repeat(frame[None, :, :], config.c, axis=0)


def initial_state(config: EnvConfig, rng: np.random.Generator) -> LatentState:
    low, high = START_POSITION_RANGE
    x, y = rng.uniform(low, high, size=2)
    speed = START_SPEED_FRACTION * config.v_max
    vx, vy = rng.uniform(-speed, speed, size=2)
    return LatentState(float(x), float(y), float(vx), float(vy))


def generate_episode(config: EnvConfig, seed: int) -> Episode:
    """
    Roll out a uniform random policy for T steps.

    frame t renders state t, action t moves state t to state t + 1; rewards are zero.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    state = initial_state(config, rng)
    actions = rng.integers(NUM_ACTIONS, size=config.T)
    frames = np.empty((config.T, config.c, config.H, config.W))
    latents = np.empty((config.T, 4))
    for t in range(config.T):
        frames[t] = render(state, config)
        latents[t] = state.as_array()
        state = step(state, int(actions[t]), config)
    return Episode(frames, actions.astype(np.int64), np.zeros(config.T), latents)


def generate_episodes(config: EnvConfig, rng: np.random.Generator, count: int, desc: str = "Generating episodes"):
    """Episodes with seeds drawn from rng, in draw order."""
    seeds = rng.integers(2 ** 31 - 1, size=count)
    return [generate_episode(config, int(s)) for s in tqdm(seeds, desc=desc, leave=False)]
