"""
Spatial-temporal cube graph over observation sequences, and mask sampling.

A sequence of F frames (c x H x W) is cut into non-overlapping f x h x w cubes.
Each cube is a node; nodes are numbered in (t, row, col) row-major order and
joined to their axis neighbours (6-connectivity). Masks are sets of nodes
whose cubes are zeroed across all channels.
"""

import logging
import sys
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from utils.constants import WALK_STEP_CAP_PER_NODE
from utils.validation import (
    ConfigError,
    UsageError,
    validate_divisible,
    validate_positive_int,
    validate_range,
    validate_shape,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CubeShape:
    """Extent of one graph node: f frames by h rows by w columns."""
    f: int
    h: int
    w: int

    def validate(self) -> None:
        validate_positive_int(self.f, 'cube.f')
        validate_positive_int(self.h, 'cube.h')
        validate_positive_int(self.w, 'cube.w')

    @property
    def volume(self) -> int:
        return self.f * self.h * self.w


@dataclass
class ObservationSequence:
    """
    F consecutive frames with aligned actions.

    Attributes:
        frames: (F, c, H, W) pixel values in [0, 1]
        actions: (F,) integer action ids
        rewards: (F,) floats (zeros for the toy environment)
        t0: start timestep within the source episode
        latents: optional (F, 4) ground-truth states, evaluation only
    """
    frames: np.ndarray
    actions: np.ndarray
    rewards: Optional[np.ndarray] = None
    t0: int = 0
    latents: Optional[np.ndarray] = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        validate_shape(self.frames.shape, (None, None, None, None), "frames (F, c, H, W)")
        validate_shape(self.actions.shape, (self.frames.shape[0],), "actions")
        if self.frames.size and (self.frames.min() < 0.0 or self.frames.max() > 1.0):
            raise UsageError(
                f"frames must lie in [0, 1], got [{self.frames.min()}, {self.frames.max()}]"
            )
        if self.rewards is None:
            self.rewards = np.zeros(self.frames.shape[0])

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    @property
    def dims(self) -> Tuple[int, int, int, int]:
        """(F, c, H, W)"""
        return tuple(self.frames.shape)


class StGraph:
    """
    Grid graph over the cube partition of an F x H x W sequence.

    Attributes:
        dims: (T, R, C) node-grid extents (F/f, H/h, W/w)
        adjacency: neighbour id lists, ascending
    """

    def __init__(self, dims: Tuple[int, int, int]):
        self.dims = tuple(int(d) for d in dims)
        T, R, C = self.dims
        self.num_nodes = T * R * C
        self.adjacency: List[List[int]] = []
        for node in range(self.num_nodes):
            t, r, c = self.coords(node)
            neighbours = []
            for dt, dr, dc in ((-1, 0, 0), (0, -1, 0), (0, 0, -1), (0, 0, 1), (0, 1, 0), (1, 0, 0)):
                nt, nr, nc = t + dt, r + dr, c + dc
                if 0 <= nt < T and 0 <= nr < R and 0 <= nc < C:
                    neighbours.append(self.node_id(nt, nr, nc))
            self.adjacency.append(neighbours)

    def node_id(self, t: int, r: int, c: int) -> int:
        _, R, C = self.dims
        return (t * R + r) * C + c

    def coords(self, node: int) -> Tuple[int, int, int]:
        _, R, C = self.dims
        t, rest = divmod(int(node), R * C)
        r, c = divmod(rest, C)
        return t, r, c

    @property
    def num_edges(self) -> int:
        return sum(len(n) for n in self.adjacency) // 2

    def __repr__(self) -> str:
        return f"StGraph(dims={self.dims}, nodes={self.num_nodes}, edges={self.num_edges})"


@dataclass(frozen=True)
class MaskSet:
    """Masked node ids, the walk root (None for empty or non-walk masks) and the ratio."""
    nodes: FrozenSet[int]
    root: Optional[int]
    ratio: float
    dims: Tuple[int, int, int]

    def __len__(self) -> int:
        return len(self.nodes)


def build_graph(F: int, H: int, W: int, cube: CubeShape) -> StGraph:
    """
    Build the cube graph of an F x H x W sequence.

    Raises:
        ConfigError: Naming the axis that the cube does not divide
    """
    cube.validate()
    for axis, total, part, part_name in (('F', F, cube.f, 'f'), ('H', H, cube.h, 'h'), ('W', W, cube.w, 'w')):
        validate_positive_int(total, axis)
        validate_divisible(axis, total, part, part_name)
    return StGraph((F // cube.f, H // cube.h, W // cube.w))


def mask_target_size(num_nodes: int, p_m: float) -> int:
    """Number of masked nodes: |V| * p_m rounded half up."""
    return int(np.floor(num_nodes * p_m + 0.5))


def random_walk_mask(graph: StGraph, p_m: float, rng: np.random.Generator) -> MaskSet:
    """
    Collect the unique nodes visited by one random walk until the target size is reached.

    The root is drawn uniformly; each step moves to a uniformly chosen neighbour.

    Raises:
        ConfigError: If p_m is outside [0, 1]
        RuntimeError: If the walk exceeds the step cap
    """
    validate_range(p_m, 'mask.p_m', 0.0, 1.0)
    target = mask_target_size(graph.num_nodes, p_m)
    if target == 0:
        return MaskSet(frozenset(), None, float(p_m), graph.dims)

    root = int(rng.integers(graph.num_nodes))
    visited = {root}
    current = root
    cap = WALK_STEP_CAP_PER_NODE * graph.num_nodes
    steps = 0
    while len(visited) < target:
        draws = rng.random(max(64, 4 * (target - len(visited))))
        for u in draws:
            neighbours = graph.adjacency[current]
            current = neighbours[int(u * len(neighbours))]
            visited.add(current)
            steps += 1
            if len(visited) == target:
                break
        if steps >= cap and len(visited) < target:
            raise RuntimeError(
                f"random walk exceeded {cap} steps with {len(visited)}/{target} nodes collected "
                f"on graph {graph.dims}"
            )
    return MaskSet(frozenset(visited), root, float(p_m), graph.dims)


def uniform_cube_mask(graph: StGraph, p_m: float, rng: np.random.Generator) -> MaskSet:
    """Mask round(|V| * p_m) nodes drawn uniformly without replacement."""
    validate_range(p_m, 'mask.p_m', 0.0, 1.0)
    target = mask_target_size(graph.num_nodes, p_m)
    nodes = rng.choice(graph.num_nodes, size=target, replace=False) if target else []
    return MaskSet(frozenset(int(n) for n in nodes), None, float(p_m), graph.dims)


def sample_mask(graph: StGraph, p_m: float, rng: np.random.Generator, mode: str = 'random_walk') -> MaskSet:
    if mode == 'random_walk':
        return random_walk_mask(graph, p_m, rng)
    if mode == 'uniform_cube':
        return uniform_cube_mask(graph, p_m, rng)
    raise ConfigError(f"Invalid mask.mode '{mode}'. Must be one of: random_walk, uniform_cube")


def node_mask_volume(mask: MaskSet, cube: CubeShape) -> np.ndarray:
    """Boolean (F, H, W) volume, True on pixels covered by masked cubes."""
    T, R, C = mask.dims
    grid = np.zeros(T * R * C, dtype=bool)
    if mask.nodes:
        grid[np.fromiter(mask.nodes, dtype=np.int64)] = True
    grid = grid.reshape(T, R, C)
    return grid.repeat(cube.f, axis=0).repeat(cube.h, axis=1).repeat(cube.w, axis=2)


def apply_mask(seq: ObservationSequence, mask: MaskSet, cube: CubeShape) -> ObservationSequence:
    """
    Return a copy of seq with every masked cube set to 0.0 in all channels.

    Raises:
        UsageError: If the mask was built for a different graph
    """
    F, _, H, W = seq.dims
    expected = (F // cube.f, H // cube.h, W // cube.w)
    if F % cube.f or H % cube.h or W % cube.w or tuple(mask.dims) != expected:
        raise UsageError(
            f"mask built for node grid {tuple(mask.dims)} does not match sequence {seq.dims} "
            f"with cube ({cube.f}, {cube.h}, {cube.w})"
        )
    volume = node_mask_volume(mask, cube)
    frames = np.where(volume[:, None, :, :], 0.0, seq.frames)
    return ObservationSequence(
        frames=frames,
        actions=seq.actions.copy(),
        rewards=None if seq.rewards is None else np.array(seq.rewards),
        t0=seq.t0,
        latents=None if seq.latents is None else np.array(seq.latents),
    )


def mask_frames_batch(
    frames: np.ndarray,
    graph: StGraph,
    cube: CubeShape,
    p_m: float,
    rng: np.random.Generator,
    mode: str = 'random_walk',
) -> Tuple[np.ndarray, List[MaskSet]]:
    """
    Mask each sequence of a (B, F, c, H, W) batch with its own independently sampled mask.

    Returns:
        (masked frames copy, list of B MaskSets)
    """
    masked = np.array(frames, dtype=np.float64)
    masks = []
    for b in range(masked.shape[0]):
        mask = sample_mask(graph, p_m, rng, mode)
        if mask.nodes:
            volume = node_mask_volume(mask, cube)
            masked[b][np.broadcast_to(volume[:, None, :, :], masked[b].shape)] = 0.0
        masks.append(mask)
    return masked, masks


def induced_subgraph_connected(graph: StGraph, nodes: Iterable[int]) -> bool:
    """BFS over the subgraph induced by nodes (the empty set counts as connected)."""
    nodes = set(nodes)
    if not nodes:
        return True
    start = next(iter(nodes))
    seen = {start}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for n in graph.adjacency[node]:
            if n in nodes and n not in seen:
                seen.add(n)
                queue.append(n)
    return len(seen) == len(nodes)
