#!/usr/bin/env python3
"""
Run configuration for MOOSS training.

Configs are UTF-8 text files with one `key = value` per line. Keys carry a
dotted section prefix (`env.H = 28`), `#` starts a comment, and tuples are
comma-separated (`encoder.channels = 8, 16, 16`). Every key is listed in
CONFIG_SCHEMA with its type, default and description; docs/CONFIG_SCHEMA.md
mirrors it.

Usage:
    from mooss.config import load_train_config

    config = load_train_config('config/desk_default.cfg')
    print(config.run.steps)        # 3000
    print(config.graph_dims)       # (4, 4, 4)
"""

import dataclasses
import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Tuple

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from mooss.core.contrastive import ContrastiveConfig
from mooss.core.decoder import DecoderConfig
from mooss.core.encoder import EncoderConfig
from mooss.core.st_graph import CubeShape
from mooss.env.moving_dot import EnvConfig
from utils.constants import (
    DEFAULT_ADAM_BETAS,
    DEFAULT_ADAM_EPS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CUBE,
    DEFAULT_EVAL_EVERY,
    DEFAULT_LEARNING_RATE,
    DEFAULT_SEQUENCE_LENGTH,
    DEFAULT_STEPS,
    DEFAULT_WARMUP_STEPS,
    FULL_SCALE_MASK_RATIO,
    VALID_MASK_MODES,
)
from utils.validation import (
    ConfigError,
    validate_choice,
    validate_divisible,
    validate_file_exists,
    validate_positive_int,
    validate_range,
)


@dataclass
class MaskConfig:
    p_m: float = FULL_SCALE_MASK_RATIO
    mode: str = 'random_walk'

    def validate(self) -> None:
        validate_range(self.p_m, 'mask.p_m', 0.0, 1.0)
        validate_choice(self.mode, 'mask.mode', VALID_MASK_MODES)


@dataclass
class AdamConfig:
    """
    Optimizer settings.

    lr applies to the encoder; mooss_lr to the decoder, action embedder and
    similarity matrix (0 means the same as lr). Warmup ramps the MOOSS group only.
    """
    lr: float = DEFAULT_LEARNING_RATE
    mooss_lr: float = 0.0
    beta1: float = DEFAULT_ADAM_BETAS[0]
    beta2: float = DEFAULT_ADAM_BETAS[1]
    eps: float = DEFAULT_ADAM_EPS
    warmup_steps: int = DEFAULT_WARMUP_STEPS

    @property
    def effective_mooss_lr(self) -> float:
        return self.mooss_lr or self.lr

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"adam.lr must be > 0, got {self.lr}")
        validate_range(self.mooss_lr, 'adam.mooss_lr', 0.0)
        validate_range(self.beta1, 'adam.beta1', 0.0, 1.0, high_inclusive=False)
        validate_range(self.beta2, 'adam.beta2', 0.0, 1.0, high_inclusive=False)
        if self.eps <= 0:
            raise ConfigError(f"adam.eps must be > 0, got {self.eps}")
        if self.warmup_steps < 0:
            raise ConfigError(f"adam.warmup_steps must be >= 0, got {self.warmup_steps}")


@dataclass
class RunConfig:
    F: int = DEFAULT_SEQUENCE_LENGTH
    B: int = DEFAULT_BATCH_SIZE
    steps: int = DEFAULT_STEPS
    eval_every: int = DEFAULT_EVAL_EVERY
    eval_batches: int = 8
    log_every: int = 1
    episodes: int = 64
    eval_episodes: int = 16
    buffer_capacity: int = 0
    seed: int = 0
    output_dir: str = 'runs/desk_default'

    def validate(self) -> None:
        for name in ('F', 'B', 'steps', 'eval_every', 'eval_batches', 'log_every', 'episodes'):
            validate_positive_int(getattr(self, name), f'run.{name}')
        validate_positive_int(self.eval_episodes, 'run.eval_episodes')
        if self.eval_episodes < 2:
            raise ConfigError(f"run.eval_episodes must be >= 2 (probe needs a held-out split), got {self.eval_episodes}")
        if self.buffer_capacity < 0:
            raise ConfigError(f"run.buffer_capacity must be >= 0, got {self.buffer_capacity}")
        if self.seed < 0:
            raise ConfigError(f"run.seed must be >= 0, got {self.seed}")


@dataclass
class TrainConfig:
    """All tunables of a run; derived fields (encoder input dims, decoder.d) follow env and encoder."""
    env: EnvConfig = field(default_factory=EnvConfig)
    cube: CubeShape = field(default_factory=lambda: CubeShape(*DEFAULT_CUBE))
    mask: MaskConfig = field(default_factory=MaskConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    adam: AdamConfig = field(default_factory=AdamConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        self.sync_derived()

    def sync_derived(self) -> None:
        self.encoder.in_channels = self.env.c
        self.encoder.height = self.env.H
        self.encoder.width = self.env.W
        self.decoder.d = self.encoder.d

    @property
    def graph_dims(self) -> Tuple[int, int, int]:
        return (self.run.F // self.cube.f, self.env.H // self.cube.h, self.env.W // self.cube.w)

    def validate(self) -> None:
        """
        Validate every section and the cross-section constraints.

        Raises:
            ConfigError: Naming the offending key or axis
        """
        self.env.validate()
        self.cube.validate()
        self.mask.validate()
        self.run.validate()
        validate_divisible('F', self.run.F, self.cube.f, 'f')
        validate_divisible('H', self.env.H, self.cube.h, 'h')
        validate_divisible('W', self.env.W, self.cube.w, 'w')
        if self.env.T < self.run.F:
            raise ConfigError(f"env.T={self.env.T} must be >= run.F={self.run.F}")
        if (self.encoder.in_channels, self.encoder.height, self.encoder.width) != (self.env.c, self.env.H, self.env.W):
            raise ConfigError(
                f"encoder input dims {(self.encoder.in_channels, self.encoder.height, self.encoder.width)} "
                f"do not match env dims {(self.env.c, self.env.H, self.env.W)}"
            )
        if self.decoder.d != self.encoder.d:
            raise ConfigError(f"decoder.d={self.decoder.d} must equal encoder.d={self.encoder.d}")
        self.encoder.validate()
        self.decoder.validate()
        self.contrastive.validate()
        self.adam.validate()


# ==============================================================================
# SCHEMA
# ==============================================================================

SECTIONS = {
    'env': EnvConfig,
    'cube': CubeShape,
    'mask': MaskConfig,
    'encoder': EncoderConfig,
    'decoder': DecoderConfig,
    'contrastive': ContrastiveConfig,
    'adam': AdamConfig,
    'run': RunConfig,
}

# Fields filled from other sections, not settable in files
DERIVED_FIELDS = {'encoder.in_channels', 'encoder.height', 'encoder.width', 'decoder.d'}

DESCRIPTIONS = {
    'env.H': "frame height in pixels",
    'env.W': "frame width in pixels",
    'env.c': "channels per frame (the dot is replicated across channels)",
    'env.dt': "integration timestep",
    'env.accel': "velocity change per accelerating action",
    'env.v_max': "per-axis speed limit",
    'env.radius': "dot radius in pixels (>= 1)",
    'env.softness': "edge blur sigma in pixels",
    'env.T': "episode length (>= run.F)",
    'env.seed': "episode seed used by dump-episode when --seed is not given",
    'cube.f': "cube temporal length",
    'cube.h': "cube height",
    'cube.w': "cube width",
    'mask.p_m': "mask ratio in [0, 1]",
    'mask.mode': "random_walk or uniform_cube",
    'encoder.channels': "output channels per conv layer",
    'encoder.kernels': "square kernel size per conv layer",
    'encoder.strides': "stride per conv layer",
    'encoder.d': "state embedding dimension",
    'encoder.layer_norm': "layer-normalize the embedding",
    'encoder.ema_momentum': "key encoder EMA momentum m in [0, 1)",
    'decoder.depth': "transformer layers",
    'decoder.heads': "attention heads (must divide encoder.d)",
    'decoder.mlp_hidden': "projection head width (0 = encoder.d)",
    'decoder.mode': "state_action, state_only or mlp_only",
    'contrastive.L': "temporal window size",
    'contrastive.tau0': "level-0 temperature",
    'contrastive.tau_skip': "temperature increment per level",
    'contrastive.lam': "weight of the contrastive loss",
    'adam.lr': "encoder learning rate",
    'adam.mooss_lr': "decoder / embedder / W learning rate (0 = adam.lr)",
    'adam.beta1': "first moment decay",
    'adam.beta2': "second moment decay",
    'adam.eps': "denominator epsilon",
    'adam.warmup_steps': "linear warmup steps for the MOOSS group",
    'run.F': "sequence length",
    'run.B': "batch size",
    'run.steps': "optimization steps",
    'run.eval_every': "steps between evaluations and checkpoints",
    'run.eval_batches': "held-out batches per smoothness evaluation",
    'run.log_every': "steps between metrics rows",
    'run.episodes': "training episodes generated before training",
    'run.eval_episodes': "held-out episodes (>= 2)",
    'run.buffer_capacity': "replay buffer capacity (0 = run.episodes)",
    'run.seed': "master seed",
    'run.output_dir': "directory for metrics, checkpoints and exports",
}


@dataclass(frozen=True)
class ConfigKey:
    key: str
    kind: str
    default: Any
    description: str


def _kind_of(value: Any) -> str:
    if isinstance(value, bool):
        return 'bool'
    if isinstance(value, int):
        return 'int'
    if isinstance(value, float):
        return 'float'
    if isinstance(value, tuple):
        return 'int tuple'
    return 'str'


def _build_schema() -> Dict[str, ConfigKey]:
    defaults = TrainConfig()
    schema = {}
    for section, cls in SECTIONS.items():
        instance = getattr(defaults, section)
        for f in dataclasses.fields(cls):
            key = f"{section}.{f.name}"
            if key in DERIVED_FIELDS:
                continue
            value = getattr(instance, f.name)
            schema[key] = ConfigKey(key, _kind_of(value), value, DESCRIPTIONS.get(key, ''))
    return schema


CONFIG_SCHEMA: Dict[str, ConfigKey] = _build_schema()


# ==============================================================================
# PARSING AND SERIALIZATION
# ==============================================================================

_TRUE = {'true', 'yes', '1', 'on'}
_FALSE = {'false', 'no', '0', 'off'}


def _convert(key: str, kind: str, raw: str) -> Any:
    try:
        if kind == 'bool':
            lowered = raw.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(raw)
        if kind == 'int':
            return int(raw)
        if kind == 'float':
            return float(raw)
        if kind == 'int tuple':
            return tuple(int(part) for part in raw.split(',') if part.strip())
        return raw
    except ValueError:
        raise ConfigError(f"Invalid value for {key}: expected {kind}, got '{raw}'") from None


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ', '.join(str(v) for v in value)
    return str(value)


def from_flat_dict(values: Dict[str, Any]) -> TrainConfig:
    """Build a TrainConfig from schema keys; missing keys take their defaults."""
    unknown = sorted(set(values) - set(CONFIG_SCHEMA))
    if unknown:
        raise ConfigError(f"Unknown config key(s): {', '.join(unknown)}")
    kwargs: Dict[str, Dict[str, Any]] = {section: {} for section in SECTIONS}
    for key, spec in CONFIG_SCHEMA.items():
        section, name = key.split('.', 1)
        kwargs[section][name] = values.get(key, spec.default)
    try:
        return TrainConfig(**{section: cls(**kwargs[section]) for section, cls in SECTIONS.items()})
    except TypeError as e:
        raise ConfigError(f"Invalid config: {e}") from None


def to_flat_dict(config: TrainConfig) -> Dict[str, Any]:
    return {key: getattr(getattr(config, key.split('.', 1)[0]), key.split('.', 1)[1]) for key in CONFIG_SCHEMA}


def with_overrides(config: TrainConfig, overrides: Dict[str, Any]) -> TrainConfig:
    """Copy of config with some keys replaced (values already typed)."""
    values = to_flat_dict(config)
    values.update(overrides)
    return from_flat_dict(values)


def parse_config_text(text: str, source: str = '<text>') -> TrainConfig:
    """
    Parse `key = value` lines into a validated TrainConfig.

    Raises:
        ConfigError: For malformed lines, unknown or repeated keys, bad values
            or failed validation
    """
    values: Dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{line}'")
        key, raw = (part.strip() for part in line.split('=', 1))
        if key not in CONFIG_SCHEMA:
            if key in DERIVED_FIELDS:
                raise ConfigError(f"{source}:{lineno}: {key} is derived and cannot be set")
            raise ConfigError(f"{source}:{lineno}: unknown config key '{key}'")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: config key '{key}' set more than once")
        values[key] = _convert(key, CONFIG_SCHEMA[key].kind, raw)

    config = from_flat_dict(values)
    config.validate()
    return config


def load_train_config(path) -> TrainConfig:
    """
    Load and validate a config file.

    Raises:
        UsageError: If the file is missing
        ConfigError: If the file is invalid
    """
    path = Path(path)
    validate_file_exists(path, "Config file")
    return parse_config_text(path.read_text(encoding='utf-8'), source=str(path))


def format_train_config(config: TrainConfig) -> str:
    lines = []
    current = None
    for key in CONFIG_SCHEMA:
        section = key.split('.', 1)[0]
        if section != current:
            if current is not None:
                lines.append('')
            lines.append(f"# {section}")
            current = section
        lines.append(f"{key} = {_format(to_flat_dict(config)[key])}")
    return '\n'.join(lines) + '\n'


def save_train_config(config: TrainConfig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_train_config(config), encoding='utf-8')


def config_hash(config: TrainConfig) -> str:
    """Stable digest of every schema value."""
    canonical = '\n'.join(f"{k}={_format(v)}" for k, v in to_flat_dict(config).items())
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]


def tiny_gradcheck_config() -> TrainConfig:
    """8x8 frames, d=8 encoder, one decoder layer, F=4, B=2, L=2, p_m=0.25."""
    return from_flat_dict({
        'env.H': 8, 'env.W': 8, 'env.T': 8, 'env.radius': 1.5,
        'cube.f': 2, 'cube.h': 4, 'cube.w': 4,
        'mask.p_m': 0.25,
        'encoder.channels': (4, 8), 'encoder.kernels': (3, 3), 'encoder.strides': (2, 1), 'encoder.d': 8,
        'decoder.depth': 1, 'decoder.heads': 2,
        'contrastive.L': 2,
        'run.F': 4, 'run.B': 2, 'run.episodes': 2, 'run.eval_episodes': 2,
        'run.output_dir': 'runs/gradcheck_tiny',
    })
