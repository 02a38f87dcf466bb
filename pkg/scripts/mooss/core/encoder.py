"""
Observation encoders: the query encoder, its momentum key copy, and the EMA coupling.

Each frame is encoded independently: conv layers with relu, flatten, a linear
map to d, then layer normalization.
"""

import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from mooss.core.tensor import (
    Parameter,
    Tensor,
    as_tensor,
    conv2d,
    layer_norm,
    linear,
    no_grad,
    relu,
    reshape,
    uniform_parameter,
)
from utils.constants import (
    DEFAULT_CHANNELS,
    DEFAULT_CONV_CHANNELS,
    DEFAULT_CONV_KERNELS,
    DEFAULT_CONV_STRIDES,
    DEFAULT_EMBED_DIM,
    DEFAULT_FRAME_SIZE,
    FULL_SCALE_EMA_MOMENTUM,
)
from utils.validation import ConfigError, UsageError, validate_positive_int, validate_range

logger = logging.getLogger(__name__)


@dataclass
class EncoderConfig:
    """
    Conv encoder architecture.

    channels, kernels and strides have one entry per conv layer; in_channels,
    height and width are the frame dims (taken from the environment).
    """
    channels: Tuple[int, ...] = DEFAULT_CONV_CHANNELS
    kernels: Tuple[int, ...] = DEFAULT_CONV_KERNELS
    strides: Tuple[int, ...] = DEFAULT_CONV_STRIDES
    d: int = DEFAULT_EMBED_DIM
    layer_norm: bool = True
    ema_momentum: float = FULL_SCALE_EMA_MOMENTUM
    in_channels: int = DEFAULT_CHANNELS
    height: int = DEFAULT_FRAME_SIZE
    width: int = DEFAULT_FRAME_SIZE

    @property
    def conv_depth(self) -> int:
        return len(self.channels)

    def conv_output_shape(self) -> Tuple[int, int, int]:
        """(channels, rows, cols) after the conv stack."""
        c, h, w = self.in_channels, self.height, self.width
        for layer, (out_c, k, s) in enumerate(zip(self.channels, self.kernels, self.strides)):
            if k > h or k > w:
                raise ConfigError(
                    f"encoder conv layer {layer}: kernel {k} exceeds its {h}x{w} input"
                )
            c, h, w = out_c, (h - k) // s + 1, (w - k) // s + 1
        return c, h, w

    def validate(self) -> None:
        validate_positive_int(self.d, 'encoder.d')
        validate_positive_int(self.in_channels, 'env.c')
        validate_positive_int(self.height, 'env.H')
        validate_positive_int(self.width, 'env.W')
        if not (len(self.channels) == len(self.kernels) == len(self.strides)):
            raise ConfigError(
                "encoder.channels, encoder.kernels and encoder.strides must have the same length, "
                f"got {len(self.channels)}, {len(self.kernels)}, {len(self.strides)}"
            )
        for name, values in (('encoder.channels', self.channels), ('encoder.kernels', self.kernels),
                             ('encoder.strides', self.strides)):
            for v in values:
                validate_positive_int(v, name)
        validate_range(self.ema_momentum, 'encoder.ema_momentum', 0.0, 1.0, high_inclusive=False)
        self.conv_output_shape()


class ConvEncoder:
    """
    f_theta: maps (B, F, c, H, W) frames to (B, F, d) state embeddings.

    Weights are drawn from U[-1/sqrt(fan_in), 1/sqrt(fan_in)]; pass rng=None
    for an all-zero encoder (layer norm gains are 1 either way).
    """

    def __init__(
        self,
        config: EncoderConfig,
        rng: Optional[np.random.Generator],
        prefix: str = 'query_encoder',
        trainable: bool = True,
    ):
        config.validate()
        self.config = config
        self.prefix = prefix
        self.conv_weights: List[Parameter] = []
        self.conv_biases: List[Parameter] = []

        in_c = config.in_channels
        for layer, (out_c, k) in enumerate(zip(config.channels, config.kernels)):
            fan_in = in_c * k * k
            self.conv_weights.append(uniform_parameter(f"{prefix}.conv{layer}.weight", (out_c, in_c, k, k), fan_in, rng))
            self.conv_biases.append(uniform_parameter(f"{prefix}.conv{layer}.bias", (out_c,), fan_in, rng))
            in_c = out_c

        self.flat_features = int(np.prod(config.conv_output_shape()))
        self.head_weight = uniform_parameter(f"{prefix}.head.weight", (self.flat_features, config.d), self.flat_features, rng)
        self.head_bias = uniform_parameter(f"{prefix}.head.bias", (config.d,), self.flat_features, rng)
        self.ln_gamma = Parameter(np.ones(config.d), f"{prefix}.ln.gamma") if config.layer_norm else None
        self.ln_beta = Parameter(np.zeros(config.d), f"{prefix}.ln.beta") if config.layer_norm else None

        if not trainable:
            self.freeze()

    def parameters(self) -> List[Parameter]:
        params = []
        for w, b in zip(self.conv_weights, self.conv_biases):
            params.extend([w, b])
        params.extend([self.head_weight, self.head_bias])
        if self.ln_gamma is not None:
            params.extend([self.ln_gamma, self.ln_beta])
        return params

    def freeze(self) -> None:
        for p in self.parameters():
            p.requires_grad = False
            p.grad = None

    def encode(self, frames) -> Tensor:
        """
        Encode every frame of a (B, F, c, H, W) batch independently.

        Raises:
            UsageError: If the frame dims do not match the config
        """
        frames = as_tensor(frames)
        cfg = self.config
        if frames.ndim != 5 or frames.shape[2:] != (cfg.in_channels, cfg.height, cfg.width):
            raise UsageError(
                f"encoder expects frames of shape (B, F, {cfg.in_channels}, {cfg.height}, {cfg.width}), "
                f"got {frames.shape}"
            )
        B, F = frames.shape[:2]
        x = reshape(frames, (B * F, cfg.in_channels, cfg.height, cfg.width))
        for w, b, stride in zip(self.conv_weights, self.conv_biases, cfg.strides):
            x = relu(conv2d(x, w, b, stride=stride))
        x = linear(reshape(x, (B * F, self.flat_features)), self.head_weight, self.head_bias)
        if self.ln_gamma is not None:
            x = layer_norm(x, self.ln_gamma, self.ln_beta)
        return reshape(x, (B, F, cfg.d))

    __call__ = encode


class EncoderPair:
    """
    Query encoder (trained) and momentum key encoder (EMA copy, never trained).

    The key encoder starts as an exact copy of the query encoder.
    """

    def __init__(self, query: ConvEncoder, momentum: float = FULL_SCALE_EMA_MOMENTUM):
        validate_range(momentum, 'encoder.ema_momentum', 0.0, 1.0, high_inclusive=False)
        self.query = query
        self.key = ConvEncoder(query.config, rng=None, prefix='key_encoder', trainable=False)
        for k, q in zip(self.key.parameters(), query.parameters()):
            k.data[...] = q.data
        self.momentum = float(momentum)

    def encode_keys(self, frames) -> Tensor:
        """Key states for unmasked frames, computed without recording a trace."""
        with no_grad():
            return self.key.encode(frames)


def ema_update(pair: EncoderPair, momentum: Optional[float] = None) -> None:
    """
    key <- m * key + (1 - m) * query, in place and outside the trace.

    m = 0 copies the query exactly; a key equal to the query stays bit-identical.
    """
    m = pair.momentum if momentum is None else float(momentum)
    for k, q in zip(pair.key.parameters(), pair.query.parameters()):
        if k.shape != q.shape:
            raise UsageError(f"EMA shape mismatch for {k.name}: {k.shape} vs {q.shape}")
        if m == 0.0:
            k.data[...] = q.data
        else:
            k.data += (1.0 - m) * (q.data - k.data)
