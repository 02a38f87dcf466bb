"""
Predictive decoder: a causal transformer over interleaved state/action tokens.

Token 2i holds state i plus position p_i, token 2i+1 holds action i plus the
same p_i. Attention is causal over token indices, so the output read at
token 2i sees states 0..i and actions 0..i-1 only. The outputs at state
tokens pass through an MLP projection head to give the query states.
"""

import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from mooss.core.tensor import (
    Parameter,
    Tensor,
    add,
    as_tensor,
    causal_mask,
    getitem,
    layer_norm,
    linear,
    relu,
    reshape,
    scaled_dot_product_attention,
    sinusoidal_table,
    stack,
    transpose,
    uniform_parameter,
)
from utils.constants import (
    DEFAULT_EMBED_DIM,
    NUM_ACTIONS,
    FULL_SCALE_DECODER_DEPTH,
    FULL_SCALE_DECODER_HEADS,
    VALID_DECODER_MODES,
)
from utils.validation import ConfigError, UsageError, validate_choice, validate_positive_int

logger = logging.getLogger(__name__)

FFN_MULTIPLIER = 4


@dataclass
class DecoderConfig:
    """
    Decoder architecture.

    mode selects the token layout: 'state_action' (interleaved, the default),
    'state_only' (state tokens only) or 'mlp_only' (projection head on the
    masked embeddings, no transformer). mlp_hidden = 0 means d.
    """
    depth: int = FULL_SCALE_DECODER_DEPTH
    heads: int = FULL_SCALE_DECODER_HEADS
    d: int = DEFAULT_EMBED_DIM
    mlp_hidden: int = 0
    mode: str = 'state_action'

    @property
    def head_width(self) -> int:
        return self.mlp_hidden or self.d

    def validate(self) -> None:
        validate_positive_int(self.depth, 'decoder.depth')
        validate_positive_int(self.heads, 'decoder.heads')
        validate_positive_int(self.d, 'encoder.d')
        if self.mlp_hidden < 0:
            raise ConfigError(f"decoder.mlp_hidden must be >= 0, got {self.mlp_hidden}")
        if self.d % self.heads != 0:
            raise ConfigError(f"encoder.d={self.d} is not divisible by decoder.heads={self.heads}")
        validate_choice(self.mode, 'decoder.mode', VALID_DECODER_MODES)


class ActionEmbedder:
    """Linear map from one-hot action ids to d-dim tokens (a row lookup plus bias)."""

    def __init__(self, d: int, rng: Optional[np.random.Generator], prefix: str = 'decoder.action_embed'):
        self.weight = uniform_parameter(f"{prefix}.weight", (NUM_ACTIONS, d), NUM_ACTIONS, rng)
        self.bias = uniform_parameter(f"{prefix}.bias", (d,), NUM_ACTIONS, rng)

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]

    def __call__(self, actions: np.ndarray) -> Tensor:
        actions = np.asarray(actions, dtype=np.int64)
        if actions.size and (actions.min() < 0 or actions.max() >= NUM_ACTIONS):
            raise UsageError(f"action ids must be in [0, {NUM_ACTIONS - 1}], got {actions.min()}..{actions.max()}")
        return add(getitem(self.weight, actions), self.bias)


@dataclass
class TokenSequence:
    """tokens (B, 2F, d) or (B, F, d) for state-only; positions as added to the tokens."""
    tokens: Tensor
    positions: np.ndarray
    interleaved: bool = True

    @property
    def num_states(self) -> int:
        length = self.tokens.shape[1]
        return length // 2 if self.interleaved else length


def build_token_sequence(states, actions: np.ndarray, embedder: ActionEmbedder) -> TokenSequence:
    """
    Interleave states and embedded actions and add duplicated positions.

    Args:
        states: (B, F, d) masked state embeddings
        actions: (B, F) integer action ids
        embedder: ActionEmbedder

    Raises:
        UsageError: If actions do not align with the states
    """
    states = as_tensor(states)
    actions = np.asarray(actions)
    if states.ndim != 3 or actions.shape != states.shape[:2]:
        raise UsageError(
            f"actions of shape {actions.shape} do not align with states of shape {states.shape}"
        )
    B, F, d = states.shape
    pairs = stack([states, embedder(actions)], axis=2)
    positions = np.repeat(sinusoidal_table(F, d), 2, axis=0)
    return TokenSequence(add(reshape(pairs, (B, 2 * F, d)), positions), positions)


def build_state_sequence(states) -> TokenSequence:
    """State tokens plus positions, no actions."""
    states = as_tensor(states)
    _, F, d = states.shape
    positions = sinusoidal_table(F, d)
    return TokenSequence(add(states, positions), positions, interleaved=False)


class TransformerBlock:
    """Pre-norm block: x + attn(ln(x)), then x + ffn(ln(x))."""

    def __init__(self, d: int, heads: int, rng: Optional[np.random.Generator], prefix: str):
        self.d = d
        self.heads = heads
        hidden = FFN_MULTIPLIER * d
        self.ln1_gamma = Parameter(np.ones(d), f"{prefix}.ln1.gamma")
        self.ln1_beta = Parameter(np.zeros(d), f"{prefix}.ln1.beta")
        self.proj = {}
        for name in ('q', 'k', 'v', 'o'):
            self.proj[name] = (
                uniform_parameter(f"{prefix}.attn.{name}.weight", (d, d), d, rng),
                uniform_parameter(f"{prefix}.attn.{name}.bias", (d,), d, rng),
            )
        self.ln2_gamma = Parameter(np.ones(d), f"{prefix}.ln2.gamma")
        self.ln2_beta = Parameter(np.zeros(d), f"{prefix}.ln2.beta")
        self.ffn_in = (
            uniform_parameter(f"{prefix}.ffn.in.weight", (d, hidden), d, rng),
            uniform_parameter(f"{prefix}.ffn.in.bias", (hidden,), d, rng),
        )
        self.ffn_out = (
            uniform_parameter(f"{prefix}.ffn.out.weight", (hidden, d), hidden, rng),
            uniform_parameter(f"{prefix}.ffn.out.bias", (d,), hidden, rng),
        )

    def parameters(self) -> List[Parameter]:
        params = [self.ln1_gamma, self.ln1_beta]
        for name in ('q', 'k', 'v', 'o'):
            params.extend(self.proj[name])
        params.extend([self.ln2_gamma, self.ln2_beta, *self.ffn_in, *self.ffn_out])
        return params

    def _split_heads(self, x: Tensor) -> Tensor:
        B, T, _ = x.shape
        return transpose(reshape(x, (B, T, self.heads, self.d // self.heads)), (0, 2, 1, 3))

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        B, T, d = x.shape
        h = layer_norm(x, self.ln1_gamma, self.ln1_beta)
        q, k, v = (self._split_heads(linear(h, *self.proj[name])) for name in ('q', 'k', 'v'))
        attended = scaled_dot_product_attention(q, k, v, mask)
        merged = reshape(transpose(attended, (0, 2, 1, 3)), (B, T, d))
        x = add(x, linear(merged, *self.proj['o']))

        h = layer_norm(x, self.ln2_gamma, self.ln2_beta)
        h = linear(relu(linear(h, *self.ffn_in)), *self.ffn_out)
        return add(x, h)


class PredictiveDecoder:
    """g_phi with its action embedder and projection head."""

    def __init__(self, config: DecoderConfig, rng: Optional[np.random.Generator], prefix: str = 'decoder'):
        config.validate()
        self.config = config
        d, hidden = config.d, config.head_width
        self.embedder = ActionEmbedder(d, rng, prefix=f"{prefix}.action_embed")
        self.blocks: List[TransformerBlock] = []
        if config.mode != 'mlp_only':
            self.blocks = [
                TransformerBlock(d, config.heads, rng, prefix=f"{prefix}.block{i}")
                for i in range(config.depth)
            ]
        self.ln_gamma = Parameter(np.ones(d), f"{prefix}.ln_final.gamma")
        self.ln_beta = Parameter(np.zeros(d), f"{prefix}.ln_final.beta")
        self.head_in = (
            uniform_parameter(f"{prefix}.head.in.weight", (d, hidden), d, rng),
            uniform_parameter(f"{prefix}.head.in.bias", (hidden,), d, rng),
        )
        self.head_out = (
            uniform_parameter(f"{prefix}.head.out.weight", (hidden, d), hidden, rng),
            uniform_parameter(f"{prefix}.head.out.bias", (d,), hidden, rng),
        )

    def parameters(self) -> List[Parameter]:
        params = []
        if self.config.mode == 'state_action':
            params.extend(self.embedder.parameters())
        for block in self.blocks:
            params.extend(block.parameters())
        if self.blocks:
            params.extend([self.ln_gamma, self.ln_beta])
        params.extend([*self.head_in, *self.head_out])
        return params

    def project(self, x: Tensor) -> Tensor:
        return linear(relu(linear(x, *self.head_in)), *self.head_out)

    def decode(self, tokens: TokenSequence) -> Tensor:
        """
        Run the causal transformer and project the outputs at state tokens.

        Returns:
            (B, F, d) query states
        """
        x = tokens.tokens
        if x.ndim != 3 or x.shape[2] != self.config.d:
            raise UsageError(f"decoder expects tokens of shape (B, T, {self.config.d}), got {x.shape}")
        if tokens.interleaved and x.shape[1] % 2 != 0:
            raise UsageError(f"interleaved token sequence must have even length, got {x.shape[1]}")
        mask = causal_mask(x.shape[1])
        for block in self.blocks:
            x = block(x, mask)
        x = layer_norm(x, self.ln_gamma, self.ln_beta)
        if tokens.interleaved:
            x = getitem(x, (slice(None), slice(0, None, 2)))
        return self.project(x)

    def forward(self, states, actions: np.ndarray) -> Tensor:
        """Query states from masked state embeddings according to config.mode."""
        mode = self.config.mode
        if mode == 'mlp_only':
            return self.project(as_tensor(states))
        if mode == 'state_only':
            return self.decode(build_state_sequence(states))
        return self.decode(build_token_sequence(states, actions, self.embedder))

    __call__ = forward


def decode(decoder: PredictiveDecoder, tokens: TokenSequence) -> Tensor:
    return decoder.decode(tokens)
