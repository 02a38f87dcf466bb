#!/usr/bin/env python3
"""
MOOSS training loop.

One step: mask each sequence, encode the masked frames with the query
encoder, decode state/action tokens into query states, encode the unmasked
frames with the key encoder (no trace), compute task + lambda * contrastive
loss, backpropagate, take an Adam step, then move the key encoder by EMA.
"""

import logging
import math
import time
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
from tqdm import tqdm

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from mooss.checkpoint import Checkpoint, restore_parameters, save_checkpoint
from mooss.config import TrainConfig, tiny_gradcheck_config, with_overrides
from mooss.core.contrastive import BilinearSimilarity, mooss_loss, similarity_by_delta, total_loss
from mooss.core.decoder import PredictiveDecoder
from mooss.core.encoder import ConvEncoder, EncoderPair, ema_update
from mooss.core.gradcheck import GradCheckReport, grad_check
from mooss.core.optim import Adam, ParamGroup, grad_global_norm
from mooss.core.st_graph import StGraph, build_graph, mask_frames_batch
from mooss.core.tensor import Parameter, Tensor
from mooss.env.replay_buffer import ReplayBuffer, SequenceBatch, fill_buffer
from mooss.evaluation import SmoothnessReport, eval_probe, eval_smoothness
from mooss.export import MetricsLog, write_ablation_csv
from utils.seeding import SeedStreams
from utils.validation import NumericalError

logger = logging.getLogger(__name__)

TaskLossFn = Callable[['TrainState', SequenceBatch], Tensor]


@dataclass
class Models:
    encoders: EncoderPair
    decoder: PredictiveDecoder
    similarity: BilinearSimilarity

    @property
    def query_encoder(self) -> ConvEncoder:
        return self.encoders.query

    def mooss_parameters(self) -> List[Parameter]:
        """Parameters used only by the auxiliary objective."""
        return self.decoder.parameters() + self.similarity.parameters()

    def trainable_parameters(self) -> List[Parameter]:
        return self.encoders.query.parameters() + self.mooss_parameters()

    def components(self) -> Dict[str, List[Parameter]]:
        return {
            'query_encoder': self.encoders.query.parameters(),
            'key_encoder': self.encoders.key.parameters(),
            'decoder': self.decoder.parameters(),
            'similarity': self.similarity.parameters(),
        }


def build_models(config: TrainConfig, rng: np.random.Generator) -> Models:
    query = ConvEncoder(config.encoder, rng, prefix='query_encoder')
    return Models(
        encoders=EncoderPair(query, config.encoder.ema_momentum),
        decoder=PredictiveDecoder(config.decoder, rng),
        similarity=BilinearSimilarity(config.encoder.d),
    )


def restore_models(checkpoint: Checkpoint, config: Optional[TrainConfig] = None) -> Models:
    """Models of config (default: the checkpoint's own) with the stored parameters."""
    config = config or checkpoint.config
    models = build_models(config, rng=None)
    for name, params in models.components().items():
        restore_parameters(params, checkpoint.arrays[name], name)
    return models


@dataclass
class MetricsRow:
    step: int
    total_loss: float
    level_losses: List[float]
    sim_buckets: List[float]
    sim_cross: float
    grad_norm: float
    probe_mse: Optional[float] = None
    wall_ms: float = 0.0

    def as_dict(self) -> Dict[str, object]:
        row: Dict[str, object] = {'step': self.step, 'total_loss': self.total_loss}
        row.update({f"loss_l{l}": v for l, v in enumerate(self.level_losses)})
        row.update({f"sim_d{l}": v for l, v in enumerate(self.sim_buckets)})
        row.update({
            'sim_cross': self.sim_cross,
            'grad_norm': self.grad_norm,
            'probe_mse': self.probe_mse,
            'wall_ms': self.wall_ms,
        })
        return row

    def deterministic_fields(self) -> tuple:
        """Every field except wall-clock time."""
        return (self.step, self.total_loss, tuple(self.level_losses), tuple(self.sim_buckets),
                self.sim_cross, self.grad_norm, self.probe_mse)


@dataclass
class TrainState:
    config: TrainConfig
    models: Models
    optimizer: Adam
    graph: StGraph
    streams: SeedStreams
    mask_rng: np.random.Generator
    batch_rng: np.random.Generator
    buffer: ReplayBuffer
    eval_buffer: ReplayBuffer
    step: int = 0


def build_train_state(
    config: TrainConfig,
    buffer: Optional[ReplayBuffer] = None,
    eval_buffer: Optional[ReplayBuffer] = None,
) -> TrainState:
    """
    Validate config, initialize models and optimizer, and fill the replay buffers.

    Each concern draws from its own stream of the master seed.
    """
    config.validate()
    run = config.run
    streams = SeedStreams(run.seed)
    models = build_models(config, streams.rng('init'))

    groups = [
        ParamGroup('encoder', models.query_encoder.parameters(), config.adam.lr),
        ParamGroup('mooss', models.mooss_parameters(), config.adam.effective_mooss_lr, config.adam.warmup_steps),
    ]
    optimizer = Adam(groups, betas=(config.adam.beta1, config.adam.beta2), eps=config.adam.eps)

    if buffer is None:
        buffer = fill_buffer(
            config.env, run.episodes, streams.rng('env'),
            capacity=run.buffer_capacity or run.episodes, desc="Training episodes",
        )
    if eval_buffer is None:
        eval_buffer = fill_buffer(config.env, run.eval_episodes, streams.rng('eval_env'), desc="Held-out episodes")

    return TrainState(
        config=config,
        models=models,
        optimizer=optimizer,
        graph=build_graph(run.F, config.env.H, config.env.W, config.cube),
        streams=streams,
        mask_rng=streams.rng('mask'),
        batch_rng=streams.rng('batch'),
        buffer=buffer,
        eval_buffer=eval_buffer,
    )


def forward_loss(state: TrainState, batch: SequenceBatch, masked_frames: np.ndarray,
                 task_loss_fn: Optional[TaskLossFn] = None):
    """(total loss Tensor, MoossLossResult) for a batch whose masks are already applied."""
    cfg = state.config
    models = state.models
    states = models.encoders.query.encode(masked_frames)
    queries = models.decoder(states, batch.actions)
    keys = models.encoders.encode_keys(batch.frames)
    result = mooss_loss(queries, keys, models.similarity.W, cfg.contrastive)
    task = task_loss_fn(state, batch) if task_loss_fn is not None else Tensor(0.0)
    return total_loss(task, result.total, cfg.contrastive.lam), result


def train_step(state: TrainState, batch: SequenceBatch, task_loss_fn: Optional[TaskLossFn] = None) -> MetricsRow:
    """
    Exactly one optimization step on batch.

    Raises:
        NumericalError: If any forward quantity becomes non-finite
    """
    started = time.perf_counter()
    cfg = state.config
    masked, _ = mask_frames_batch(batch.frames, state.graph, cfg.cube, cfg.mask.p_m, state.mask_rng, cfg.mask.mode)

    state.optimizer.zero_grad()
    loss, result = forward_loss(state, batch, masked, task_loss_fn)
    loss_value = loss.item()
    if not math.isfinite(loss_value):
        raise NumericalError(f"non-finite total loss at step {state.step + 1}")
    loss.backward()
    grad_norm = grad_global_norm(state.optimizer.params)
    state.optimizer.step()
    ema_update(state.models.encoders)
    state.step += 1

    buckets, cross = similarity_by_delta(result.sims, result.partition)
    return MetricsRow(
        step=state.step,
        total_loss=loss_value,
        level_losses=result.level_losses,
        sim_buckets=buckets,
        sim_cross=cross,
        grad_norm=grad_norm,
        wall_ms=(time.perf_counter() - started) * 1000.0,
    )


@dataclass
class EvalResult:
    smoothness: SmoothnessReport
    probe_mse: float


def evaluate_models(config: TrainConfig, models: Models, eval_buffer: ReplayBuffer, L: Optional[int] = None) -> EvalResult:
    """Smoothness buckets (on a fixed eval stream) and probe MSE of the query encoder."""
    run = config.run
    smoothness = eval_smoothness(
        models.query_encoder,
        models.similarity.W.data,
        eval_buffer,
        run.eval_batches,
        run.B,
        run.F,
        config.contrastive.L if L is None else L,
        SeedStreams(run.seed).rng('eval'),
    )
    return EvalResult(smoothness, eval_probe(models.query_encoder, eval_buffer))


@dataclass
class TrainResult:
    state: TrainState
    rows: List[MetricsRow]
    final_eval: EvalResult
    output_dir: Optional[Path] = None


def _log_eval(step: int, result: EvalResult) -> None:
    buckets = ', '.join(f"{v:.4f}" for v in result.smoothness.bucket_means)
    logger.info(
        f"  step {step}: sim by distance [{buckets}] cross {result.smoothness.cross_mean:.4f} "
        f"rho {result.smoothness.spearman:.3f} probe_mse {result.probe_mse:.5f}"
    )


def train(
    config: TrainConfig,
    output_dir=None,
    progress: bool = True,
    task_loss_fn: Optional[TaskLossFn] = None,
    state: Optional[TrainState] = None,
) -> TrainResult:
    """
    Run config.run.steps training steps.

    With an output_dir, metrics.csv is appended every log_every steps and a
    checkpoint is written at step 0, every eval_every steps and at the end.

    Raises:
        NumericalError: If training diverges; the message names the last good checkpoint
    """
    state = state or build_train_state(config)
    run = config.run
    out = Path(output_dir) if output_dir is not None else None
    metrics = MetricsLog(out / 'metrics.csv', config.contrastive.L) if out else None
    last_good: Optional[Path] = None

    def checkpoint(step: int) -> None:
        nonlocal last_good
        if out:
            last_good = save_checkpoint(out / 'checkpoints' / f"step_{step:06d}", state.models.components(), config, step)

    logger.info("=" * 60)
    logger.info("MOOSS training")
    logger.info("=" * 60)
    logger.info(f"  graph {state.graph}, mask {config.mask.mode} p_m={config.mask.p_m}")
    logger.info(f"  L={config.contrastive.L} lambda={config.contrastive.lam} B={run.B} F={run.F} steps={run.steps}")

    checkpoint(0)
    rows: List[MetricsRow] = []
    for _ in tqdm(range(run.steps), desc="Training", disable=not progress):
        batch = state.buffer.sample_batch(run.B, run.F, state.batch_rng)
        try:
            row = train_step(state, batch, task_loss_fn)
        except NumericalError as e:
            logger.error(f"Training diverged at step {state.step + 1}: {e}")
            logger.error(f"Last good checkpoint: {last_good}")
            raise NumericalError(f"{e} (last good checkpoint: {last_good})") from e

        if state.step % run.eval_every == 0 or state.step == run.steps:
            result = evaluate_models(config, state.models, state.eval_buffer)
            row.probe_mse = result.probe_mse
            _log_eval(state.step, result)
            checkpoint(state.step)
        rows.append(row)
        if metrics and (state.step % run.log_every == 0 or row.probe_mse is not None):
            metrics.append(row.as_dict())

    final = evaluate_models(config, state.models, state.eval_buffer)
    logger.info(f"Finished {state.step} steps")
    return TrainResult(state, rows, final, out)


# ==============================================================================
# ABLATION
# ==============================================================================

def ablation_variants(config: TrainConfig) -> List[tuple]:
    """(name, overrides) pairs: base, the two unmasked windows, uniform cubes, full."""
    return [
        ('base', {'contrastive.lam': 0.0}),
        ('window_0_no_mask', {'contrastive.L': 0, 'mask.p_m': 0.0}),
        (f"window_{config.contrastive.L}_no_mask", {'mask.p_m': 0.0}),
        ('uniform_cube', {'mask.mode': 'uniform_cube', 'mask.p_m': 0.5}),
        ('full', {}),
    ]


def _ablation_row(name: str, config: TrainConfig, result: EvalResult) -> Dict[str, object]:
    row: Dict[str, object] = {
        'variant': name,
        'lam': config.contrastive.lam,
        'L': config.contrastive.L,
        'p_m': config.mask.p_m,
        'mask_mode': config.mask.mode,
    }
    row.update(result.smoothness.as_dict())
    row['probe_mse'] = result.probe_mse
    return row


def run_ablation(config: TrainConfig, output_dir, progress: bool = True):
    """
    Train every ablation variant on the same seed and write ablation.csv.

    All variants (and the untrained encoder) are evaluated with the base
    config's window so their similarity buckets line up.
    """
    config.validate()
    out = Path(output_dir)
    L = config.contrastive.L

    streams = SeedStreams(config.run.seed)
    eval_buffer = fill_buffer(config.env, config.run.eval_episodes, streams.rng('eval_env'), desc="Held-out episodes")
    untrained = evaluate_models(config, build_models(config, streams.rng('init')), eval_buffer, L=L)
    logger.info(f"Untrained encoder: rho {untrained.smoothness.spearman:.3f} probe_mse {untrained.probe_mse:.5f}")
    rows = [_ablation_row('untrained', config, untrained)]

    variants = ablation_variants(config)
    for name, overrides in tqdm(variants, desc="Ablation variants", disable=not progress):
        variant = with_overrides(config, overrides)
        logger.info(f"Variant {name}: {overrides or 'full objective'}")
        result = train(variant, out / name, progress=progress,
                       state=build_train_state(variant, eval_buffer=eval_buffer))
        final = evaluate_models(variant, result.state.models, eval_buffer, L=L)
        rows.append(_ablation_row(name, variant, final))

    report = write_ablation_csv(out / 'ablation.csv', rows)
    logger.info(f"Wrote {out / 'ablation.csv'}")
    return report


# ==============================================================================
# GRADIENT CHECK
# ==============================================================================

def pipeline_grad_check(config: Optional[TrainConfig] = None, seed: int = 0) -> GradCheckReport:
    """
    Finite-difference check of the contrastive loss against every trainable parameter.

    One batch and one set of masks are drawn up front so the loss is a
    deterministic function of the parameters.
    """
    config = config or tiny_gradcheck_config()
    config = with_overrides(config, {'run.seed': seed})
    state = build_train_state(config)
    batch = state.buffer.sample_batch(config.run.B, config.run.F, state.batch_rng)
    masked, _ = mask_frames_batch(batch.frames, state.graph, config.cube, config.mask.p_m,
                                  state.mask_rng, config.mask.mode)

    def closure() -> Tensor:
        return forward_loss(state, batch, masked)[1].total

    logger.info(f"Gradient check over {sum(p.size for p in state.models.trainable_parameters())} parameter entries")
    return grad_check(closure, state.models.trainable_parameters())
