#!/usr/bin/env python3
"""
MOOSS command-line entry point.

Usage:
    python scripts/run_mooss.py train --config config/desk_default.cfg
    python scripts/run_mooss.py mask-demo --config config/desk_default.cfg --seed 0 --out demo/
    python scripts/run_mooss.py gradcheck [--full]
    python scripts/run_mooss.py eval --checkpoint runs/desk_default/checkpoints/step_003000
    python scripts/run_mooss.py dump-embeddings --checkpoint <dir> --out embeddings.csv
    python scripts/run_mooss.py ablate --config config/desk_default.cfg --out runs/ablation
    python scripts/run_mooss.py dump-episode --config config/desk_default.cfg --seed 3 --out episode/

Exit codes:
    0  success
    1  runtime failure (including divergence and failed gradient checks)
    2  invalid usage or configuration
"""

import argparse
import logging
import sys
from pathlib import Path

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from mooss.checkpoint import load_checkpoint
from mooss.config import config_hash, load_train_config, tiny_gradcheck_config, with_overrides
from mooss.core.gradcheck import check_operators
from mooss.core.st_graph import ObservationSequence, apply_mask, build_graph, sample_mask
from mooss.env.moving_dot import generate_episode
from mooss.env.replay_buffer import fill_buffer
from mooss.evaluation import encode_frames
from mooss.export import dump_episode, write_embeddings_csv, write_frame_pgms
from mooss.trainer import evaluate_models, pipeline_grad_check, restore_models, run_ablation, train
from utils.constants import EXIT_OK, EXIT_RUNTIME_FAILURE, EXIT_USAGE, GRADCHECK_TOL
from utils.seeding import SeedStreams
from utils.validation import ValidationError

logger = logging.getLogger('mooss')


def cmd_train(args) -> int:
    config = load_train_config(args.config)
    if args.steps is not None:
        config = with_overrides(config, {'run.steps': args.steps})
    output_dir = Path(args.out or config.run.output_dir)
    result = train(config, output_dir, progress=not args.quiet)

    report = result.final_eval.smoothness
    logger.info("")
    logger.info("=" * 60)
    logger.info("Training complete")
    logger.info("=" * 60)
    logger.info(f"  Metrics: {output_dir / 'metrics.csv'}")
    logger.info(f"  Similarity by distance: {', '.join(f'{v:.4f}' for v in report.bucket_means)}")
    logger.info(f"  Cross-sequence similarity: {report.cross_mean:.4f}")
    logger.info(f"  Spearman rho: {report.spearman:.3f}{' (degenerate)' if report.degenerate else ''}")
    logger.info(f"  Probe MSE: {result.final_eval.probe_mse:.5f}")
    return EXIT_OK


def cmd_mask_demo(args) -> int:
    config = load_train_config(args.config)
    F = config.run.F
    episode = generate_episode(config.env, args.seed)
    seq = ObservationSequence(episode.frames[:F], episode.actions[:F], episode.rewards[:F], 0, episode.latents[:F])
    graph = build_graph(F, config.env.H, config.env.W, config.cube)
    mask = sample_mask(graph, config.mask.p_m, SeedStreams(args.seed).rng('mask'), config.mask.mode)
    masked = apply_mask(seq, mask, config.cube)
    paths = write_frame_pgms(args.out, masked.frames)
    logger.info(f"Masked {len(mask)}/{graph.num_nodes} nodes (root {mask.root}); wrote {len(paths)} frames to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    passed = True
    if args.full:
        logger.info("Checking every registered operator (seeds 0..9)...")
        for name, err in sorted(check_operators().items()):
            status = "✓" if err <= GRADCHECK_TOL else "✗"
            logger.info(f"  {status} {name:<12} max rel err {err:.3e}")
            passed = passed and err <= GRADCHECK_TOL

    config = load_train_config(args.config) if args.config else tiny_gradcheck_config()
    report = pipeline_grad_check(config, seed=args.seed)
    for line in report.summary().splitlines():
        logger.info(line)
    passed = passed and report.passed
    if not passed:
        logger.error("Gradient check FAILED")
        return EXIT_RUNTIME_FAILURE
    logger.info("✓ Gradient check passed")
    return EXIT_OK


def _checkpoint_models(args):
    checkpoint = load_checkpoint(args.checkpoint)
    config = checkpoint.config
    if getattr(args, 'config', None):
        config = load_train_config(args.config)
        if config_hash(config) != checkpoint.manifest['config_hash']:
            logger.warning("Config differs from the checkpoint's; architecture must still match")
    return checkpoint, config, restore_models(checkpoint, config)


def cmd_eval(args) -> int:
    checkpoint, config, models = _checkpoint_models(args)
    streams = SeedStreams(config.run.seed)
    eval_buffer = fill_buffer(config.env, config.run.eval_episodes, streams.rng('eval_env'), desc="Held-out episodes")
    result = evaluate_models(config, models, eval_buffer)

    logger.info("=" * 60)
    logger.info(f"Evaluation of {checkpoint.directory} (step {checkpoint.step})")
    logger.info("=" * 60)
    for level, value in enumerate(result.smoothness.bucket_means):
        logger.info(f"  sim_d{level}: {value:.5f}")
    logger.info(f"  sim_cross: {result.smoothness.cross_mean:.5f}")
    logger.info(f"  spearman: {result.smoothness.spearman:.4f}{' (degenerate)' if result.smoothness.degenerate else ''}")
    logger.info(f"  strictly ordered: {result.smoothness.strictly_ordered}")
    logger.info(f"  probe_mse: {result.probe_mse:.6f}")
    return EXIT_OK


def cmd_dump_embeddings(args) -> int:
    checkpoint, config, models = _checkpoint_models(args)
    streams = SeedStreams(config.run.seed)
    eval_buffer = fill_buffer(config.env, config.run.eval_episodes, streams.rng('eval_env'), desc="Held-out episodes")
    batch = eval_buffer.sample_batch(args.batch_size or config.run.B, config.run.F, streams.rng('eval'))
    embeddings = encode_frames(models.query_encoder, batch.frames)
    write_embeddings_csv(args.out, embeddings)
    logger.info(f"Wrote {embeddings.shape[0] * embeddings.shape[1]} embeddings (d={embeddings.shape[2]}) to {args.out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = load_train_config(args.config)
    if args.steps is not None:
        config = with_overrides(config, {'run.steps': args.steps})
    report = run_ablation(config, args.out, progress=not args.quiet)
    logger.info("\n" + report.to_string(index=False))
    return EXIT_OK


def cmd_dump_episode(args) -> int:
    config = load_train_config(args.config)
    seed = config.env.seed if args.seed is None else args.seed
    episode = generate_episode(config.env, seed)
    dump_episode(episode, args.out)
    logger.info(f"Wrote episode (seed {seed}, T={episode.length}) to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="MOOSS temporal contrastive representation learning",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
    python scripts/run_mooss.py train --config config/desk_default.cfg
    python scripts/run_mooss.py gradcheck --full
    python scripts/run_mooss.py eval --checkpoint runs/desk_default/checkpoints/step_003000
        """
    )
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Train on the moving-dot environment")
    p.add_argument("--config", required=True, help="Path to a .cfg file")
    p.add_argument("--out", help="Output directory (default: run.output_dir)")
    p.add_argument("--steps", type=int, help="Override run.steps")
    p.add_argument("--quiet", action="store_true", help="No progress bar")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("mask-demo", help="Write one masked sequence as PGM frames")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask_demo)

    p = sub.add_parser("gradcheck", help="Finite-difference gradient check")
    p.add_argument("--full", action="store_true", help="Also sweep every registered operator")
    p.add_argument("--config", help="Pipeline config (default: the tiny built-in one)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("eval", help="Evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True, help="Checkpoint directory")
    p.add_argument("--config", help="Config (default: the one stored with the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dump-embeddings", help="Write held-out embeddings as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, help="Sequences to embed (default: run.B)")
    p.set_defaults(func=cmd_dump_embeddings)

    p = sub.add_parser("ablate", help="Train the ablation variants and write ablation.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, help="Override run.steps for every variant")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("dump-episode", help="Write one episode as PGM frames plus trajectory.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="Episode seed (default: env.seed)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_episode)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
    )
    try:
        return args.func(args)
    except ValidationError as e:
        logger.error(f"Error: {e}")
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"Failed: {e}")
        logger.debug("Traceback:", exc_info=True)
        return EXIT_RUNTIME_FAILURE


if __name__ == "__main__":
    sys.exit(main())
