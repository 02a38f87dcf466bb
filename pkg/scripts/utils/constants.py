#!/usr/bin/env python3
"""
Constants for the MOOSS representation-learning pipeline.

This module centralizes the numeric defaults and thresholds used throughout
the pipeline. Full-scale values are kept next to the desk-scale defaults so
that either configuration can be assembled from named constants.
"""

# ==============================================================================
# NUMERICS
# ==============================================================================

# Additive logit used to hide attention entries (kept finite on purpose)
ATTENTION_MASK_VALUE = -1e9

# Layer normalization epsilon
LAYER_NORM_EPS = 1e-5

# Finite-difference gradient check
GRADCHECK_EPS = 1e-5
GRADCHECK_TOL = 1e-4
# Relative error denominator floor; gradients smaller than this are compared absolutely
GRADCHECK_ABS_FLOOR = 1e-4

# Ridge regularizer for the linear probe
PROBE_RIDGE = 1e-3

# ==============================================================================
# FULL-SCALE HYPER-PARAMETERS (continuous control)
# ==============================================================================

FULL_SCALE_MASK_RATIO = 0.5             # p_m
FULL_SCALE_TAU0 = 0.07
FULL_SCALE_TAU_SKIP = 0.075
FULL_SCALE_EMA_MOMENTUM = 0.95          # m
FULL_SCALE_LOSS_WEIGHT = 0.1            # lambda
FULL_SCALE_DECODER_DEPTH = 2
FULL_SCALE_DECODER_HEADS = 4

# ==============================================================================
# DESK-SCALE DEFAULTS
# ==============================================================================

DEFAULT_FRAME_SIZE = 28
DEFAULT_CHANNELS = 1
DEFAULT_SEQUENCE_LENGTH = 8
DEFAULT_CUBE = (2, 7, 7)
DEFAULT_WINDOW_SIZE = 4
DEFAULT_EMBED_DIM = 32
DEFAULT_CONV_CHANNELS = (8, 16, 16)
DEFAULT_CONV_KERNELS = (3, 3, 3)
DEFAULT_CONV_STRIDES = (2, 2, 1)
DEFAULT_BATCH_SIZE = 16
DEFAULT_STEPS = 3000
DEFAULT_LEARNING_RATE = 5e-4
DEFAULT_EVAL_EVERY = 250
DEFAULT_WARMUP_STEPS = 300
DEFAULT_ADAM_BETAS = (0.9, 0.999)
DEFAULT_ADAM_EPS = 1e-8

# ==============================================================================
# TOY ENVIRONMENT
# ==============================================================================

# Action ids: none, +x, -x, +y, -y
NUM_ACTIONS = 5
ACTION_DIRECTIONS = (
    (0.0, 0.0),
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
)
ACTION_NAMES = ('none', '+x', '-x', '+y', '-y')

DEFAULT_EPISODE_LENGTH = 64
DEFAULT_DOT_RADIUS = 3.0
DEFAULT_EDGE_SOFTNESS = 0.5
DEFAULT_DT = 0.05
DEFAULT_ACCEL = 0.15
DEFAULT_V_MAX = 0.6

# ==============================================================================
# MASKING
# ==============================================================================

# Random walk aborts after this many steps per graph node
WALK_STEP_CAP_PER_NODE = 10_000

VALID_MASK_MODES = {'random_walk', 'uniform_cube'}
VALID_DECODER_MODES = {'state_action', 'state_only', 'mlp_only'}

# ==============================================================================
# EXIT CODES
# ==============================================================================

EXIT_OK = 0
EXIT_RUNTIME_FAILURE = 1
EXIT_USAGE = 2
