"""
System-wide constants for the grid-dropout ordinal toolkit.

Default hyperparameters, file-format literals and CLI exit codes.
"""

from __future__ import annotations

# ---------------------------------------------------------------------------
# Ordinal task
# ---------------------------------------------------------------------------

NUM_CLASSES = 8
IMAGE_SIZE = 48
DEFAULT_FOLDS = 5

# ---------------------------------------------------------------------------
# Grid dropout
# ---------------------------------------------------------------------------

GRID_SIZE = 5
DROP_RATIO = 0.25
FILL_VALUE = 0.0

# ---------------------------------------------------------------------------
# Training schedule
# ---------------------------------------------------------------------------

BASE_LR = 0.001
DECAY_FACTOR = 0.5
DECAY_EVERY = 5000
BATCH_SIZE = 64
NEURON_DROPOUT_RATE = 0.5
LOSS_ALPHA = 0.5
LOSS_BETA = 0.5

# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"ORDG1\n"
PGM_MAXVAL = 255
MANIFEST_NAME = "manifest.jsonl"
IMAGES_DIR = "images"

# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

GRADCHECK_STEP = 1e-5
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_PROBES = 100

# ---------------------------------------------------------------------------
# CLI exit codes
# ---------------------------------------------------------------------------

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
