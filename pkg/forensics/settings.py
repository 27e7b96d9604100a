#!/usr/bin/env python3

# Label alphabet
REAL = "REAL"
FAKE = "FAKE"
UNKNOWN = "UNKNOWN"
DEEPFAKE = "DEEPFAKE"

# Synthetic forgery operators and their families
SYNTHETIC_METHODS = ("M1", "M2", "M3", "M4")
EXTRA_SYNTHETIC_METHODS = ("M5",)
FAMILIES = {
    "global-signal": ("M1", "M3"),
    "local-region": ("M2", "M4"),
}
# FaceForensics++ method directory names accepted by the frame-directory loader
FACEFORENSICS_METHODS = ("DF", "F2F", "FS", "NT")

# Image geometry
SYNTHETIC_IMAGE_SIDE = 64   # desk-scale benchmark
REAL_DATA_IMAGE_SIDE = 224  # pre-cropped face frames
MIN_IMAGE_SIDE = 16

# Benchmark defaults
N_VIDEOS = 40
FRAMES_PER_VIDEO = 10
FRAMES_PER_VIDEO_SAMPLED = 10
SPLIT_RATIOS = (0.6, 0.2, 0.2)

# Augmentation defaults (contrastive-learning conventions)
CROP_SCALE_RANGE = (0.8, 1.0)
FLIP_PROB = 0.5
COLOR_JITTER_STRENGTH = 0.2
GRAYSCALE_PROB = 0.0
ROTATION_DEGREES = 0.0

# Representation learning
EMBEDDING_DIM = 128
TEMPERATURE = 0.1
ALPHA = 1.21
BACKBONE = "conv6"

# Optimisation
BATCH_SIZE = 64             # samples per batch, 2x views
STAGE1_EPOCHS = 20
STAGE2_EPOCHS = 15
OPTIMIZER = "adam"
LEARNING_RATE = 1e-3
STAGE2_LEARNING_RATE = 1e-2
WARMUP_EPOCHS = 1           # linear warmup before the Stage-1 cosine decay
WEIGHT_DECAY = 1e-4
MOMENTUM = 0.9              # sgd only
MAX_GRAD_NORM = 5.0
COLLAPSE_SPREAD = 1e-4      # embedding std below this means every input maps to one point
SWA_FRACTION = 0.25

# Open-set calibration
LAMBDA_PERCENTILE = 5.0
PERCENTILE_METHOD = "lower"
LAMBDA_SWEEP = (0.0, 5.0, 25.0, 50.0, 75.0, 95.0)

# Ablation grids
ALPHA_GRID = (1.0, 1.21, 2.25, 4.0)
