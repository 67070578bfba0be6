"""Tracker, CRM, training and metric constants shared by the package."""

from enum import IntEnum
from . import __version__

__all__ = [
    'Grid',
    'Training',
    'Crm',
    'Search',
    'Metrics',
    'VERSION',
    'TENSOR_MAGIC',
    'TENSOR_VERSION',
    'LAMBDA',
    'LEARNING_RATE',
    'MOMENTUM',
    'WEIGHT_DECAY',
    'MU_DCF',
    'MU_CCO',
    'PADDING_DCF',
    'PADDING_CCO',
    'SCALE_STEP',
    'SCALE_PENALTY',
    'ZETA',
    'NONZERO_EPS',
    'LRN_KAPPA',
    'LRN_ALPHA',
    'LRN_BETA',
    'OSR_THRESHOLD',
    'SIGMA_FACTOR',
]
class Grid(IntEnum):
    """Default feature geometry"""
    # Every tracker feature grid is CELLS x CELLS. The
    # shallow branch max-pools SHALLOW_INPUT down to it,
    # the deep branch upsamples DEEP_INPUT up to it.
    CELLS: int=52
    SHALLOW_INPUT: int=109
    DEEP_INPUT: int=13
    # Pixel cell of the handcrafted deep layer (HOG
    # on a DEEP_INPUT * DEEP_CELL square patch).
    DEEP_CELL: int=8

    SHALLOW_CHANNELS: int=32
    DEEP_CHANNELS: int=64
    PCA_DIM: int=38

    HOG_CELL: int=4
    HOG_CHANNELS: int=32
    HOG_BINS: int=18

    POOL_KERNEL: int=7
    POOL_STRIDE: int=2
    UPSAMPLE: int=4
    LRN_SIZE: int=5

class Training(IntEnum):
    """Default CF-layer training schedule"""
    EPOCHS: int=200
    BATCH: int=16
    # Frames between x and z of a triplet
    MAX_GAP: int=10

class Crm(IntEnum):
    """Default channel reliability selection"""
    K_DCF: int=50
    K_CCO: int=58
    ETA: int=3

class Search(IntEnum):
    """Default scale search"""
    SCALES: int=3
    CCO_GRID_FACTOR: int=4

class Metrics(IntEnum):
    """Default OTB operating points"""
    DPR_THRESHOLD: int=20
    PRECISION_MAX: int=50
    SUCCESS_STEPS: int=20

VERSION: str=__version__

# Shared binary tensor format: magic, u32 version,
# then H, W, D and H*W*D little-endian float32.
TENSOR_MAGIC: bytes=b'MSCT'
TENSOR_VERSION: int=1

# Ridge regularisation for the CF layer and both trackers.
LAMBDA: float=1e-4

# SGD solver for the compression head
LEARNING_RATE: float=1e-5
MOMENTUM: float=0.9
WEIGHT_DECAY: float=5e-4

# Online model update rate and search padding
MU_DCF: float=0.012
MU_CCO: float=9.4e-3
PADDING_DCF: float=1.65
PADDING_CCO: float=3.62

SCALE_STEP: float=1.0275
SCALE_PENALTY: float=0.9925

# Channel reliability: zeta guards the ratio denominator,
# NONZERO_EPS is the floating-point zero used for sign(|v|).
ZETA: float=1e-5
NONZERO_EPS: float=1e-12

LRN_KAPPA: float=2.0
LRN_ALPHA: float=1e-4
LRN_BETA: float=0.75

OSR_THRESHOLD: float=0.5

# Label bandwidth is sqrt(target cells area) / SIGMA_FACTOR
SIGMA_FACTOR: float=10.0
