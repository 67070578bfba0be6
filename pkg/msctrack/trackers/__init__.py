from .utils import *

from . import dcf
from . import cco

from .dcf import (
    DcfModel, DcfTracker, train_filter,
    detect, update_model
)
from .cco import (
    InterpKernel, CcoFilter, CcoModel, CcoTracker,
    make_kernel, interpolate_channel, interpolated_coefficients,
    label_coefficients, train_cco_filter, update_cco_model,
    confidence_map, localize_subpixel, cco_objective
)
TRACKERS = {dcf.DCF.kind: dcf.DCF, cco.CCO.kind: cco.CCO}


def init_tracker(frame, bbox, config: TrackerConfig, extractor=None) -> TrackerState:
    """Initializes the tracker ``config.kind`` names."""
    return TRACKERS[config.kind].init(frame, bbox, config, extractor)

def track(state: TrackerState, frame):
    """Tracks one frame with the tracker that made ``state``."""
    return TRACKERS[state.config.kind].track_frame(state, frame)
