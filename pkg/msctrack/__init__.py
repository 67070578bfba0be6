"""
Correlation-filter visual tracking with multi-level
same-resolution compressed (MSC) features.
"""

__version__ = '1.0'

from . import defaults
from . import errors
from . import tools
from . import tensor
from . import features
from . import crm
from . import extractors
from . import train
from . import trackers
from . import harness

from .tools import sync

__all__ = [
    'defaults',
    'errors',
    'tools',
    'tensor',
    'features',
    'extractors',
    'train',
    'crm',
    'trackers',
    'harness',
    'sync',
]
