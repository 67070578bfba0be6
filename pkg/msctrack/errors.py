"""This module stores all msctrack-unique exceptions."""

class MsctrackException(Exception):
    """Base msctrack Exception"""

# Base Exceptions

class NotInitializedError(MsctrackException):
    """The tracker you try to use isn't initialized"""

class LimitExceeded(MsctrackException):
    """Value is out of allowed range"""

class InvalidConfig(MsctrackException):
    """Specified configuration is invalid"""

# Tensor Exceptions

class DimensionMismatch(MsctrackException):
    """Tensor dimensions don't agree"""

class NonFiniteValues(MsctrackException):
    """Tensor contains NaN or infinite values"""

class InvalidTensorFile(MsctrackException):
    """Specified file isn't a valid MSCT tensor"""

# Feature Exceptions

class PatchImpossible(MsctrackException):
    """Can\'t extract an image patch"""

class RankDeficient(MsctrackException):
    """Samples don't span enough principal directions"""

# Training Exceptions

class InsufficientFrames(MsctrackException):
    """Sequence doesn't have enough annotated frames"""

# Tracker Exceptions

class DegenerateBox(MsctrackException):
    """Bounding box is too small to track"""

# Harness Exceptions

class InvalidSequence(MsctrackException):
    """Sequence directory can\'t be parsed"""

class OutputUnwritable(MsctrackException):
    """Can\'t write results to the output directory"""
