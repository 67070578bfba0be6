"""
This module stores OTB-style sequence ingestion
and the synthetic sequence generator.
"""

import logging

from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import List, Optional, Tuple, Union

import cv2
import numpy as np

from ..errors import InvalidSequence, DegenerateBox, OutputUnwritable
from ..tools import list_frames, make_rng

__all__ = [
    'BoundingBox',
    'SequenceSpec',
    'load_sequence',
    'find_sequences',
    'parse_box',
    'synth_sequence',
    'synth_suite',
]
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundingBox:
    """Box in 0-indexed pixels: top-left (x, y) and size"""
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise DegenerateBox(f'Box size must be positive, got {self.w}x{self.h}')

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

@dataclass(frozen=True)
class SequenceSpec:
    """
    Frames and ground truth of one sequence.
    ``boxes[i]`` is ``None`` for frames whose
    annotation isn't a valid box.
    """
    name: str
    frames: Tuple[Path, ...] = field(repr=False)
    boxes: Tuple[Optional[BoundingBox], ...] = field(repr=False)
    attributes: Tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.frames) != len(self.boxes):
            raise InvalidSequence(
                f'{self.name}: {len(self.frames)} frames but {len(self.boxes)} boxes')

        if not self.frames or self.boxes[0] is None:
            raise InvalidSequence(f'{self.name}: first frame must have a valid box')

    def __len__(self) -> int:
        return len(self.frames)

    def frame(self, index: int) -> np.ndarray:
        """Decodes frame ``index`` to an 8-bit RGB array."""
        image = cv2.imread(str(self.frames[index]), cv2.IMREAD_COLOR)
        if image is None:
            raise InvalidSequence(f'{self.name}: can\'t decode {self.frames[index]}')
        return cv2.cvtColor(image, cv2.COLOR_BGR2RGB)

def parse_box(line: str, number: int, first: bool=False) -> Optional[BoundingBox]:
    """
    Parses ``x,y,w,h`` (comma and/or whitespace separated,
    1-indexed). Non-positive sizes give ``None`` unless
    it is the ``first`` line.
    """
    fields_ = line.replace(',', ' ').split()
    if len(fields_) != 4:
        raise InvalidSequence(f'line {number}: expected 4 fields, got {len(fields_)}')
    try:
        x, y, w, h = (float(i) for i in fields_)
    except ValueError:
        raise InvalidSequence(f'line {number}: can\'t parse {line.strip()!r}') from None

    if not (np.isfinite([x, y, w, h]).all() and w > 0 and h > 0):
        if first:
            raise InvalidSequence(f'line {number}: first box must be valid, got {line.strip()!r}')
        return None

    return BoundingBox(x - 1, y - 1, w, h)

def load_sequence(directory: Union[PathLike, str]) -> SequenceSpec:
    """
    Loads OTB layout: ``img/`` with frames and
    ``groundtruth_rect.txt``, one box per line.
    An ``attributes.txt`` with tags like ``SV``
    is read if present.
    """
    directory = Path(directory)
    gt_path = directory / 'groundtruth_rect.txt'

    if not (directory / 'img').is_dir() or not gt_path.is_file():
        raise InvalidSequence(f'{directory} has no img/ folder or groundtruth_rect.txt')

    frames = list_frames(directory / 'img')
    lines = [
        (number, line) for number, line in
        enumerate(gt_path.read_text().splitlines(), 1) if line.strip()
    ]
    boxes = [parse_box(line, number, i == 0) for i, (number, line) in enumerate(lines)]

    if len(boxes) != len(frames):
        raise InvalidSequence(
            f'{directory.name}: {len(frames)} frames but {len(boxes)} ground truth lines')

    attributes: Tuple[str, ...] = ()
    if (directory / 'attributes.txt').is_file():
        text = (directory / 'attributes.txt').read_text()
        attributes = tuple(sorted(set(text.replace(',', ' ').split())))

    invalid = sum(box is None for box in boxes)
    if invalid:
        logger.info('%s: %d frames without a valid box', directory.name, invalid)

    return SequenceSpec(directory.name, tuple(frames), tuple(boxes), attributes)

def find_sequences(paths: List[Union[PathLike, str]]) -> List[SequenceSpec]:
    """
    Loads every path; a path without ``img/`` is
    taken as a root of sequence directories.
    """
    sequences = []
    for path in map(Path, paths):
        if (path / 'img').is_dir():
            sequences.append(load_sequence(path))
        elif path.is_dir():
            sequences.extend(
                load_sequence(sub) for sub in sorted(path.iterdir())
                if (sub / 'img').is_dir())
        else:
            raise InvalidSequence(f'{path} is not a directory')

    if not sequences:
        raise InvalidSequence(f'No sequences found in {[str(p) for p in paths]}')
    return sequences

def _texture(rng: np.random.Generator, cells: int, side: int) -> np.ndarray:
    pattern = rng.integers(0, 256, (cells, cells)).astype(np.uint8)
    return cv2.resize(pattern, (side, side), interpolation=cv2.INTER_NEAREST)

def synth_sequence(
        directory: Union[PathLike, str],
        kind: str='translate',
        frames: int=100,
        frame_size: Tuple[int, int]=(320, 240),
        side: int=32,
        velocity: Tuple[float, float]=(2.0, 1.0),
        zoom: float=1.005,
        seed: Optional[int]=0) -> SequenceSpec:
    """
    Writes a textured square moving over a smooth
    static background in OTB layout.

    Arguments:
        kind (``str``, optional):
            ``"translate"`` moves the square by ``velocity``
            px per frame, ``"zoom"`` grows it by ``zoom``
            per frame in place (tagged ``SV``).

        frame_size (``tuple``, optional):
            (width, height) of frames.
    """
    if kind not in ('translate', 'zoom'):
        raise InvalidSequence(f'Unknown synthetic kind {kind!r}')

    directory = Path(directory)
    rng = make_rng(seed)
    width, height = frame_size

    background = cv2.resize(
        rng.uniform(70, 150, (height // 16 + 1, width // 16 + 1)),
        (width, height), interpolation=cv2.INTER_CUBIC)
    texture = _texture(rng, 8, 256)

    if kind == 'translate':
        start = (width / 2 - velocity[0] * frames / 2, height / 2 - velocity[1] * frames / 2)
    else:
        start = (width / 2, height / 2)

    try:
        (directory / 'img').mkdir(parents=True, exist_ok=True)
        lines = []
        for t in range(frames):
            if kind == 'translate':
                size = side
                cx, cy = start[0] + velocity[0] * t, start[1] + velocity[1] * t
            else:
                size = int(round(side * zoom ** t))
                cx, cy = start

            x, y = int(round(cx - size / 2)), int(round(cy - size / 2))
            frame = background.copy()

            x0, y0 = max(x, 0), max(y, 0)
            x1, y1 = min(x + size, width), min(y + size, height)
            patch = cv2.resize(texture, (size, size), interpolation=cv2.INTER_NEAREST)
            frame[y0:y1, x0:x1] = patch[y0 - y:y1 - y, x0 - x:x1 - x]

            image = np.clip(frame, 0, 255).astype(np.uint8)
            cv2.imwrite(str(directory / 'img' / f'{t + 1:04d}.png'), image)
            lines.append(f'{x + 1},{y + 1},{size},{size}')

        (directory / 'groundtruth_rect.txt').write_text('\n'.join(lines) + '\n')
        if kind == 'zoom':
            (directory / 'attributes.txt').write_text('SV\n')
    except OSError as e:
        raise OutputUnwritable(f'Can\'t write synthetic sequence {directory}: {e}') from None

    logger.info('Synthetic %s sequence written to %s', kind, directory)
    return load_sequence(directory)

def synth_suite(
        root: Union[PathLike, str], count: int=5,
        frames: int=100, seed: Optional[int]=0) -> List[SequenceSpec]:
    """
    Writes ``count`` sequences under ``root``: the
    last one zooms, the others translate in
    different directions.
    """
    root = Path(root)
    rng = make_rng(seed)
    directions = [(2.0, 1.0), (-2.0, 1.0), (1.0, -2.0), (-1.0, -2.0), (2.0, 0.0)]

    suite = []
    for i in range(count):
        sub_seed = int(rng.integers(0, 2 ** 31))
        if i == count - 1 and count > 1:
            suite.append(synth_sequence(
                root / f'synth_zoom_{i + 1}', 'zoom', frames, seed=sub_seed))
        else:
            suite.append(synth_sequence(
                root / f'synth_translate_{i + 1}', 'translate', frames,
                velocity=directions[i % len(directions)], seed=sub_seed))
    return suite
