"""
This module stores one-pass evaluation (OPE): every
tracker starts from the first ground truth box and
runs once through every sequence.
"""

import csv
import json
import logging

try:
    from regex import sub as re_sub
except ImportError:
    from re import sub as re_sub

from asyncio import get_event_loop, gather
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from os import PathLike
from pathlib import Path
from time import perf_counter
from typing import Dict, List, Optional, Sequence, Union

import matplotlib
matplotlib.use('Agg')

from matplotlib import pyplot as plt

from ..errors import (
    MsctrackException, OutputUnwritable,
    InsufficientFrames, InvalidConfig
)
from ..trackers import TrackerConfig, init_tracker, track
from .metrics import (
    EvalCurve, precision_curve, success_curve,
    mean_curve, auc, dpr, osr
)
from .sequence import BoundingBox, SequenceSpec

__all__ = [
    'TrackRecord',
    'Report',
    'run_sequence',
    'run_ope',
    'emit_outputs',
    'trajectory_name',
]
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrackRecord:
    """Trajectory of one tracker on one sequence"""
    tracker: str
    sequence: str
    boxes: List[BoundingBox] = field(repr=False)
    truth: List[Optional[BoundingBox]] = field(repr=False)
    attributes: tuple = ()
    seconds: float = 0.0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def fps(self) -> float:
        return len(self.boxes) / self.seconds if self.seconds > 0 else 0.0

    @property
    def pairs(self):
        return list(zip(self.boxes, self.truth))

def run_sequence(config: TrackerConfig, sequence: SequenceSpec) -> TrackRecord:
    """
    Tracks ``sequence`` with a fresh tracker. Only
    init/track calls are timed, decoding isn't.
    Failures are returned in the record, not raised.
    """
    boxes, seconds = [], 0.0
    try:
        first = sequence.frame(0)
        start = perf_counter()
        state = init_tracker(first, sequence.boxes[0], config)
        seconds += perf_counter() - start
        boxes.append(sequence.boxes[0])

        for index in range(1, len(sequence)):
            frame = sequence.frame(index)
            start = perf_counter()
            state, bbox = track(state, frame)
            seconds += perf_counter() - start
            boxes.append(BoundingBox(*bbox))

    except Exception as e:
        if not isinstance(e, MsctrackException):
            logger.exception('Unexpected failure on %s', sequence.name)
        logger.warning(
            '%s failed on %s at frame %d: %s',
            config.label, sequence.name, len(boxes) + 1, e)

        return TrackRecord(
            config.label, sequence.name, boxes, list(sequence.boxes),
            sequence.attributes, seconds, f'{e.__class__.__name__}: {e}')

    logger.info(
        '%s finished %s: %d frames, %.1f FPS',
        config.label, sequence.name, len(boxes), len(boxes) / max(seconds, 1e-12))

    return TrackRecord(
        config.label, sequence.name, boxes, list(sequence.boxes),
        sequence.attributes, seconds)

def _metrics(precision: EvalCurve, success: EvalCurve) -> Dict[str, float]:
    return {'dpr': dpr(precision), 'osr': osr(success), 'auc': auc(success)}

@dataclass
class Report:
    """
    Records ordered by tracker then sequence, with
    curves per sequence, per tracker and per attribute.
    """
    configs: List[TrackerConfig]
    records: List[TrackRecord]

    @property
    def trackers(self) -> List[str]:
        return [c.label for c in self.configs]

    def completed(self, tracker: str) -> List[TrackRecord]:
        return [r for r in self.records if r.tracker == tracker and r.ok]

    def failures(self) -> List[TrackRecord]:
        return [r for r in self.records if not r.ok]

    def curves(self, records: Sequence[TrackRecord]):
        """(precision, success) averaged over ``records``"""
        if not records:
            raise InsufficientFrames('No completed sequences to aggregate')
        return (
            mean_curve([precision_curve(r.pairs) for r in records]),
            mean_curve([success_curve(r.pairs) for r in records])
        )

    def summary(self) -> dict:
        summary = {}
        for config in self.configs:
            records = self.completed(config.label)
            entry = {'config': config.to_dict(), 'sequences': {}, 'attributes': {}}

            for record in records:
                entry['sequences'][record.sequence] = {
                    **_metrics(precision_curve(record.pairs), success_curve(record.pairs)),
                    'frames': len(record.boxes),
                }
            if records:
                entry['aggregate'] = _metrics(*self.curves(records))

            tags = sorted({tag for r in records for tag in r.attributes})
            for tag in tags:
                tagged = [r for r in records if tag in r.attributes]
                entry['attributes'][tag] = {
                    **_metrics(*self.curves(tagged)), 'sequences': len(tagged)}

            summary[config.label] = entry

        return {
            'trackers': summary,
            'failures': [
                {'tracker': r.tracker, 'sequence': r.sequence, 'error': r.error}
                for r in self.failures()
            ],
        }

    def timing(self) -> dict:
        timing = {}
        for tracker in self.trackers:
            records = self.completed(tracker)
            frames = sum(len(r.boxes) for r in records)
            seconds = sum(r.seconds for r in records)
            timing[tracker] = {
                'sequences': {r.sequence: r.fps for r in records},
                'fps': frames / seconds if seconds > 0 else 0.0,
            }
        return timing

async def run_ope(
        configs: Sequence[TrackerConfig],
        sequences: Sequence[SequenceSpec],
        out_dir: Optional[Union[PathLike, str]] = None,
        threads: int=1) -> Report:
    """
    Runs every tracker on every sequence, up to
    ``threads`` jobs at a time, one tracker instance
    per job. Writes outputs if ``out_dir`` specified.
    """
    labels = [c.label for c in configs]
    if len(set(labels)) != len(labels):
        raise InvalidConfig(f'Tracker names must be unique, got {labels}')

    loop = get_event_loop()
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        jobs = [
            loop.run_in_executor(executor, partial(run_sequence, config, sequence))
            for config in configs for sequence in sequences
        ]
        records = await gather(*jobs)

    order = {c.label: i for i, c in enumerate(configs)}
    records = sorted(records, key=lambda r: (order[r.tracker], r.sequence))
    report = Report(list(configs), records)

    if out_dir is not None:
        emit_outputs(report, out_dir)
    return report

def _fmt(value: float) -> str:
    return f'{value:.6f}'

def trajectory_name(tracker: str, sequence: str) -> str:
    """File name of a trajectory, any path-unsafe run of chars becomes ``_``"""
    return re_sub(r'[^\w.+-]+', '_', f'{tracker}_{sequence}') + '.txt'

def _plot(curves: Dict[str, EvalCurve], metric, xlabel, title, loc, path: Path) -> None:
    fig, ax = plt.subplots()
    for label, curve in curves.items():
        ax.plot(curve.thresholds, curve.values, label=f'{label} [{metric(curve):.3f}]')

    ax.set(xlabel=xlabel, ylabel='Fraction of frames', ylim=(0, 1), title=title)
    ax.grid(True)
    ax.legend(loc=loc)
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)

def emit_outputs(report: Report, out_dir: Union[PathLike, str]) -> List[Path]:
    """
    Writes ``trajectories/<tracker>_<sequence>.txt``
    (1-indexed x,y,w,h), ``curves.csv``, ``summary.json``,
    ``timing.json`` and precision/success SVG plots.
    Only ``timing.json`` changes between identical runs.
    """
    out_dir = Path(out_dir)
    written = []
    try:
        (out_dir / 'trajectories').mkdir(parents=True, exist_ok=True)

        for record in report.records:
            path = out_dir / 'trajectories' / trajectory_name(record.tracker, record.sequence)
            path.write_text(''.join(
                ','.join(_fmt(v) for v in (b.x + 1, b.y + 1, b.w, b.h)) + '\n'
                for b in record.boxes))
            written.append(path)

        precision, success = {}, {}
        for tracker in report.trackers:
            if report.completed(tracker):
                precision[tracker], success[tracker] = report.curves(report.completed(tracker))

        curves_path = out_dir / 'curves.csv'
        with open(curves_path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(('tracker', 'curve', 'threshold', 'value'))
            for tracker in precision:
                for curve in (precision[tracker], success[tracker]):
                    for threshold, value in zip(curve.thresholds, curve.values):
                        writer.writerow((tracker, curve.kind, _fmt(threshold), _fmt(value)))
        written.append(curves_path)

        summary_path = out_dir / 'summary.json'
        summary_path.write_text(json.dumps(report.summary(), indent=2, sort_keys=True))
        timing_path = out_dir / 'timing.json'
        timing_path.write_text(json.dumps(report.timing(), indent=2, sort_keys=True))
        written += [summary_path, timing_path]

        matplotlib.rcParams['svg.hashsalt'] = 'msctrack'
        if precision:
            _plot(precision, dpr, 'Location error threshold (px)', 'Precision plots', 'lower right',
                  out_dir / 'precision.svg')
            _plot(success, auc, 'Overlap threshold', 'Success plots', 'lower left',
                  out_dir / 'success.svg')
            written += [out_dir / 'precision.svg', out_dir / 'success.svg']

    except OSError as e:
        raise OutputUnwritable(f'Can\'t write results to {out_dir}: {e}') from None

    logger.info('%d result files written to %s', len(written), out_dir)
    return written
