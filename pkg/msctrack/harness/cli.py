"""
This module stores the ``msctrack`` command line.

Every subcommand returns 0 on success. Any package
error is reported as one JSON object on stderr and
exit code 1.
"""

import csv
import json
import logging
import sys

from argparse import ArgumentParser, Namespace
from dataclasses import replace
from math import ceil
from pathlib import Path
from typing import List, Optional

from ..defaults import VERSION, Crm, ZETA
from ..errors import MsctrackException
from ..extractors import HandcraftedLayers, TensorLayers
from ..features import CompressionHead
from ..crm import TargetRegion, reliability_scores, select_top_k
from ..tools import read_tensor, make_rng, sync
from ..train import TrainingConfig, make_triplets, train_head
from ..trackers import TrackerConfig, load_configs
from .ope import run_ope, run_sequence, emit_outputs, Report
from .sequence import find_sequences, load_sequence, synth_sequence, synth_suite

__all__ = ['make_parser', 'main']
logger = logging.getLogger(__name__)


def make_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog='msctrack',
        description='Correlation filter tracking with MSC features')

    parser.add_argument('--version', action='version', version=f'%(prog)s {VERSION}')
    parser.add_argument('--config', type=Path, help='Tracker (or training) config JSON')
    parser.add_argument('--out', type=Path, default=Path('msctrack-results'), help='Output directory')
    parser.add_argument('--seed', type=int, default=0, help='Seed of every random choice, overrides tracker config "seed"')
    parser.add_argument('--threads', type=int, default=1, help='Parallel sequence jobs')
    parser.add_argument('-v', '--verbose', action='store_true', help='Log debug messages')

    sub = parser.add_subparsers(dest='command', required=True)

    track = sub.add_parser('track', help='Track one sequence, print its boxes')
    track.add_argument('sequence', type=Path)

    eval_ = sub.add_parser('eval', help='One-pass evaluation with plots and reports')
    eval_.add_argument('sequences', type=Path, nargs='+')
    eval_.add_argument(
        '--ablation', action='store_true',
        help='Also run every tracker with CRM disabled')

    train = sub.add_parser('train-head', help='Train the compression head on triplets')
    train.add_argument('sequences', type=Path, nargs='+')
    train.add_argument('--head', help='Checkpoint prefix to continue from')
    train.add_argument('--layers', type=Path, help='Precomputed layer directory')

    inspect = sub.add_parser('crm-inspect', help='Print per-channel CRM scores as CSV')
    inspect.add_argument('tensor', type=Path)
    inspect.add_argument(
        '--region', type=int, nargs=4, required=True,
        metavar=('ROW', 'COL', 'HEIGHT', 'WIDTH'))
    inspect.add_argument('--eta', type=float, default=float(Crm.ETA))
    inspect.add_argument('--zeta', type=float, default=ZETA)
    inspect.add_argument('--k', type=int, default=None, help='Mark the top K channels')

    synth = sub.add_parser('synth', help='Generate synthetic sequences')
    synth.add_argument('--count', type=int, default=5)
    synth.add_argument('--frames', type=int, default=100)
    synth.add_argument('--kind', choices=('suite', 'translate', 'zoom'), default='suite')

    bench = sub.add_parser('bench', help='Print tracking speed per sequence')
    bench.add_argument('sequences', type=Path, nargs='+')

    return parser

def _configs(args: Namespace) -> List[TrackerConfig]:
    configs = load_configs(args.config) if args.config else [TrackerConfig.dcf(), TrackerConfig.cco()]
    return [replace(c, seed=args.seed) for c in configs]

def _print_metrics(report: Report) -> None:
    summary = report.summary()['trackers']
    writer = csv.writer(sys.stdout)
    writer.writerow(('tracker', 'dpr', 'osr', 'auc'))
    for tracker, entry in summary.items():
        if 'aggregate' in entry:
            m = entry['aggregate']
            writer.writerow((tracker, f'{m["dpr"]:.4f}', f'{m["osr"]:.4f}', f'{m["auc"]:.4f}'))

def cmd_track(args: Namespace) -> int:
    config = _configs(args)[0]
    record = run_sequence(config, load_sequence(args.sequence))
    if not record.ok:
        raise MsctrackException(record.error)

    for box in record.boxes:
        print(f'{box.x + 1:.2f},{box.y + 1:.2f},{box.w:.2f},{box.h:.2f}')
    return 0

def cmd_eval(args: Namespace) -> int:
    configs = _configs(args)
    if args.ablation:
        configs += [
            replace(c, name=f'{c.label} w/o CRM', crm=replace(c.crm, enabled=False))
            for c in configs
        ]
    report = sync(run_ope(configs, find_sequences(args.sequences), args.out, args.threads))
    _print_metrics(report)
    return 0

def cmd_train_head(args: Namespace) -> int:
    config = TrainingConfig.from_json(args.config) if args.config else TrainingConfig()
    sequences = find_sequences(args.sequences)
    rng = make_rng(args.seed)

    layers = TensorLayers(args.layers) if args.layers else HandcraftedLayers()
    if args.head:
        head = CompressionHead.load(args.head)
    else:
        head = CompressionHead.initialize(layers.shallow_channels, layers.deep_channels, rng)

    per_sequence = ceil(config.triplets / len(sequences))
    triplets = []
    for sequence in sequences:
        triplets += make_triplets(sequence, per_sequence, layers, rng, max_gap=config.max_gap)

    head, history = train_head(head, triplets, config, rng, args.out / 'loss.csv')
    paths = head.save(args.out / 'head')

    print(json.dumps({
        'epochs': len(history),
        'initial_loss': history[0],
        'final_loss': history[-1],
        'checkpoint': [str(p) for p in paths]
    }))
    return 0

def cmd_crm_inspect(args: Namespace) -> int:
    fmap = read_tensor(args.tensor)
    region = TargetRegion(*args.region)

    scores = reliability_scores(fmap, region, args.eta, args.zeta)
    selected = set(select_top_k(scores, args.k)) if args.k else set()

    writer = csv.writer(sys.stdout)
    writer.writerow(('channel', 'ratio', 'indicator', 'score', 'selected'))
    for s in scores:
        writer.writerow((s.index, repr(s.ratio), s.indicator, repr(s.score), int(s.index in selected)))
    return 0

def cmd_synth(args: Namespace) -> int:
    if args.kind == 'suite':
        sequences = synth_suite(args.out, args.count, args.frames, args.seed)
    else:
        sequences = [
            synth_sequence(args.out / f'synth_{args.kind}_{i + 1}', args.kind,
                           args.frames, seed=args.seed + i)
            for i in range(args.count)
        ]
    for sequence in sequences:
        print(sequence.name)
    return 0

def cmd_bench(args: Namespace) -> int:
    report = sync(run_ope(_configs(args), find_sequences(args.sequences), None, args.threads))
    emit_outputs(report, args.out)

    writer = csv.writer(sys.stdout)
    writer.writerow(('tracker', 'sequence', 'fps'))
    for tracker, entry in report.timing().items():
        for sequence, fps in entry['sequences'].items():
            writer.writerow((tracker, sequence, f'{fps:.2f}'))
        writer.writerow((tracker, 'all', f'{entry["fps"]:.2f}'))
    return 0

COMMANDS = {
    'track': cmd_track,
    'eval': cmd_eval,
    'train-head': cmd_train_head,
    'crm-inspect': cmd_crm_inspect,
    'synth': cmd_synth,
    'bench': cmd_bench,
}
def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    logger.debug('Running %s with seed %d', args.command, args.seed)
    try:
        return COMMANDS[args.command](args)
    except MsctrackException as e:
        error = {'error': e.__class__.__name__, 'message': str(e)}
        print(json.dumps(error), file=sys.stderr)
        return 1
