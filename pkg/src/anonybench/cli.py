"""
Command-line front end.

::

    anonybench [-v|-q] <command> [--config FILE] [--set key=value ...] [--out DIR] ...

Commands: ``pretrain``, ``train``, ``probe``, ``sweep``, ``dump-frames``,
``gen-data`` and ``verify``. Every command except ``verify`` writes its
artifacts and a ``<name>.manifest.json`` to the output directory (``--out``,
else ``$ANONYBENCH_OUT``, else ``./anonybench-out``).

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O failure, 1 anything else.
"""
import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .checkpoint import Checkpoint, atomic_write_text
from .config import PROTOCOL_KNOWN, PROTOCOL_NOVEL, RunConfig, VARIANT_KNOWN, VARIANT_NOVEL, load_config
from .exception import AnonybenchException, ConfigException
from .manifest import RunManifest, digest_file
from .metrics import render_csv
from .nets import Anonymizer
from .pipeline import PROBE_KINDS, SplitCache, protocol_for, run_probes
from .ppm import export_split, write_ppm
from .synthdata import DatasetSplit, dataset_digest
from .trainer import PHASE_ANONYMIZATION, CurveLog, Trainer, anonymize_array
from .sweep import run_sweep
from .version import VERSION

logger = logging.getLogger(__name__)

OUT_ENV = 'ANONYBENCH_OUT'
DEFAULT_OUT = 'anonybench-out'
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

_RUN_OPTIONS = ('--config', '--set', '--out')
_RUN_FLAGS = ('-v', '--verbose', '-q', '--quiet')


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected comma separated numbers, got {text!r}') from None


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected comma separated integers, got {text!r}') from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='anonybench', description='Desk-scale minimax anonymization benchmark')
    parser.add_argument('--version', action='version', version=f'%(prog)s {VERSION}')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='Log debug messages')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='Log warnings and errors only')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=Path, help='Configuration file (key = value lines)')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='Override a configuration key; repeatable')
    common.add_argument('--out', type=Path, help=f'Output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})')

    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('pretrain', parents=[common], help='Identity pretraining and branch warm-up')

    train = commands.add_parser('train', parents=[common], help='Two-step minimax anonymization training')
    train.add_argument('--checkpoint', type=Path, help='Pretrained checkpoint to start from')

    probe = commands.add_parser('probe', parents=[common], help='Train and score a fresh probe')
    probe.add_argument('--checkpoint', type=Path, required=True, help='Anonymizer checkpoint')
    probe.add_argument('--kind', choices=PROBE_KINDS, default='action')
    probe.add_argument('--protocol', choices=(PROTOCOL_KNOWN, PROTOCOL_NOVEL), default=PROTOCOL_KNOWN)

    sweep = commands.add_parser('sweep', parents=[common], help='Limiter / penalty-weight grid')
    sweep.add_argument('--limiters', type=_float_list, help='Comma separated B values')
    sweep.add_argument('--lambdas', type=_float_list, help='Comma separated lambda values')
    sweep.add_argument('--jobs', type=int, default=1, help='Parallel worker processes')

    dump = commands.add_parser('dump-frames', parents=[common], help='Raw and anonymized frames as PPM')
    dump.add_argument('--checkpoint', type=Path, required=True, help='Anonymizer checkpoint')
    dump.add_argument('--clips', type=_int_list, default=[0], help='Comma separated eval clip ids')

    gen = commands.add_parser('gen-data', parents=[common], help='Export the synthetic splits as PPM frames')
    gen.add_argument('--variant', choices=(VARIANT_KNOWN, VARIANT_NOVEL), default=VARIANT_KNOWN)

    verify = commands.add_parser('verify', help='Check the artifact digests of a manifest')
    verify.add_argument('manifest', type=Path)
    verify.add_argument('--replay', action='store_true', help='Re-run the command and compare its outputs')
    return parser


def output_root(out: Optional[Path]) -> Path:
    if out is not None:
        return out
    return Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)


def replay_arguments(argv: Sequence[str]) -> List[str]:
    """ Command line without the options a replay supplies itself. """
    out: List[str] = []
    skip = False
    for arg in argv:
        if skip:
            skip = False
        elif arg in _RUN_OPTIONS:
            skip = True
        elif arg in _RUN_FLAGS or arg.split('=', 1)[0] in _RUN_OPTIONS:
            continue
        else:
            out.append(arg)
    return out


def conventions(config: RunConfig) -> Dict[str, str]:
    return {
        'f1': f'macro over attributes, threshold {config.train.f1_threshold}',
        'average_precision': 'precision at every positive rank, ties in input order',
        'top1_ties': 'lowest class index',
        'cmap_zero_positive': 'attribute excluded with a warning',
        'mu_mechanism': config.train.mu_mechanism,
        'privacy_probe_loss': 'per-attribute binary cross-entropy',
        'minibatch_reuse': 'step 1 and step 2 of an iteration share the minibatch',
    }


class Run:
    """ Output directory and manifest of one command. """
    def __init__(self, command: str, config: RunConfig, root: Path, argv: Sequence[str]):
        self.root = root
        self.config = config
        self.manifest = RunManifest(
            command=command, config=config.render(), config_digest=config.digest(), argv=list(argv),
            conventions=conventions(config)
        )
        self.splits = SplitCache(config)

    def write_text(self, name: str, text: str) -> Path:
        path = self.root / name
        atomic_write_text(path, text)
        self.manifest.add_artifact(self.root, path)
        return path

    def write_checkpoint(self, name: str, checkpoint: Checkpoint) -> Path:
        path = self.root / name
        checkpoint.save(path)
        self.manifest.add_artifact(self.root, path)
        return path

    def write_curves(self, curves: Dict[str, CurveLog], prefix: str = '') -> None:
        for name, curve in curves.items():
            if curve.rows:
                self.write_text(f'{prefix}{name}_curve.csv', curve.to_csv())

    def known_splits(self) -> Tuple[DatasetSplit, DatasetSplit]:
        splits = self.splits.get(VARIANT_KNOWN)
        self.manifest.dataset_digest = dataset_digest(*splits)
        return splits

    def load_checkpoint(self, path: Path) -> Checkpoint:
        checkpoint = Checkpoint.load(path)
        self.manifest.add_input(path)
        return checkpoint

    def finish(self, name: Optional[str] = None) -> RunManifest:
        path = self.manifest.save(self.root, name)
        logger.info('Wrote %d artifacts and %s', len(self.manifest.artifacts), path)
        return self.manifest


def load_anonymizer(config: RunConfig, checkpoint: Checkpoint) -> Anonymizer:
    data, train = config.data, config.train
    anonymizer = Anonymizer(data.channels, train.anon_width1, train.anon_width2, train.anon_skip, train.anon_output,
                            seed=train.seed)
    if anonymizer.name not in checkpoint.networks:
        raise ConfigException('Checkpoint holds no anonymizer parameters', anonymizer.name)
    anonymizer.params.load_state(checkpoint.networks[anonymizer.name])
    return anonymizer


def cmd_pretrain(run: Run, args: argparse.Namespace) -> None:
    action, privacy = run.known_splits()
    trainer = Trainer(run.config, action, privacy)
    mae = trainer.pretrain_anonymizer()
    trainer.pretrain_utility()
    trainer.pretrain_budget()
    run.write_checkpoint('pretrain.ckpt', trainer.checkpoint({'held_out_mae': mae}))
    run.write_curves(trainer.curves)


def cmd_train(run: Run, args: argparse.Namespace) -> None:
    action, privacy = run.known_splits()
    trainer = Trainer(run.config, action, privacy)
    if args.checkpoint is not None:
        trainer.restore(run.load_checkpoint(args.checkpoint))
    else:
        trainer.pretrain_anonymizer()
        trainer.pretrain_utility()
        trainer.pretrain_budget()
    trainer.train_anonymization()
    run.write_checkpoint('anonymizer.ckpt', trainer.checkpoint())
    run.write_curves({PHASE_ANONYMIZATION: trainer.curve(PHASE_ANONYMIZATION)})


def cmd_probe(run: Run, args: argparse.Namespace) -> None:
    anonymizer = load_anonymizer(run.config, run.load_checkpoint(args.checkpoint))
    run.known_splits()
    protocol = protocol_for(args.kind, args.protocol)
    result = run_probes(run.config, anonymizer, run.splits, protocol, (args.kind,))
    stem = f'probe_{args.kind}_{args.protocol}'
    report = result.report
    run.write_text(f'{stem}.json', _json(report.to_json()))
    run.write_text(f'{stem}.csv', render_csv([report], run.config.data.num_attributes))
    run.write_curves(result.curves, f'{stem}_')


def cmd_sweep(run: Run, args: argparse.Namespace) -> None:
    run.known_splits()
    path = run.root / 'sweep.csv'
    reports = run_sweep(run.config, args.limiters, args.lambdas, run.splits, path, args.jobs)
    run.manifest.add_artifact(run.root, path)
    failed = sum(1 for r in reports if r.status != 'ok')
    if failed:
        logger.warning('%d of %d sweep rows failed', failed, len(reports))


def cmd_dump_frames(run: Run, args: argparse.Namespace) -> None:
    anonymizer = load_anonymizer(run.config, run.load_checkpoint(args.checkpoint))
    action, _ = run.known_splits()
    clips = action.inputs('eval')
    limiter = run.config.train.limiter
    for clip_id in args.clips:
        if not 0 <= clip_id < clips.shape[0]:
            raise ConfigException(f'Clip {clip_id} outside [0, {clips.shape[0]})', 'clips')
        raw = clips[clip_id]
        anonymized = anonymize_array(anonymizer, raw)
        for t in range(raw.shape[0]):
            for tag, frame in (('raw', raw[t]), (f'anon_B{limiter:g}', anonymized[t])):
                path = run.root / 'frames' / f'clip{clip_id:04d}_f{t:02d}_{tag}.ppm'
                write_ppm(path, frame)
                run.manifest.add_artifact(run.root, path)


def cmd_gen_data(run: Run, args: argparse.Namespace) -> None:
    action, privacy = run.splits.get(args.variant)
    run.manifest.dataset_digest = dataset_digest(action, privacy)
    out_dir = run.root / 'data' / args.variant
    for split in (action, privacy):
        export_split(split, out_dir)
    for path in sorted(out_dir.iterdir()):
        run.manifest.add_artifact(run.root, path)


COMMANDS: Dict[str, Callable[[Run, argparse.Namespace], None]] = {
    'pretrain': cmd_pretrain,
    'train': cmd_train,
    'probe': cmd_probe,
    'sweep': cmd_sweep,
    'dump-frames': cmd_dump_frames,
    'gen-data': cmd_gen_data,
}


def _json(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + '\n'


def _manifest_name(args: argparse.Namespace) -> str:
    if args.command == 'probe':
        return f'probe_{args.kind}_{args.protocol}'
    return args.command


def execute(args: argparse.Namespace, argv: Sequence[str]) -> RunManifest:
    config = load_config(args.config, args.overrides)
    root = output_root(args.out)
    run = Run(args.command, config, root, replay_arguments(argv))
    logger.info('%s: config digest %s, output %s', args.command, run.manifest.config_digest[:12], root)
    COMMANDS[args.command](run, args)
    return run.finish(_manifest_name(args))


def cmd_verify(args: argparse.Namespace) -> int:
    manifest = RunManifest.load(args.manifest)
    root = args.manifest.parent
    mismatched = manifest.verify(root)
    for name in mismatched:
        logger.error('Digest mismatch: %s', name)
    if mismatched or not args.replay:
        if not mismatched:
            logger.info('All %d artifacts match %s', len(manifest.artifacts), args.manifest)
        return 1 if mismatched else 0
    for path, digest in manifest.inputs.items():
        if digest_file(Path(path)) != digest:
            raise ConfigException(f'Input {path} changed since the recorded run', path)
    with tempfile.TemporaryDirectory(prefix='anonybench-replay-') as tmp:
        config_path = Path(tmp) / 'replay.conf'
        config_path.write_text(manifest.config, encoding='utf-8')
        argv = manifest.argv[:1] + ['--config', str(config_path), '--out', str(Path(tmp) / 'out')] + manifest.argv[1:]
        replayed = execute(build_parser().parse_args(argv), argv)
    differing = sorted(name for name, digest in manifest.artifacts.items() if replayed.artifacts.get(name) != digest)
    for name in differing:
        logger.error('Replay produced a different %s', name)
    if differing and manifest.config.find('wall_clock = true') >= 0:
        logger.warning('The run recorded wall-clock times; set wall_clock = false for byte-identical replays')
    return 1 if differing else 0


def configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        if args.command == 'verify':
            return cmd_verify(args)
        execute(args, argv)
        return 0
    except AnonybenchException as e:
        logger.error('%s', e.message)
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
