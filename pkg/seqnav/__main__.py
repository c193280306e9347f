'''
Run the program from the command line via python module mode.

> python -m seqnav COMMAND [options]

    train       train a policy from a YAML config / run preset
    eval        benchmark one checkpoint on one fixed sequence
    sweep       benchmark checkpoints over threshold presets and sequences
    plot        render a trajectory CSV to SVG
    browse      open the report browser on a results folder

Failures print ``{"error": ..., "message": ...}`` to stderr and exit with status 2.
'''

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .errors import SeqnavError


def _train(ns):
    from .config import load_run_config
    from .policy import train

    cfg = load_run_config(ns.config, ns.preset)
    if ns.seed is not None:
        cfg = dataclasses.replace(cfg, seed=ns.seed)
    ckpt = train(cfg, ns.out, resume=ns.resume)
    print(json.dumps({'out': str(ns.out), 'iteration': ckpt.iteration, 'config_hash': ckpt.config_hash}))


def _eval(ns):
    from .bench import CheckpointPolicy, run_benchmark

    policy = CheckpointPolicy(ns.checkpoint)
    report = run_benchmark(policy, ns.sequence, ns.preset, num_envs=ns.envs, time_limit=ns.time_limit,
                           seed=ns.seed, record_traj=ns.record_traj, randomize=ns.randomize)
    text = json.dumps(report.to_dict(), indent=2)
    if ns.report:
        Path(ns.report).parent.mkdir(parents=True, exist_ok=True)
        Path(ns.report).write_text(text)
    print(text)


def _sweep(ns):
    from .bench import CheckpointPolicy, format_table, sweep_thresholds, write_sweep

    policies = {}
    for path in map(Path, ns.checkpoints):
        name = path.stem
        if name in policies:
            # runs/a/final.ckpt and runs/b/final.ckpt
            name = f'{path.parent.name}-{path.stem}'
        policies[name] = CheckpointPolicy(path, name=name)
    reports = sweep_thresholds(policies, ns.presets, ns.sequences, num_envs=ns.envs,
                               time_limit=ns.time_limit, seed=ns.seed, randomize=ns.randomize)
    write_sweep(reports, ns.out)
    print(format_table(reports))


def _plot(ns):
    from .plot import export_trajectory_plot

    out = export_trajectory_plot(ns.traj, ns.out, v_max=ns.v_max)
    print(out)


def _browse(ns):
    from .browser import run_browser

    run_browser(directory=ns.directory)


def build_parser() -> argparse.ArgumentParser:
    from .bench import FIXED_SEQUENCES
    from .config import RUN_PRESETS
    from .task import BENCH_PRESETS, THRESHOLD_PRESETS

    parser = argparse.ArgumentParser(
        prog='seqnav',
        description='Train and benchmark sequential goal-reaching policies for a planar robot.'
    )
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='More logging (-v info, -vv debug).')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help='Train a policy with PPO.')
    p.add_argument('--config', metavar='FILE', help='YAML file of config overrides.')
    p.add_argument('--preset', choices=sorted(RUN_PRESETS), help='Named training variant.')
    p.add_argument('--seed', type=int, help='Override the config seed.')
    p.add_argument('--out', required=True, metavar='DIR', help='Output folder.')
    p.add_argument('--resume', metavar='FILE', help='Checkpoint to continue from.')
    p.set_defaults(func=_train)

    p = sub.add_parser('eval', help='Benchmark a checkpoint on one fixed sequence.')
    p.add_argument('--checkpoint', required=True, metavar='FILE')
    p.add_argument('--sequence', required=True, choices=sorted(FIXED_SEQUENCES))
    p.add_argument('--preset', required=True, choices=sorted(THRESHOLD_PRESETS))
    p.add_argument('--envs', type=int, default=512)
    p.add_argument('--time-limit', type=float, default=10.0)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--no-randomize', dest='randomize', action='store_false',
                   help='Start every episode from the same nominal state without sensor noise.')
    p.add_argument('--record-traj', metavar='DIR', help='Write trajectory CSVs of the first episodes here.')
    p.add_argument('--report', metavar='FILE', help='Also write the report JSON to FILE.')
    p.set_defaults(func=_eval)

    p = sub.add_parser('sweep', help='Benchmark checkpoints over presets and sequences.')
    p.add_argument('--checkpoints', required=True, nargs='+', metavar='FILE')
    p.add_argument('--out', required=True, metavar='DIR')
    p.add_argument('--presets', nargs='+', default=list(BENCH_PRESETS), choices=sorted(THRESHOLD_PRESETS))
    p.add_argument('--sequences', nargs='+', default=list(FIXED_SEQUENCES), choices=sorted(FIXED_SEQUENCES))
    p.add_argument('--envs', type=int, default=512)
    p.add_argument('--time-limit', type=float, default=10.0)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--no-randomize', dest='randomize', action='store_false',
                   help='Start every episode from the same nominal state without sensor noise.')
    p.set_defaults(func=_sweep)

    p = sub.add_parser('plot', help='Render a trajectory CSV as SVG.')
    p.add_argument('--traj', required=True, metavar='FILE')
    p.add_argument('--out', required=True, metavar='FILE')
    p.add_argument('--v-max', type=float, help='Top of the speed colour scale.')
    p.set_defaults(func=_plot)

    p = sub.add_parser('browse', help='Open the interactive report browser.')
    p.add_argument('directory', nargs='?', default='.')
    p.set_defaults(func=_browse)
    return parser


def main(argv=None):
    sys.stdout.reconfigure(encoding='utf-8')
    ns = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(ns.verbose, 2)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    try:
        ns.func(ns)
    except (SeqnavError, OSError) as e:
        print(json.dumps({'error': type(e).__name__, 'message': str(e)}), file=sys.stderr)
        return 2
    return 0


if __name__ == '__main__':
    sys.exit(main())
