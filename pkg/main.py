import argparse
import logging
import sys
from typing import List, Optional

from config import (EVAL_EPISODES, EXIT_CHECKPOINT, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_TRACE)
from errors import CheckpointFormatError, CheckpointNotFoundError, ConfigurationError, NumericError, TraceError
from experiment_runner import ExperimentRunner

EXIT_CODES = [
    (ConfigurationError, EXIT_CONFIG, "Configuration error"),
    (NumericError, EXIT_NUMERIC, "Numeric failure"),
    (CheckpointNotFoundError, EXIT_CHECKPOINT, "Checkpoint error"),
    (CheckpointFormatError, EXIT_CHECKPOINT, "Checkpoint error"),
    (TraceError, EXIT_TRACE, "Trace error"),
]


def print_banner():
    """Print application banner and version info."""
    print("="*60)
    print("DIFFUSION FICTITIOUS PLAY")
    print("="*60)
    print("Best responses by diffusion policies in continuous zero-sum games")
    print()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='difffp', description='Fictitious play with diffusion-policy best responses')
    parser.add_argument('--out', help='root directory for run outputs')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    commands = parser.add_subparsers(dest='command', required=True)

    train = commands.add_parser('train', help='run fictitious play from a config file')
    train.add_argument('config')

    exploit = commands.add_parser('exploit', help='measure exploitability of a stored run')
    exploit.add_argument('run_dir')
    exploit.add_argument('--iteration', type=int)
    exploit.add_argument('--oracle', choices=['auto', 'grid', 'rl'])
    exploit.add_argument('--episodes', type=int)
    exploit.add_argument('--br-steps', type=int)
    exploit.add_argument('--seed', type=int)
    exploit.add_argument('--report', help='output JSON path')

    tournament = commands.add_parser('tournament', help='cross-play between runs or checkpoints')
    tournament.add_argument('sources', nargs='+', help='run directories or checkpoint globs')
    tournament.add_argument('--env', help='game name (default: from the first run)')
    tournament.add_argument('--episodes', type=int, default=EVAL_EPISODES)
    tournament.add_argument('--seed', type=int, default=0)
    tournament.add_argument('--self-play', action='store_true', help='also play each policy against itself')
    tournament.add_argument('--dest', help='output directory')

    trace = commands.add_parser('trace', help='dump per-step positions of replayed episodes')
    trace.add_argument('run_dir')
    trace.add_argument('--iteration', type=int)
    trace.add_argument('--episodes', type=int, default=1)
    trace.add_argument('--seed', type=int)
    trace.add_argument('--csv', help='output CSV path')
    return parser


def run_command(runner: ExperimentRunner, args: argparse.Namespace):
    if args.command == 'train':
        return runner.cmd_train(args.config)
    if args.command == 'exploit':
        return runner.cmd_exploit(args.run_dir, args.iteration, args.oracle, args.episodes, args.seed,
                                  args.br_steps, args.report)
    if args.command == 'tournament':
        return runner.cmd_tournament(args.sources, args.episodes, args.seed, args.env, args.self_play, args.dest)
    return runner.cmd_trace(args.run_dir, args.iteration, args.episodes, args.seed, args.csv)


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    print_banner()
    runner = ExperimentRunner(args.out)
    try:
        run_command(runner, args)
    except tuple(error for error, _, _ in EXIT_CODES) as e:
        for error, code, label in EXIT_CODES:
            if isinstance(e, error):
                print(f"{label}: {e}", file=sys.stderr)
                return code
    print("\nProcess finished!")
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
