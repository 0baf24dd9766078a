# Simulgate - three-qubit gate simulator
# Command-line entry point: python main.py [-v|-vv] <command> ...

import argparse
import importlib
import logging
import sys
import traceback

from dotenv import load_dotenv

import device_data as dd
import effective_dynamics as ed
import gate_library as gl
import qudit_algebra as qa
import state_prep as sp
from commands.common import EXIT_FAILED, EXIT_USAGE

# Load environment variables
load_dotenv()

logger = logging.getLogger('simulgate')

# Command groups under commands/, loaded by name
COMMAND_GROUPS = [
    'gate_commands',
    'prepare_commands',
    'simulate_commands',
    'sweep_commands',
]

# Errors that mean the inputs were wrong rather than the code
USAGE_ERRORS = (
    dd.ConfigError,
    gl.GateParameterError,
    qa.ShapeMismatchError,
    qa.NotHermitianError,
    ed.ModelError,
    sp.AdjacencyError,
    FileNotFoundError,
    ValueError,
)


def load_command_groups(subparsers) -> list:
    """Register every command group; returns the names that loaded."""
    loaded, failed = [], []
    for group in COMMAND_GROUPS:
        try:
            module = importlib.import_module(f'commands.{group}')
            module.setup(subparsers)
            loaded.append(group)
            logger.debug(f'   ✅ {group} loaded')
        except Exception as e:
            failed.append((group, e))
            logger.error(f'   ❌ Failed to load {group}: {e}')

    if failed:
        logger.error('=' * 60)
        logger.error(f'📊 Command groups: {len(loaded)}/{len(COMMAND_GROUPS)} loaded')
        for group, error in failed:
            logger.error(f'      - {group}: {error}')
        logger.error('=' * 60)
    return loaded


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='simulgate',
        description='Simulate and verify three-qubit CCZS and DIV gates, state preparation and device pulses.',
    )
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='Log progress to stderr (-v info, -vv debug)')
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    subparsers.required = True
    load_command_groups(subparsers)
    return parser


def configure_logging(verbosity: int):
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(format='%(message)s', stream=sys.stderr, level=level, force=True)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for --help and 2 for usage errors
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    configure_logging(args.verbose)

    try:
        return args.handler(args)
    except USAGE_ERRORS as e:
        logger.error(f'❌ {e}')
        return EXIT_USAGE
    except Exception as e:
        logger.error(f'❌ Unexpected error in {args.command}: {e}')
        logger.debug(traceback.format_exc())
        return EXIT_FAILED


if __name__ == '__main__':
    sys.exit(main())
