# Shared helpers for command groups: output paths, report emission, environment defaults

import json
import logging
import os
import sys
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def output_dir() -> str:
    return os.getenv('SIMULGATE_OUTPUT_DIR', '.')


def default_jobs() -> int:
    value = os.getenv('SIMULGATE_JOBS', '1')
    try:
        return max(1, int(value))
    except ValueError:
        logger.warning(f"⚠️ SIMULGATE_JOBS={value!r} is not an integer, using 1 worker")
        return 1


def resolve_output(path: Optional[str]) -> Optional[str]:
    """Relative output paths land under SIMULGATE_OUTPUT_DIR."""
    if path is None or os.path.isabs(path):
        return path
    return os.path.join(output_dir(), path)


def require_file(path: str, what: str = 'input file'):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} not found: {path}")


def _default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def emit(payload: dict, out: Optional[str] = None):
    """JSON report to stdout, or to `out` (resolved against the output directory)."""
    text = json.dumps(payload, indent=2, sort_keys=True, default=_default)
    path = resolve_output(out)
    if path is None:
        sys.stdout.write(text + '\n')
        return
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text + '\n')
    logger.info(f"💾 Wrote {path}")
