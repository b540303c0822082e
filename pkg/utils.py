"""
Utility Functions
Helpers for seeded random streams, timing, logging setup and metric math
"""

import logging
import time

import numpy as np

import config

logger = logging.getLogger(__name__)


def setup_logging(debug=None):
    """
    Configure the root logger once for command-line runs

    Args:
        debug: Force DEBUG level; defaults to config.DEBUG_MODE
    """
    debug = config.DEBUG_MODE if debug is None else debug
    level = logging.DEBUG if debug else getattr(logging, config.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format=config.LOG_FORMAT)


def spawn_rng(seed, *stream):
    """
    Independent random stream for (seed, *stream)

    The same key always yields the same stream, regardless of which other
    streams were drawn before, so iterations can run in any order.

    Args:
        seed: Master seed (int)
        *stream: Extra non-negative ints naming the stream

    Returns:
        numpy.random.Generator
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def mean(values):
    """Arithmetic mean, 0.0 for an empty sequence"""
    if len(values) == 0:
        return 0.0
    return float(np.mean(values))


def ratio(numerator, denominator):
    """numerator / denominator, NaN when the denominator is zero"""
    if denominator == 0:
        return float("nan")
    return numerator / denominator


class Timer:
    """Helper class for timing operations"""

    def __init__(self, name="Operation"):
        self.name = name
        self.start_time = None
        self.elapsed = 0.0

    def __enter__(self):
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, *args):
        self.elapsed = time.perf_counter() - self.start_time
        logger.info("[Timer] %s: %.2fs", self.name, self.elapsed)
