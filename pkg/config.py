"""
Configuration file for the secret-sharing aggregation simulator
Adjust these parameters to change field size, radio timing and experiment defaults
"""

import re

# ============================================================================
# FINITE FIELD
# ============================================================================
# Mersenne prime 2^31 - 1: sums of thousands of 16-bit readings never wrap
FIELD_MODULUS = 2147483647

# Secrets are emulated sensor readings drawn from [0, SECRET_RANGE)
SECRET_RANGE = 1 << 16

# ============================================================================
# RADIO / CHAIN TIMING
# ============================================================================
SLOT_DURATION_MS = 4.0  # One sub-slot packet in a chain

# NTX = number of times every node relays the full chain
NTX_SHARE = 6  # Low-NTX sharing phase of the scalable variant
NTX_RECON = 6  # Reconstruction phase
NTX_S3 = "auto"  # "auto" = smallest NTX reaching full coverage

# Probability that a single sub-slot packet is lost on a link
LOSS_PROB = 0.0

# ============================================================================
# BOOTSTRAP / REACHABILITY PROFILING
# ============================================================================
REACH_THRESHOLD = 0.99  # Fraction of trials a source must arrive in
PROFILE_TRIALS = 100  # Monte-Carlo trials per profile
COVERAGE_TRIALS = 100  # Trials for min_ntx_full_coverage
COVERAGE_QUANTILE = 0.99  # Fraction of trials that must reach full coverage

# ============================================================================
# CRYPTO
# ============================================================================
# 128-bit master secret (32 hex chars); stands in for bootstrap key exchange
MASTER_SECRET = "000102030405060708090a0b0c0d0e0f"

# ============================================================================
# EXPERIMENT DEFAULTS
# ============================================================================
TOPOLOGY = "flocklab26"
VARIANT = "both"  # s3 | s4 | both
ITERATIONS = 200  # Desk scale (testbed runs used 2000)
SEED = 1
OUTPUT_PATH = "results.csv"
OUTPUT_FORMAT = "csv"  # csv | json
WORKERS = 1  # 0 = one per physical core

# ============================================================================
# TESTBED STAND-INS (random geometric graphs, seeds fixed here)
# ============================================================================
PRESETS = {
    "flocklab26": {"n": 26, "radius": 0.6, "width": 3.0, "height": 1.0, "seed": 26},
    "dcube45": {"n": 45, "radius": 0.6, "width": 3.5, "height": 1.2, "seed": 45},
}

# Generator defaults for topology=rgg
RGG_N = 30
RGG_RADIUS = 0.35
RGG_WIDTH = 1.0
RGG_HEIGHT = 1.0
RGG_SEED = 7

# ============================================================================
# DEBUGGING & LOGGING
# ============================================================================
DEBUG_MODE = False  # DEBUG level logs (per-round flood details)
LOG_LEVEL = "INFO"
LOG_FORMAT = "[%(name)s] %(message)s"

# ============================================================================
# EXPERIMENT FILE KEYS
# ============================================================================
# key -> (type, default). Types are parsed from the flat key=value file.
EXPERIMENT_KEYS = {
    "topology": (str, TOPOLOGY),
    "variant": (str, VARIANT),
    "n": (int, None),
    "k": (str, "auto"),
    "ntx_share": (int, NTX_SHARE),
    "ntx_recon": (int, NTX_RECON),
    "ntx_s3": (str, NTX_S3),
    "q": (int, FIELD_MODULUS),
    "loss": (float, LOSS_PROB),
    "iterations": (int, ITERATIONS),
    "seed": (int, SEED),
    "out": (str, OUTPUT_PATH),
    "format": (str, OUTPUT_FORMAT),
    "master_secret": (str, MASTER_SECRET),
    "slot_ms": (float, SLOT_DURATION_MS),
    "workers": (int, WORKERS),
    "sources": (int, None),
    "profile_trials": (int, PROFILE_TRIALS),
    "reach_threshold": (float, REACH_THRESHOLD),
    "coverage_trials": (int, COVERAGE_TRIALS),
    "coverage_quantile": (float, COVERAGE_QUANTILE),
    "rgg_n": (int, RGG_N),
    "rgg_radius": (float, RGG_RADIUS),
    "rgg_width": (float, RGG_WIDTH),
    "rgg_height": (float, RGG_HEIGHT),
    "rgg_seed": (int, RGG_SEED),
}

_LINE_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")


# ============================================================================
# HELPER FUNCTIONS
# ============================================================================

def default_experiment_values():
    """Get a fresh dict of every experiment key with its default"""
    return {key: default for key, (_, default) in EXPERIMENT_KEYS.items()}


def parse_value(key, raw):
    """
    Convert a raw string to the declared type of an experiment key

    Args:
        key: Experiment key name
        raw: String value from a file or command line

    Returns:
        Parsed value

    Raises:
        KeyError: unknown key
        ValueError: value does not parse as the key's type
    """
    kind, _ = EXPERIMENT_KEYS[key]
    return kind(raw)


def parse_experiment_text(text):
    """
    Parse flat key=value experiment text

    Args:
        text: File contents; '#' starts a comment

    Returns:
        list of (line_number, key, raw_value) tuples in file order

    Raises:
        ValueError: malformed line, message names the line number
    """
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        match = _LINE_RE.match(stripped)
        if not match:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        entries.append((lineno, match.group(1), match.group(2)))
    return entries
