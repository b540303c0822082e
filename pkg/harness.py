"""
Experiment Harness Module
Runs seeded S3 / S4 aggregation rounds, records latency and radio-on time,
and writes machine-readable results plus a summary of S3/S4 ratios
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import psutil

import config
from ctsim import (
    Topology,
    TopologyError,
    Variant,
    mean_coverage,
    min_ntx_full_coverage,
    preset_topology,
    random_geometric_topology,
    reachability_profiles,
)
from protocol import ProtocolConfig, ProtocolError, bootstrap, default_degree, run_round
from utils import mean, ratio, spawn_rng

logger = logging.getLogger(__name__)

CSV_HEADER = (
    "variant", "iteration", "latency_ms", "mean_radio_on_ms", "max_radio_on_ms", "reliability", "correct",
)

# Random stream names; each (seed, stream, ...) key is independent
STREAM_SECRETS = 1
STREAM_ROUND = 2
STREAM_BOOTSTRAP = 3
STREAM_COVERAGE = 4

VARIANT_ORDER = {Variant.S3: 0, Variant.S4: 1}


class ConfigError(ValueError):
    """Invalid experiment configuration or topology source"""


# ============================================================================
# CONFIGURATION
# ============================================================================

@dataclass
class ExperimentConfig:
    """Every knob of one experiment; see config.EXPERIMENT_KEYS for defaults"""

    topology: str = config.TOPOLOGY
    variant: str = config.VARIANT
    n: int = None
    k: str = "auto"
    ntx_share: int = config.NTX_SHARE
    ntx_recon: int = config.NTX_RECON
    ntx_s3: str = config.NTX_S3
    q: int = config.FIELD_MODULUS
    loss: float = config.LOSS_PROB
    iterations: int = config.ITERATIONS
    seed: int = config.SEED
    out: str = config.OUTPUT_PATH
    format: str = config.OUTPUT_FORMAT
    master_secret: str = config.MASTER_SECRET
    slot_ms: float = config.SLOT_DURATION_MS
    workers: int = config.WORKERS
    sources: int = None
    profile_trials: int = config.PROFILE_TRIALS
    reach_threshold: float = config.REACH_THRESHOLD
    coverage_trials: int = config.COVERAGE_TRIALS
    coverage_quantile: float = config.COVERAGE_QUANTILE
    rgg_n: int = config.RGG_N
    rgg_radius: float = config.RGG_RADIUS
    rgg_width: float = config.RGG_WIDTH
    rgg_height: float = config.RGG_HEIGHT
    rgg_seed: int = config.RGG_SEED

    def __post_init__(self):
        self.validate()

    @classmethod
    def load(cls, path=None, overrides=None):
        """
        Build a config from defaults, then a key=value file, then overrides

        Args:
            path: Optional experiment file
            overrides: {key: raw string or typed value} (command-line flags)

        Returns:
            ExperimentConfig
        """
        values = config.default_experiment_values()
        if path is not None:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            try:
                entries = config.parse_experiment_text(text)
            except ValueError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
            for lineno, key, raw in entries:
                values[key] = _typed(key, raw, f"{path}:{lineno}")
        for key, raw in (overrides or {}).items():
            if raw is None:
                continue
            values[key] = _typed(key, raw, f"--{key}") if isinstance(raw, str) else raw
        return cls(**values)

    def validate(self):
        if self.variant not in ("s3", "s4", "both"):
            raise ConfigError(f"variant must be s3, s4 or both, got {self.variant!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not 0.0 <= self.loss < 1.0:
            raise ConfigError(f"loss must be in [0, 1), got {self.loss}")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        if self.ntx_share < 1 or self.ntx_recon < 1:
            raise ConfigError("ntx values must be >= 1")
        for key in ("k", "ntx_s3"):
            value = str(getattr(self, key))
            if value != "auto" and not (value.isdigit() and int(value) >= 1):
                raise ConfigError(f"{key} must be 'auto' or a positive integer, got {value!r}")
        try:
            secret = bytes.fromhex(self.master_secret)
        except ValueError as exc:
            raise ConfigError(f"master_secret is not hex: {exc}") from exc
        if len(secret) != 16:
            raise ConfigError("master_secret must be 32 hex characters")

    @property
    def variants(self):
        if self.variant == "both":
            return [Variant.S3, Variant.S4]
        return [Variant(self.variant)]

    def worker_count(self):
        if self.workers == 0:
            return psutil.cpu_count(logical=False) or 1
        return self.workers


def _typed(key, raw, where):
    if key not in config.EXPERIMENT_KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        return config.parse_value(key, raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value {raw!r} for {key}") from exc


# ============================================================================
# TOPOLOGY
# ============================================================================

def load_or_generate_topology(cfg):
    """
    Resolve the topology source: preset name, 'rgg' generator, or a file path

    The configured loss probability, when positive, replaces the global link
    success probability.

    Returns:
        Topology
    """
    source = cfg.topology
    try:
        if source in config.PRESETS:
            topology = preset_topology(source)
        elif source == "rgg":
            topology = random_geometric_topology(
                cfg.rgg_n, cfg.rgg_radius, cfg.rgg_width, cfg.rgg_height, cfg.rgg_seed
            )
        else:
            path = Path(source)
            if not path.is_file():
                raise ConfigError(
                    f"topology {source!r} is neither a preset ({', '.join(config.PRESETS)}), 'rgg' nor a file"
                )
            topology = Topology.from_file(path)
    except TopologyError as exc:
        raise ConfigError(f"topology {source}: {exc}") from exc

    if cfg.n is not None and cfg.n != topology.n:
        raise ConfigError(f"n={cfg.n} but topology {topology.name} has {topology.n} nodes")
    if cfg.loss > 0:
        topology = topology.with_loss(cfg.loss)
    logger.info(
        "topology %s: %d nodes, %d links, diameter %d, link success %.3f",
        topology.name, topology.n, len(topology.edges), topology.diameter(), topology.link_success_prob,
    )
    return topology


# ============================================================================
# RESULTS
# ============================================================================

@dataclass
class MetricsRow:
    variant: str
    iteration: int
    latency_ms: float
    mean_radio_on_ms: float
    max_radio_on_ms: float
    reliability: float
    correct: bool


@dataclass
class MetricsTable:
    rows: list = field(default_factory=list)
    ntx: dict = field(default_factory=dict)  # variant -> (ntx_share, ntx_recon)

    def rows_for(self, variant):
        return [row for row in self.rows if row.variant == variant]

    def variants(self):
        return sorted({row.variant for row in self.rows})


# ============================================================================
# EXPERIMENT
# ============================================================================

def resolve_ntx_s3(cfg, topology):
    """ntx_s3 as an int; 'auto' = min_ntx_full_coverage over the n^2 sharing chain"""
    if str(cfg.ntx_s3) != "auto":
        return int(cfg.ntx_s3)
    ntx = min_ntx_full_coverage(
        topology, None, cfg.coverage_trials, cfg.coverage_quantile,
        spawn_rng(cfg.seed, STREAM_COVERAGE), slots_per_node=topology.n,
    )
    if ntx is None:
        ntx = 2 * topology.n
        logger.warning("no full-coverage ntx found, S3 falls back to ntx=%d", ntx)
    logger.info("S3 ntx (full coverage, q=%.2f): %d", cfg.coverage_quantile, ntx)
    return ntx


def protocol_config(cfg, topology, variant, ntx_s3=None):
    """ProtocolConfig for one variant of an experiment"""
    k = default_degree(topology.n) if str(cfg.k) == "auto" else int(cfg.k)
    if variant is Variant.S3:
        ntx_share = ntx_recon = ntx_s3 if ntx_s3 is not None else resolve_ntx_s3(cfg, topology)
    else:
        ntx_share, ntx_recon = cfg.ntx_share, cfg.ntx_recon
    sources = None
    if cfg.sources is not None:
        if not 1 <= cfg.sources <= topology.n:
            raise ConfigError(f"sources must be in [1, {topology.n}], got {cfg.sources}")
        sources = topology.node_ids[: cfg.sources]
    try:
        return ProtocolConfig(
            variant=variant,
            n=topology.n,
            k=k,
            ntx_share=ntx_share,
            ntx_recon=ntx_recon,
            q=cfg.q,
            master_secret=bytes.fromhex(cfg.master_secret),
            slot_duration_ms=cfg.slot_ms,
            profile_trials=cfg.profile_trials,
            reach_threshold=cfg.reach_threshold,
            sources=sources,
        )
    except ProtocolError as exc:
        raise ConfigError(str(exc)) from exc


def draw_secrets(seed, iteration, count):
    """Sensor-like secrets for one iteration, shared by every variant"""
    rng = spawn_rng(seed, STREAM_SECRETS, iteration)
    return [int(v) for v in rng.integers(0, config.SECRET_RANGE, size=count)]


def _run_iteration(task):
    """One (variant, iteration) round; module-level so worker processes can run it"""
    topology, pcfg, boot, seed, iteration = task
    sources = pcfg.sources if pcfg.sources is not None else topology.node_ids
    secrets = draw_secrets(seed, iteration, len(sources))
    rng = spawn_rng(seed, STREAM_ROUND, VARIANT_ORDER[pcfg.variant], iteration)
    result = run_round(topology, secrets, pcfg, rng, boot=boot, round_id=iteration)
    m = result.metrics
    return MetricsRow(
        variant=pcfg.variant.value,
        iteration=iteration,
        latency_ms=m.latency_ms,
        mean_radio_on_ms=m.mean_radio_on_ms,
        max_radio_on_ms=m.max_radio_on_ms,
        reliability=m.reliability,
        correct=m.correct,
    )


def run_experiment(cfg, topology=None):
    """
    Run every configured variant for cfg.iterations seeded rounds

    Args:
        cfg: ExperimentConfig
        topology: Optional pre-resolved Topology

    Returns:
        MetricsTable ordered by (variant, iteration)
    """
    topology = topology or load_or_generate_topology(cfg)
    table = MetricsTable()
    tasks = []
    for variant in cfg.variants:
        pcfg = protocol_config(cfg, topology, variant)
        try:
            boot = bootstrap(topology, pcfg, spawn_rng(cfg.seed, STREAM_BOOTSTRAP, VARIANT_ORDER[variant]))
        except ProtocolError as exc:
            raise ConfigError(f"{variant.value.upper()} bootstrap failed: {exc}") from exc
        table.ntx[variant.value] = (pcfg.ntx_share, pcfg.ntx_recon)
        tasks.extend((topology, pcfg, boot, cfg.seed, it) for it in range(cfg.iterations))

    workers = cfg.worker_count()
    logger.info("running %d round(s) on %d worker(s)", len(tasks), workers)
    if workers == 1:
        rows = [_run_iteration(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_iteration, tasks, chunksize=max(1, len(tasks) // (4 * workers))))

    rows.sort(key=lambda r: (VARIANT_ORDER[Variant(r.variant)], r.iteration))
    table.rows = rows
    return table


# ============================================================================
# OUTPUT
# ============================================================================

def _row_record(row):
    record = asdict(row)
    record["correct"] = bool(row.correct)
    return record


def _csv_cell(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def format_csv(table):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in table.rows:
        record = _row_record(row)
        writer.writerow([_csv_cell(record[key]) for key in CSV_HEADER])
    return buffer.getvalue()


def format_json(table):
    return json.dumps([_row_record(row) for row in table.rows], indent=2) + "\n"


def summarize(table):
    """
    Per-variant means and, when both variants ran, S3/S4 ratios

    Returns:
        dict: {"variants": {name: {...means}}, "ratios": {...}}
    """
    summary = {"variants": {}, "ratios": {}}
    for variant in table.variants():
        rows = table.rows_for(variant)
        summary["variants"][variant] = {
            "iterations": len(rows),
            "latency_ms": mean([r.latency_ms for r in rows]),
            "mean_radio_on_ms": mean([r.mean_radio_on_ms for r in rows]),
            "max_radio_on_ms": mean([r.max_radio_on_ms for r in rows]),
            "reliability": mean([r.reliability for r in rows]),
            "correct_rate": mean([1.0 if r.correct else 0.0 for r in rows]),
        }
    per = summary["variants"]
    if "s3" in per and "s4" in per:
        summary["ratios"] = {
            "latency": ratio(per["s3"]["latency_ms"], per["s4"]["latency_ms"]),
            "radio_on": ratio(per["s3"]["mean_radio_on_ms"], per["s4"]["mean_radio_on_ms"]),
        }
    return summary


def print_summary(table):
    summary = summarize(table)
    print("=" * 60)
    print("EXPERIMENT SUMMARY")
    print("=" * 60)
    for variant, stats in summary["variants"].items():
        ntx = table.ntx.get(variant)
        ntx_text = f" (ntx share/recon {ntx[0]}/{ntx[1]})" if ntx else ""
        print(f"\n{variant.upper()}{ntx_text}, {stats['iterations']} iteration(s):")
        print(f"  Latency:          {stats['latency_ms']:.1f} ms")
        print(f"  Radio-on (mean):  {stats['mean_radio_on_ms']:.1f} ms")
        print(f"  Radio-on (max):   {stats['max_radio_on_ms']:.1f} ms")
        print(f"  Reliability:      {stats['reliability']:.4f}")
        print(f"  Correct rounds:   {stats['correct_rate']:.4f}")
    if summary["ratios"]:
        print(f"\nS3/S4 latency ratio:  {summary['ratios']['latency']:.2f}x")
        print(f"S3/S4 radio-on ratio: {summary['ratios']['radio_on']:.2f}x")
    print("=" * 60)
    return summary


def write_results(table, path, fmt="csv"):
    """
    Write the table as CSV or JSON and print the summary block

    Returns:
        Path written
    """
    text = format_csv(table) if fmt == "csv" else format_json(table)
    path = Path(path)
    try:
        if path.parent != Path("."):
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write results to {path}: {exc}") from exc
    logger.info("wrote %d row(s) to %s", len(table.rows), path)
    print_summary(table)
    return path


# ============================================================================
# PROFILING REPORTS
# ============================================================================

def profile_report(topology, max_ntx, trials, seed, threshold=config.REACH_THRESHOLD):
    """Print, per node, how many sources it hears at each ntx"""
    profiles = reachability_profiles(topology, None, max_ntx, trials, spawn_rng(seed, STREAM_COVERAGE), threshold)
    curve = mean_coverage(topology, None, max_ntx, trials, spawn_rng(seed, STREAM_COVERAGE, 1))
    print("=" * 60)
    print(f"REACHABILITY PROFILE: {topology.name} ({topology.n} nodes, threshold {threshold})")
    print("=" * 60)
    print("node " + " ".join(f"{t:>4}" for t in range(1, max_ntx + 1)))
    for node in topology.node_ids:
        counts = " ".join(f"{len(profiles[node][t]):>4}" for t in range(1, max_ntx + 1))
        print(f"{node:>4} {counts}")
    print("mean " + " ".join(f"{curve[t]:>4.2f}" for t in range(1, max_ntx + 1)))
    return profiles


def mincov_report(topology, trials, quantile, seed, slots_per_node=1):
    ntx = min_ntx_full_coverage(topology, None, trials, quantile, spawn_rng(seed, STREAM_COVERAGE), slots_per_node)
    print(f"{topology.name}: min ntx for full coverage (quantile {quantile}) = {ntx if ntx else 'not reached'}")
    return ntx


def config_keys():
    return [f.name for f in fields(ExperimentConfig)]
