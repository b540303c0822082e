"""
Concurrent-Transmission Simulator Module
Deterministic round model of MiniCast-style chain flooding

Round model:
- A chain is an ordered list of TDMA sub-slots, each owned by one node
- One round = every node relays every sub-slot it holds once (NTX counts rounds)
- A payload advances one hop per round; each link drops each sub-slot
  independently with probability 1 - link_success_prob
- The radio stays on for the whole chain in every round, so latency and
  radio-on time are both ntx * chain_length * slot_duration
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property, lru_cache
from pathlib import Path

import networkx as nx
import numpy as np

import config
from utils import spawn_rng

logger = logging.getLogger(__name__)


class Phase(Enum):
    SHARING = "sharing"
    RECONSTRUCTION = "reconstruction"


class Variant(Enum):
    """S3 = naive sharing to all nodes, S4 = low-degree trimmed sharing"""
    S3 = "s3"
    S4 = "s4"


class TopologyError(ValueError):
    """Invalid or unparsable topology"""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ScheduleError(ValueError):
    pass


# ============================================================================
# TOPOLOGY
# ============================================================================

@dataclass(frozen=True)
class Topology:
    """Connected radio graph with per-link packet success probabilities"""

    node_ids: tuple
    edges: frozenset  # (a, b) pairs with a < b
    link_success_prob: float = 1.0
    edge_probs: dict = field(default_factory=dict)  # (a, b) -> p, overrides the global value
    initiator: int = None
    name: str = "custom"

    def __post_init__(self):
        if not self.node_ids:
            raise TopologyError("topology has no nodes")
        if len(set(self.node_ids)) != len(self.node_ids):
            raise TopologyError("duplicate node ids")
        object.__setattr__(self, "node_ids", tuple(sorted(int(i) for i in self.node_ids)))
        nodes = set(self.node_ids)
        for a, b in self.edges:
            if a == b:
                raise TopologyError(f"self-loop on node {a}")
            if a not in nodes or b not in nodes:
                raise TopologyError(f"edge {a}-{b} references an unknown node")
        for p in [self.link_success_prob, *self.edge_probs.values()]:
            if not 0.0 < p <= 1.0:
                raise TopologyError(f"link success probability {p} outside (0, 1]")
        if self.initiator is None:
            object.__setattr__(self, "initiator", self.node_ids[0])
        elif self.initiator not in nodes:
            raise TopologyError(f"initiator {self.initiator} is not a node")
        if not nx.is_connected(self.graph):
            parts = nx.number_connected_components(self.graph)
            raise TopologyError(f"graph is disconnected ({parts} components)")

    @cached_property
    def graph(self):
        graph = nx.Graph()
        graph.add_nodes_from(self.node_ids)
        graph.add_edges_from(self.edges)
        return graph

    @property
    def n(self):
        return len(self.node_ids)

    def index(self, node):
        return self._index[node]

    @cached_property
    def _index(self):
        return {node: i for i, node in enumerate(self.node_ids)}

    def prob(self, a, b):
        return self.edge_probs.get((min(a, b), max(a, b)), self.link_success_prob)

    def neighbors(self, node):
        return sorted(self.graph.neighbors(node))

    def diameter(self):
        return nx.diameter(self.graph) if self.n > 1 else 0

    def hop_distances(self, node):
        return dict(nx.single_source_shortest_path_length(self.graph, node))

    def with_loss(self, loss_prob):
        """Copy with a global per-packet loss probability (explicit per-edge p kept)"""
        if not 0.0 <= loss_prob < 1.0:
            raise TopologyError(f"loss probability {loss_prob} outside [0, 1)")
        return replace(self, link_success_prob=1.0 - loss_prob)

    @cached_property
    def links(self):
        """
        Directed link arrays for vectorised flooding

        Returns:
            tuple: (src index array, success prob array, n x E incidence into dst)
        """
        src, dst, probs = [], [], []
        for a, b in sorted(self.edges):
            p = self.prob(a, b)
            for u, v in ((a, b), (b, a)):
                src.append(self._index[u])
                dst.append(self._index[v])
                probs.append(p)
        into = np.zeros((self.n, len(src)), dtype=np.float32)
        into[dst, np.arange(len(src))] = 1.0
        return np.asarray(src, dtype=np.intp), np.asarray(probs), into

    @classmethod
    def from_text(cls, text, name="custom"):
        """
        Parse the line-oriented topology format

        Format:
            nodes <n>              (required, before any edge; ids are 1..n)
            initiator <id>         (optional)
            p <prob>               (optional global link success probability)
            edge <i> <j> [p <prob>]
        '#' starts a comment.
        """
        n = None
        edges, edge_probs = set(), {}
        global_p, initiator = 1.0, None

        for lineno, line in enumerate(text.splitlines(), start=1):
            words = line.split("#", 1)[0].split()
            if not words:
                continue
            try:
                keyword = words[0]
                if keyword == "nodes" and len(words) == 2:
                    n = int(words[1])
                    if n < 1:
                        raise TopologyError("node count must be positive", lineno)
                elif keyword == "initiator" and len(words) == 2:
                    initiator = int(words[1])
                elif keyword == "p" and len(words) == 2:
                    global_p = float(words[1])
                elif keyword == "edge" and len(words) in (3, 5):
                    if n is None:
                        raise TopologyError("'edge' before 'nodes'", lineno)
                    a, b = int(words[1]), int(words[2])
                    if a == b:
                        raise TopologyError(f"self-loop on node {a}", lineno)
                    if not (1 <= a <= n and 1 <= b <= n):
                        raise TopologyError(f"edge {a}-{b} outside nodes 1..{n}", lineno)
                    pair = (min(a, b), max(a, b))
                    edges.add(pair)
                    if len(words) == 5:
                        if words[3] != "p":
                            raise TopologyError(f"expected 'p <prob>', got {words[3]!r}", lineno)
                        edge_probs[pair] = float(words[4])
                else:
                    raise TopologyError(f"cannot parse {line.strip()!r}", lineno)
            except ValueError as exc:
                if isinstance(exc, TopologyError):
                    raise
                raise TopologyError(str(exc), lineno) from exc

        if n is None:
            raise TopologyError("missing 'nodes <n>' header")
        return cls(tuple(range(1, n + 1)), frozenset(edges), global_p, edge_probs, initiator, name)

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        return cls.from_text(path.read_text(), name=path.stem)

    def to_text(self):
        lines = [f"nodes {self.n}", f"initiator {self.initiator}"]
        if self.link_success_prob != 1.0:
            lines.append(f"p {self.link_success_prob!r}")
        for a, b in sorted(self.edges):
            if (a, b) in self.edge_probs:
                lines.append(f"edge {a} {b} p {self.edge_probs[(a, b)]!r}")
            else:
                lines.append(f"edge {a} {b}")
        return "\n".join(lines) + "\n"


def random_geometric_topology(n, radius, width=1.0, height=1.0, seed=0, max_attempts=1000, name=None):
    """
    Random geometric graph in a width x height rectangle

    Placement attempts use streams (seed, 0), (seed, 1), ... until the graph
    is connected, so the result is fixed by the arguments.

    Args:
        n: Node count (ids 1..n)
        radius: Radio range in the same units as width/height
        seed: Placement seed

    Returns:
        Topology
    """
    if n < 1:
        raise TopologyError("node count must be positive")
    for attempt in range(max_attempts):
        rng = spawn_rng(seed, attempt)
        xy = rng.random((n, 2)) * np.array([width, height])
        pos = {i: (float(xy[i, 0]), float(xy[i, 1])) for i in range(n)}
        graph = nx.random_geometric_graph(n, radius, pos=pos)
        if nx.is_connected(graph):
            edges = frozenset((min(a, b) + 1, max(a, b) + 1) for a, b in graph.edges())
            logger.debug("rgg n=%d radius=%s connected after %d attempt(s)", n, radius, attempt + 1)
            return Topology(tuple(range(1, n + 1)), edges, name=name or f"rgg{n}")
    raise TopologyError(f"no connected placement for n={n}, radius={radius} in {max_attempts} attempts")


@lru_cache(maxsize=None)
def preset_topology(name):
    """Bundled testbed stand-ins: flocklab26, dcube45"""
    if name not in config.PRESETS:
        raise TopologyError(f"unknown preset {name!r} (known: {', '.join(sorted(config.PRESETS))})")
    params = config.PRESETS[name]
    return random_geometric_topology(
        params["n"], params["radius"], params["width"], params["height"], params["seed"], name=name
    )


# ============================================================================
# CHAIN SCHEDULES
# ============================================================================

@dataclass(frozen=True)
class SubSlot:
    owner: int
    payload_id: int  # destination (sharing) or the owner itself (reconstruction)


@dataclass(frozen=True)
class ChainSchedule:
    """Ordered TDMA sub-slots of one MiniCast chain"""

    sub_slots: tuple
    slot_duration_ms: float
    phase: Phase

    @property
    def chain_length(self):
        return len(self.sub_slots)

    def duration_ms(self, ntx):
        return ntx * self.chain_length * self.slot_duration_ms

    def slots_addressed_to(self, node):
        return [i for i, s in enumerate(self.sub_slots) if s.payload_id == node]

    def index_of(self, owner, payload_id):
        return self._lookup[(owner, payload_id)]

    @cached_property
    def _lookup(self):
        return {(s.owner, s.payload_id): i for i, s in enumerate(self.sub_slots)}


def build_chain_schedule(phase, variant, n, destination_map=None, node_ids=None, sources=None,
                         slot_duration_ms=config.SLOT_DURATION_MS):
    """
    Lay out the chain for one protocol phase

    Sharing, S3: one sub-slot per (source, destination) over all n nodes.
    Sharing, S4: one sub-slot per (source, designated destination).
    Reconstruction: one sub-slot per node.
    Ordering is by owner id, then destination id.

    Args:
        phase: Phase or its string value
        variant: Variant or its string value
        n: Node count
        destination_map: node -> destinations, required for S4 sharing
        node_ids: Node ids (default 1..n)
        sources: Sharing nodes (default all nodes)

    Returns:
        ChainSchedule
    """
    phase, variant = Phase(phase), Variant(variant)
    node_ids = sorted(node_ids) if node_ids is not None else list(range(1, n + 1))
    if len(node_ids) != n:
        raise ScheduleError(f"{len(node_ids)} node ids for n={n}")

    if phase is Phase.RECONSTRUCTION:
        slots = [SubSlot(node, node) for node in node_ids]
    else:
        sources = sorted(sources) if sources is not None else node_ids
        if variant is Variant.S3:
            slots = [SubSlot(src, dst) for src in sources for dst in node_ids]
        else:
            if destination_map is None:
                raise ScheduleError("S4 sharing chain needs a destination map")
            missing = [src for src in sources if src not in destination_map]
            if missing:
                raise ScheduleError(f"no destinations for source(s) {missing}")
            slots = [SubSlot(src, dst) for src in sources for dst in sorted(destination_map[src])]

    return ChainSchedule(tuple(slots), float(slot_duration_ms), phase)


# ============================================================================
# DISSEMINATION
# ============================================================================

@dataclass
class DisseminationResult:
    """What every node holds after ntx rounds, plus timing"""

    received: dict  # node -> {sub-slot index: payload bytes}
    radio_on_ms: dict  # node -> ms
    latency_ms: float
    rounds_executed: int
    held: np.ndarray  # n x L bool, rows in topology node order
    history: list = field(default_factory=list)  # held after each round, if kept

    def coverage(self):
        return float(self.held.mean()) if self.held.size else 1.0


def _flood_rounds(topology, held, rounds, rng):
    """
    Yield the held matrix after each round

    A draw is made for every (directed link, sub-slot) pair each round,
    held or not, so the random stream does not depend on coverage.
    """
    src, probs, into = topology.links
    lossy = bool(np.any(probs < 1.0))
    for _ in range(rounds):
        offered = held[src]
        if lossy:
            offered = offered & (rng.random(offered.shape) < probs[:, None])
        arrivals = into @ offered.astype(np.float32)
        held = held | (arrivals > 0)
        yield held


def run_dissemination(topology, schedule, initial_payloads, ntx, rng, keep_history=False):
    """
    Flood one chain for ntx rounds

    Args:
        topology: Topology
        schedule: ChainSchedule
        initial_payloads: {sub-slot index: bytes}; a sub-slot without an
            entry carries an empty marker b""
        ntx: Rounds (>= 1)
        rng: numpy Generator for link losses
        keep_history: Keep a copy of the held matrix after each round

    Returns:
        DisseminationResult
    """
    if ntx < 1:
        raise ScheduleError(f"ntx must be >= 1, got {ntx}")

    length = schedule.chain_length
    held = np.zeros((topology.n, length), dtype=bool)
    for slot, sub in enumerate(schedule.sub_slots):
        held[topology.index(sub.owner), slot] = True

    history = []
    for state in _flood_rounds(topology, held, ntx, rng):
        held = state
        if keep_history:
            history.append(state.copy())

    received = {}
    for node in topology.node_ids:
        row = held[topology.index(node)]
        received[node] = {int(s): initial_payloads.get(int(s), b"") for s in np.flatnonzero(row)}

    latency = schedule.duration_ms(ntx)
    logger.debug(
        "%s chain L=%d ntx=%d: coverage %.3f, %.1f ms",
        schedule.phase.value, length, ntx, float(held.mean()) if held.size else 1.0, latency,
    )
    return DisseminationResult(
        received=received,
        radio_on_ms={node: latency for node in topology.node_ids},
        latency_ms=latency,
        rounds_executed=ntx,
        held=held,
        history=history,
    )


# ============================================================================
# REACHABILITY PROFILING (bootstrap)
# ============================================================================

def _lossy(topology):
    return bool(np.any(topology.links[1] < 1.0))


def reachability_profiles(topology, loss_prob, max_ntx, trials, rng, threshold=config.REACH_THRESHOLD):
    """
    Which sources reach each node, per NTX, in at least `threshold` of trials

    Every node floods one payload; counts accumulate per round, so the sets
    never shrink as ntx grows.

    Returns:
        dict: node -> {ntx: frozenset of source nodes}
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if loss_prob is not None:
        topology = topology.with_loss(loss_prob)
    if not _lossy(topology):
        trials = 1

    n = topology.n
    counts = np.zeros((max_ntx, n, n), dtype=np.int64)
    for _ in range(trials):
        start = np.eye(n, dtype=bool)
        for t, held in enumerate(_flood_rounds(topology, start, max_ntx, rng)):
            counts[t] += held

    needed = threshold * trials - 1e-9
    ids = np.asarray(topology.node_ids)
    profiles = {node: {} for node in topology.node_ids}
    for t in range(max_ntx):
        reached = counts[t] >= needed
        for r, node in enumerate(topology.node_ids):
            profiles[node][t + 1] = frozenset(int(s) for s in ids[reached[r]])
    return profiles


def reachability_profile(topology, node, loss_prob, max_ntx, trials, rng, threshold=config.REACH_THRESHOLD):
    """Profile of a single node: ntx -> sources received in >= threshold of trials"""
    return reachability_profiles(topology, loss_prob, max_ntx, trials, rng, threshold)[node]


def coverage_trials(topology, loss_prob, max_ntx, trials, rng, slots_per_node=1):
    """
    Coverage fraction after each round for each trial

    Returns:
        numpy array (trials x max_ntx) of held fractions
    """
    if loss_prob is not None:
        topology = topology.with_loss(loss_prob)
    if not _lossy(topology):
        trials = 1

    n = topology.n
    owners = np.repeat(np.arange(n), slots_per_node)
    curves = np.ones((trials, max_ntx))
    for trial in range(trials):
        start = np.zeros((n, n * slots_per_node), dtype=bool)
        start[owners, np.arange(owners.size)] = True
        for t, held in enumerate(_flood_rounds(topology, start, max_ntx, rng)):
            curves[trial, t] = held.mean()
            if curves[trial, t] == 1.0:
                break  # remaining rounds stay at full coverage
    return curves


def mean_coverage(topology, loss_prob, max_ntx, trials, rng, slots_per_node=1):
    """Mean coverage fraction per ntx: {ntx: fraction}"""
    curves = coverage_trials(topology, loss_prob, max_ntx, trials, rng, slots_per_node)
    return {t + 1: float(v) for t, v in enumerate(curves.mean(axis=0))}


def min_ntx_full_coverage(topology, loss_prob, trials, quantile, rng, slots_per_node=1, max_ntx=None):
    """
    Smallest ntx at which >= quantile of trials give every node every payload

    Args:
        slots_per_node: Sub-slots each node originates (n for an S3 sharing chain)
        max_ntx: Search bound (default 2n)

    Returns:
        int, or None when no ntx <= max_ntx reaches the quantile
    """
    max_ntx = max_ntx or max(1, 2 * topology.n)
    curves = coverage_trials(topology, loss_prob, max_ntx, trials, rng, slots_per_node)
    full = curves >= 1.0
    for t in range(max_ntx):
        if full[:, t].mean() >= quantile - 1e-12:
            return t + 1
    logger.warning(
        "no ntx <= %d covers %s in %.0f%% of %d trials",
        max_ntx, topology.name, quantile * 100, curves.shape[0],
    )
    return None
