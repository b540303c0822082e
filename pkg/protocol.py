"""
Aggregation Protocol Module
Per-node state machine running S3 and S4 rounds on top of the chain simulator

Round structure:
    bootstrap       -> pairwise keys, reachability profiles, S4 aggregator set
    sharing phase   -> every source seals one share per destination, one chain
    local summation -> every destination sums the shares it could open
    reconstruction  -> every node floods its sum in plaintext, one sub-slot each
    aggregation     -> Lagrange at zero over k+1 mask-consistent sums
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations

import config
from ctsim import Phase, Variant, build_chain_schedule, reachability_profiles, run_dissemination
from ffield import FieldError, get_modulus
from shamir import (
    InsufficientSharesError,
    ShamirError,
    SumShare,
    make_polynomial,
    make_shares,
    public_point,
    reconstruct_aggregate,
    sum_shares,
)
from sscrypto import (
    NonceLedger,
    SealedShare,
    SealError,
    derive_pairwise_key,
    derive_self_key,
    open_share,
    seal_share,
)

logger = logging.getLogger(__name__)

EMPTY_MARKER = b""  # reconstruction sub-slot of a node without a partial sum


class ProtocolError(ValueError):
    """Base class for protocol errors"""


class InfeasibleBootstrapError(ProtocolError):
    """No k+1 aggregators are reachable by every source at ntx_share"""

    def __init__(self, message, min_ntx=None):
        self.min_ntx = min_ntx
        super().__init__(message)


def default_degree(n):
    """Polynomial degree close to n/3, at least 1"""
    return max(1, n // 3)


@dataclass(frozen=True)
class ProtocolConfig:
    """Parameters of one aggregation round"""

    variant: Variant
    n: int
    k: int = None
    ntx_share: int = config.NTX_SHARE
    ntx_recon: int = config.NTX_RECON
    q: int = config.FIELD_MODULUS
    master_secret: bytes = bytes.fromhex(config.MASTER_SECRET)
    slot_duration_ms: float = config.SLOT_DURATION_MS
    loss_prob: float = None  # for bootstrap profiling; None = topology's own links
    profile_trials: int = config.PROFILE_TRIALS
    reach_threshold: float = config.REACH_THRESHOLD
    sources: tuple = None  # sharing nodes; None = all

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.n < 2:
            raise ProtocolError(f"need n >= 2 nodes for a degree >= 1 polynomial, got n={self.n}")
        if self.k is None:
            object.__setattr__(self, "k", default_degree(self.n))
        if not 1 <= self.k <= self.n - 1:
            raise ProtocolError(f"degree k={self.k} outside [1, {self.n - 1}]")
        if self.ntx_share < 1 or self.ntx_recon < 1:
            raise ProtocolError("ntx values must be >= 1")
        try:
            field_ = get_modulus(self.q)
        except FieldError as exc:
            raise ProtocolError(str(exc)) from exc
        if field_.q <= self.n:
            raise ProtocolError(f"modulus q={self.q} must exceed n={self.n}")
        if len(self.master_secret) != 16:
            raise ProtocolError("master secret must be 128 bits")
        if self.sources is not None:
            object.__setattr__(self, "sources", tuple(sorted(self.sources)))
            if not self.sources:
                raise ProtocolError("at least one source node is needed")

    @property
    def field(self):
        return get_modulus(self.q)

    @property
    def destinations_per_node(self):
        return self.n if self.variant is Variant.S3 else self.k + 1


@dataclass
class BootstrapInfo:
    """Pre-round knowledge: keys, reachability and where each source sends shares"""

    keys: dict  # (lo, hi) -> PairwiseKey, self keys under (i, i)
    profiles: dict  # node -> {ntx: frozenset of sources}; empty for S3
    destination_map: dict  # source -> tuple of destinations
    aggregators: tuple = ()

    def key_for(self, a, b):
        return self.keys[(min(a, b), max(a, b))]


@dataclass
class NodeState:
    """Everything one node knows during a round"""

    node: int
    point: object
    secret: object = None  # FieldElement, None if the node is not a source
    polynomial: object = None
    incoming: dict = field(default_factory=dict)  # sender -> opened Share
    partial: SumShare = None
    collected: list = field(default_factory=list)
    aggregate: object = None
    aggregate_mask: frozenset = None
    auth_failures: int = 0


@dataclass
class MetricsRecord:
    """Per-round cost and outcome"""

    latency_ms: float
    share_latency_ms: float
    recon_latency_ms: float
    radio_on_ms: dict  # node -> ms over both phases
    reliability: float  # fraction of nodes holding the correct aggregate
    reporting_nodes: int
    correct: bool
    auth_failures: int = 0

    @property
    def mean_radio_on_ms(self):
        return sum(self.radio_on_ms.values()) / len(self.radio_on_ms)

    @property
    def max_radio_on_ms(self):
        return max(self.radio_on_ms.values())


@dataclass
class RoundResult:
    aggregates: dict  # node -> int or None
    masks: dict  # node -> frozenset or None
    expected: int
    metrics: MetricsRecord
    states: dict


# ============================================================================
# BOOTSTRAP
# ============================================================================

def _sources(topology, cfg):
    return list(cfg.sources) if cfg.sources is not None else list(topology.node_ids)


def _full_coverage_ntx(profile, sources):
    """First ntx at which every source reaches the node, or None"""
    needed = set(sources)
    for ntx in sorted(profile):
        if needed <= profile[ntx]:
            return ntx
    return None


def _derive_keys(topology, master_secret):
    keys = {}
    for a, b in combinations(topology.node_ids, 2):
        keys[(a, b)] = derive_pairwise_key(master_secret, a, b)
    for node in topology.node_ids:
        keys[(node, node)] = derive_self_key(master_secret, node)
    return keys


def bootstrap(topology, cfg, rng):
    """
    Derive keys and, for S4, pick the global aggregator set

    Aggregator rule: among nodes that receive every source at ntx_share, take
    the k+1 that reach full coverage at the lowest ntx, ties by lowest id.
    Every source sends its shares to that same set.

    Returns:
        BootstrapInfo

    Raises:
        InfeasibleBootstrapError: fewer than k+1 such nodes; carries the
            smallest ntx that would work (None if none up to 2n)
    """
    if topology.n != cfg.n:
        raise ProtocolError(f"topology has {topology.n} nodes, config says n={cfg.n}")
    sources = _sources(topology, cfg)
    unknown = set(sources) - set(topology.node_ids)
    if unknown:
        raise ProtocolError(f"source(s) {sorted(unknown)} not in topology")

    keys = _derive_keys(topology, cfg.master_secret)

    if cfg.variant is Variant.S3:
        all_nodes = tuple(topology.node_ids)
        logger.info("S3 bootstrap: %d keys, every source shares with all %d nodes", len(keys), cfg.n)
        return BootstrapInfo(keys, {}, {src: all_nodes for src in sources}, all_nodes)

    m = cfg.k + 1
    profiles = reachability_profiles(
        topology, cfg.loss_prob, cfg.ntx_share, cfg.profile_trials, rng, cfg.reach_threshold
    )
    ranked = []
    for node in topology.node_ids:
        first = _full_coverage_ntx(profiles[node], sources)
        if first is not None:
            ranked.append((first, node))
    ranked.sort()

    if len(ranked) < m:
        bound = max(cfg.ntx_share, 2 * cfg.n)
        wide = reachability_profiles(
            topology, cfg.loss_prob, bound, cfg.profile_trials, rng, cfg.reach_threshold
        )
        firsts = sorted(
            f for f in (_full_coverage_ntx(wide[node], sources) for node in topology.node_ids)
            if f is not None
        )
        min_ntx = firsts[m - 1] if len(firsts) >= m else None
        raise InfeasibleBootstrapError(
            f"only {len(ranked)} node(s) hear every source at ntx_share={cfg.ntx_share}, "
            f"need k+1={m}; minimal feasible ntx_share is {min_ntx}",
            min_ntx=min_ntx,
        )

    aggregators = tuple(sorted(node for _, node in ranked[:m]))
    logger.info("S4 bootstrap: aggregators %s (k=%d, ntx_share=%d)", list(aggregators), cfg.k, cfg.ntx_share)
    return BootstrapInfo(keys, profiles, {src: aggregators for src in sources}, aggregators)


# ============================================================================
# PHASES
# ============================================================================

def init_states(topology, secrets, cfg):
    """
    Fresh per-node state with secrets placed on the source nodes

    Args:
        secrets: {node: int} or a sequence aligned with the sorted sources
    """
    sources = _sources(topology, cfg)
    if not isinstance(secrets, dict):
        secrets = list(secrets)
        if len(secrets) != len(sources):
            raise ProtocolError(f"{len(secrets)} secrets for {len(sources)} sources")
        secrets = dict(zip(sources, secrets))
    if set(secrets) != set(sources):
        raise ProtocolError("secrets must be given for exactly the source nodes")

    field_ = cfg.field
    states = {}
    for node in topology.node_ids:
        state = NodeState(node, public_point(node, field_))
        if node in secrets:
            state.secret = field_.element(secrets[node])
        states[node] = state
    return states


def sharing_phase(topology, states, boot, cfg, rng, round_id=0):
    """
    Seal and flood shares, then let each destination open and sum its own

    Returns:
        tuple: (states, DisseminationResult)
    """
    field_ = cfg.field
    sources = _sources(topology, cfg)
    schedule = build_chain_schedule(
        Phase.SHARING, cfg.variant, cfg.n, boot.destination_map,
        node_ids=topology.node_ids, sources=sources, slot_duration_ms=cfg.slot_duration_ms,
    )

    ledger = NonceLedger()
    payloads = {}
    for src in sources:
        state = states[src]
        state.polynomial = make_polynomial(state.secret, cfg.k, rng)
        destinations = boot.destination_map[src]
        shares = make_shares(state.polynomial, [states[d].point for d in destinations])
        for dst, share in zip(destinations, shares):
            slot = schedule.index_of(src, dst)
            sealed = seal_share(boot.key_for(src, dst), share, (round_id, slot), ledger)
            payloads[slot] = sealed.to_bytes()

    result = run_dissemination(topology, schedule, payloads, cfg.ntx_share, rng)

    for node in topology.node_ids:
        state = states[node]
        state.incoming = {}
        held = result.received[node]
        for slot in schedule.slots_addressed_to(node):
            if slot not in held:
                continue
            sender = schedule.sub_slots[slot].owner
            try:
                sealed = SealedShare.from_bytes(held[slot])
                share = open_share(boot.key_for(sender, node), sealed, field_)
            except (SealError, ShamirError) as exc:
                state.auth_failures += 1
                logger.warning("node %d dropped sub-slot %d: %s", node, slot, exc)
                continue
            state.incoming[sender] = share

        if state.incoming:
            senders = sorted(state.incoming)
            state.partial = sum_shares(
                [state.incoming[s] for s in senders], [frozenset([s]) for s in senders]
            )
        else:
            state.partial = None

    holders = sum(1 for s in states.values() if s.partial is not None)
    logger.debug("sharing: L=%d, %d node(s) hold a partial sum", schedule.chain_length, holders)
    return states, result


def reconstruction_phase(topology, states, cfg, rng, withheld=()):
    """
    Flood partial sums in plaintext and reconstruct at every node

    Args:
        withheld: Nodes whose sums are suppressed (they send the empty marker)

    Returns:
        tuple: (states, DisseminationResult)
    """
    field_ = cfg.field
    withheld = set(withheld)
    schedule = build_chain_schedule(
        Phase.RECONSTRUCTION, cfg.variant, cfg.n,
        node_ids=topology.node_ids, slot_duration_ms=cfg.slot_duration_ms,
    )

    payloads = {}
    for slot, sub in enumerate(schedule.sub_slots):
        partial = states[sub.owner].partial
        if partial is None or sub.owner in withheld:
            payloads[slot] = EMPTY_MARKER
        else:
            payloads[slot] = partial.to_bytes()

    result = run_dissemination(topology, schedule, payloads, cfg.ntx_recon, rng)

    missing = 0
    for node in topology.node_ids:
        state = states[node]
        state.collected = []
        for slot, payload in sorted(result.received[node].items()):
            if payload == EMPTY_MARKER:
                continue
            try:
                state.collected.append(SumShare.from_bytes(payload, field_))
            except (ShamirError, FieldError) as exc:
                logger.warning("node %d ignored malformed sum in sub-slot %d: %s", node, slot, exc)
        try:
            state.aggregate, state.aggregate_mask = reconstruct_aggregate(state.collected, cfg.k)
        except InsufficientSharesError:
            state.aggregate, state.aggregate_mask = None, None
            missing += 1

    if missing:
        logger.debug("reconstruction: %d node(s) without enough consistent sums", missing)
    return states, result


# ============================================================================
# ROUND
# ============================================================================

def run_round(topology, secrets, cfg, rng, boot=None, round_id=0, withheld=()):
    """
    One full aggregation round

    Args:
        topology: Topology
        secrets: {node: int} or sequence aligned with the sorted sources
        cfg: ProtocolConfig
        rng: numpy Generator driving polynomials and link losses
        boot: BootstrapInfo to reuse across iterations (computed if None)
        round_id: Nonce component; distinct per round under one key set
        withheld: Nodes whose sums are suppressed in reconstruction

    Returns:
        RoundResult
    """
    if boot is None:
        boot = bootstrap(topology, cfg, rng)

    states = init_states(topology, secrets, cfg)
    states, share_result = sharing_phase(topology, states, boot, cfg, rng, round_id)
    states, recon_result = reconstruction_phase(topology, states, cfg, rng, withheld)

    expected = sum(int(s.secret) for s in states.values() if s.secret is not None) % cfg.q
    aggregates = {
        node: (int(s.aggregate) if s.aggregate is not None else None) for node, s in states.items()
    }
    masks = {node: s.aggregate_mask for node, s in states.items()}
    reporting = [v for v in aggregates.values() if v is not None]
    good = sum(1 for v in reporting if v == expected)

    metrics = MetricsRecord(
        latency_ms=share_result.latency_ms + recon_result.latency_ms,
        share_latency_ms=share_result.latency_ms,
        recon_latency_ms=recon_result.latency_ms,
        radio_on_ms={
            node: share_result.radio_on_ms[node] + recon_result.radio_on_ms[node]
            for node in topology.node_ids
        },
        reliability=good / topology.n,
        reporting_nodes=len(reporting),
        correct=bool(reporting) and good == len(reporting),
        auth_failures=sum(s.auth_failures for s in states.values()),
    )
    return RoundResult(aggregates, masks, expected, metrics, states)
