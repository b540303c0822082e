import itertools

import numpy as np
import pytest

import protocol
from conftest import complete_topology, line_topology
from ctsim import Variant, preset_topology, random_geometric_topology
from shamir import InsufficientSharesError, evaluate, lagrange_interpolate_at_zero
from sscrypto import AuthenticationError, SealedShare, derive_pairwise_key, open_share
from protocol import (
    InfeasibleBootstrapError,
    ProtocolConfig,
    ProtocolError,
    bootstrap,
    default_degree,
    init_states,
    run_round,
    sharing_phase,
)


def draw(rng, n):
    return [int(s) for s in rng.integers(0, 1 << 16, size=n)]


# --- configuration ----------------------------------------------------------

@pytest.mark.parametrize(
    "kwargs",
    [
        {"variant": "s3", "n": 1},
        {"variant": "s4", "n": 5, "k": 5},
        {"variant": "s4", "n": 5, "k": 0},
        {"variant": "s3", "n": 5, "ntx_share": 0},
        {"variant": "s3", "n": 5, "q": 15},
        {"variant": "s3", "n": 20, "q": 17},
        {"variant": "s3", "n": 5, "master_secret": b"\x00" * 8},
    ],
)
def test_invalid_configs(kwargs):
    with pytest.raises(ProtocolError):
        ProtocolConfig(**kwargs)


def test_default_degree():
    assert [default_degree(n) for n in (2, 5, 10, 26, 45)] == [1, 1, 3, 8, 15]
    cfg = ProtocolConfig("s4", 26)
    assert cfg.k == 8 and cfg.destinations_per_node == 9
    assert ProtocolConfig(Variant.S3, 26).destinations_per_node == 26


def test_secrets_must_match_sources():
    cfg = ProtocolConfig("s3", 4, k=1)
    with pytest.raises(ProtocolError):
        init_states(complete_topology(4), [1, 2, 3], cfg)
    states = init_states(complete_topology(4), {1: 5, 2: 6, 3: 7, 4: 8}, cfg)
    assert states[3].secret.value == 7


# --- bootstrap --------------------------------------------------------------

def test_s3_bootstrap_sends_to_everyone():
    boot = bootstrap(complete_topology(4), ProtocolConfig("s3", 4, k=1), np.random.default_rng(0))
    assert boot.destination_map == {i: (1, 2, 3, 4) for i in range(1, 5)}
    assert len(boot.keys) == 6 + 4
    assert boot.key_for(3, 1) == boot.key_for(1, 3)


def test_s4_bootstrap_on_complete_graph_picks_lowest_ids():
    cfg = ProtocolConfig("s4", 6, k=2, ntx_share=1)
    boot = bootstrap(complete_topology(6), cfg, np.random.default_rng(0))
    assert boot.aggregators == (1, 2, 3)
    assert all(dests == (1, 2, 3) for dests in boot.destination_map.values())


def test_s4_bootstrap_prefers_central_nodes():
    cfg = ProtocolConfig("s4", 7, k=2, ntx_share=6)
    boot = bootstrap(line_topology(7), cfg, np.random.default_rng(0))
    # eccentricities 6 5 4 3 4 5 6
    assert boot.aggregators == (3, 4, 5)
    for dst in boot.aggregators:
        assert set(range(1, 8)) <= boot.profiles[dst][cfg.ntx_share]


def test_s4_bootstrap_infeasible_reports_minimal_ntx():
    cfg = ProtocolConfig("s4", 30, k=8, ntx_share=5)
    with pytest.raises(InfeasibleBootstrapError) as info:
        bootstrap(line_topology(30), cfg, np.random.default_rng(0))
    assert info.value.min_ntx == 19


def test_bootstrap_rejects_wrong_node_count():
    with pytest.raises(ProtocolError):
        bootstrap(complete_topology(4), ProtocolConfig("s3", 5, k=1), np.random.default_rng(0))


# --- sharing ----------------------------------------------------------------

def test_s3_partial_sums_cover_all_senders():
    topology = complete_topology(3)
    cfg = ProtocolConfig("s3", 3, k=1, ntx_share=1)
    rng = np.random.default_rng(1)
    boot = bootstrap(topology, cfg, rng)
    states, result = sharing_phase(topology, init_states(topology, [10, 20, 30], cfg), boot, cfg, rng)

    assert result.latency_ms == 1 * 9 * 4.0
    for node, state in states.items():
        assert state.partial.participant_mask == {1, 2, 3}
        expected = cfg.field.zero()
        for src in (1, 2, 3):
            expected = expected + evaluate(states[src].polynomial, state.point.x)
        assert state.partial.value == expected


def test_s4_only_aggregators_hold_partials():
    topology = complete_topology(5)
    cfg = ProtocolConfig("s4", 5, k=1, ntx_share=1)
    rng = np.random.default_rng(2)
    boot = bootstrap(topology, cfg, rng)
    assert boot.aggregators == (1, 2)
    states, result = sharing_phase(topology, init_states(topology, draw(rng, 5), cfg), boot, cfg, rng)
    assert result.latency_ms == 1 * 10 * 4.0
    assert {n for n, s in states.items() if s.partial is not None} == {1, 2}
    assert all(not states[n].incoming for n in (3, 4, 5))


def test_nodes_open_only_their_own_sub_slots():
    topology = complete_topology(4)
    cfg = ProtocolConfig("s3", 4, k=1, ntx_share=1)
    rng = np.random.default_rng(3)
    boot = bootstrap(topology, cfg, rng)
    states, result = sharing_phase(topology, init_states(topology, draw(rng, 4), cfg), boot, cfg, rng)

    for node, state in states.items():
        assert sorted(state.incoming) == [1, 2, 3, 4]
        assert all(share.point.owner_node == node for share in state.incoming.values())

    # node 3 holds the sub-slot carrying 1's share for 2 but cannot open it
    slot = 1  # owner 1, destination 2
    sealed = SealedShare.from_bytes(result.received[3][slot])
    assert (sealed.sender, sealed.destination) == (1, 2)
    for key in (boot.key_for(1, 3), boot.key_for(3, 2), boot.key_for(3, 3)):
        with pytest.raises(AuthenticationError):
            open_share(key, sealed, cfg.field)


def test_k_colluders_learn_nothing_structurally():
    topology = complete_topology(7)
    cfg = ProtocolConfig("s3", 7, k=3, ntx_share=1)
    rng = np.random.default_rng(4)
    boot = bootstrap(topology, cfg, rng)
    states, _ = sharing_phase(topology, init_states(topology, draw(rng, 7), cfg), boot, cfg, rng)
    for colluders in itertools.combinations(range(2, 8), cfg.k):
        pooled = [states[c].incoming[1] for c in colluders]
        assert len({s.point.x.value for s in pooled}) == cfg.k
        with pytest.raises(InsufficientSharesError):
            lagrange_interpolate_at_zero(pooled, cfg.k)


def test_s4_coalitions_of_k_hold_at_most_k_foreign_shares():
    topology = complete_topology(7)
    cfg = ProtocolConfig("s4", 7, k=2, ntx_share=1)
    rng = np.random.default_rng(7)
    boot = bootstrap(topology, cfg, rng)
    states, _ = sharing_phase(topology, init_states(topology, draw(rng, 7), cfg), boot, cfg, rng)
    assert boot.aggregators == (1, 2, 3)
    assert all(sorted(states[a].incoming) == list(range(1, 8)) for a in boot.aggregators)

    for coalition in itertools.combinations(range(1, 8), cfg.k):
        for src in set(range(1, 8)) - set(coalition):
            pooled = [states[c].incoming[src] for c in coalition if src in states[c].incoming]
            assert len({s.point.x.value for s in pooled}) == len(pooled) <= cfg.k
            with pytest.raises(InsufficientSharesError):
                lagrange_interpolate_at_zero(pooled, cfg.k)


# --- full rounds ------------------------------------------------------------

@pytest.mark.parametrize(
    "topology",
    [
        line_topology(5),
        random_geometric_topology(10, 0.5, seed=3),
        preset_topology("flocklab26"),
    ],
    ids=["line5", "rgg10", "flocklab26"],
)
@pytest.mark.parametrize("variant", ["s3", "s4"])
def test_loss_free_rounds_are_exact(topology, variant):
    ntx = topology.diameter()
    cfg = ProtocolConfig(variant, topology.n, ntx_share=ntx, ntx_recon=ntx)
    rng = np.random.default_rng(2024)
    boot = bootstrap(topology, cfg, rng)
    for iteration in range(100):
        secrets = draw(rng, topology.n)
        result = run_round(topology, secrets, cfg, rng, boot=boot, round_id=iteration)
        assert result.expected == sum(secrets) % cfg.q
        assert all(value == result.expected for value in result.aggregates.values())
        assert result.metrics.reliability == 1.0
        assert result.metrics.correct
        assert result.metrics.auth_failures == 0


def test_subset_of_sources():
    topology = complete_topology(5)
    cfg = ProtocolConfig("s4", 5, k=1, ntx_share=1, ntx_recon=1, sources=(4, 2))
    result = run_round(topology, [100, 200], cfg, np.random.default_rng(0))
    assert result.expected == 300
    assert result.states[2].secret.value == 100
    assert set(result.aggregates.values()) == {300}
    assert all(mask == {2, 4} for mask in result.masks.values())


def test_withheld_sums_exhaustive():
    topology = complete_topology(6)
    cfg = ProtocolConfig("s3", 6, k=2, ntx_share=1, ntx_recon=1)
    rng = np.random.default_rng(6)
    boot = bootstrap(topology, cfg, rng)
    for size in range(7):
        for withheld in itertools.combinations(range(1, 7), size):
            secrets = draw(rng, 6)
            result = run_round(topology, secrets, cfg, rng, boot=boot, withheld=withheld)
            if 6 - size >= cfg.k + 1:
                assert set(result.aggregates.values()) == {sum(secrets) % cfg.q}
                assert result.metrics.reliability == 1.0 and result.metrics.correct
            else:
                assert set(result.aggregates.values()) == {None}
                assert result.metrics.reliability == 0.0
                assert not result.metrics.correct
                assert result.metrics.reporting_nodes == 0


def test_metrics_add_up_over_both_phases():
    topology = preset_topology("flocklab26")
    cfg = ProtocolConfig("s3", 26, ntx_share=6, ntx_recon=6)
    metrics = run_round(topology, draw(np.random.default_rng(0), 26), cfg, np.random.default_rng(1)).metrics
    assert metrics.share_latency_ms == 6 * 676 * 4.0
    assert metrics.recon_latency_ms == 6 * 26 * 4.0
    assert metrics.latency_ms == metrics.share_latency_ms + metrics.recon_latency_ms
    assert metrics.mean_radio_on_ms == metrics.max_radio_on_ms == metrics.latency_ms


def test_s4_is_cheaper_than_s3():
    topology = preset_topology("flocklab26")
    ntx = topology.diameter()
    secrets = draw(np.random.default_rng(0), 26)
    s3 = run_round(topology, secrets, ProtocolConfig("s3", 26, ntx_share=ntx, ntx_recon=ntx),
                   np.random.default_rng(1))
    s4 = run_round(topology, secrets, ProtocolConfig("s4", 26, ntx_share=ntx, ntx_recon=ntx),
                   np.random.default_rng(1))
    assert s3.aggregates == s4.aggregates
    assert s3.metrics.latency_ms / s4.metrics.latency_ms == pytest.approx((676 + 26) / (234 + 26))
    assert s4.metrics.max_radio_on_ms < s3.metrics.max_radio_on_ms


def test_failed_authentication_drops_one_share(monkeypatch):
    real_open = protocol.open_share
    wrong = derive_pairwise_key(b"\xff" * 16, 1, 2)

    def open_with_bad_key_for_pair_1_2(key, sealed, field=None):
        if key.pair == (1, 2):
            key = wrong
        return real_open(key, sealed, field)

    monkeypatch.setattr(protocol, "open_share", open_with_bad_key_for_pair_1_2)
    topology = complete_topology(4)
    cfg = ProtocolConfig("s3", 4, k=1, ntx_share=1, ntx_recon=1)
    result = run_round(topology, [1, 2, 3, 4], cfg, np.random.default_rng(0))

    assert result.metrics.auth_failures == 2  # 1 -> 2 and 2 -> 1
    assert result.states[2].partial.participant_mask == {2, 3, 4}
    assert result.states[1].partial.participant_mask == {1, 3, 4}
    assert set(result.aggregates.values()) == {10}
    assert all(mask == {1, 2, 3, 4} for mask in result.masks.values())
    assert result.metrics.reliability == 1.0
