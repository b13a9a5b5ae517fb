import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from iotsync.link import transfer_time
from iotsync.params import Protocol
from iotsync.timing import (
    DataUsage,
    ExecutionScenario,
    billed_messages,
    execution_data_usage,
    execution_duration,
    goodputs,
    p1_catchup_duration,
    p1_sync_duration,
    p2_catchup_duration,
    p2_sync_duration,
)

from conftest import make_config

REL = 1e-12


def test_p1_sync_duration(tech_a, tech_b):
    assert p1_sync_duration(tech_a) == pytest.approx(0.0008 + 0.5 + 0.0008 + 0.04, rel=REL)
    assert p1_sync_duration(tech_a) == pytest.approx(0.5416, rel=REL)
    assert p1_sync_duration(tech_b) == pytest.approx(800 / 1.5e5 + 0.5 + 800 / 1e5 + 40_000 / 1.5e5, rel=REL)
    assert p1_sync_duration(tech_b) == pytest.approx(0.78, rel=REL)


def test_sync_duration_with_empty_messages(tech_a):
    tiny = dict(l_b=1e-300, l_h=1e-300, l_n=1e-300, l_r=1e-300)
    cfg = dataclasses.replace(tech_a, blockchain=dataclasses.replace(tech_a.blockchain, **tiny))
    assert p1_sync_duration(cfg) == pytest.approx(cfg.link.t_w, rel=REL)


def test_p1_catchup_duration(tech_a):
    assert p1_catchup_duration(1, tech_a) == pytest.approx(0.0048 + 0.0048 + 0.0008 + 0.04, rel=REL)
    assert p1_catchup_duration(1, tech_a, waking=True) == pytest.approx(0.1504, rel=REL)
    assert p1_catchup_duration(0, tech_a) == pytest.approx(0.0104, rel=REL)


def test_p2_sync_duration(tech_a):
    assert p2_sync_duration(tech_a) == pytest.approx(0.0008 + 0.5 + 0.0008 + 0.0008, rel=REL)
    assert p2_sync_duration(tech_a, matched=True) == pytest.approx(0.5024 + (1000 + 1536) / 1e6, rel=REL)
    assert p2_sync_duration(tech_a, matched=True) == pytest.approx(0.504936, rel=REL)


def test_p2_equals_p1_when_header_is_whole_block(tech_b):
    bc = dataclasses.replace(tech_b.blockchain, l_h=tech_b.blockchain.l_b)
    cfg = dataclasses.replace(tech_b, blockchain=bc)
    assert p2_sync_duration(cfg) == p1_sync_duration(cfg)
    for n in range(6):
        for waking in (False, True):
            assert p2_catchup_duration(n, cfg, waking) == p1_catchup_duration(n, cfg, waking)


def test_p2_catchup_duration(tech_b):
    expected = 6 * 800 / 1e5 + 6 * 800 / 1.5e5 + 800 / 1e5 + 3 * 800 / 1.5e5
    assert expected == pytest.approx(0.048 + 0.032 + 0.008 + 0.016, rel=REL)
    assert p2_catchup_duration(3, tech_b) == pytest.approx(0.104, rel=REL)
    assert p2_catchup_duration(3, tech_b, waking=True) == pytest.approx(1.104, rel=REL)
    assert p2_catchup_duration(0, tech_b) > 0
    info = (1000 + 1536) / 1.5e5
    assert p2_catchup_duration(3, tech_b, True, True) == pytest.approx(1.104 + info, rel=REL)


def test_goodputs_apply_error_probabilities():
    cfg = make_config("techB", link=dict(p_e_ul=0.5, p_e_dl=0.2))
    assert goodputs(cfg) == pytest.approx((5e4, 1.2e5))
    assert p1_sync_duration(cfg) == pytest.approx(800 / 1.2e5 + 0.5 + 800 / 5e4 + 40_000 / 1.2e5)


@pytest.mark.parametrize("n", [0, 1, 5])
def test_waking_adds_exactly_connection_time(tech_b, n):
    assert p1_catchup_duration(n, tech_b, True) - p1_catchup_duration(n, tech_b) == pytest.approx(1.0, rel=REL)
    assert p2_catchup_duration(n, tech_b, True) - p2_catchup_duration(n, tech_b) == pytest.approx(1.0, rel=REL)


def _scenarios():
    for protocol in Protocol:
        yield ExecutionScenario(protocol, synchronized=True)
        if protocol is Protocol.P2:
            yield ExecutionScenario(protocol, synchronized=True, matched=True)
        for n in (0, 1, 4):
            for waking in (False, True):
                yield ExecutionScenario(protocol, n, waking=waking)
                if protocol is Protocol.P2 and waking and n > 0:
                    yield ExecutionScenario(protocol, n, waking=True, matched=True)


@pytest.mark.parametrize("scenario", list(_scenarios()), ids=str)
@pytest.mark.parametrize("preset", ["techA", "techB"])
def test_billed_messages_reproduce_durations(scenario, preset):
    cfg = make_config(preset, link=dict(p_e_dl=0.1, p_e_ul=0.05))
    g_ul, g_dl = goodputs(cfg)
    msgs, fixed = billed_messages(scenario, cfg)
    total = fixed + sum(transfer_time(m.bits, g_ul if m.direction == "ul" else g_dl) for m in msgs)
    assert total == pytest.approx(execution_duration(scenario, cfg), rel=1e-12)


def test_data_usage_examples(tech_a):
    assert execution_data_usage(ExecutionScenario(Protocol.P1, synchronized=True), tech_a) == (800, 44_800)
    p2 = execution_data_usage(ExecutionScenario(Protocol.P2, synchronized=True, matched=True), tech_a)
    assert p2 == (800, 4800 + 800 + 1000 + 1536) == (800, 8136)
    assert execution_data_usage(ExecutionScenario(Protocol.P1, 2), tech_a) == (6 * 800 + 800, 4800 + 80_000)
    assert execution_data_usage(ExecutionScenario(Protocol.P2, 2, waking=True, matched=True), tech_a) == \
        DataUsage(5600, 4800 + 1600 + 2536)
    assert 8136 / 44_800 == pytest.approx(0.1816, abs=5e-5)


def test_matched_only_for_p2():
    with pytest.raises(ValueError):
        ExecutionScenario(Protocol.P1, synchronized=True, matched=True)
    with pytest.raises(ValueError):
        ExecutionScenario(Protocol.P1, -1)
    with pytest.raises(ValueError):
        ExecutionScenario(Protocol.P2, 0, waking=True, matched=True)


@pytest.mark.parametrize("scenario", [s for s in _scenarios() if s.protocol is Protocol.P2], ids=str)
def test_p2_never_downloads_more_than_p1(tech_a, scenario):
    p1 = ExecutionScenario(Protocol.P1, scenario.missing_blocks, scenario.waking, False, scenario.synchronized)
    assert execution_data_usage(scenario, tech_a).dl_bits <= execution_data_usage(p1, tech_a).dl_bits


lengths = st.floats(1, 1e6)


@given(n=st.integers(0, 50), l_b=st.floats(1e3, 1e6), l_n=lengths, l_r=lengths,
       peers=st.integers(1, 20), p_e=st.floats(0, 0.9), bump=st.floats(1.01, 3))
def test_duration_monotonicity(n, l_b, l_n, l_r, peers, p_e, bump):
    cfg = make_config("techB", link=dict(p_e_dl=p_e, n_peers=peers), l_b=l_b, l_h=min(800.0, l_b),
                      l_n=l_n, l_r=l_r)

    def variant(**kw):
        link_kw = {k: v for k, v in kw.items() if k in ("n_peers", "rate_dl_bps", "rate_ul_bps")}
        bc_kw = {k: v for k, v in kw.items() if k not in link_kw}
        return dataclasses.replace(
            cfg,
            link=dataclasses.replace(cfg.link, **link_kw),
            blockchain=dataclasses.replace(cfg.blockchain, **bc_kw),
        )

    base = p1_catchup_duration(n, cfg)
    assert p1_catchup_duration(n + 1, cfg) > base
    assert p1_catchup_duration(n, variant(n_peers=peers + 1)) > base
    assert p1_catchup_duration(n, variant(l_n=l_n * bump)) > base
    assert p1_catchup_duration(n, variant(l_r=l_r * bump)) > base
    assert p1_catchup_duration(n, variant(rate_dl_bps=1.5e5 * bump)) < base
    assert p1_catchup_duration(n, variant(rate_ul_bps=1e5 * bump)) < base
    if n > 0:
        assert p1_catchup_duration(n, variant(l_b=l_b * bump)) > base
    assert p1_sync_duration(variant(l_b=l_b * bump)) > p1_sync_duration(cfg)
    assert p1_sync_duration(variant(l_r=l_r * bump)) > p1_sync_duration(cfg)
    assert p2_sync_duration(variant(rate_dl_bps=1.5e5 * bump), True) < p2_sync_duration(cfg, True)
