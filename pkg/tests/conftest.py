import dataclasses

import pytest

from iotsync.params import DeviceParams, ModelConfig, Protocol, table_presets, validate_config

ACCEPTANCE_LINES: list[str] = []


def make_config(preset="techA", protocol=Protocol.P1, p_s=0.2, t_s=60.0, n_max=64, link=None,
                **blockchain):
    link_params = table_presets(preset, **(link or {}))
    cfg = ModelConfig(link=link_params, device=DeviceParams(p_s=p_s, t_s=t_s, protocol=protocol),
                      n_max=n_max)
    if blockchain:
        cfg = dataclasses.replace(cfg, blockchain=dataclasses.replace(cfg.blockchain, **blockchain))
    return validate_config(cfg)


@pytest.fixture
def tech_a():
    return make_config("techA")


@pytest.fixture
def tech_b():
    return make_config("techB")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
