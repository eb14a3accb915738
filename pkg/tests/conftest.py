from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fogpaas import fixtures as fx  # noqa: E402
from fogpaas.infra import InfrastructureRepository  # noqa: E402
from fogpaas.nodesim import Simulator, default_sim_config  # noqa: E402
from fogpaas.orchestrator import Orchestrator  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def tc1_infra():
    return fx.tc_infra("tc1")


@pytest.fixture
def paas(tc1_infra):
    """Repository, simulator and orchestrator over the TC1 infrastructure."""
    repo = InfrastructureRepository(clock=lambda: 0)
    fx.populate(repo, tc1_infra)
    sim = Simulator(default_sim_config(tc1_infra, modules=fx.PAAS_MODULES), tc1_infra)
    return repo, sim, Orchestrator(repo, sim)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
