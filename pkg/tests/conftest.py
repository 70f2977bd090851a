from __future__ import annotations

import pytest

from physics.densities import Axis
from physics.simulator import LOModel, SimulationConfig, simulate
from physics.states import CANONICAL, Vacuum


@pytest.fixture(autouse=True)
def _ledger_in_tmp(tmp_path, monkeypatch):
    """Keep run ledgers out of the working directory."""
    monkeypatch.setenv("BHD_RUNS_DATABASE_URL", f"sqlite:///{tmp_path / 'ledger.db'}")


@pytest.fixture
def conv():
    return CANONICAL


@pytest.fixture
def fine_axis():
    """Quadrature axis wide enough for analytic Fock/PRCS densities up to n ~ 5."""
    return Axis(-14.0, 14.0, 2800)


@pytest.fixture
def m_axis():
    return Axis(-4.0, 4.0, 400)


@pytest.fixture(scope="session")
def vacuum_records():
    return simulate(SimulationConfig(state=Vacuum(), lo=LOModel(excess_noise_db=26.0), n_samples=200_000, seed=2024))
