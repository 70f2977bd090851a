from __future__ import annotations

import json
import os
import zlib
from pathlib import Path
from typing import Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, field_validator, model_validator

from errors import ConfigError
from physics.densities import DEFAULT_EPSILON, Axis
from physics.simulator import LOModel, SimulationConfig, derive_seed
from physics.states import PRCS, Fock, QuadratureConvention, Vacuum, prcs_label

OUTPUT_DIR = os.getenv("BHD_OUTPUT_DIR", "runs")
LOG_LEVEL = os.getenv("BHD_LOG_LEVEL", "INFO").upper()

DEFAULT_SAMPLES = 1_000_000
DEFAULT_EXCESS_DB = 26.0


def oracle_label(n: int) -> str:
    """Label of a Fock set simulated directly, kept apart from the inverted Fock statistics."""
    return f"oracle_fock{n}"


class AxisConfig(BaseModel):
    """Binning in units of sigma0; the pipeline scales it by the calibrated shot noise."""

    model_config = ConfigDict(extra="forbid", frozen=True)
    lo: float
    hi: float
    n_bins: PositiveInt

    @model_validator(mode="after")
    def _ordered(self) -> "AxisConfig":
        if self.hi <= self.lo:
            raise ValueError("hi must exceed lo")
        return self

    def axis(self, scale: float = 1.0) -> Axis:
        return Axis(self.lo * scale, self.hi * scale, self.n_bins)


class GridConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)
    # difference-current density P_D
    quadrature: AxisConfig = AxisConfig(lo=-8.0, hi=8.0, n_bins=320)
    # ideal-LO joint maps P0(x, y)
    joint: AxisConfig = AxisConfig(lo=-4.0, hi=4.0, n_bins=160)
    # raw noisy-LO joint maps, in units of the single-detector standard deviation
    raw_joint: AxisConfig = AxisConfig(lo=-6.0, hi=6.0, n_bins=160)
    # product axis in units of sigma0^2, 0.02 wide bins
    correlation: AxisConfig = AxisConfig(lo=-4.0, hi=4.0, n_bins=400)


class PipelineConfig(BaseModel):
    """
    One pipeline run: a vacuum calibration set, PRCS sets for the joint-map
    (single-mu) and correlation (two-mu) inversions, and optional Fock sets
    simulated directly as oracles.
    """

    model_config = ConfigDict(extra="forbid")

    scenario: str = "default"
    seed: int = Field(default=0, ge=0, lt=2**64)
    n_samples: PositiveInt = DEFAULT_SAMPLES
    excess_db: float = Field(default=DEFAULT_EXCESS_DB, ge=0.0)
    sigma0: PositiveFloat = 1.0
    joint_mus: list[float] = [0.0, 0.25]
    correlation_mus: list[float] = [0.0, 0.27, 0.62]
    fock_oracles: list[int] = []
    grids: GridConfig = GridConfig()
    epsilon: float = Field(default=DEFAULT_EPSILON, ge=0.0)
    eta: float = Field(default=1.0, gt=0.0, le=1.0)
    output_dir: str = OUTPUT_DIR
    # None falls back to BHD_RUNS_DATABASE_URL / local SQLite
    ledger_url: Optional[str] = None
    record_ledger: bool = True

    @field_validator("joint_mus", "correlation_mus")
    @classmethod
    def _mu_list(cls, mus: list[float]) -> list[float]:
        if any(m < 0 for m in mus):
            raise ValueError("mean photon numbers must be non-negative")
        positive = sorted({float(m) for m in mus if m > 0})
        if 0.0 not in [float(m) for m in mus]:
            raise ValueError("the mu list must include 0 (the vacuum calibration set)")
        if not 1 <= len(positive) <= 2:
            raise ValueError("the mu list needs one or two positive values besides 0")
        return [0.0] + positive

    @field_validator("fock_oracles")
    @classmethod
    def _fock_list(cls, ns: list[int]) -> list[int]:
        if any(n < 0 for n in ns):
            raise ValueError("Fock oracle photon numbers must be non-negative")
        return sorted(set(ns))

    @property
    def conv(self) -> QuadratureConvention:
        return QuadratureConvention(sigma0=self.sigma0)

    @property
    def lo(self) -> LOModel:
        return LOModel(conv=self.conv, excess_noise_db=self.excess_db)

    def state_configs(self) -> dict[str, SimulationConfig]:
        """
        Simulation sets keyed by artifact label. Each set seeds from (seed, label),
        so two runs differing only in LO noise share their signal draws.
        """
        out: dict[str, SimulationConfig] = {}
        mus = sorted(set(self.joint_mus) | set(self.correlation_mus))
        for mu in mus:
            state = Vacuum() if mu == 0 else PRCS(mu=mu)
            label = prcs_label(mu)
            out[label] = self._set_config(label, state)
        for n in self.fock_oracles:
            out[oracle_label(n)] = self._set_config(oracle_label(n), Fock(n=n))
        return out

    def _set_config(self, label: str, state) -> SimulationConfig:
        seed = derive_seed(self.seed, zlib.crc32(label.encode("ascii")))
        return SimulationConfig(state=state, lo=self.lo, n_samples=self.n_samples, seed=seed)


def _read_structured(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yml", ".yaml"):
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    return data or {}


def load_config(path: Optional[str] = None, **overrides) -> PipelineConfig:
    """
    Build a PipelineConfig from an optional JSON/YAML file plus keyword overrides
    (None values are ignored so argparse namespaces can be passed through).
    """
    data: dict = {}
    if path:
        p = Path(path)
        try:
            data = _read_structured(p)
        except FileNotFoundError as exc:
            raise ConfigError(f"Config file not found: {p}") from exc
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"Config file {p} is not valid JSON/YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {p} must hold a mapping at the top level.")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid pipeline config: {exc}") from exc
