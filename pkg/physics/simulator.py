from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveInt

from physics.densities import Axis, Density1D, estimate_density_1d
from physics.states import (
    CANONICAL,
    PRCS,
    Coherent,
    Fock,
    QuadratureConvention,
    StateSpec,
    Vacuum,
    fock_inverse_cdf,
    N_MAX,
)

logger = logging.getLogger(__name__)

SHARD_SIZE = int(os.getenv("BHD_SHARD_SIZE", "65536"))
WORKERS = int(os.getenv("BHD_WORKERS", "1"))

SIGNAL_STREAM = 0
LO_STREAM = 1


class LOModel(BaseModel):
    """Local oscillator: shot-noise scale plus white excess noise on dS, in dB (power ratio)."""

    model_config = ConfigDict(frozen=True)
    conv: QuadratureConvention = CANONICAL
    excess_noise_db: NonNegativeFloat = 0.0


class SimulationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)
    state: StateSpec
    lo: LOModel = LOModel()
    n_samples: PositiveInt
    seed: int = Field(default=0, ge=0, lt=2**64)


class DetectorRecord(NamedTuple):
    i1: float
    i2: float


@dataclass(frozen=True, eq=False)
class DetectorRecords:
    """Columnar record set: i1[k], i2[k] are the paired outputs of mode k."""

    i1: np.ndarray
    i2: np.ndarray

    def __post_init__(self) -> None:
        i1 = np.asarray(self.i1, dtype=float)
        i2 = np.asarray(self.i2, dtype=float)
        if i1.shape != i2.shape or i1.ndim != 1:
            raise ValueError("i1 and i2 must be 1-D arrays of equal length.")
        object.__setattr__(self, "i1", i1)
        object.__setattr__(self, "i2", i2)

    def __len__(self) -> int:
        return int(self.i1.size)

    def __getitem__(self, k: int) -> DetectorRecord:
        return DetectorRecord(float(self.i1[k]), float(self.i2[k]))

    @property
    def d(self) -> np.ndarray:
        return self.i1 - self.i2

    @property
    def s(self) -> np.ndarray:
        return self.i1 + self.i2

    @property
    def m(self) -> np.ndarray:
        return self.i1 * self.i2

    def scaled(self, factor: float) -> "DetectorRecords":
        return DetectorRecords(self.i1 * factor, self.i2 * factor)


def lo_sum_sigma(lo: LOModel) -> float:
    """Standard deviation of dS: sigma0 * 10^(dB/20)."""
    return lo.conv.sigma0 * 10.0 ** (lo.excess_noise_db / 20.0)


def effective_mu(mu: float, eta: float) -> float:
    """Mean photon number to assume with common detector efficiency eta."""
    if not (0.0 < eta <= 1.0):
        raise ValueError(f"Detector efficiency must lie in (0, 1], got {eta}.")
    return mu / eta


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 64-bit child seed for (seed, *keys)."""
    return int(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)).generate_state(1, np.uint64)[0])


def _generator(seed: int, stream: int, shard: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(stream, shard))))


def sample_signal_quadrature(
    state: StateSpec,
    conv: QuadratureConvention,
    rng: np.random.Generator,
    size: Optional[int] = None,
):
    """
    Draws of dD distributed per quadrature_density(state).

    Vacuum/coherent: Gaussian. PRCS: uniform phase, then Gaussian around
    2 sqrt(mu) cos(phi). Fock: inverse CDF of the tabulated analytic density.
    """
    s = conv.sigma0
    n = 1 if size is None else int(size)
    if isinstance(state, Vacuum):
        out = rng.normal(0.0, s, n)
    elif isinstance(state, Coherent):
        out = rng.normal(2.0 * state.amplitude * math.cos(state.phase) * s, s, n)
    elif isinstance(state, PRCS):
        phi = rng.uniform(0.0, 2.0 * math.pi, n)
        out = rng.normal(2.0 * math.sqrt(state.mu) * s * np.cos(phi), s)
    elif isinstance(state, Fock):
        if state.n > N_MAX:
            raise ValueError(f"Fock n={state.n} exceeds the truncation N_MAX={N_MAX}.")
        out = fock_inverse_cdf(state.n, rng.random(n), conv)
    else:
        raise TypeError(f"Unsupported state {state!r}")
    return float(out[0]) if size is None else out


def _simulate_shard(config: SimulationConfig, shard: int, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
    n = stop - start
    d = sample_signal_quadrature(config.state, config.lo.conv, _generator(config.seed, SIGNAL_STREAM, shard), n)
    s = _generator(config.seed, LO_STREAM, shard).normal(0.0, lo_sum_sigma(config.lo), n)
    return 0.5 * (s + d), 0.5 * (s - d)


def simulate(
    config: SimulationConfig,
    *,
    workers: Optional[int] = None,
    shard_size: Optional[int] = None,
) -> DetectorRecords:
    """
    Monte Carlo detector pairs: i1 = (dS + dD)/2, i2 = (dS - dD)/2 with dD from the
    signal and dS an independent Gaussian set by the LO model.

    The sample range is cut into fixed shards; shard k draws its signal and LO
    values from substreams keyed on (seed, stream, k), so the output does not
    depend on the worker count.
    """
    workers = max(1, int(workers or WORKERS))
    shard_size = int(shard_size or SHARD_SIZE)
    bounds = [(k, a, min(a + shard_size, config.n_samples)) for k, a in enumerate(range(0, config.n_samples, shard_size))]
    logger.debug(
        "Simulator: %s, %d samples, %.1f dB, %d shards on %d workers",
        config.state.kind,
        config.n_samples,
        config.lo.excess_noise_db,
        len(bounds),
        workers,
    )
    if workers == 1 or len(bounds) == 1:
        parts = [_simulate_shard(config, *b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _simulate_shard(config, *b), bounds))
    return DetectorRecords(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


def single_detector_marginal(records: DetectorRecords, axis: Axis, *, detector: int = 1) -> Density1D:
    if detector not in (1, 2):
        raise ValueError("detector must be 1 or 2")
    return estimate_density_1d(records.i1 if detector == 1 else records.i2, axis)


def shot_noise_curve(conv: QuadratureConvention, axis: Axis) -> Density1D:
    """Vacuum contribution to one detector output: N(0, sigma0^2 / 2)."""
    sigma = conv.sigma0 / math.sqrt(2.0)
    values = np.exp(-0.5 * (axis.centers / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
    return Density1D(axis=axis, values=values, provenance="analytic")
