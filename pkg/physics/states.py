"""
Signal states entering the homodyne detector and their closed-form statistics.

All densities are in units of the shot-noise convention: the vacuum quadrature
dD is Gaussian with standard deviation `conv.sigma0`.
"""

from __future__ import annotations

import math
import os
from functools import lru_cache
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, NonNegativeInt, PositiveFloat
from scipy import special, stats
from scipy.integrate import cumulative_trapezoid

from errors import NumericalError
from physics.densities import Axis, Density1D

N_MAX = int(os.getenv("BHD_N_MAX", "20"))
POISSON_TAIL_LIMIT = 1e-9
PHASE_POINTS = 256
SUPPORT_SIGMAS = 12.0
CDF_TABLE_POINTS = 2**14


class Vacuum(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["vacuum"] = "vacuum"


class Fock(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["fock"] = "fock"
    n: NonNegativeInt


class Coherent(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["coherent"] = "coherent"
    amplitude: NonNegativeFloat
    phase: float = 0.0


class PRCS(BaseModel):
    """Phase-randomized coherent state with mean photon number mu."""

    model_config = ConfigDict(frozen=True)
    kind: Literal["prcs"] = "prcs"
    mu: NonNegativeFloat


StateSpec = Annotated[Union[Vacuum, Fock, Coherent, PRCS], Field(discriminator="kind")]


class QuadratureConvention(BaseModel):
    model_config = ConfigDict(frozen=True)
    sigma0: PositiveFloat = 1.0


CANONICAL = QuadratureConvention()


def prcs_label(mu: float) -> str:
    """Set label for a PRCS mean photon number; repr keeps distinct values apart."""
    return "vacuum" if mu == 0 else f"prcs_mu{float(mu)!r}"


def state_label(state: StateSpec) -> str:
    if isinstance(state, Fock):
        return f"fock{state.n}"
    if isinstance(state, PRCS):
        return prcs_label(state.mu)
    if isinstance(state, Coherent):
        return f"coherent_a{state.amplitude:g}"
    return "vacuum"


def mean_photon_number(state: StateSpec) -> float:
    if isinstance(state, Fock):
        return float(state.n)
    if isinstance(state, PRCS):
        return float(state.mu)
    if isinstance(state, Coherent):
        return float(state.amplitude) ** 2
    return 0.0


def support_half_width(state: StateSpec, conv: QuadratureConvention = CANONICAL) -> float:
    """Half-width outside which the quadrature density is negligible (< 1e-30 relative)."""
    return conv.sigma0 * (SUPPORT_SIGMAS + 2.0 * math.sqrt(mean_photon_number(state)))


def _check_fock(state: StateSpec, n_max: int) -> None:
    if isinstance(state, Fock) and state.n > n_max:
        raise ValueError(f"Fock n={state.n} exceeds the truncation N_MAX={n_max}.")


def poisson_weights(mu: float, n_max: int = N_MAX) -> tuple[np.ndarray, float]:
    """Weights e^-mu mu^n / n! for n = 0..n_max and the truncated tail 1 - sum."""
    if mu < 0:
        raise ValueError("mu must be non-negative.")
    if n_max < 0:
        raise ValueError("n_max must be non-negative.")
    n = np.arange(n_max + 1)
    weights = stats.poisson.pmf(n, mu) if mu > 0 else (n == 0).astype(float)
    # sf avoids cancellation in 1 - sum for small tails
    tail = float(stats.poisson.sf(n_max, mu)) if mu > 0 else 0.0
    return np.asarray(weights, dtype=float), tail


def hermite_functions(xi, n_max: int) -> np.ndarray:
    """
    Normalised Hermite functions h_0..h_n_max at xi via the three-term recurrence

        h_{n+1} = sqrt(2/(n+1)) xi h_n - sqrt(n/(n+1)) h_{n-1}

    which stays finite where raw Hermite polynomials overflow.
    """
    xi = np.asarray(xi, dtype=float)
    out = np.empty((n_max + 1,) + xi.shape)
    out[0] = np.pi**-0.25 * np.exp(-0.5 * xi * xi)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * xi * out[0]
    for n in range(1, n_max):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * xi * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def fock_wavefunctions(x, n_max: int, conv: QuadratureConvention = CANONICAL) -> np.ndarray:
    """psi_n(x) scaled so that psi_0^2 is the N(0, sigma0^2) density."""
    s = conv.sigma0
    xi = np.asarray(x, dtype=float) / (s * math.sqrt(2.0))
    return hermite_functions(xi, n_max) / math.sqrt(s * math.sqrt(2.0))


def _gauss(x, mean, sigma):
    z = (x - mean) / sigma
    return np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))


def _phases() -> np.ndarray:
    return 2.0 * np.pi * np.arange(PHASE_POINTS) / PHASE_POINTS


def prcs_density_phase(mu: float, x, conv: QuadratureConvention = CANONICAL) -> np.ndarray:
    """Uniform phase average of coherent densities, periodic trapezoid rule."""
    x = np.asarray(x, dtype=float)
    means = 2.0 * math.sqrt(mu) * conv.sigma0 * np.cos(_phases())
    return _gauss(x[..., None], means, conv.sigma0).mean(axis=-1)


def prcs_density_fock(mu: float, x, conv: QuadratureConvention = CANONICAL, *, n_max: int = N_MAX) -> np.ndarray:
    """Poisson-weighted sum of Fock densities; refuses a truncation tail above 1e-9."""
    weights, tail = poisson_weights(mu, n_max)
    if tail > POISSON_TAIL_LIMIT:
        raise NumericalError(
            f"Poisson tail {tail:.2e} beyond n={n_max} for mu={mu}; raise BHD_N_MAX or use the phase form."
        )
    psi = fock_wavefunctions(x, n_max, conv)
    return np.tensordot(weights, psi * psi, axes=1)


def quadrature_density(
    state: StateSpec,
    x,
    conv: QuadratureConvention = CANONICAL,
    *,
    method: Literal["auto", "phase", "fock"] = "auto",
    n_max: int = N_MAX,
):
    """
    Probability density P_D(x) of the difference photocurrent for `state`.

    PRCS densities use the Poisson-weighted Fock sum when its truncation tail is
    below 1e-9 (method="auto"), otherwise the 256-point phase average.
    Scalar input gives a float.
    """
    _check_fock(state, n_max)
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    s = conv.sigma0
    if isinstance(state, Vacuum):
        out = _gauss(x, 0.0, s)
    elif isinstance(state, Coherent):
        out = _gauss(x, 2.0 * state.amplitude * math.cos(state.phase) * s, s)
    elif isinstance(state, Fock):
        psi = fock_wavefunctions(x, state.n, conv)[state.n]
        out = psi * psi
    elif isinstance(state, PRCS):
        if method == "auto":
            method = "fock" if poisson_weights(state.mu, n_max)[1] <= POISSON_TAIL_LIMIT else "phase"
        if method == "fock":
            out = prcs_density_fock(state.mu, x, conv, n_max=n_max)
        else:
            out = prcs_density_phase(state.mu, x, conv)
    else:
        raise TypeError(f"Unsupported state {state!r}")
    return float(out) if scalar else out


@lru_cache(maxsize=32)
def _fock_cdf_table(n: int, sigma0: float) -> tuple[np.ndarray, np.ndarray]:
    conv = QuadratureConvention(sigma0=sigma0)
    half = SUPPORT_SIGMAS * sigma0
    x = np.linspace(-half, half, CDF_TABLE_POINTS)
    cdf = cumulative_trapezoid(quadrature_density(Fock(n=n), x, conv), x, initial=0.0)
    cdf /= cdf[-1]
    # keep strictly increasing knots so the inverse is well defined
    keep = np.concatenate(([True], np.diff(cdf) > 0))
    return x[keep], cdf[keep]


def fock_inverse_cdf(n: int, u, conv: QuadratureConvention = CANONICAL) -> np.ndarray:
    """Monotone (piecewise-linear) inverse of the tabulated Fock CDF."""
    x, cdf = _fock_cdf_table(int(n), float(conv.sigma0))
    return np.interp(u, cdf, x)


def quadrature_cdf(state: StateSpec, x, conv: QuadratureConvention = CANONICAL, *, n_max: int = N_MAX):
    _check_fock(state, n_max)
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    s = conv.sigma0
    if isinstance(state, Vacuum):
        out = stats.norm.cdf(x, scale=s)
    elif isinstance(state, Coherent):
        out = stats.norm.cdf(x, loc=2.0 * state.amplitude * math.cos(state.phase) * s, scale=s)
    elif isinstance(state, PRCS):
        means = 2.0 * math.sqrt(state.mu) * s * np.cos(_phases())
        out = stats.norm.cdf(x[..., None], loc=means, scale=s).mean(axis=-1)
    elif isinstance(state, Fock):
        grid, cdf = _fock_cdf_table(state.n, float(s))
        out = np.interp(x, grid, cdf, left=0.0, right=1.0)
    else:
        raise TypeError(f"Unsupported state {state!r}")
    return float(out) if scalar else out


def characteristic_function(state: StateSpec, k, conv: QuadratureConvention = CANONICAL) -> np.ndarray:
    """Phi(k) = E[exp(i k dD)] in closed form."""
    k = np.asarray(k, dtype=float)
    s = conv.sigma0
    envelope = np.exp(-0.5 * (s * k) ** 2)
    if isinstance(state, Vacuum):
        return envelope.astype(complex)
    if isinstance(state, Coherent):
        mean = 2.0 * state.amplitude * math.cos(state.phase) * s
        return envelope * np.exp(1j * k * mean)
    if isinstance(state, Fock):
        return (special.eval_laguerre(state.n, (s * k) ** 2) * envelope).astype(complex)
    if isinstance(state, PRCS):
        return (special.j0(2.0 * math.sqrt(state.mu) * s * k) * envelope).astype(complex)
    raise TypeError(f"Unsupported state {state!r}")


def quadrature_moments(state: StateSpec, conv: QuadratureConvention = CANONICAL) -> tuple[float, float]:
    """(mean, variance) of dD."""
    s2 = conv.sigma0**2
    if isinstance(state, Coherent):
        return 2.0 * state.amplitude * math.cos(state.phase) * conv.sigma0, s2
    return 0.0, s2 * (1.0 + 2.0 * mean_photon_number(state))


def tabulate_density(state: StateSpec, axis: Axis, conv: QuadratureConvention = CANONICAL) -> Density1D:
    return Density1D(axis=axis, values=quadrature_density(state, axis.centers, conv), provenance="analytic")

