"""
Fock-state statistics from phase-randomized coherent state measurements.

Any statistic L(rho) that is linear in the state satisfies
L(rho_mu) = e^-mu sum_n mu^n/n! L_n, so a vacuum measurement plus one or two
PRCS measurements give first- and second-order estimates of L_1 and L_2.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np
from scipy import special
from scipy.optimize import minimize_scalar

from errors import NumericalError, ReconstructionWarning
from physics.densities import CorrelationDensity, Density1D, Density2D, StatObject, require_same_grid
from physics.states import PRCS, QuadratureConvention, quadrature_density

logger = logging.getLogger(__name__)

MU_SEARCH_BOUNDS = (0.0, 10.0)
MU_TOL = 1e-4
FIT_NOISE_FACTOR = 5.0
CONDITION_FLOOR = 1e-6
VOGEL_K_POINTS = 256
VOGEL_K_RANGE = 6.0
VOGEL_SIGMAS = 5.0
VOGEL_FLOOR = 1e-9


@dataclass(frozen=True)
class InversionResult:
    l1: StatObject
    l2: Optional[StatObject]
    mus_used: tuple[float, ...]
    total_mass_l1: float
    total_mass_l2: Optional[float]


@dataclass(frozen=True)
class VogelResult:
    nonclassical: bool
    max_excess: float
    k_at_max: float
    n_effective: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "nonclassical": bool(self.nonclassical),
            "max_excess": float(self.max_excess),
            "k_at_max": float(self.k_at_max),
            "n_effective": None if self.n_effective is None else float(self.n_effective),
        }


def combine(objs: Sequence[StatObject], coeffs: Sequence[float], *, provenance: str = "inverted") -> StatObject:
    """
    Pointwise sum c_i * obj_i on a shared grid. Standard errors and effective
    sample counts propagate as for independent datasets.
    """
    if len(objs) != len(coeffs) or not objs:
        raise ValueError("combine needs one coefficient per object.")
    require_same_grid(*objs)
    values = sum(c * o.values for c, o in zip(coeffs, objs))
    stderr = None
    if all(o.stderr is not None for o in objs):
        stderr = np.sqrt(sum((c * o.stderr) ** 2 for c, o in zip(coeffs, objs)))
    inv_n = sum(c * c / o.n_samples for c, o in zip(coeffs, objs) if o.n_samples)
    n_eff = 1.0 / inv_n if inv_n > 0 else None
    return replace(objs[0], values=values, stderr=stderr, n_samples=n_eff, provenance=provenance, overflow=0)


def _mass(obj: StatObject) -> float:
    return float(obj.total_mass)


def _check_mu(mu: float) -> None:
    if not mu > 0:
        raise ValueError(f"PRCS mean photon number must be positive, got {mu}.")


def invert_single_mu(l0: StatObject, l_mu: StatObject, mu: float) -> InversionResult:
    """L_1 ~ (e^mu L(rho_mu) - L_0) / mu."""
    _check_mu(mu)
    l1 = combine([l0, l_mu], [-1.0 / mu, math.exp(mu) / mu])
    return InversionResult(l1=l1, l2=None, mus_used=(float(mu),), total_mass_l1=_mass(l1), total_mass_l2=None)


def invert_two_mu(l0: StatObject, l_mu1: StatObject, l_mu2: StatObject, mu1: float, mu2: float) -> InversionResult:
    """
    With A_i = e^mu_i L(rho_mu_i) - L_0 and Delta = (mu1 mu2^2 - mu2 mu1^2)/2:

        L_1 ~ (A_1 mu2^2 - A_2 mu1^2) / (2 Delta)
        L_2 ~ (A_2 mu1 - A_1 mu2) / Delta
    """
    _check_mu(mu1)
    _check_mu(mu2)
    delta = 0.5 * (mu1 * mu2 * mu2 - mu2 * mu1 * mu1)
    if abs(delta) < CONDITION_FLOOR * max(mu1, mu2) ** 3:
        raise NumericalError(f"Two-mu inversion is ill-conditioned for mu1={mu1}, mu2={mu2}.")
    e1, e2 = math.exp(mu1), math.exp(mu2)
    objs = [l0, l_mu1, l_mu2]
    l1 = combine(objs, [(mu1 * mu1 - mu2 * mu2) / (2 * delta), e1 * mu2 * mu2 / (2 * delta), -e2 * mu1 * mu1 / (2 * delta)])
    l2 = combine(objs, [(mu2 - mu1) / delta, -e1 * mu2 / delta, e2 * mu1 / delta])
    return InversionResult(
        l1=l1,
        l2=l2,
        mus_used=(float(mu1), float(mu2)),
        total_mass_l1=_mass(l1),
        total_mass_l2=_mass(l2),
    )


def fock_weights(mus: Sequence[float], n_max: int = 20) -> np.ndarray:
    """
    Weight of each Fock component n = 0..n_max in the inverted estimates from
    exact inputs: row 0 is the L_1 estimate, row 1 (two mus only) the L_2 one,
    so that estimate = sum_n w[n] L_n.

    One mu:  w1[n] = mu^(n-1) / n!
    Two mus: w1[n] = (mu1^n mu2^2 - mu2^n mu1^2) / (n! mu1 mu2 (mu2 - mu1))
             w2[n] = 2 (mu2^n mu1 - mu1^n mu2) / (n! mu1 mu2 (mu2 - mu1))

    w1[1] = 1 and w1[2] = 0 (w2[2] = 1, w2[1] = 0); the rest is the truncation bias.
    """
    for mu in mus:
        _check_mu(mu)
    n = np.arange(n_max + 1)
    fact = special.factorial(n)
    if len(mus) == 1:
        (mu,) = mus
        w = np.where(n > 0, float(mu) ** (n - 1.0) / fact, 0.0)
        return w[None, :]
    if len(mus) != 2:
        raise ValueError("fock_weights takes one or two mean photon numbers.")
    mu1, mu2 = (float(m) for m in mus)
    if mu1 == mu2:
        raise NumericalError("fock_weights needs two distinct mean photon numbers.")
    den = fact * mu1 * mu2 * (mu2 - mu1)
    w1 = (mu1**n * mu2**2 - mu2**n * mu1**2) / den
    w2 = 2.0 * (mu2**n * mu1 - mu1**n * mu2) / den
    w1[0] = w2[0] = 0.0
    return np.vstack([w1, w2])


def _overlap(a: np.ndarray, b: np.ndarray) -> float:
    aa = float(np.dot(a, a))
    bb = float(np.dot(b, b))
    if aa == 0.0 or bb == 0.0:
        raise ValueError("Overlap is undefined for an all-zero density.")
    return float(np.dot(a, b) / math.sqrt(aa * bb))


def overlap_2d(p: Density2D, p_th: Density2D) -> float:
    """C = int P P_th / sqrt(int P^2 int P_th^2) on a shared grid."""
    require_same_grid(p, p_th)
    return _overlap(p.values.ravel(), p_th.values.ravel())


def overlap_1d(w: Union[CorrelationDensity, Density1D], w_th: Union[CorrelationDensity, Density1D]) -> float:
    """D, the same overlap on a 1D grid; correlation densities use their covered M bins only."""
    require_same_grid(w, w_th)
    ok = np.isfinite(w.values) & np.isfinite(w_th.values)
    if isinstance(w, CorrelationDensity):
        ok &= w.covered
    return _overlap(w.values[ok], w_th.values[ok])


def fit_mu(d_marginal: Density1D, conv: QuadratureConvention) -> float:
    """
    Mean photon number of a PRCS from its difference-current histogram: the mu
    minimising the squared L2 distance to the analytic PRCS density, searched on
    [0, 10] with a bounded golden-section/parabolic minimiser.
    """
    x = d_marginal.centers
    dx = d_marginal.axis.width
    target = d_marginal.values

    def objective(mu: float) -> float:
        model = quadrature_density(PRCS(mu=max(mu, 0.0)), x, conv, method="phase")
        return float(np.sum((target - model) ** 2) * dx)

    res = minimize_scalar(objective, bounds=MU_SEARCH_BOUNDS, method="bounded", options={"xatol": MU_TOL})
    mu = float(max(res.x, 0.0))
    if d_marginal.stderr is not None:
        floor = float(np.sum(d_marginal.stderr**2) * dx)
        if res.fun > FIT_NOISE_FACTOR * floor:
            msg = f"fit_mu: residual {res.fun:.3e} exceeds {FIT_NOISE_FACTOR:g}x the noise floor {floor:.3e}"
            logger.warning(msg)
            warnings.warn(msg, ReconstructionWarning, stacklevel=2)
    logger.debug("fit_mu: mu=%.5f residual=%.3e", mu, res.fun)
    return mu


def characteristic_magnitude(p_d: Density1D, k: np.ndarray) -> np.ndarray:
    """|sum_i P_i e^{i k x_i} dx| divided by the density's own mass."""
    phase = np.outer(k, p_d.centers)
    weights = p_d.values * p_d.axis.width
    re = np.cos(phase) @ weights
    im = np.sin(phase) @ weights
    return np.hypot(re, im) / float(np.sum(weights))


def vogel_criterion(p_d: Density1D, sigma0: float) -> VogelResult:
    """
    Nonclassical when |Phi(k)| exceeds the vacuum e^{-sigma0^2 k^2 / 2} by more
    than five statistical standard deviations sqrt((1 - |Phi|^2)/N) at some k in
    [0, 6/sigma0].
    """
    if sigma0 <= 0:
        raise ValueError("sigma0 must be positive.")
    k = np.linspace(0.0, VOGEL_K_RANGE / sigma0, VOGEL_K_POINTS)
    phi = characteristic_magnitude(p_d, k)
    excess = phi - np.exp(-0.5 * (sigma0 * k) ** 2)
    n = p_d.n_samples
    noise = np.sqrt(np.clip(1.0 - phi * phi, 0.0, None) / n) if n else np.zeros_like(k)
    fired = bool(np.any(excess > VOGEL_SIGMAS * noise + VOGEL_FLOOR))
    best = int(np.argmax(excess))
    return VogelResult(nonclassical=fired, max_excess=float(excess[best]), k_at_max=float(k[best]), n_effective=n)
