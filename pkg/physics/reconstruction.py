"""
Ideal-LO reconstruction of the two-detector statistics.

With dD and dS independent, the joint density of (dI1, dI2) is
2 P_S(x + y) P_D(x - y), and the density of the product M = dI1 dI2 follows
from the squared-variable densities of dS and dD. Replacing the measured P_S by
the shot-noise Gaussian gives the statistics an ideal coherent-state LO would
produce.
"""

from __future__ import annotations

import logging
import math
import warnings
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from errors import NumericalError, ReconstructionWarning
from physics.densities import (
    DEFAULT_EPSILON,
    MAX_OVERFLOW,
    MIN_SAMPLES_CORRELATION,
    Axis,
    CorrelationDensity,
    Density1D,
    Density2D,
    excluded_mask,
    symmetrize,
)
from physics.simulator import DetectorRecords, LOModel, lo_sum_sigma
from physics.states import CANONICAL, QuadratureConvention, StateSpec, quadrature_density, support_half_width

logger = logging.getLogger(__name__)

QUAD_REL_TOL = 1e-7
QUAD_LIMIT = 20_000
GAUSS_CUTOFF = 12.0
TAIL_LIMIT = 1e-6
ROUGH_REL_TOL = 1e-4
SCALE_FLOOR = 1e-10

DensityFn = Callable[[np.ndarray], np.ndarray]


def density_interpolant(p: Density1D) -> DensityFn:
    """Monotone piecewise-cubic interpolant through the bin centers, zero outside them."""
    spline = PchipInterpolator(p.centers, p.values, extrapolate=False)

    def f(x):
        return np.nan_to_num(spline(x), nan=0.0)

    return f


def gaussian(sigma: float) -> DensityFn:
    norm = 1.0 / (sigma * math.sqrt(2.0 * math.pi))

    def f(x):
        x = np.asarray(x, dtype=float)
        return norm * np.exp(-0.5 * (x / sigma) ** 2)

    return f


def _combined_count(*counts: Optional[float]) -> Optional[float]:
    finite = [c for c in counts if c is not None]
    return min(finite) if finite else None


def _symmetric(f: DensityFn) -> DensityFn:
    return lambda x: 0.5 * (f(x) + f(-np.asarray(x)))


def _quad_vec(f, a: float, b: float, rel_tol: float) -> np.ndarray:
    # quad_vec's tolerance is relative to the largest component; a rough first
    # pass rescales every M to order one so the final tolerance holds per M.
    rough = np.abs(integrate.quad_vec(f, a, b, epsrel=max(ROUGH_REL_TOL, rel_tol), norm="max", limit=QUAD_LIMIT)[0])
    scale = np.maximum(rough, SCALE_FLOOR * max(float(np.max(rough, initial=0.0)), 1e-300))
    res, err, info = integrate.quad_vec(
        lambda x: f(x) / scale, a, b, epsrel=rel_tol, norm="max", limit=QUAD_LIMIT, full_output=True
    )
    if info.status != 0:
        # err is on the rescaled components, which are of order one
        if info.status == 1 and err <= 1e-4:
            msg = f"correlation quadrature hit the subdivision limit (error estimate {err:.2e})"
            logger.warning("Reconstruction: %s", msg)
            warnings.warn(msg, ReconstructionWarning, stacklevel=3)
        else:
            raise NumericalError(f"Correlation quadrature did not converge (status {info.status}, error {err:.2e}).")
    return np.asarray(res, dtype=float) * scale


def quad_tolerance(n_samples: Optional[float]) -> float:
    """
    Relative quadrature tolerance for a density estimated from n_samples records.
    Histogram noise of order 1/sqrt(n) swamps anything tighter; analytic input
    (no sample count) gets QUAD_REL_TOL.
    """
    if not n_samples:
        return QUAD_REL_TOL
    return max(QUAD_REL_TOL, 1.0 / math.sqrt(n_samples))


def _check_m(m: np.ndarray) -> None:
    if np.any(m == 0):
        raise ValueError("w(M) diverges at M = 0; exclude it from the grid.")


def product_density(
    f_s: DensityFn,
    f_d: DensityFn,
    m,
    *,
    s_hi: float,
    d_hi: float,
    rel_tol: float = QUAD_REL_TOL,
) -> np.ndarray:
    """
    Density of M = (S^2 - D^2)/4 for independent S, D with symmetric densities
    f_s, f_d (supported on |s| <= s_hi, |x| <= d_hi).

    M < 0: the 1/sqrt(x - eta) endpoint singularity at x = eta = sqrt(-4M) is
    removed by u = sqrt(x^2 + 4M):

        w(M) = 8 int_0 f_s(u) f_d(sqrt(u^2 - 4M)) / sqrt(u^2 - 4M) du

    M > 0: the integrand in x is smooth and integrated directly,

        w(M) = 8 int_0 f_s(sqrt(4M + x^2)) / sqrt(4M + x^2) f_d(x) dx
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    _check_m(m)
    out = np.zeros_like(m)
    neg = m < 0
    if neg.any():
        four_m = 4.0 * m[neg]

        def f_neg(u):
            x = np.sqrt(u * u - four_m)
            return f_s(u) * f_d(x) / x

        out[neg] = 8.0 * _quad_vec(f_neg, 0.0, min(s_hi, d_hi), rel_tol)
    if (~neg).any():
        four_m = 4.0 * m[~neg]

        def f_pos(x):
            r = np.sqrt(four_m + x * x)
            return f_s(r) / r * f_d(x)

        out[~neg] = 8.0 * _quad_vec(f_pos, 0.0, d_hi, rel_tol)
    return out


def correlation_integral(
    f_d: DensityFn,
    m,
    *,
    sigma_s: float,
    d_hi: float,
    rel_tol: float = QUAD_REL_TOL,
) -> np.ndarray:
    """w(M) with a Gaussian sum channel of width sigma_s; sigma_s = sigma0 is the ideal LO."""
    return product_density(
        gaussian(sigma_s), _symmetric(f_d), m, s_hi=GAUSS_CUTOFF * sigma_s, d_hi=d_hi, rel_tol=rel_tol
    )


def correlation_integral_direct(f_d: DensityFn, m: float, *, sigma_s: float, d_hi: float) -> float:
    """
    Reference evaluation of the untransformed integral

        w(M) = 8/sqrt(2 pi sigma^2) int_eta exp(-(4M + x^2)/2 sigma^2) / sqrt(4M + x^2) P_D(x) dx

    For M < 0 the (x - eta)^(-1/2) endpoint factor is handed to QUADPACK's
    algebraic-weight rule instead of being sampled.
    """
    m = float(m)
    _check_m(np.asarray([m]))
    f_sym = _symmetric(f_d)
    s2 = sigma_s * sigma_s
    pref = 8.0 / math.sqrt(2.0 * math.pi * s2)
    if m < 0:
        eta = math.sqrt(-4.0 * m)
        if eta >= d_hi:
            return 0.0

        def g(x):
            return math.exp(-(4.0 * m + x * x) / (2.0 * s2)) * float(f_sym(x)) / math.sqrt(x + eta)

        val, _ = integrate.quad(g, eta, d_hi, weight="alg", wvar=(-0.5, 0.0), epsabs=1e-14, epsrel=1e-12, limit=500)
        return pref * val

    def h(x):
        r2 = 4.0 * m + x * x
        return math.exp(-r2 / (2.0 * s2)) / math.sqrt(r2) * float(f_sym(x))

    val, _ = integrate.quad(h, 0.0, d_hi, epsabs=1e-14, epsrel=1e-12, limit=500)
    return pref * val


def _grid_values(m_axis: Axis, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    mask = ~excluded_mask(m_axis, epsilon)
    m = m_axis.centers[mask]
    _check_m(m)
    return mask, m


def _check_tail(p_d: Density1D) -> None:
    edge = abs(p_d.values[0]) + abs(p_d.values[-1])
    spread = math.sqrt(max(p_d.moment(2), 0.0))
    if edge * spread > TAIL_LIMIT:
        msg = (
            f"P_D is still {edge:.2e} at the edge of its axis [{p_d.axis.lo}, {p_d.axis.hi}]; "
            "the truncated tail exceeds 1e-6 of the integral"
        )
        logger.warning("Reconstruction: %s", msg)
        warnings.warn(msg, ReconstructionWarning, stacklevel=3)


def reconstruct_w(
    p_d: Density1D,
    sigma_s: float,
    m_axis: Axis,
    *,
    epsilon: float = DEFAULT_EPSILON,
    rel_tol: Optional[float] = None,
) -> CorrelationDensity:
    """
    w(M) for a Gaussian sum channel of width sigma_s from a (symmetrised) P_D
    estimate. rel_tol defaults to quad_tolerance(p_d.n_samples).
    """
    if sigma_s <= 0:
        raise ValueError("sigma_s must be positive.")
    p_sym, asym = symmetrize(p_d)
    logger.debug("Reconstruction: P_D asymmetry norm %.3e", asym)
    _check_tail(p_sym)
    if rel_tol is None:
        rel_tol = quad_tolerance(p_d.n_samples)
    mask, m = _grid_values(m_axis, epsilon)
    values = np.full(m_axis.n_bins, np.nan)
    d_hi = max(abs(p_d.axis.lo), abs(p_d.axis.hi))
    values[mask] = correlation_integral(density_interpolant(p_sym), m, sigma_s=sigma_s, d_hi=d_hi, rel_tol=rel_tol)
    provenance = p_d.provenance if p_d.provenance in ("analytic", "inverted") else "reconstructed"
    return CorrelationDensity(
        axis=m_axis, values=values, epsilon=epsilon, provenance=provenance, n_samples=p_d.n_samples
    )


def reconstruct_w0(
    p_d: Density1D,
    sigma0: float,
    m_axis: Axis,
    *,
    epsilon: float = DEFAULT_EPSILON,
    rel_tol: Optional[float] = None,
) -> CorrelationDensity:
    return reconstruct_w(p_d, sigma0, m_axis, epsilon=epsilon, rel_tol=rel_tol)


def theoretical_w(
    state: StateSpec,
    lo: LOModel,
    m_axis: Axis,
    *,
    epsilon: float = DEFAULT_EPSILON,
    rel_tol: float = QUAD_REL_TOL,
) -> CorrelationDensity:
    mask, m = _grid_values(m_axis, epsilon)
    conv = lo.conv
    values = np.full(m_axis.n_bins, np.nan)
    values[mask] = correlation_integral(
        lambda x: quadrature_density(state, x, conv),
        m,
        sigma_s=lo_sum_sigma(lo),
        d_hi=support_half_width(state, conv),
        rel_tol=rel_tol,
    )
    return CorrelationDensity(axis=m_axis, values=values, epsilon=epsilon, provenance="analytic")


def theoretical_w0(
    state: StateSpec,
    m_axis: Axis,
    conv: QuadratureConvention = CANONICAL,
    *,
    epsilon: float = DEFAULT_EPSILON,
    rel_tol: float = QUAD_REL_TOL,
) -> CorrelationDensity:
    """Ideal-LO w0(M) from the analytic quadrature density, same integral as reconstruct_w0."""
    return theoretical_w(state, LOModel(conv=conv), m_axis, epsilon=epsilon, rel_tol=rel_tol)


def correlation_density_empirical(
    records: DetectorRecords,
    m_axis: Axis,
    *,
    epsilon: float = DEFAULT_EPSILON,
) -> CorrelationDensity:
    """
    Histogram of the per-record products m = i1 * i2, normalised over all
    records so that out-of-range products (common with a noisy LO) only reduce
    the covered mass.
    """
    n = len(records)
    if n < MIN_SAMPLES_CORRELATION:
        raise ValueError(f"Need at least {MIN_SAMPLES_CORRELATION} records, got {n}.")
    products = records.m
    counts, _ = np.histogram(products, bins=m_axis.edges)
    overflow = n - int(counts.sum())
    if overflow / n > MAX_OVERFLOW:
        logger.warning("Correlation: %.2f%% of products fall outside the M axis", 100.0 * overflow / n)
    p = counts / n
    width = m_axis.width
    return CorrelationDensity(
        axis=m_axis,
        values=p / width,
        epsilon=epsilon,
        provenance="empirical",
        stderr=np.sqrt(p * (1.0 - p) / n) / width,
        n_samples=float(n),
        overflow=overflow,
    )


def correlation_density_convolution(
    p_s: Density1D,
    p_d: Density1D,
    m_axis: Axis,
    *,
    epsilon: float = DEFAULT_EPSILON,
    rel_tol: Optional[float] = None,
) -> CorrelationDensity:
    """
    w(M) = 4 int Q_S2(4M + v) Q_D2(v) dv from the two measured marginals, with
    v = x^2 substituted so that Q_D2(v) dv = 2 P_D(x) dx.
    """
    s_sym, _ = symmetrize(p_s)
    d_sym, _ = symmetrize(p_d)
    if rel_tol is None:
        rel_tol = quad_tolerance(_combined_count(p_s.n_samples, p_d.n_samples))
    mask, m = _grid_values(m_axis, epsilon)
    values = np.full(m_axis.n_bins, np.nan)
    values[mask] = product_density(
        density_interpolant(s_sym),
        density_interpolant(d_sym),
        m,
        s_hi=max(abs(p_s.axis.lo), abs(p_s.axis.hi)),
        d_hi=max(abs(p_d.axis.lo), abs(p_d.axis.hi)),
        rel_tol=rel_tol,
    )
    return CorrelationDensity(
        axis=m_axis,
        values=values,
        epsilon=epsilon,
        provenance="reconstructed",
        n_samples=_combined_count(p_s.n_samples, p_d.n_samples),
    )


def negative_fraction(records: DetectorRecords) -> float:
    """Fraction of records with i1 * i2 < 0 (anti-correlated outcomes)."""
    return float(np.mean(records.m < 0))


def _joint_values(
    f_s: DensityFn, f_d: DensityFn, x_axis: Axis, y_axis: Axis
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, y = np.meshgrid(x_axis.centers, y_axis.centers, indexing="ij")
    return 2.0 * f_s(x + y) * f_d(x - y), x, y


def reconstruct_joint_ideal(
    p_d: Density1D,
    sigma0: float,
    x_axis: Axis,
    y_axis: Optional[Axis] = None,
) -> Density2D:
    """
    P0(x, y) = 2/sqrt(2 pi sigma0^2) exp(-(x + y)^2 / 2 sigma0^2) P_D(x - y).
    """
    if sigma0 <= 0:
        raise ValueError("sigma0 must be positive.")
    y_axis = y_axis or x_axis
    g = gaussian(sigma0)
    values, x, y = _joint_values(g, density_interpolant(p_d), x_axis, y_axis)
    stderr = None
    if p_d.stderr is not None:
        stderr = 2.0 * g(x + y) * np.interp(x - y, p_d.centers, p_d.stderr, left=0.0, right=0.0)
    return Density2D(
        x_axis=x_axis,
        y_axis=y_axis,
        values=values,
        provenance="analytic" if p_d.provenance == "analytic" else "reconstructed",
        stderr=stderr,
        n_samples=p_d.n_samples,
    )


def joint_from_marginals(p_s: Density1D, p_d: Density1D, x_axis: Axis, y_axis: Optional[Axis] = None) -> Density2D:
    """2 P_S(x + y) P_D(x - y) from two measured marginals."""
    y_axis = y_axis or x_axis
    values, _, _ = _joint_values(density_interpolant(p_s), density_interpolant(p_d), x_axis, y_axis)
    return Density2D(x_axis=x_axis, y_axis=y_axis, values=values, provenance="reconstructed")


def theoretical_joint(
    state: StateSpec,
    x_axis: Axis,
    y_axis: Optional[Axis] = None,
    *,
    lo: Optional[LOModel] = None,
) -> Density2D:
    lo = lo or LOModel()
    y_axis = y_axis or x_axis
    conv = lo.conv
    values, _, _ = _joint_values(
        gaussian(lo_sum_sigma(lo)), lambda x: quadrature_density(state, x, conv), x_axis, y_axis
    )
    return Density2D(x_axis=x_axis, y_axis=y_axis, values=values, provenance="analytic")


def _diagonal_projection(p: Density2D, sign: int) -> Density1D:
    if p.x_axis.n_bins != p.y_axis.n_bins or not math.isclose(p.x_axis.width, p.y_axis.width, rel_tol=1e-12):
        raise ValueError("Diagonal projections need square grids with equal bin widths.")
    n = p.x_axis.n_bins
    h = p.x_axis.width
    i, j = np.indices((n, n))
    if sign < 0:
        # x - y = (x_lo - y_lo) + (i - j) h
        index = i - j + (n - 1)
        lo = p.x_axis.lo - p.y_axis.lo - (n - 1) * h - 0.5 * h
    else:
        # x + y = (x_lo + y_lo) + h + (i + j) h
        index = i + j
        lo = p.x_axis.lo + p.y_axis.lo + 0.5 * h
    mass = np.bincount(index.ravel(), weights=(p.values * p.cell_area).ravel(), minlength=2 * n - 1)
    axis = Axis(lo, lo + (2 * n - 1) * h, 2 * n - 1)
    stderr = None
    if p.stderr is not None:
        var = np.bincount(index.ravel(), weights=((p.stderr * p.cell_area) ** 2).ravel(), minlength=2 * n - 1)
        stderr = np.sqrt(var) / h
    provenance = "reconstructed" if p.provenance == "empirical" else p.provenance
    return Density1D(axis=axis, values=mass / h, provenance=provenance, stderr=stderr, n_samples=p.n_samples)


def antidiagonal_marginal(p: Density2D) -> Density1D:
    """
    Distribution of D = x - y, i.e. the joint map projected onto the x = -y
    diagonal, expressed in D units (the diagonal coordinate itself is D/sqrt 2).
    """
    return _diagonal_projection(p, -1)


def diagonal_marginal(p: Density2D) -> Density1D:
    """Distribution of S = x + y (projection onto the x = y diagonal)."""
    return _diagonal_projection(p, 1)
