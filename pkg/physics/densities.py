from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Literal, Optional, Union

import numpy as np

from errors import ReconstructionWarning

if TYPE_CHECKING:
    from physics.simulator import DetectorRecords

logger = logging.getLogger(__name__)

Provenance = Literal["empirical", "reconstructed", "inverted", "analytic"]
PROVENANCES = ("empirical", "reconstructed", "inverted", "analytic")

MIN_SAMPLES_1D = 1_000
MIN_SAMPLES_CORRELATION = 100_000
MAX_OVERFLOW = 1e-3
DEFAULT_EPSILON = 0.02
LOG_FIT_BINS = 10


@dataclass(frozen=True)
class Axis:
    """Uniform binning of [lo, hi) into n_bins cells."""

    lo: float
    hi: float
    n_bins: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise ValueError(f"Axis bounds must be finite with hi > lo (got {self.lo}, {self.hi}).")
        if int(self.n_bins) < 1:
            raise ValueError("Axis needs at least one bin.")
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "n_bins", int(self.n_bins))

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.n_bins

    @property
    def edges(self) -> np.ndarray:
        return self.lo + np.arange(self.n_bins + 1) * self.width

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.n_bins) + 0.5) * self.width

    @property
    def is_symmetric(self) -> bool:
        return abs(self.lo + self.hi) <= 1e-12 * max(abs(self.lo), abs(self.hi))

    def scaled(self, factor: float) -> "Axis":
        return Axis(self.lo * factor, self.hi * factor, self.n_bins)

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "n_bins": self.n_bins}

    @classmethod
    def from_dict(cls, data: dict) -> "Axis":
        return cls(float(data["lo"]), float(data["hi"]), int(data["n_bins"]))


def _check_provenance(provenance: str) -> None:
    if provenance not in PROVENANCES:
        raise ValueError(f"Unknown provenance {provenance!r}.")


@dataclass(frozen=True, eq=False)
class Density1D:
    axis: Axis
    values: np.ndarray
    provenance: Provenance = "empirical"
    stderr: Optional[np.ndarray] = None
    # Effective sample count behind the estimate; None means noiseless (analytic).
    n_samples: Optional[float] = None
    overflow: int = 0

    def __post_init__(self) -> None:
        _check_provenance(self.provenance)
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.axis.n_bins,):
            raise ValueError(f"Expected {self.axis.n_bins} values, got shape {values.shape}.")
        if self.provenance == "empirical" and np.any(values < 0):
            raise ValueError("Empirical densities cannot be negative.")
        object.__setattr__(self, "values", values)
        if self.stderr is not None:
            object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=float).reshape(values.shape))

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.values) * self.axis.width)

    @property
    def centers(self) -> np.ndarray:
        return self.axis.centers

    def moment(self, order: int) -> float:
        return float(np.sum(self.centers**order * self.values) * self.axis.width)


@dataclass(frozen=True, eq=False)
class Density2D:
    """values[i, j] is the density at (x_axis.centers[i], y_axis.centers[j])."""

    x_axis: Axis
    y_axis: Axis
    values: np.ndarray
    provenance: Provenance = "empirical"
    stderr: Optional[np.ndarray] = None
    n_samples: Optional[float] = None
    overflow: int = 0

    def __post_init__(self) -> None:
        _check_provenance(self.provenance)
        values = np.asarray(self.values, dtype=float)
        shape = (self.x_axis.n_bins, self.y_axis.n_bins)
        if values.shape != shape:
            raise ValueError(f"Expected values of shape {shape}, got {values.shape}.")
        object.__setattr__(self, "values", values)
        if self.stderr is not None:
            object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=float).reshape(shape))

    @property
    def cell_area(self) -> float:
        return self.x_axis.width * self.y_axis.width

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.values) * self.cell_area)


@dataclass(frozen=True, eq=False)
class CorrelationDensity:
    """
    Density w(M) of the detector product M = dI1 * dI2.

    Bins whose centers fall inside the exclusion window (-epsilon, epsilon) are
    never evaluated and hold NaN; w diverges logarithmically at M = 0.
    """

    axis: Axis
    values: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    provenance: Provenance = "empirical"
    stderr: Optional[np.ndarray] = None
    n_samples: Optional[float] = None
    overflow: int = 0
    _fit: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        _check_provenance(self.provenance)
        if self.epsilon < 0:
            raise ValueError("Exclusion window must be non-negative.")
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.axis.n_bins,):
            raise ValueError(f"Expected {self.axis.n_bins} values, got shape {values.shape}.")
        values = values.copy()
        values[~self.covered] = np.nan
        object.__setattr__(self, "values", values)
        if self.stderr is not None:
            stderr = np.asarray(self.stderr, dtype=float).reshape(values.shape).copy()
            stderr[~self.covered] = np.nan
            object.__setattr__(self, "stderr", stderr)

    @property
    def covered(self) -> np.ndarray:
        return ~excluded_mask(self.axis, self.epsilon)

    @property
    def centers(self) -> np.ndarray:
        return self.axis.centers

    @property
    def covered_mass(self) -> float:
        return float(np.nansum(self.values[self.covered]) * self.axis.width)

    def _window_models(self) -> list[tuple[float, float, float, int]]:
        """
        Log-model fits a*ln|M| + b on the LOG_FIT_BINS covered bins on each side of
        the window, as (a, b, span, side) with side -1 for M < 0.
        """
        if "models" in self._fit:
            return self._fit["models"]
        models: list[tuple[float, float, float, int]] = []
        excluded = np.flatnonzero(~self.covered)
        if excluded.size:
            edges = self.axis.edges
            centers = self.centers
            first, last = int(excluded[0]), int(excluded[-1])
            left_span = max(0.0, -float(edges[first]))
            right_span = max(0.0, float(edges[last + 1]))
            sides = (
                (-1, left_span, np.arange(max(0, first - LOG_FIT_BINS), first)),
                (1, right_span, np.arange(last + 1, min(self.axis.n_bins, last + 1 + LOG_FIT_BINS))),
            )
            for side, span, idx in sides:
                if span <= 0 or idx.size < 2:
                    continue
                w = self.values[idx]
                ok = np.isfinite(w)
                if ok.sum() < 2:
                    continue
                a, b = np.polyfit(np.log(np.abs(centers[idx][ok])), w[ok], 1)
                models.append((float(a), float(b), span, side))
        self._fit["models"] = models
        return models

    @property
    def excluded_mass(self) -> float:
        # integral over (0, L) of a ln m + b
        return float(sum(a * (s * np.log(s) - s) + b * s for a, b, s, _ in self._window_models()))

    @property
    def total_mass(self) -> float:
        return self.covered_mass + self.excluded_mass

    def mean(self) -> float:
        """First moment, including the log-model estimate inside the window."""
        cov = self.covered
        inside = float(np.nansum(self.centers[cov] * self.values[cov]) * self.axis.width)
        window = 0.0
        for a, b, s, side in self._window_models():
            window += side * (a * (s**2 / 2 * np.log(s) - s**2 / 4) + b * s**2 / 2)
        return inside + window


StatObject = Union[Density1D, Density2D, CorrelationDensity]


def excluded_mask(axis: Axis, epsilon: float) -> np.ndarray:
    return np.abs(axis.centers) < epsilon


def _samples_array(samples, *, minimum: int) -> np.ndarray:
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size < minimum:
        raise ValueError(f"Need at least {minimum} samples, got {arr.size}.")
    return arr


def _check_overflow(overflow: int, total: int, max_overflow: Optional[float], what: str) -> None:
    frac = overflow / total
    if max_overflow is not None and frac > max_overflow:
        raise ValueError(
            f"{what}: {frac:.3%} of samples fall outside the axis (limit {max_overflow:.1%}); widen the grid."
        )
    if overflow:
        logger.debug("%s: %d samples (%.4f%%) outside the axis", what, overflow, 100 * frac)


def estimate_density_1d(samples, axis: Axis, *, max_overflow: Optional[float] = MAX_OVERFLOW) -> Density1D:
    """
    Histogram density normalised over the in-range samples.

    Samples outside the axis are counted in `overflow`; more than `max_overflow`
    of them is an error.
    """
    arr = _samples_array(samples, minimum=MIN_SAMPLES_1D)
    counts, _ = np.histogram(arr, bins=axis.edges)
    inside = int(counts.sum())
    overflow = arr.size - inside
    _check_overflow(overflow, arr.size, max_overflow, "estimate_density_1d")
    if inside == 0:
        raise ValueError("No samples fall inside the axis.")
    p = counts / inside
    width = axis.width
    return Density1D(
        axis=axis,
        values=p / width,
        provenance="empirical",
        stderr=np.sqrt(p * (1.0 - p) / inside) / width,
        n_samples=float(inside),
        overflow=overflow,
    )


def estimate_sigma0(vacuum_records: "DetectorRecords") -> float:
    """Shot-noise calibration: sample std of d = i1 - i2 from blocked-port data."""
    d = np.asarray(vacuum_records.d, dtype=float)
    if d.size < 2:
        raise ValueError("Need at least two vacuum records to estimate sigma0.")
    return float(np.std(d, ddof=1))


def joint_histogram(
    records: "DetectorRecords",
    x_axis: Axis,
    y_axis: Optional[Axis] = None,
    *,
    max_overflow: Optional[float] = MAX_OVERFLOW,
) -> Density2D:
    y_axis = y_axis or x_axis
    i1 = _samples_array(records.i1, minimum=MIN_SAMPLES_1D)
    i2 = np.asarray(records.i2, dtype=float).ravel()
    counts, _, _ = np.histogram2d(i1, i2, bins=[x_axis.edges, y_axis.edges])
    inside = int(counts.sum())
    overflow = i1.size - inside
    _check_overflow(overflow, i1.size, max_overflow, "joint_histogram")
    if inside == 0:
        raise ValueError("No records fall inside the 2D grid.")
    p = counts / inside
    area = x_axis.width * y_axis.width
    return Density2D(
        x_axis=x_axis,
        y_axis=y_axis,
        values=p / area,
        provenance="empirical",
        stderr=np.sqrt(p * (1.0 - p) / inside) / area,
        n_samples=float(inside),
        overflow=overflow,
    )


def symmetrize(p: Density1D) -> tuple[Density1D, float]:
    """
    Average P(x) and P(-x). Returns the symmetrised density and the asymmetry
    norm 0.5 * sum |P(x) - P(-x)| dx.
    """
    if not p.axis.is_symmetric:
        raise ValueError("symmetrize needs an axis symmetric about 0.")
    rev = p.values[::-1]
    asym = 0.5 * float(np.sum(np.abs(p.values - rev)) * p.axis.width)
    stderr = None
    if p.stderr is not None:
        stderr = 0.5 * np.sqrt(p.stderr**2 + p.stderr[::-1] ** 2)
        if p.axis.n_bins % 2:
            mid = p.axis.n_bins // 2
            stderr[mid] = p.stderr[mid]
    return replace(p, values=0.5 * (p.values + rev), stderr=stderr), asym


def symmetry_violation(p: Density1D, *, n_sigma: float = 5.0) -> bool:
    """True when some bin pair differs by more than n_sigma combined standard errors."""
    if not p.axis.is_symmetric:
        return True
    diff = np.abs(p.values - p.values[::-1])
    if p.stderr is None:
        tol = 1e-9 * max(float(np.max(np.abs(p.values))), 1e-300)
        return bool(np.any(diff > tol))
    sigma = np.sqrt(p.stderr**2 + p.stderr[::-1] ** 2)
    return bool(np.any(diff > n_sigma * sigma + 1e-300))


def q_square_transform(p: Density1D, v_axis: Optional[Axis] = None) -> Density1D:
    """
    Density of v = x^2 given the density of x.

    Q(v) = [P(sqrt v) + P(-sqrt v)] / (2 sqrt v), which reduces to P(sqrt v)/sqrt v
    for symmetric P. Each output bin holds the exact bin average of Q, computed
    from the piecewise-linear CDF of the histogram, so mass is conserved and the
    1/sqrt(v) singularity at v = 0 is integrated rather than sampled.
    """
    if symmetry_violation(p):
        msg = "q_square_transform: input is not symmetric within 5 standard errors; using the general two-sided form"
        logger.warning(msg)
        warnings.warn(msg, ReconstructionWarning, stacklevel=2)
    if v_axis is None:
        top = max(abs(p.axis.lo), abs(p.axis.hi))
        v_axis = Axis(0.0, top * top, p.axis.n_bins)
    if v_axis.lo < 0:
        raise ValueError("The v axis of a squared variable starts at 0 or above.")

    edges = p.axis.edges
    cdf_edges = np.concatenate(([0.0], np.cumsum(p.values) * p.axis.width))

    def cdf(x):
        return np.interp(x, edges, cdf_edges, left=0.0, right=cdf_edges[-1])

    root = np.sqrt(v_axis.edges)
    # mass of {x : x^2 in [v_k, v_k+1)} from both branches
    mass_pos = np.diff(cdf(root))
    mass_neg = -np.diff(cdf(-root))
    values = (mass_pos + mass_neg) / v_axis.width
    return Density1D(
        axis=v_axis,
        values=values,
        provenance=p.provenance,
        n_samples=p.n_samples,
    )


def _same_grid(a: StatObject, b: StatObject) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, Density2D):
        return a.x_axis == b.x_axis and a.y_axis == b.y_axis
    if isinstance(a, CorrelationDensity):
        return a.axis == b.axis and a.epsilon == b.epsilon
    return a.axis == b.axis


def require_same_grid(*objs: StatObject) -> None:
    first = objs[0]
    for other in objs[1:]:
        if not _same_grid(first, other):
            raise ValueError("Statistical objects must share identical axes.")


def l1_distance(a: StatObject, b: StatObject) -> float:
    """Integrated absolute difference on a shared grid (exclusion window skipped)."""
    require_same_grid(a, b)
    diff = np.abs(a.values - b.values)
    if isinstance(a, Density2D):
        return float(np.sum(diff) * a.cell_area)
    ok = np.isfinite(diff)
    return float(np.sum(diff[ok]) * a.axis.width)
