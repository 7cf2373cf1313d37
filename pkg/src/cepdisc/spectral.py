"""Spectral estimators on the Fourier-frequency grid.

Four estimators share one grid: the classical periodogram, the sine-taper
multitaper periodogram, the Huber M-periodogram fitted by iteratively
reweighted harmonic regression, and the multitaper M-periodogram, which
runs the robust regression on each tapered series and averages.

All estimates are reported as power per radian on the interior grid
lambda_m = 2*pi*m/N, m = 1..floor((N-1)/2), and are floor-clamped to a
tiny positive value so downstream logarithms are always defined.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _irls
from .core import _as_series
from .errors import ConvergenceError, DomainError

POWER_FLOOR = 1e-300

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FrequencyGrid:
    """Interior Fourier frequencies of a length-n series."""

    n: int
    indices: np.ndarray = field(repr=False)
    frequencies: np.ndarray = field(repr=False)

    @classmethod
    def for_length(cls, n: int) -> "FrequencyGrid":
        n = int(n)
        if n < 3:
            raise DomainError("series length %d has an empty frequency grid" % n)
        m = np.arange(1, (n - 1) // 2 + 1)
        return cls(n=n, indices=m, frequencies=_TWO_PI * m / n)

    def __len__(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class HuberConfig:
    """Tuning of the robust harmonic regression."""

    c: float = 1.345
    max_iterations: int = 100
    tolerance: float = 1e-8

    def __post_init__(self):
        if not (self.c > 0):
            raise DomainError("Huber constant must be positive, got %r" % (self.c,))
        if int(self.max_iterations) < 1:
            raise DomainError("max_iterations must be at least 1")
        if not (self.tolerance > 0):
            raise DomainError("tolerance must be positive")


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator produced (or should produce) a spectral estimate."""

    kind: str
    tapers: Optional[int] = None
    huber: Optional[HuberConfig] = None

    _KINDS = ("classical", "multitaper", "m", "multitaper-m")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise DomainError("unknown estimator kind %r" % (self.kind,))
        if self.kind in ("multitaper", "multitaper-m"):
            if self.tapers is None or int(self.tapers) < 1:
                raise DomainError("%s estimator needs a positive taper count" % self.kind)
        if self.kind in ("m", "multitaper-m") and self.huber is None:
            object.__setattr__(self, "huber", HuberConfig())

    @property
    def label(self) -> str:
        if self.kind == "classical":
            return "classical"
        if self.kind == "multitaper":
            return "multitaper(R=%d)" % self.tapers
        if self.kind == "m":
            return "m(c=%g)" % self.huber.c
        return "multitaper-m(R=%d,c=%g)" % (self.tapers, self.huber.c)


@dataclass(frozen=True)
class SpectralEstimate:
    grid: FrequencyGrid
    values: np.ndarray = field(repr=False)
    estimator: EstimatorSpec

    def __post_init__(self):
        if self.values.shape != self.grid.frequencies.shape:
            raise DomainError("estimate length does not match its grid")


@dataclass(frozen=True)
class TaperBank:
    """Orthonormal sine tapers; weights has one row per taper."""

    r: int
    weights: np.ndarray = field(repr=False)


def _clamped(values: np.ndarray) -> np.ndarray:
    return np.maximum(values, POWER_FLOOR)


def _demeaned(x, name: str) -> np.ndarray:
    v = _as_series(x, name)
    return v - v.mean()


def _grid_power(y: np.ndarray) -> np.ndarray:
    """|DFT|^2 on the interior grid for a series indexed t = 1..N."""
    n = y.size
    m_count = (n - 1) // 2
    f = np.fft.rfft(y)[1:m_count + 1]
    return np.abs(f) ** 2


def periodogram(x) -> SpectralEstimate:
    """Classical periodogram I(lambda_m) = |sum x_t e^(-i lambda_m t)|^2 / (2 pi N).

    The series is demeaned internally, so the zero frequency carries
    nothing and the interior grid holds all the information.
    """
    xt = _demeaned(x, "x")
    grid = FrequencyGrid.for_length(xt.size)
    values = _grid_power(xt) / (_TWO_PI * xt.size)
    return SpectralEstimate(grid, _clamped(values), EstimatorSpec("classical"))


def sine_tapers(n: int, r: int) -> TaperBank:
    """The first r orthonormal sine tapers of length n."""
    n = int(n)
    r = int(r)
    if r < 1:
        raise DomainError("taper count must be positive, got %d" % r)
    if r >= n:
        raise DomainError("need fewer tapers than samples (R=%d, N=%d)" % (r, n))
    t = np.arange(1, n + 1)
    rows = np.arange(1, r + 1)[:, None]
    weights = np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * t * rows / (n + 1))
    return TaperBank(r=r, weights=weights)


def multitaper_periodogram(x, r: int) -> SpectralEstimate:
    """Average of r sine-tapered periodograms.

    Each taper is orthonormal (sum h^2 = 1), so the tapered transform is
    normalized by 2*pi alone; averaging reduces variance at fixed bias.
    """
    xt = _demeaned(x, "x")
    n = xt.size
    bank = sine_tapers(n, r)
    grid = FrequencyGrid.for_length(n)
    acc = np.zeros(len(grid))
    for row in bank.weights:
        acc += _grid_power(row * xt)
    values = acc / (_TWO_PI * bank.r)
    return SpectralEstimate(grid, _clamped(values),
                            EstimatorSpec("multitaper", tapers=bank.r))


def huber_psi(u, c: float):
    """Huber influence: identity inside [-c, c], clipped outside."""
    if not (c > 0):
        raise DomainError("Huber constant must be positive, got %r" % (c,))
    return np.clip(u, -c, c)


def m_harmonic_regression(x, lam: float, config: HuberConfig = HuberConfig()):
    """Robust (Huber) fit of cos/sin regressors at one frequency.

    Returns the coefficient pair (beta_c, beta_s). The residual scale is
    the MAD/0.6745 of the current residuals, refreshed every sweep.
    """
    v = _as_series(x, "x")
    lam = float(lam)
    if not (0.0 < lam < np.pi):
        raise DomainError("frequency must lie strictly inside (0, pi), got %r" % lam)
    bc, bs, _, ok = _irls.irls_single(v, lam, config.c, config.max_iterations,
                                      config.tolerance)
    if not ok:
        raise ConvergenceError(
            "harmonic regression did not converge at frequency %g" % lam,
            last_iterate=(bc, bs))
    return float(bc), float(bs)


def _m_values(y: np.ndarray, g, config: HuberConfig, what: str):
    """Run the robust regression over the whole grid of one series."""
    tables = _irls.trig_tables(y.size)
    bc, bs, _, ok = _irls.irls_grid(y, tables, config.c, config.max_iterations,
                                    config.tolerance, g=g)
    values = (y.size / (8.0 * np.pi)) * (bc * bc + bs * bs)
    if not ok.all():
        failed = np.flatnonzero(~ok)
        raise ConvergenceError(
            "%s failed to converge at %d of %d grid frequencies" % (
                what, failed.size, ok.size),
            last_iterate=values, detail=failed)
    return values


def m_periodogram(x, config: HuberConfig = HuberConfig()) -> SpectralEstimate:
    """Huber M-periodogram (N/8pi)(beta_c^2 + beta_s^2) over the grid."""
    xt = _demeaned(x, "x")
    grid = FrequencyGrid.for_length(xt.size)
    values = _m_values(xt, None, config, "M-periodogram")
    return SpectralEstimate(grid, _clamped(values),
                            EstimatorSpec("m", huber=config))


def multitaper_m_periodogram(x, r: int,
                             config: HuberConfig = HuberConfig()) -> SpectralEstimate:
    """Average of M-periodograms of the r sine-tapered series.

    The regression sees sqrt(N) * h_rt * x_t against the untapered cos/sin
    columns; the same amplitudes standardize the residuals inside the
    Huber weights so the taper's silenced points do not deflate the scale
    estimate. With the orthonormal tapers this calibrates each term to
    the power-per-radian scale, and as c grows every term collapses to
    the corresponding tapered periodogram exactly.
    """
    xt = _demeaned(x, "x")
    n = xt.size
    bank = sine_tapers(n, r)
    grid = FrequencyGrid.for_length(n)
    root_n = np.sqrt(float(n))
    acc = np.zeros(len(grid))
    for row in bank.weights:
        g = root_n * np.abs(row)
        acc += _m_values(root_n * row * xt, g, config,
                         "multitaper M-periodogram")
    values = acc / bank.r
    return SpectralEstimate(grid, _clamped(values),
                            EstimatorSpec("multitaper-m", tapers=bank.r,
                                          huber=config))


def estimate_spectrum(x, estimator: EstimatorSpec) -> SpectralEstimate:
    """Dispatch to the estimator a spec describes."""
    if estimator.kind == "classical":
        return periodogram(x)
    if estimator.kind == "multitaper":
        return multitaper_periodogram(x, estimator.tapers)
    if estimator.kind == "m":
        return m_periodogram(x, estimator.huber)
    return multitaper_m_periodogram(x, estimator.tapers, estimator.huber)
