"""Time-series containers, preprocessing, contamination, and series CSV I/O.

A `Replicate` is one observed series with a population label j and a
replicate index k; a `ReplicateSet` groups replicates of a common length and
carries per-population counts and priors. Preprocessing covers OLS
detrending and a median +/- k*sd replacement filter; `contaminate` injects
additive outliers of magnitude omega at random positions.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientDataError, ParseError

__all__ = [
    "Replicate",
    "ReplicateSet",
    "ContaminationConfig",
    "sample_autocovariance",
    "detrend",
    "median_sd_filter",
    "contaminate",
    "read_series",
    "read_series_wide",
    "read_series_long",
    "write_series_wide",
    "write_series_long",
]

MIN_SERIES_LENGTH = 8


def _as_series(x, name="x"):
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise DomainError("%s must be one-dimensional, got shape %s" % (name, v.shape))
    if v.size == 0:
        raise DomainError("%s is empty" % name)
    if not np.all(np.isfinite(v)):
        raise DomainError("%s contains non-finite values" % name)
    return v


class Replicate:
    """One observed series with its population label and replicate index.

    Parameters
    ----------
    values : array_like
        The series, length >= 8, all finite.
    population : int
        Population label j, positive.
    index : int
        Replicate index k within the population, positive.
    """

    __slots__ = ("values", "population", "index")

    def __init__(self, values, population, index):
        v = _as_series(values, "values")
        if v.size < MIN_SERIES_LENGTH:
            raise DomainError(
                "series length must be at least %d, got %d" % (MIN_SERIES_LENGTH, v.size)
            )
        population = int(population)
        index = int(index)
        if population < 1:
            raise DomainError("population label must be positive, got %d" % population)
        if index < 1:
            raise DomainError("replicate index must be positive, got %d" % index)
        self.values = v
        self.population = population
        self.index = index

    @property
    def n(self):
        return int(self.values.size)

    def __repr__(self):
        return "Replicate(population=%d, index=%d, n=%d)" % (
            self.population,
            self.index,
            self.n,
        )


class ReplicateSet:
    """Replicates of a common length with population counts and priors.

    Population labels must form a contiguous 1..J range. Priors are the
    empirical proportions f_j = n_j / n.
    """

    def __init__(self, replicates):
        reps = list(replicates)
        if not reps:
            raise InsufficientDataError("replicate set is empty")
        n0 = reps[0].n
        for r in reps:
            if r.n != n0:
                raise DomainError(
                    "replicates must share a common length; found %d and %d" % (n0, r.n)
                )
        counts = {}
        for r in reps:
            counts[r.population] = counts.get(r.population, 0) + 1
        labels = sorted(counts)
        if labels != list(range(1, len(labels) + 1)):
            raise DomainError(
                "population labels must form a contiguous 1..J range, got %s" % labels
            )
        self.replicates = reps
        self.series_length = n0
        self.counts = {j: counts[j] for j in labels}

    @property
    def n_populations(self):
        return len(self.counts)

    @property
    def total(self):
        return len(self.replicates)

    @property
    def priors(self):
        """f_j = n_j / n in label order 1..J."""
        n = self.total
        return np.array([self.counts[j] / n for j in sorted(self.counts)])

    def __len__(self):
        return len(self.replicates)

    def __iter__(self):
        return iter(self.replicates)


@dataclass(frozen=True)
class ContaminationConfig:
    """Additive-outlier contamination: each point gets +magnitude with
    probability p/2, -magnitude with probability p/2, and is untouched
    otherwise. magnitude = 0 reproduces the input exactly."""

    probability: float
    magnitude: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.probability < 1.0:
            raise DomainError(
                "contamination probability must be in (0,1), got %r" % (self.probability,)
            )
        if self.magnitude < 0.0:
            raise DomainError("contamination magnitude must be >= 0")


def sample_autocovariance(x, tau):
    """Biased-divisor sample autocovariance at integer lag tau.

    Computes (1/N) * sum_{t=1}^{N-|tau|} (x_t - xbar)(x_{t+|tau|} - xbar);
    the sample mean is always subtracted first. Symmetric in tau, and at
    tau = 0 equals the biased sample variance.
    """
    v = _as_series(x)
    lag = abs(int(tau))
    if lag >= v.size:
        raise DomainError("lag %d out of range for series of length %d" % (tau, v.size))
    d = v - v.mean()
    if lag == 0:
        return float(d @ d) / v.size
    return float(d[:-lag] @ d[lag:]) / v.size


def detrend(x):
    """Residuals of an OLS fit of x on (intercept, time index).

    The output has zero sample mean and zero sample correlation with the
    time index, and the operation is idempotent.
    """
    v = _as_series(x)
    if v.size < 2:
        raise DomainError("detrend needs at least 2 points")
    t = np.arange(v.size, dtype=float)
    tc = t - t.mean()
    slope = float(tc @ v) / float(tc @ tc)
    return v - v.mean() - slope * tc


def median_sd_filter(x, k):
    """Replace values farther than k sample standard deviations from the
    sample median by the sample median.

    The center is the global median; the radius is k times the sample
    standard deviation (ddof=1) about the mean. Points inside the band are
    returned unchanged.
    """
    if not k > 0:
        raise DomainError("filter multiplier k must be positive, got %r" % (k,))
    v = _as_series(x).copy()
    med = float(np.median(v))
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    v[np.abs(v - med) > k * sd] = med
    return v


def contaminate(x, cfg):
    """Additive-outlier contamination of a series, deterministic in cfg.seed."""
    v = _as_series(x)
    if cfg.magnitude == 0.0:
        return v.copy()
    rng = np.random.default_rng(cfg.seed)
    u = rng.random(v.size)
    half = cfg.probability / 2.0
    shift = np.where(u < half, 1.0, np.where(u < cfg.probability, -1.0, 0.0))
    return v + cfg.magnitude * shift


# ---------------------------------------------------------------------------
# Series I/O
#
# Wide CSV: one column per replicate, header `pop<j>_rep<k>`.
# Long CSV: header `population,replicate,t,value`, one row per observation.
# Both round-trip bit-exactly (floats are written with repr).

_WIDE_COL = re.compile(r"^pop([0-9]+)_rep([0-9]+)$")
_LONG_HEADER = "population,replicate,t,value"


def _fmt(value):
    return repr(float(value))


def write_series_wide(replicates, path):
    """Write replicates as wide CSV, one column per replicate."""
    reps = list(replicates)
    if not reps:
        raise DomainError("nothing to write")
    n0 = reps[0].n
    if any(r.n != n0 for r in reps):
        raise DomainError("wide CSV requires a common series length")
    header = ",".join("pop%d_rep%d" % (r.population, r.index) for r in reps)
    lines = [header]
    for t in range(n0):
        lines.append(",".join(_fmt(r.values[t]) for r in reps))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_series_long(replicates, path):
    """Write replicates as long CSV (population,replicate,t,value), t 0-based."""
    lines = [_LONG_HEADER]
    for r in replicates:
        for t in range(r.n):
            lines.append("%d,%d,%d,%s" % (r.population, r.index, t, _fmt(r.values[t])))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_lines(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ParseError("cannot read %s: %s" % (path, exc)) from exc
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("%s:1: file is empty" % path)
    return lines


def read_series_wide(path):
    """Read wide CSV into a list of Replicate, in column order."""
    lines = _read_lines(path)
    cols = lines[0].split(",")
    keys = []
    for name in cols:
        m = _WIDE_COL.match(name.strip())
        if m is None:
            raise ParseError(
                "%s:1: column %r does not match pop<j>_rep<k>" % (path, name)
            )
        key = (int(m.group(1)), int(m.group(2)))
        if key in keys:
            raise ParseError("%s:1: duplicate column pop%d_rep%d" % (path, *key))
        keys.append(key)
    data = np.empty((len(lines) - 1, len(keys)))
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(keys):
            raise ParseError(
                "%s:%d: expected %d values, got %d" % (path, i, len(keys), len(cells))
            )
        for c, cell in enumerate(cells):
            try:
                data[i - 2, c] = float(cell)
            except ValueError as exc:
                raise ParseError("%s:%d: bad number %r" % (path, i, cell)) from exc
    return [
        Replicate(data[:, c], population=j, index=k) for c, (j, k) in enumerate(keys)
    ]


def read_series_long(path):
    """Read long CSV into a list of Replicate, in first-appearance order."""
    lines = _read_lines(path)
    if lines[0].strip() != _LONG_HEADER:
        raise ParseError(
            "%s:1: expected header %r, got %r" % (path, _LONG_HEADER, lines[0])
        )
    groups = {}
    order = []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 4:
            raise ParseError("%s:%d: expected 4 fields, got %d" % (path, i, len(cells)))
        try:
            j, k, t = int(cells[0]), int(cells[1]), int(cells[2])
            value = float(cells[3])
        except ValueError as exc:
            raise ParseError("%s:%d: bad row %r" % (path, i, line)) from exc
        key = (j, k)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append((t, value))
    reps = []
    for j, k in order:
        rows = sorted(groups[(j, k)])
        ts = [t for t, _ in rows]
        if ts != list(range(ts[0], ts[0] + len(ts))) or ts[0] not in (0, 1):
            raise ParseError(
                "%s: replicate pop%d_rep%d needs consecutive t starting at 0 or 1"
                % (path, j, k)
            )
        reps.append(Replicate([v for _, v in rows], population=j, index=k))
    return reps


def read_series(path):
    """Read a series file, sniffing wide vs long format from the header."""
    lines = _read_lines(path)
    if lines[0].strip() == _LONG_HEADER:
        return read_series_long(path)
    return read_series_wide(path)
