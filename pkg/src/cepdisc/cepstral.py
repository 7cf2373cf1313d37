"""Cepstral coefficients: estimation from spectra and exact ARMA references.

The log spectrum of a stationary invertible ARMA process expands as
ln S(lam) = c_0 + sum_{l>=1} c_l cos(lam l). Estimated coefficients come
from cosine sums of a log spectral estimate over the Fourier grid; exact
coefficients come from the reciprocal roots of the AR and MA polynomials.
"""

import json

import numpy as np

from .core import ReplicateSet, _fmt
from .errors import DomainError, ParseError
from .spectral import EstimatorSpec, SpectralEstimate, estimate_spectrum

UNIT_ROOT_MARGIN = 1e-8

LOG_TWO_PI = float(np.log(2.0 * np.pi))


class CepstralVector:
    """Coefficients c_0..c_{L-1} plus a note on which estimator made them."""

    __slots__ = ("coefficients", "source")

    def __init__(self, coefficients, source=""):
        v = np.asarray(coefficients, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise DomainError("cepstral vector needs at least one coefficient")
        if not np.all(np.isfinite(v)):
            raise DomainError("cepstral coefficients must be finite")
        self.coefficients = v
        self.source = str(source)

    @property
    def length(self):
        return int(self.coefficients.size)

    def __repr__(self):
        return "CepstralVector(L=%d, source=%r)" % (self.length, self.source)


class CepstraSet:
    """Cepstral vectors of labeled replicates stacked into one matrix.

    Row k of ``coefficients`` belongs to ``populations[k]`` and, within
    that population, carries the original replicate index ``indices[k]``.
    """

    __slots__ = ("coefficients", "populations", "indices", "source")

    def __init__(self, coefficients, populations, indices=None, source=""):
        m = np.asarray(coefficients, dtype=float)
        pops = np.asarray(populations, dtype=int)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise DomainError("cepstra matrix must be 2-d and nonempty")
        if pops.shape != (m.shape[0],):
            raise DomainError("one population label per cepstra row is required")
        if not np.all(np.isfinite(m)):
            raise DomainError("cepstral coefficients must be finite")
        if pops.min() < 1:
            raise DomainError("population labels must be positive")
        if indices is None:
            idx = np.zeros(m.shape[0], dtype=int)
            seen = {}
            for k, j in enumerate(pops):
                seen[j] = seen.get(j, 0) + 1
                idx[k] = seen[j]
        else:
            idx = np.asarray(indices, dtype=int)
            if idx.shape != pops.shape:
                raise DomainError("indices must match populations in length")
        self.coefficients = m
        self.populations = pops
        self.indices = idx
        self.source = str(source)

    @property
    def length(self):
        return int(self.coefficients.shape[1])

    def __len__(self):
        return int(self.coefficients.shape[0])

    def vector(self, k):
        return CepstralVector(self.coefficients[k], self.source)


class ArmaSpec:
    """ARMA(p, q) parameters phi_1..phi_p, theta_1..theta_q and sigma2.

    The process is X_t = phi_1 X_{t-1} + ... + eps_t + theta_1 eps_{t-1}
    + ...; stationarity and invertibility are enforced at construction by
    requiring every reciprocal root of the two polynomials to have
    magnitude below 1 - UNIT_ROOT_MARGIN.
    """

    __slots__ = ("ar", "ma", "sigma2", "_ar_roots", "_ma_roots")

    def __init__(self, ar=(), ma=(), sigma2=1.0):
        self.ar = tuple(float(a) for a in ar)
        self.ma = tuple(float(b) for b in ma)
        self.sigma2 = float(sigma2)
        if not (self.sigma2 > 0.0) or not np.isfinite(self.sigma2):
            raise DomainError("innovation variance must be positive and finite")
        self._ar_roots = _reciprocal_roots((1.0,) + tuple(-a for a in self.ar),
                                           "autoregressive")
        self._ma_roots = _reciprocal_roots((1.0,) + self.ma, "moving-average")

    @property
    def order(self):
        return (len(self.ar), len(self.ma))

    def describe(self):
        p, q = self.order
        if p == 0 and q == 0:
            return "white(sigma2=%g)" % self.sigma2
        return "arma(%d,%d)" % (p, q)

    def __repr__(self):
        return "ArmaSpec(ar=%r, ma=%r, sigma2=%r)" % (self.ar, self.ma, self.sigma2)


def _reciprocal_roots(coeffs, what):
    """Roots g of z^k P(1/z) for P(z) = coeffs[0] + coeffs[1] z + ...

    With P factored as prod(1 - g_i z), these are exactly the g_i. An
    empty polynomial tail means no roots.
    """
    trimmed = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if trimmed.size <= 1:
        return np.zeros(0, dtype=complex)
    roots = np.roots(trimmed)
    mags = np.abs(roots)
    if mags.max() >= 1.0 - UNIT_ROOT_MARGIN:
        raise DomainError(
            "%s polynomial has a root on, inside, or too close to the unit "
            "circle (reciprocal magnitude %g); the process is not stationary "
            "and invertible" % (what, float(mags.max())))
    return roots


def estimate_cepstra(spectrum, L):
    """Cosine-sum cepstral coefficients of a spectral estimate.

    The coefficients are the cosine averages of the log spectrum over the
    full length-N Fourier grid, c_l = (2/N) sum_m ln S(lam_m) cos(lam_m l)
    (half weight at l = 0), folded onto the interior half grid by the even
    symmetry of the spectrum. The grid excludes lam = 0 and lam = pi, so
    those two values are reconstructed from the nearest grid points by
    even-reflection extrapolation: each endpoint is a local extremum of a
    smooth even function, making the two-point Richardson form fourth-order
    accurate. A flat spectrum then yields exactly zero for every l >= 1,
    and multiplying the spectrum by a constant moves only c_0.
    """
    if not isinstance(spectrum, SpectralEstimate):
        raise DomainError("estimate_cepstra expects a SpectralEstimate")
    L = int(L)
    if L < 1:
        raise DomainError("truncation length must be at least 1, got %d" % L)
    values = spectrum.values
    if np.any(values <= 0.0):
        raise DomainError("spectral values must be strictly positive")
    logs = np.log(values)
    n = spectrum.grid.n
    f_zero = (4.0 * logs[0] - logs[1]) / 3.0 if logs.size >= 2 else logs[0]
    ells = np.arange(L)
    sums = np.cos(np.outer(ells, spectrum.grid.frequencies)) @ logs
    if n % 2 == 0:
        f_pi = (4.0 * logs[-1] - logs[-2]) / 3.0 if logs.size >= 2 else logs[0]
        core = f_zero + (-1.0) ** ells * f_pi + 2.0 * sums
    else:
        # odd N: the full grid never touches pi, so no pi term appears
        core = f_zero + 2.0 * sums
    c = (2.0 / n) * core
    c[0] *= 0.5
    return CepstralVector(c, spectrum.estimator.label)


def theoretical_log_spectrum(spec, lam):
    """Exact log spectral density of an ARMA spec at frequency lam.

    Accepts a scalar or an array of frequencies. Uses the factored form
    ln sigma2/(2 pi) + sum ln|1 - h e^{-i lam}|^2 - sum ln|1 - g e^{-i lam}|^2
    with g, h the reciprocal AR and MA roots.
    """
    if not isinstance(spec, ArmaSpec):
        raise DomainError("theoretical_log_spectrum expects an ArmaSpec")
    lam = np.asarray(lam, dtype=float)
    z = np.exp(-1j * lam)
    out = np.full(lam.shape, np.log(spec.sigma2) - LOG_TWO_PI)
    for h in spec._ma_roots:
        out = out + np.log(np.abs(1.0 - h * z) ** 2)
    for g in spec._ar_roots:
        out = out - np.log(np.abs(1.0 - g * z) ** 2)
    return float(out) if out.ndim == 0 else out


def theoretical_cepstra(spec, L):
    """Exact cepstral coefficients c_0..c_{L-1} of an ARMA spec.

    c_0 = ln(sigma2 / 2 pi) and, for l >= 1,
    c_l = (2/l) (sum_r g_r^l - sum_i h_i^l) with g, h as above; the
    imaginary parts cancel because complex roots come in conjugate pairs.
    """
    if not isinstance(spec, ArmaSpec):
        raise DomainError("theoretical_cepstra expects an ArmaSpec")
    L = int(L)
    if L < 1:
        raise DomainError("truncation length must be at least 1, got %d" % L)
    c = np.empty(L)
    c[0] = np.log(spec.sigma2) - LOG_TWO_PI
    for ell in range(1, L):
        total = 0.0 + 0.0j
        if spec._ar_roots.size:
            total += np.sum(spec._ar_roots ** ell)
        if spec._ma_roots.size:
            total -= np.sum(spec._ma_roots ** ell)
        c[ell] = (2.0 / ell) * total.real
    return CepstralVector(c, "theoretical %s" % spec.describe())


def decay_envelope(cv):
    """Fit |c_l| <= theta * delta^l / l over l >= 1 and return (theta, delta).

    The decay rate delta comes from least squares on log(l |c_l|) against
    l over the nonzero coefficients; theta is then the smallest constant
    that makes the envelope hold everywhere. With fewer than two nonzero
    coefficients any delta works; (0, 0) is returned.
    """
    if not isinstance(cv, CepstralVector):
        raise DomainError("decay_envelope expects a CepstralVector")
    tail = cv.coefficients[1:]
    ells = np.arange(1, cv.length)
    nz = tail != 0.0
    if nz.sum() < 2:
        return 0.0, 0.0
    y = np.log(np.abs(tail[nz]) * ells[nz])
    x = ells[nz].astype(float)
    slope = np.polyfit(x, y, 1)[0]
    delta = float(np.exp(slope))
    with np.errstate(over="ignore"):
        ratios = np.abs(tail[nz]) * ells[nz] / delta ** x
    theta = float(ratios.max())
    return theta, delta


def cepstra_decay_check(cv):
    """True when the coefficients sit under a geometric-over-l envelope."""
    theta, delta = decay_envelope(cv)
    if theta == 0.0:
        return True
    return bool(np.isfinite(theta) and delta < 1.0)


def cepstra_from_replicates(replicates, estimator, L):
    """Estimate one cepstral vector per replicate of a ReplicateSet."""
    if not isinstance(replicates, ReplicateSet):
        raise DomainError("cepstra_from_replicates expects a ReplicateSet")
    if not isinstance(estimator, EstimatorSpec):
        raise DomainError("estimator must be an EstimatorSpec")
    L = int(L)
    rows = np.empty((len(replicates), L))
    pops = np.empty(len(replicates), dtype=int)
    idx = np.empty(len(replicates), dtype=int)
    label = estimator.label
    for k, rep in enumerate(replicates):
        spectrum = estimate_spectrum(rep.values, estimator)
        rows[k] = estimate_cepstra(spectrum, L).coefficients
        pops[k] = rep.population
        idx[k] = rep.index
    return CepstraSet(rows, pops, idx, label)


_CEPSTRA_HEADER = "population,replicate,ell,value"


def cepstra_to_csv(cepstra):
    """Long CSV text with rows population,replicate,ell,value."""
    lines = [_CEPSTRA_HEADER]
    for k in range(len(cepstra)):
        for ell in range(cepstra.length):
            lines.append("%d,%d,%d,%s" % (cepstra.populations[k],
                                          cepstra.indices[k], ell,
                                          _fmt(cepstra.coefficients[k, ell])))
    return "\n".join(lines) + "\n"


def write_cepstra_csv(cepstra, path):
    """Write a CepstraSet as long CSV rows population,replicate,ell,value."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cepstra_to_csv(cepstra))


def read_cepstra_csv(path):
    """Read a CepstraSet written by write_cepstra_csv."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ParseError("cannot read %s: %s" % (path, exc)) from exc
    if not lines or lines[0] != _CEPSTRA_HEADER:
        raise ParseError("%s:1: expected header %r" % (path, _CEPSTRA_HEADER))
    rows = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError("%s:%d: expected 4 fields" % (path, lineno))
        try:
            pop, rep, ell = int(parts[0]), int(parts[1]), int(parts[2])
            value = float(parts[3])
        except ValueError as exc:
            raise ParseError("%s:%d: %s" % (path, lineno, exc)) from exc
        key = (pop, rep)
        if key not in rows:
            rows[key] = {}
        if ell in rows[key]:
            raise ParseError("%s:%d: duplicate coefficient for population %d "
                             "replicate %d ell %d" % (path, lineno, pop, rep, ell))
        rows[key][ell] = value
    keys = sorted(rows)
    lengths = {len(rows[k]) for k in keys}
    if len(lengths) != 1:
        raise ParseError("%s: replicates disagree on the number of "
                         "coefficients" % path)
    L = lengths.pop()
    matrix = np.empty((len(keys), L))
    pops = np.empty(len(keys), dtype=int)
    idx = np.empty(len(keys), dtype=int)
    for k, key in enumerate(keys):
        ells = sorted(rows[key])
        if ells != list(range(L)):
            raise ParseError("%s: population %d replicate %d does not cover "
                             "ell = 0..%d" % (path, key[0], key[1], L - 1))
        matrix[k] = [rows[key][e] for e in ells]
        pops[k], idx[k] = key
    return CepstraSet(matrix, pops, idx)


def cepstra_to_json(cepstra):
    """Serialize a CepstraSet to a JSON string (round-trips bit-exactly)."""
    doc = {
        "format": "cepstra",
        "version": 1,
        "source": cepstra.source,
        "populations": cepstra.populations.tolist(),
        "replicates": cepstra.indices.tolist(),
        "coefficients": [[float(v) for v in row] for row in cepstra.coefficients],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def cepstra_from_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("invalid cepstra JSON: %s" % exc) from exc
    if not isinstance(doc, dict) or doc.get("format") != "cepstra":
        raise ParseError("not a cepstra document")
    if doc.get("version") != 1:
        raise ParseError("unsupported cepstra version %r" % (doc.get("version"),))
    try:
        return CepstraSet(doc["coefficients"], doc["populations"],
                          doc.get("replicates"), doc.get("source", ""))
    except KeyError as exc:
        raise ParseError("cepstra document is missing %s" % exc) from exc
