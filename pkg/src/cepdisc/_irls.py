"""Iteratively reweighted least squares for Huber harmonic regression.

The hot loop lives in a numba kernel: for each grid frequency we fit
y_t ~ beta_c cos(lambda t) + beta_s sin(lambda t) under the Huber loss with
a MAD-rescaled clipping threshold, recomputed every iteration. Weighted
normal equations are accumulated as deficits against the precomputed
unweighted sums, so only clipped time points cost anything in the solve.

Median and MAD are the expensive part of an iteration, so they use a
rank-counting selection seeded with the previous iteration's value: one
branchless pass counts how many residuals fall below the guess while
tracking the values adjacent to it, which resolves the order statistic
immediately once the iteration has nearly converged (the usual case). A
bounded scan handles small rank misses and a conventional quickselect
handles cold starts.

Cosine and sine design tables are cached per series length (they are
shared by every replicate of a data set), together with their column Gram
sums.
"""

from collections import OrderedDict

import numpy as np
from numba import njit

MAD_NORMAL = 0.6745
SCALE_FLOOR = 1e-300

_SCAN_LIMIT = 24


@njit(cache=True)
def _hoare_select(a, size, k):
    """k-th smallest of a[:size] (0-based), partially sorting in place."""
    lo = 0
    hi = size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] < a[lo]:
            a[mid], a[lo] = a[lo], a[mid]
        if a[hi] < a[lo]:
            a[hi], a[lo] = a[lo], a[hi]
        if a[hi] < a[mid]:
            a[hi], a[mid] = a[mid], a[hi]
        p = a[mid]
        i = lo
        j = hi
        while i <= j:
            while a[i] < p:
                i += 1
            while a[j] > p:
                j -= 1
            if i <= j:
                a[i], a[j] = a[j], a[i]
                i += 1
                j -= 1
        if k <= j:
            hi = j
        elif k >= i:
            lo = i
        else:
            return a[k]
    return a[lo]


@njit(cache=True)
def _pair_from_sorted_tail(a, size, k):
    """(a_(k), min of the rest) after _hoare_select(a, size, k) ran."""
    va = a[k]
    vb = a[k + 1]
    for i in range(k + 2, size):
        if a[i] < vb:
            vb = a[i]
    return va, vb


@njit(cache=True)
def _median_pass(src, n, center, use_abs, pivot):
    """Count values below pivot; track the values bracketing it.

    The value stream is src itself or |src - center| when use_abs is set.
    Returns (count_below, largest value below, smallest value at/above).
    """
    c = 0
    max_lt = -np.inf
    min_ge = np.inf
    if use_abs:
        for t in range(n):
            v = abs(src[t] - center)
            below = v < pivot
            c += np.int64(below)
            if below:
                if v > max_lt:
                    max_lt = v
            elif v < min_ge:
                min_ge = v
    else:
        for t in range(n):
            v = src[t]
            below = v < pivot
            c += np.int64(below)
            if below:
                if v > max_lt:
                    max_lt = v
            elif v < min_ge:
                min_ge = v
    return c, max_lt, min_ge


@njit(cache=True)
def _top_scan(src, n, center, use_abs, pivot, keep, out):
    """Largest `keep` values among stream entries strictly below pivot.

    Fills out[:keep] in ascending order (out[0] is the smallest kept).
    Assumes at least `keep` qualifying entries exist.
    """
    for i in range(keep):
        out[i] = -np.inf
    for t in range(n):
        v = src[t]
        if use_abs:
            v = abs(v - center)
        if v < pivot and v > out[0]:
            j = 1
            while j < keep and v > out[j]:
                out[j - 1] = out[j]
                j += 1
            out[j - 1] = v


@njit(cache=True)
def _bottom_scan(src, n, center, use_abs, pivot, keep, out):
    """Smallest `keep` values among stream entries at or above pivot.

    Fills out[:keep] in descending order (out[0] is the largest kept).
    Assumes at least `keep` qualifying entries exist.
    """
    for i in range(keep):
        out[i] = np.inf
    for t in range(n):
        v = src[t]
        if use_abs:
            v = abs(v - center)
        if v >= pivot and v < out[0]:
            j = 1
            while j < keep and v < out[j]:
                out[j - 1] = out[j]
                j += 1
            out[j - 1] = v


@njit(cache=True)
def _collect_below(src, n, center, use_abs, pivot, buf):
    c = 0
    for t in range(n):
        v = src[t]
        if use_abs:
            v = abs(v - center)
        if v < pivot:
            buf[c] = v
            c += 1
    return c


@njit(cache=True)
def _collect_at_or_above(src, n, center, use_abs, pivot, buf):
    c = 0
    for t in range(n):
        v = src[t]
        if use_abs:
            v = abs(v - center)
        if v >= pivot:
            buf[c] = v
            c += 1
    return c


@njit(cache=True)
def _stream_median(src, n, center, use_abs, warm, buf, scan):
    """Exact median of the stream (src or |src - center|), src untouched.

    warm is a pivot guess (NaN for none); buf is length-n scratch and scan
    a small scratch for the bounded rank scans.
    """
    k = (n - 1) // 2
    need2 = (n & 1) == 0
    pivot = warm
    if np.isnan(pivot):
        if use_abs:
            v0 = abs(src[0] - center)
            v1 = abs(src[n // 2] - center)
            v2 = abs(src[n - 1] - center)
        else:
            v0 = src[0]
            v1 = src[n // 2]
            v2 = src[n - 1]
        lo = min(v0, v1)
        hi = max(v0, v1)
        pivot = min(hi, max(lo, v2))
    c, max_lt, min_ge = _median_pass(src, n, center, use_abs, pivot)
    if k == c - 1:
        if not need2:
            return max_lt
        return 0.5 * (max_lt + min_ge)
    if k >= c:
        d = k - c
        if d == 0 and not need2:
            return min_ge
        keep = d + 2 if need2 else d + 1
        if keep <= _SCAN_LIMIT:
            _bottom_scan(src, n, center, use_abs, pivot, keep, scan)
            if not need2:
                return scan[0]
            return 0.5 * (scan[1] + scan[0])
        size = _collect_at_or_above(src, n, center, use_abs, pivot, buf)
        if not need2:
            return _hoare_select(buf, size, d)
        _hoare_select(buf, size, d)
        va, vb = _pair_from_sorted_tail(buf, size, d)
        return 0.5 * (va + vb)
    d = c - 1 - k
    keep = d + 1
    if keep <= _SCAN_LIMIT:
        _top_scan(src, n, center, use_abs, pivot, keep, scan)
        if not need2:
            return scan[0]
        return 0.5 * (scan[0] + scan[1])
    size = _collect_below(src, n, center, use_abs, pivot, buf)
    if not need2:
        return _hoare_select(buf, size, k)
    _hoare_select(buf, size, k)
    va, vb = _pair_from_sorted_tail(buf, size, k)
    return 0.5 * (va + vb)


@njit(cache=True)
def _irls_single(y, g, ct, st, a0, b0, d0, u0, v0, c, max_iterations, tol,
                 s_floor, z, buf, scan):
    """One frequency. Returns (beta_c, beta_s, iterations, converged).

    g holds per-point standardization amplitudes (all ones for plain
    series, taper magnitudes for tapered ones); residuals are divided by
    it before the scale estimate and the clipping decision, so points the
    taper silences do not drag the scale down. A zero residual always
    keeps full weight, and a zero amplitude with a nonzero residual maps
    to an infinite standardized residual, i.e. zero weight.
    """
    n = y.size
    det0 = a0 * b0 - d0 * d0
    bc = (b0 * u0 - d0 * v0) / det0
    bs = (a0 * v0 - d0 * u0) / det0
    warm_med = np.nan
    warm_mad = np.nan
    s = 0.0
    for it in range(1, max_iterations + 1):
        for t in range(n):
            r = y[t] - bc * ct[t] - bs * st[t]
            z[t] = 0.0 if r == 0.0 else r / g[t]
        med = _stream_median(z, n, 0.0, False, warm_med, buf, scan)
        warm_med = med
        mad = _stream_median(z, n, med, True, warm_mad, buf, scan)
        warm_mad = mad
        s = mad / MAD_NORMAL
        if s <= s_floor:
            return bc, bs, it, True
        cs = c * s
        da = 0.0
        db = 0.0
        dd = 0.0
        du = 0.0
        dv = 0.0
        for t in range(n):
            az = abs(z[t])
            if az > cs:
                d = 1.0 - cs / az
                cv = ct[t]
                sv = st[t]
                yv = y[t]
                da += d * cv * cv
                db += d * sv * sv
                dd += d * cv * sv
                du += d * yv * cv
                dv += d * yv * sv
        a = a0 - da
        b = b0 - db
        dm = d0 - dd
        u = u0 - du
        v = v0 - dv
        det = a * b - dm * dm
        if det <= SCALE_FLOOR:
            return bc, bs, it, False
        nbc = (b * u - dm * v) / det
        nbs = (a * v - dm * u) / det
        delta = max(abs(nbc - bc), abs(nbs - bs))
        bc = nbc
        bs = nbs
        if delta < tol * (1.0 + max(abs(bc), abs(bs))):
            return bc, bs, it, True
    # Re-estimating the scale from an order statistic can trap the
    # iteration in a tiny two-cycle (the MAD hops between neighbouring
    # values and one borderline point flips its weight), in which case no
    # tolerance is ever met. Freezing the scale at its last value makes
    # the remaining iteration a plain majorize-minimize descent on the
    # Huber objective, which does converge; resume from the last iterate.
    cs = c * s
    for it in range(max_iterations + 1, 2 * max_iterations + 1):
        for t in range(n):
            r = y[t] - bc * ct[t] - bs * st[t]
            z[t] = 0.0 if r == 0.0 else r / g[t]
        da = 0.0
        db = 0.0
        dd = 0.0
        du = 0.0
        dv = 0.0
        for t in range(n):
            az = abs(z[t])
            if az > cs:
                d = 1.0 - cs / az
                cv = ct[t]
                sv = st[t]
                yv = y[t]
                da += d * cv * cv
                db += d * sv * sv
                dd += d * cv * sv
                du += d * yv * cv
                dv += d * yv * sv
        a = a0 - da
        b = b0 - db
        dm = d0 - dd
        u = u0 - du
        v = v0 - dv
        det = a * b - dm * dm
        if det <= SCALE_FLOOR:
            return bc, bs, it, False
        nbc = (b * u - dm * v) / det
        nbs = (a * v - dm * u) / det
        delta = max(abs(nbc - bc), abs(nbs - bs))
        bc = nbc
        bs = nbs
        if delta < tol * (1.0 + max(abs(bc), abs(bs))):
            return bc, bs, it, True
    return bc, bs, 2 * max_iterations, False


@njit(cache=True)
def _irls_grid(y, g, ct, st, a0, b0, d0, u0, v0, c, max_iterations, tol,
               s_floor):
    """All grid frequencies for one input series.

    ct, st are (M, N); a0..v0 are length-M unweighted sums. Returns
    (beta_c, beta_s, iterations, converged) arrays of length M.
    """
    m_count, n = ct.shape
    bc = np.empty(m_count)
    bs = np.empty(m_count)
    iters = np.zeros(m_count, dtype=np.int64)
    ok = np.zeros(m_count, dtype=np.bool_)
    z = np.empty(n)
    buf = np.empty(n)
    scan = np.empty(_SCAN_LIMIT, dtype=np.float64)
    for m in range(m_count):
        bc[m], bs[m], iters[m], ok[m] = _irls_single(
            y, g, ct[m], st[m], a0[m], b0[m], d0[m], u0[m], v0[m],
            c, max_iterations, tol, s_floor, z, buf, scan)
    return bc, bs, iters, ok


class TrigTables:
    """Design tables for the full grid of one series length."""

    __slots__ = ("n", "frequencies", "ct", "st", "a0", "b0", "d0")

    def __init__(self, n):
        m_count = (n - 1) // 2
        m = np.arange(1, m_count + 1, dtype=float)
        lam = 2.0 * np.pi * m / n
        t = np.arange(1, n + 1, dtype=float)
        arg = np.outer(lam, t)
        self.n = n
        self.frequencies = lam
        self.ct = np.ascontiguousarray(np.cos(arg))
        self.st = np.ascontiguousarray(np.sin(arg))
        self.a0 = np.einsum("mt,mt->m", self.ct, self.ct)
        self.b0 = np.einsum("mt,mt->m", self.st, self.st)
        self.d0 = np.einsum("mt,mt->m", self.ct, self.st)


_TABLE_CACHE: "OrderedDict[int, TrigTables]" = OrderedDict()
_TABLE_CACHE_SIZE = 3


def trig_tables(n):
    tables = _TABLE_CACHE.get(n)
    if tables is None:
        tables = TrigTables(n)
        _TABLE_CACHE[n] = tables
        while len(_TABLE_CACHE) > _TABLE_CACHE_SIZE:
            _TABLE_CACHE.popitem(last=False)
    else:
        _TABLE_CACHE.move_to_end(n)
    return tables


def scale_floor(y):
    rms = float(np.sqrt(np.mean(np.square(y))))
    return max(SCALE_FLOOR, 1e-12 * rms)


def irls_grid(y, tables, c, max_iterations, tol, g=None):
    """Fit every grid frequency of one series; numpy in, numpy out.

    g, when given, standardizes residuals pointwise (see _irls_single).
    """
    y = np.ascontiguousarray(y, dtype=float)
    if g is None:
        g = np.ones(y.size)
    else:
        g = np.ascontiguousarray(g, dtype=float)
    u0 = tables.ct @ y
    v0 = tables.st @ y
    return _irls_grid(y, g, tables.ct, tables.st, tables.a0, tables.b0,
                      tables.d0, u0, v0, float(c), int(max_iterations),
                      float(tol), scale_floor(y))


def irls_single(y, lam, c, max_iterations, tol):
    """Fit one frequency, on or off the canonical grid."""
    y = np.ascontiguousarray(y, dtype=float)
    n = y.size
    g = np.ones(n)
    t = np.arange(1, n + 1, dtype=float)
    ct = np.cos(lam * t)
    st = np.sin(lam * t)
    a0 = float(ct @ ct)
    b0 = float(st @ st)
    d0 = float(ct @ st)
    u0 = float(ct @ y)
    v0 = float(st @ y)
    z = np.empty(n)
    buf = np.empty(n)
    scan = np.empty(_SCAN_LIMIT, dtype=np.float64)
    return _irls_single(y, g, ct, st, a0, b0, d0, u0, v0, float(c),
                        int(max_iterations), float(tol), scale_floor(y),
                        z, buf, scan)
