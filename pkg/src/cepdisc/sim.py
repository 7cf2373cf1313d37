"""ARMA simulation and the Monte Carlo classification benchmark.

Populations are conditional AR(2) models whose coefficients are drawn
uniformly per replicate, optionally hit by additive outliers. Each
benchmark repetition simulates a training set, fits the cepstral
discriminant pipeline, and scores a fresh test set drawn from the same
laws.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.signal import lfilter

from ._rng import derive_seed
from .cepstral import ArmaSpec, cepstra_from_replicates
from .clda import compute_moments, evaluate, fit
from .core import ContaminationConfig, Replicate, ReplicateSet, contaminate
from .errors import (CepdiscError, ConfigurationError, DomainError,
                     NumericalError, ParseError)
from .spectral import EstimatorSpec, HuberConfig

BURN_IN = 500
MAX_PARAMETER_REJECTIONS = 1000


def simulate_arma(spec, n, seed):
    """Length-n Gaussian ARMA realization after a 500-sample burn-in."""
    if not isinstance(spec, ArmaSpec):
        raise DomainError("simulate_arma expects an ArmaSpec")
    n = int(n)
    if n < 1:
        raise DomainError("series length must be positive, got %d" % n)
    rng = np.random.default_rng(seed)
    innovations = rng.normal(0.0, np.sqrt(spec.sigma2), n + BURN_IN)
    series = lfilter([1.0] + list(spec.ma), [1.0] + [-a for a in spec.ar],
                     innovations)
    return series[BURN_IN:]


@dataclass(frozen=True)
class PopulationLaw:
    """Uniform bounds for one population's AR(2) parameters."""

    label: int
    phi1: Tuple[float, float]
    phi2: Tuple[float, float]
    sigma2: Tuple[float, float]

    def __post_init__(self):
        if int(self.label) < 1:
            raise DomainError("population label must be positive")
        for name in ("phi1", "phi2", "sigma2"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise DomainError("%s range must be finite with lo <= hi" % name)
        if self.sigma2[0] <= 0.0:
            raise DomainError("sigma2 range must be positive")


def draw_population_params(law, seed):
    """Uniform AR(2) draw from a law, rejected until stationary.

    phi pairs outside the stationarity triangle (phi2 > -1,
    phi2 < 1 - phi1, phi2 < 1 + phi1) are redrawn; the innovation
    variance is drawn once after acceptance.
    """
    if not isinstance(law, PopulationLaw):
        raise DomainError("draw_population_params expects a PopulationLaw")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_PARAMETER_REJECTIONS):
        phi1 = rng.uniform(*law.phi1)
        phi2 = rng.uniform(*law.phi2)
        if not (phi2 > -1.0 and phi2 < 1.0 - phi1 and phi2 < 1.0 + phi1):
            continue
        try:
            return ArmaSpec(ar=(phi1, phi2), sigma2=rng.uniform(*law.sigma2))
        except DomainError:
            # a root inside the admissibility margin; treat as a rejection
            continue
    raise ConfigurationError(
        "population %d: no stationary AR(2) draw in %d attempts; the "
        "parameter ranges are incompatible with the stationarity triangle"
        % (law.label, MAX_PARAMETER_REJECTIONS))


_TABLE_PHI = (((0.05, 0.7), (-0.12, -0.06)),
              ((0.01, 1.2), (-0.36, -0.25)),
              ((0.12, 1.5), (-0.75, -0.56)))
_TABLE_SIGMA2 = {"pi1": (0.1, 10.0), "pi2": (0.3, 3.0), "pi3": (0.9, 1.1)}


def benchmark_laws(scenario):
    """The three-population law set of a named benchmark scenario.

    The population AR ranges are fixed; scenarios pi1, pi2, pi3 differ in
    the innovation-variance range shared by all three populations, from
    widest to narrowest.
    """
    key = str(scenario).lower()
    if key not in _TABLE_SIGMA2:
        raise ConfigurationError("unknown benchmark scenario %r; choose one "
                                 "of pi1, pi2, pi3" % (scenario,))
    sigma2 = _TABLE_SIGMA2[key]
    return tuple(PopulationLaw(j, phi1, phi2, sigma2)
                 for j, (phi1, phi2) in enumerate(_TABLE_PHI, start=1))


@dataclass(frozen=True)
class McScenario:
    """One cell of the Monte Carlo benchmark grid."""

    laws: Tuple[PopulationLaw, ...]
    n_per_population: Tuple[int, ...]
    series_length: int
    test_size: int = 50
    estimator: str = "multitaper-m"
    tapers: int = 7
    huber_c: float = 1.345
    cepstra_length: int = 9
    repetitions: int = 1
    seed: int = 0
    contamination: Optional[ContaminationConfig] = None

    def __post_init__(self):
        laws = tuple(self.laws)
        if not laws:
            raise DomainError("a scenario needs at least one population law")
        counts = self.n_per_population
        if np.isscalar(counts):
            counts = (int(counts),) * len(laws)
        else:
            counts = tuple(int(c) for c in counts)
        object.__setattr__(self, "laws", laws)
        object.__setattr__(self, "n_per_population", counts)
        if len(counts) != len(laws):
            raise DomainError("need one replicate count per population law")
        if min(counts) < 2:
            raise DomainError("every population needs at least 2 replicates")
        if int(self.series_length) < 8:
            raise DomainError("series length must be at least 8")
        if int(self.test_size) < 1:
            raise DomainError("test size must be at least 1")
        if int(self.repetitions) < 1:
            raise DomainError("repetitions must be at least 1")
        if int(self.cepstra_length) < 1:
            raise DomainError("cepstra length must be at least 1")
        # constructing the spec validates estimator kind and Huber settings
        self.estimator_spec()

    def estimator_spec(self):
        kind = self.estimator
        tapers = self.tapers if kind in ("multitaper", "multitaper-m") else None
        huber = (HuberConfig(c=float(self.huber_c))
                 if kind in ("m", "multitaper-m") else None)
        return EstimatorSpec(kind, tapers=tapers, huber=huber)


@dataclass(frozen=True)
class McResult:
    """Per-repetition classification rates and their aggregates."""

    completed: Tuple[int, ...]
    rates: Tuple[float, ...]
    diagonals: Tuple[Tuple[float, ...], ...]
    failures: Tuple[Tuple[int, str], ...]
    repetitions: int

    def __post_init__(self):
        if not (len(self.completed) == len(self.rates) == len(self.diagonals)):
            raise DomainError("completed, rates, and diagonals must align")

    @property
    def mean_rate(self):
        return float(np.mean(self.rates)) if self.rates else float("nan")

    @property
    def sd_rate(self):
        if len(self.rates) < 2:
            return 0.0
        return float(np.std(self.rates, ddof=1))

    @property
    def population_rates(self):
        """Mean per-population diagonal rate over completed repetitions."""
        if not self.diagonals:
            return ()
        return tuple(float(v)
                     for v in np.mean(np.asarray(self.diagonals), axis=0))


def _simulated_replicates(scn, rep, phase, sizes):
    """Simulate one labeled set for a repetition ('train' or 'test')."""
    reps = []
    for law, count in zip(scn.laws, sizes):
        for k in range(1, count + 1):
            key = (rep, phase, law.label, k)
            spec = draw_population_params(
                law, derive_seed(scn.seed, *key, "params"))
            x = simulate_arma(spec, scn.series_length,
                              derive_seed(scn.seed, *key, "series"))
            if scn.contamination is not None:
                cfg = ContaminationConfig(
                    scn.contamination.probability,
                    scn.contamination.magnitude,
                    derive_seed(scn.seed, *key, "outliers"))
                x = contaminate(x, cfg)
            reps.append(Replicate(x, law.label, k))
    return ReplicateSet(reps)


def _single_repetition(scn, rep):
    """One train/fit/test cycle; returns (rep, overall rate, diagonal)."""
    estimator = scn.estimator_spec()
    train = _simulated_replicates(scn, rep, "train", scn.n_per_population)
    test = _simulated_replicates(scn, rep, "test",
                                 (scn.test_size,) * len(scn.laws))
    model = fit(compute_moments(
        cepstra_from_replicates(train, estimator, scn.cepstra_length)))
    matrix = evaluate(model,
                      cepstra_from_replicates(test, estimator,
                                              scn.cepstra_length))
    return rep, matrix.overall_rate(), tuple(np.diag(matrix.matrix))


def _repetition_task(args):
    scn, rep = args
    try:
        return _single_repetition(scn, rep)
    except CepdiscError as exc:
        return rep, None, "%s: %s" % (type(exc).__name__, exc)


def run_mc(scn, jobs=1):
    """Run every repetition of a scenario and aggregate the rates.

    Repetitions derive their random streams from (seed, repetition, ...)
    keys only, so any jobs count and any execution order produce the same
    result. Repetitions that fail with a library error are recorded; the
    run aborts if more than 10 percent of them fail.
    """
    if not isinstance(scn, McScenario):
        raise DomainError("run_mc expects an McScenario")
    jobs = max(1, int(jobs))
    tasks = [(scn, rep) for rep in range(1, scn.repetitions + 1)]
    if jobs == 1 or scn.repetitions == 1:
        raw = [_repetition_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_repetition_task, tasks))
    raw.sort(key=lambda item: item[0])
    completed, rates, diags, failures = [], [], [], []
    for rep, rate, extra in raw:
        if rate is None:
            failures.append((rep, extra))
        else:
            completed.append(rep)
            rates.append(float(rate))
            diags.append(tuple(float(v) for v in extra))
    if len(failures) > 0.1 * scn.repetitions:
        raise NumericalError(
            "%d of %d repetitions failed (budget is 10%%); first failure: "
            "repetition %d: %s" % (len(failures), scn.repetitions,
                                   failures[0][0], failures[0][1]))
    return McResult(tuple(completed), tuple(rates), tuple(diags),
                    tuple(failures), scn.repetitions)


# ---------------------------------------------------------------------------
# scenario and result I/O

def scenario_from_mapping(doc):
    """Build an McScenario from a parsed TOML/JSON mapping."""
    if not isinstance(doc, dict):
        raise ConfigurationError("scenario document must be a table/object")
    known = {"benchmark", "laws", "n_per_population", "series_length",
             "test_size", "estimator", "tapers", "huber_c", "cepstra_length",
             "repetitions", "seed", "contamination"}
    extra = set(doc) - known
    if extra:
        raise ConfigurationError("unknown scenario keys: %s"
                                 % ", ".join(sorted(extra)))
    if ("benchmark" in doc) == ("laws" in doc):
        raise ConfigurationError(
            "exactly one of 'benchmark' or 'laws' must be given")
    if "benchmark" in doc:
        laws = benchmark_laws(doc["benchmark"])
    else:
        rows = doc["laws"]
        if not isinstance(rows, list) or not rows:
            raise ConfigurationError("'laws' must be a nonempty array of tables")
        try:
            laws = tuple(
                PopulationLaw(row.get("label", j), tuple(row["phi1"]),
                              tuple(row["phi2"]), tuple(row["sigma2"]))
                for j, row in enumerate(rows, start=1))
        except KeyError as exc:
            raise ConfigurationError(
                "each law needs phi1, phi2, and sigma2 ranges; missing %s"
                % exc)
    try:
        kwargs = {
            "laws": laws,
            "n_per_population": doc["n_per_population"],
            "series_length": doc["series_length"],
        }
    except KeyError as exc:
        raise ConfigurationError("scenario is missing required key %s" % exc)
    for key in ("test_size", "estimator", "tapers", "huber_c",
                "cepstra_length", "repetitions", "seed"):
        if key in doc:
            kwargs[key] = doc[key]
    if "contamination" in doc and doc["contamination"] is not None:
        cont = doc["contamination"]
        try:
            kwargs["contamination"] = ContaminationConfig(
                float(cont["probability"]), float(cont["magnitude"]),
                int(cont.get("seed", 0)))
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(
                "contamination needs 'probability' and 'magnitude': %s" % exc)
    try:
        return McScenario(**kwargs)
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigurationError("invalid scenario: %s" % exc)


def scenario_from_file(path):
    """Read an McScenario from a TOML file (or JSON if the name ends .json)."""
    path = str(path)
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ParseError("cannot read %s: %s" % (path, exc)) from exc
    if path.endswith(".json"):
        try:
            doc = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError("%s: invalid JSON: %s" % (path, exc)) from exc
    else:
        try:
            import tomllib
        except ImportError:  # Python < 3.11
            import tomli as tomllib
        try:
            doc = tomllib.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ParseError("%s: invalid TOML: %s" % (path, exc)) from exc
    return scenario_from_mapping(doc)


def mc_result_to_json(result):
    """Versioned JSON document for an McResult (bit-exact floats)."""
    doc = {
        "format": "mc-result",
        "version": 1,
        "repetitions": result.repetitions,
        "completed": len(result.rates),
        "mean_rate": result.mean_rate,
        "sd_rate": result.sd_rate,
        "rates": list(result.rates),
        "population_rates": list(result.population_rates),
        "failures": [[rep, msg] for rep, msg in result.failures],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def mc_result_rows(result):
    """Per-repetition CSV lines, completed repetitions only."""
    j = len(result.diagonals[0]) if result.diagonals else 0
    header = "rep,rate" + "".join(",pop%d_diag" % (i + 1) for i in range(j))
    lines = [header]
    for rep, rate, diag in zip(result.completed, result.rates,
                               result.diagonals):
        lines.append(",".join(["%d" % rep, repr(rate)]
                              + [repr(v) for v in diag]))
    return "\n".join(lines) + "\n"
