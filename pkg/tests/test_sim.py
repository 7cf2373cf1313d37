import json

import numpy as np
import pytest

from cepdisc import sim
from cepdisc.cepstral import ArmaSpec
from cepdisc.core import ContaminationConfig
from cepdisc.errors import (ConfigurationError, DomainError, NumericalError,
                            ParseError)
from cepdisc.sim import McResult, McScenario, PopulationLaw


def _lag1_autocorr(x):
    x = x - x.mean()
    return float(np.dot(x[:-1], x[1:]) / np.dot(x, x))


# ---------------------------------------------------------------------------
# simulate_arma


def test_white_noise_variance():
    x = sim.simulate_arma(ArmaSpec(), 10000, seed=42)
    assert x.shape == (10000,)
    assert abs(x.var() - 1.0) < 0.05


def test_ar1_lag_one_autocorrelation():
    x = sim.simulate_arma(ArmaSpec(ar=(0.5,)), 20000, seed=3)
    assert abs(_lag1_autocorr(x) - 0.5) < 0.02


def test_arma11_lag_one_autocorrelation():
    # rho(1) = (1 + phi*theta)(phi + theta) / (1 + 2 phi theta + theta^2)
    phi, theta = 0.5, 0.3
    want = (1 + phi * theta) * (phi + theta) / (1 + 2 * phi * theta + theta ** 2)
    x = sim.simulate_arma(ArmaSpec(ar=(phi,), ma=(theta,)), 20000, seed=8)
    assert abs(_lag1_autocorr(x) - want) < 0.03


def test_innovation_variance_scales_output():
    spec = ArmaSpec(sigma2=4.0)
    x = sim.simulate_arma(spec, 10000, seed=1)
    assert abs(x.var() - 4.0) < 0.2


def test_same_seed_same_realization():
    spec = ArmaSpec(ar=(0.4, -0.2), sigma2=2.0)
    a = sim.simulate_arma(spec, 300, seed=17)
    b = sim.simulate_arma(spec, 300, seed=17)
    assert np.array_equal(a, b)
    c = sim.simulate_arma(spec, 300, seed=18)
    assert not np.array_equal(a, c)


def test_simulate_rejects_bad_inputs():
    with pytest.raises(DomainError):
        sim.simulate_arma((0.5,), 100, seed=0)
    with pytest.raises(DomainError):
        sim.simulate_arma(ArmaSpec(), 0, seed=0)


# ---------------------------------------------------------------------------
# population laws and parameter draws


def _inside_triangle(phi1, phi2):
    return phi2 > -1.0 and phi2 < 1.0 - phi1 and phi2 < 1.0 + phi1


def test_draws_stay_in_stationarity_triangle():
    law = PopulationLaw(3, phi1=(0.12, 1.5), phi2=(-0.75, -0.56),
                        sigma2=(0.9, 1.1))
    for seed in range(1000):
        spec = sim.draw_population_params(law, seed)
        phi1, phi2 = spec.ar
        assert _inside_triangle(phi1, phi2)
        assert law.phi1[0] <= phi1 <= law.phi1[1]
        assert law.phi2[0] <= phi2 <= law.phi2[1]
        assert law.sigma2[0] <= spec.sigma2 <= law.sigma2[1]


def test_degenerate_ranges_return_the_point():
    law = PopulationLaw(1, phi1=(0.3, 0.3), phi2=(-0.1, -0.1),
                        sigma2=(2.0, 2.0))
    spec = sim.draw_population_params(law, 0)
    assert spec.ar == (0.3, -0.1)
    assert spec.sigma2 == 2.0


def test_same_seed_same_spec():
    law = PopulationLaw(2, phi1=(0.01, 1.2), phi2=(-0.36, -0.25),
                        sigma2=(0.3, 3.0))
    a = sim.draw_population_params(law, 99)
    b = sim.draw_population_params(law, 99)
    assert a.ar == b.ar and a.sigma2 == b.sigma2


def test_impossible_range_raises_configuration_error():
    law = PopulationLaw(1, phi1=(0.0, 0.5), phi2=(-5.0, -4.0),
                        sigma2=(1.0, 1.0))
    with pytest.raises(ConfigurationError):
        sim.draw_population_params(law, 0)


def test_law_validation():
    with pytest.raises(DomainError):
        PopulationLaw(0, (0.1, 0.2), (-0.2, -0.1), (1.0, 1.0))
    with pytest.raises(DomainError):
        PopulationLaw(1, (0.5, 0.1), (-0.2, -0.1), (1.0, 1.0))
    with pytest.raises(DomainError):
        PopulationLaw(1, (0.1, 0.2), (-0.2, -0.1), (0.0, 1.0))


def test_benchmark_laws_table():
    phi = {1: ((0.05, 0.7), (-0.12, -0.06)),
           2: ((0.01, 1.2), (-0.36, -0.25)),
           3: ((0.12, 1.5), (-0.75, -0.56))}
    sigma2 = {"pi1": (0.1, 10.0), "pi2": (0.3, 3.0), "pi3": (0.9, 1.1)}
    for name, s2 in sigma2.items():
        laws = sim.benchmark_laws(name)
        assert [law.label for law in laws] == [1, 2, 3]
        for law in laws:
            assert (law.phi1, law.phi2) == phi[law.label]
            assert law.sigma2 == s2
    with pytest.raises(ConfigurationError):
        sim.benchmark_laws("pi4")


# ---------------------------------------------------------------------------
# scenarios


def _separable_laws():
    # near-disjoint AR(1)-like populations; almost every classifier wins
    return (PopulationLaw(1, (0.05, 0.1), (-0.01, 0.01), (1.0, 1.0)),
            PopulationLaw(2, (0.85, 0.9), (-0.01, 0.01), (1.0, 1.0)))


def _tiny_scenario(**overrides):
    kwargs = dict(laws=sim.benchmark_laws("pi3"), n_per_population=4,
                  series_length=64, test_size=3, estimator="classical",
                  repetitions=2, seed=5, cepstra_length=4)
    kwargs.update(overrides)
    return McScenario(**kwargs)


def test_scenario_broadcasts_scalar_counts():
    scn = _tiny_scenario(n_per_population=6)
    assert scn.n_per_population == (6, 6, 6)


def test_scenario_validation():
    with pytest.raises(DomainError):
        _tiny_scenario(n_per_population=(4, 4))
    with pytest.raises(DomainError):
        _tiny_scenario(n_per_population=1)
    with pytest.raises(DomainError):
        _tiny_scenario(series_length=4)
    with pytest.raises(DomainError):
        _tiny_scenario(test_size=0)
    with pytest.raises(DomainError):
        _tiny_scenario(repetitions=0)
    with pytest.raises(DomainError):
        _tiny_scenario(estimator="bogus")
    with pytest.raises(DomainError):
        McScenario(laws=(), n_per_population=4, series_length=64)


def test_scenario_estimator_spec():
    spec = _tiny_scenario(estimator="multitaper-m", tapers=5,
                          huber_c=2.0).estimator_spec()
    assert spec.kind == "multitaper-m"
    assert spec.tapers == 5
    assert spec.huber.c == 2.0
    assert _tiny_scenario().estimator_spec().tapers is None


# ---------------------------------------------------------------------------
# run_mc


def test_separated_populations_classify_almost_perfectly():
    scn = McScenario(laws=_separable_laws(), n_per_population=20,
                     series_length=512, repetitions=10, seed=1,
                     estimator="classical")
    result = sim.run_mc(scn)
    assert result.failures == ()
    assert len(result.rates) == 10
    assert result.mean_rate >= 0.95


def test_narrow_variance_benchmark_rate_band():
    # the three overlapping AR(2) populations with tightly drawn innovation
    # variance separate well but not perfectly at this sample size
    scn = McScenario(laws=sim.benchmark_laws("pi3"), n_per_population=15,
                     series_length=1000, test_size=50, estimator="multitaper",
                     tapers=7, cepstra_length=9, repetitions=20, seed=7)
    result = sim.run_mc(scn)
    assert result.failures == ()
    assert 0.80 <= result.mean_rate <= 0.95


def test_run_mc_is_deterministic():
    scn = _tiny_scenario(repetitions=3)
    a = sim.run_mc(scn)
    b = sim.run_mc(scn)
    assert a == b


def test_run_mc_parallel_matches_serial():
    scn = _tiny_scenario(repetitions=5)
    serial = sim.run_mc(scn, jobs=1)
    parallel = sim.run_mc(scn, jobs=3)
    assert serial == parallel
    assert sim.mc_result_to_json(serial) == sim.mc_result_to_json(parallel)


def test_rates_and_diagonals_are_probabilities():
    result = sim.run_mc(_tiny_scenario(repetitions=3))
    for rate in result.rates:
        assert 0.0 <= rate <= 1.0
    for diag in result.diagonals:
        assert len(diag) == 3
        assert all(0.0 <= v <= 1.0 for v in diag)
    assert result.sd_rate >= 0.0
    assert len(result.population_rates) == 3


def test_single_repetition_has_zero_sd():
    result = sim.run_mc(_tiny_scenario(repetitions=1))
    assert result.sd_rate == 0.0
    assert result.mean_rate == result.rates[0]


def test_contamination_changes_the_draws():
    clean = _tiny_scenario(repetitions=2)
    dirty = _tiny_scenario(repetitions=2,
                           contamination=ContaminationConfig(0.2, 7.0, 0))
    a = sim.run_mc(clean)
    b = sim.run_mc(dirty)
    assert a.rates != b.rates


def test_m_and_classical_agree_on_clean_separable_data():
    # with no outliers the robust pipeline should land close to the
    # classical one; on separable laws both sit near certainty
    common = dict(laws=_separable_laws(), n_per_population=10,
                  series_length=256, test_size=8, repetitions=3, seed=4)
    classical = sim.run_mc(McScenario(estimator="classical", **common))
    robust = sim.run_mc(McScenario(estimator="m", **common))
    assert abs(classical.mean_rate - robust.mean_rate) < 0.10


def test_failure_budget(monkeypatch):
    def flaky(bad):
        def runner(scn, rep):
            if rep in bad:
                raise NumericalError("repetition %d exploded" % rep)
            return rep, 0.5 + rep / 100.0, (0.5, 0.6, 0.4)
        return runner

    scn = _tiny_scenario(repetitions=20)

    monkeypatch.setattr(sim, "_single_repetition", flaky({3}))
    result = sim.run_mc(scn)
    assert len(result.rates) == 19
    assert result.completed == tuple(r for r in range(1, 21) if r != 3)
    assert result.failures == ((3, "NumericalError: repetition 3 exploded"),)

    monkeypatch.setattr(sim, "_single_repetition", flaky({3, 7, 11}))
    with pytest.raises(NumericalError):
        sim.run_mc(scn)


def test_unexpected_exceptions_propagate(monkeypatch):
    def broken(scn, rep):
        raise RuntimeError("not a library error")

    monkeypatch.setattr(sim, "_single_repetition", broken)
    with pytest.raises(RuntimeError):
        sim.run_mc(_tiny_scenario())


# ---------------------------------------------------------------------------
# scenario files and result serialization


def test_scenario_from_toml(tmp_path):
    path = tmp_path / "scenario.toml"
    path.write_text(
        'benchmark = "pi2"\n'
        "n_per_population = [4, 5, 6]\n"
        "series_length = 64\n"
        "test_size = 3\n"
        'estimator = "multitaper"\n'
        "tapers = 5\n"
        "repetitions = 2\n"
        "seed = 11\n"
        "cepstra_length = 4\n"
        "\n"
        "[contamination]\n"
        "probability = 0.01\n"
        "magnitude = 7.0\n")
    scn = sim.scenario_from_file(path)
    assert scn.laws == sim.benchmark_laws("pi2")
    assert scn.n_per_population == (4, 5, 6)
    assert scn.estimator == "multitaper" and scn.tapers == 5
    assert scn.contamination == ContaminationConfig(0.01, 7.0, 0)
    assert scn.seed == 11


def test_scenario_from_json_with_explicit_laws(tmp_path):
    doc = {
        "laws": [
            {"phi1": [0.05, 0.1], "phi2": [-0.01, 0.01], "sigma2": [1.0, 1.0]},
            {"phi1": [0.85, 0.9], "phi2": [-0.01, 0.01], "sigma2": [1.0, 1.0]},
        ],
        "n_per_population": 4,
        "series_length": 64,
        "test_size": 3,
        "estimator": "classical",
        "repetitions": 2,
        "seed": 7,
        "cepstra_length": 4,
    }
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(doc))
    scn = sim.scenario_from_file(path)
    assert scn.laws == _separable_laws()
    assert scn.contamination is None
    # the file parse must agree with the in-memory constructor
    assert sim.run_mc(scn) == sim.run_mc(McScenario(
        laws=_separable_laws(), n_per_population=4, series_length=64,
        test_size=3, estimator="classical", repetitions=2, seed=7,
        cepstra_length=4))


def test_scenario_file_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("benchmark = \n")
    with pytest.raises(ParseError):
        sim.scenario_from_file(bad)
    with pytest.raises(ParseError):
        sim.scenario_from_file(tmp_path / "missing.toml")

    with pytest.raises(ConfigurationError):
        sim.scenario_from_mapping({"series_length": 64})
    with pytest.raises(ConfigurationError):
        sim.scenario_from_mapping({"benchmark": "pi1", "laws": [],
                                   "n_per_population": 4,
                                   "series_length": 64})
    with pytest.raises(ConfigurationError):
        sim.scenario_from_mapping({"benchmark": "pi1",
                                   "n_per_population": 4,
                                   "series_length": 64,
                                   "unknown_key": 1})
    with pytest.raises(ConfigurationError):
        sim.scenario_from_mapping({"laws": [{"phi1": [0.1, 0.2]}],
                                   "n_per_population": 4,
                                   "series_length": 64})
    with pytest.raises(ConfigurationError):
        sim.scenario_from_mapping({"benchmark": "pi1",
                                   "n_per_population": 4,
                                   "series_length": 64,
                                   "contamination": {"probability": 0.01}})


def test_result_csv_rows():
    result = McResult(completed=(1, 3), rates=(0.5, 0.75),
                      diagonals=((0.5, 0.5), (1.0, 0.5)),
                      failures=((2, "NumericalError: x"),), repetitions=3)
    assert sim.mc_result_rows(result) == (
        "rep,rate,pop1_diag,pop2_diag\n"
        "1,0.5,0.5,0.5\n"
        "3,0.75,1.0,0.5\n")


def test_result_json_document():
    result = sim.run_mc(_tiny_scenario(repetitions=2))
    doc = json.loads(sim.mc_result_to_json(result))
    assert doc["format"] == "mc-result" and doc["version"] == 1
    assert doc["repetitions"] == 2 and doc["completed"] == 2
    assert doc["rates"] == list(result.rates)
    assert doc["mean_rate"] == result.mean_rate
    assert doc["sd_rate"] == result.sd_rate
    assert doc["population_rates"] == list(result.population_rates)
    assert doc["failures"] == []
