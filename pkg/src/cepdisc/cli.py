"""Command-line front end for the cepstral discriminant pipeline.

Subcommands cover the full workflow: spectral and cepstral export for
plotting, model fitting, classification, evaluation, truncation-length
selection, and the Monte Carlo benchmark. Exit codes: 0 success, 1 usage
error, 2 data error, 3 numerical failure.
"""

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cepstral import (ArmaSpec, cepstra_from_replicates, cepstra_to_csv,
                       cepstra_to_json, theoretical_cepstra,
                       theoretical_log_spectrum)
from .clda import (compute_moments, confusion_to_csv, confusion_to_json,
                   evaluate, fit, loo_rate, model_from_json, model_to_json,
                   predict_labels, select_L)
from .core import (Replicate, ReplicateSet, _fmt, detrend, median_sd_filter,
                   read_series)
from .errors import (CepdiscError, ConfigurationError, DomainError,
                     NumericalError, ParseError)
from .sim import mc_result_rows, mc_result_to_json, run_mc, scenario_from_file
from .spectral import EstimatorSpec, HuberConfig, estimate_spectrum

_ESTIMATORS = ("classical", "multitaper", "m", "multitaper-m")

_PRESETS = {
    "gait-raw": {"truncate": 120, "detrend": True},
    "gait-modified": {"truncate": 120, "median_filter": 3.0, "detrend": True},
}


class UsageError(Exception):
    """Command-line misuse that argparse cannot catch itself."""


@dataclass
class PipelineConfig:
    """Resolved settings shared by every subcommand."""

    estimator: str = "multitaper-m"
    tapers: int = 7
    huber_c: float = 1.345
    cepstra_length: int = 9
    seed: int = 0
    jobs: int = 1
    fmt: str = "csv"
    detrend: bool = False
    median_filter: Optional[float] = None
    truncate: Optional[int] = None

    def estimator_spec(self):
        kind = self.estimator
        tapers = self.tapers if kind in ("multitaper", "multitaper-m") else None
        huber = (HuberConfig(c=float(self.huber_c))
                 if kind in ("m", "multitaper-m") else None)
        return EstimatorSpec(kind, tapers=tapers, huber=huber)


_CONFIG_KEYS = ("estimator", "tapers", "huber_c", "L", "seed", "jobs",
                "format", "preset", "detrend", "median_filter", "truncate")
_KEY_TO_FIELD = {"L": "cepstra_length", "format": "fmt"}


def _load_config_file(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ParseError("cannot read %s: %s" % (path, exc)) from exc
    try:
        import tomllib
    except ImportError:  # Python < 3.11
        import tomli as tomllib
    try:
        doc = tomllib.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ParseError("%s: invalid TOML: %s" % (path, exc)) from exc
    extra = set(doc) - set(_CONFIG_KEYS)
    if extra:
        raise ConfigurationError("%s: unknown config keys: %s"
                                 % (path, ", ".join(sorted(extra))))
    return doc


def _resolve_config(args):
    """Merge defaults, config file, preset, and explicit flags.

    Precedence, lowest to highest: built-in defaults, preset values, config
    file keys, command-line flags. Returns the config plus the set of field
    names that were set explicitly (by file or flag).
    """
    values = dataclasses.asdict(PipelineConfig())
    explicit = set()
    doc = _load_config_file(args.config) if getattr(args, "config", None) else {}
    preset = getattr(args, "preset", None) or doc.get("preset")
    if preset:
        if preset not in _PRESETS:
            raise ConfigurationError("unknown preset %r" % (preset,))
        values.update(_PRESETS[preset])
        explicit.update(_PRESETS[preset])
    for key, value in doc.items():
        if key == "preset":
            continue
        field = _KEY_TO_FIELD.get(key, key)
        values[field] = value
        explicit.add(field)
    for field in ("estimator", "tapers", "huber_c", "cepstra_length", "seed",
                  "jobs", "fmt", "detrend", "median_filter", "truncate"):
        flag = getattr(args, field, None)
        if flag is not None:
            values[field] = flag
            explicit.add(field)
    try:
        cfg = PipelineConfig(**values)
        if cfg.estimator not in _ESTIMATORS:
            raise DomainError("unknown estimator kind %r" % (cfg.estimator,))
        if int(cfg.cepstra_length) < 1:
            raise DomainError("L must be at least 1")
        if cfg.truncate is not None and int(cfg.truncate) < 8:
            raise DomainError("truncation length must be at least 8")
        cfg.estimator_spec()
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("invalid configuration: %s" % exc)
    return cfg, explicit


def _preprocess(replicates, cfg):
    """Apply truncate, median filter, and detrend, in that order."""
    if cfg.truncate is None and cfg.median_filter is None and not cfg.detrend:
        return ReplicateSet(list(replicates))
    out = []
    for rep in replicates:
        v = rep.values
        if cfg.truncate is not None:
            n = int(cfg.truncate)
            if v.size < n:
                raise DomainError(
                    "population %d replicate %d has %d points, shorter than "
                    "the truncation length %d"
                    % (rep.population, rep.index, v.size, n))
            v = v[:n]
        if cfg.median_filter is not None:
            v = median_sd_filter(v, cfg.median_filter)
        if cfg.detrend:
            v = detrend(v)
        out.append(Replicate(v, rep.population, rep.index))
    return ReplicateSet(out)


def _emit(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _json_text(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_spectrum(args):
    cfg, _ = _resolve_config(args)
    data = _preprocess(read_series(args.input), cfg)
    estimator = cfg.estimator_spec()
    estimates = [(rep, estimate_spectrum(rep.values, estimator))
                 for rep in data]
    if cfg.fmt == "json":
        doc = {"format": "spectra", "version": 1, "estimator": estimator.label,
               "series": [{"population": int(rep.population),
                           "replicate": int(rep.index),
                           "frequencies": [float(v)
                                           for v in sp.grid.frequencies],
                           "values": [float(v) for v in sp.values]}
                          for rep, sp in estimates]}
        _emit(_json_text(doc), args.output)
        return 0
    lines = ["population,replicate,frequency,value"]
    for rep, sp in estimates:
        for lam, v in zip(sp.grid.frequencies, sp.values):
            lines.append("%d,%d,%s,%s" % (rep.population, rep.index,
                                          _fmt(lam), _fmt(v)))
    _emit("\n".join(lines) + "\n", args.output)
    return 0


def _parse_theoretical(text, sigma2):
    name, _, rest = str(text).partition(":")
    try:
        params = tuple(float(p) for p in rest.split(",")) if rest else ()
    except ValueError:
        raise UsageError("cannot parse model parameters in %r" % (text,))
    name = name.strip().lower()
    try:
        if name == "white" and not params:
            return ArmaSpec(sigma2=sigma2)
        if name == "ar1" and len(params) == 1:
            return ArmaSpec(ar=params, sigma2=sigma2)
        if name == "ma1" and len(params) == 1:
            return ArmaSpec(ma=params, sigma2=sigma2)
        if name == "arma11" and len(params) == 2:
            return ArmaSpec(ar=params[:1], ma=params[1:], sigma2=sigma2)
    except DomainError as exc:
        raise DomainError("%r is not a stationary, invertible model: %s"
                          % (text, exc))
    raise UsageError("unknown model %r; use white, ar1:phi, ma1:theta, or "
                     "arma11:phi,theta" % (text,))


def cmd_cepstra(args):
    if (args.input is None) == (args.theoretical is None):
        raise UsageError("give exactly one of an input file or --theoretical")
    cfg, _ = _resolve_config(args)
    if args.theoretical is not None:
        if args.grid_n < 2:
            raise UsageError("--grid-n must be at least 2")
        spec = _parse_theoretical(args.theoretical, args.sigma2)
        lam = np.linspace(0.0, np.pi, args.grid_n)
        logs = theoretical_log_spectrum(spec, lam)
        cepstra = theoretical_cepstra(spec, cfg.cepstra_length)
        if cfg.fmt == "json":
            doc = {"format": "theoretical", "version": 1,
                   "model": spec.describe(),
                   "frequencies": [float(v) for v in lam],
                   "spectrum": [float(v) for v in np.exp(logs)],
                   "log_spectrum": [float(v) for v in logs],
                   "cepstra": [float(v) for v in cepstra.coefficients]}
            _emit(_json_text(doc), args.output)
            return 0
        lines = ["kind,x,value"]
        for x, v in zip(lam, np.exp(logs)):
            lines.append("spectrum,%s,%s" % (_fmt(x), _fmt(v)))
        for x, v in zip(lam, logs):
            lines.append("log_spectrum,%s,%s" % (_fmt(x), _fmt(v)))
        for ell, v in enumerate(cepstra.coefficients):
            lines.append("cepstra,%d,%s" % (ell, _fmt(v)))
        _emit("\n".join(lines) + "\n", args.output)
        return 0
    data = _preprocess(read_series(args.input), cfg)
    cs = cepstra_from_replicates(data, cfg.estimator_spec(),
                                 cfg.cepstra_length)
    text = cepstra_to_json(cs) + "\n" if cfg.fmt == "json" else cepstra_to_csv(cs)
    _emit(text, args.output)
    return 0


def cmd_fit(args):
    cfg, _ = _resolve_config(args)
    train = _preprocess(read_series(args.train), cfg)
    estimator = cfg.estimator_spec()
    cs = cepstra_from_replicates(train, estimator, cfg.cepstra_length)
    model = fit(compute_moments(cs), config={"estimator": estimator.label})
    with open(args.model_out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(model_to_json(model) + "\n")
    loo = loo_rate(cs)
    training = evaluate(model, cs).overall_rate()
    eigenvalues = [float(v) for v in model.eigenvalues]
    if cfg.fmt == "json":
        doc = {"format": "fit-summary", "version": 1,
               "populations": model.n_populations, "L": model.length,
               "q": model.q, "eigenvalues": eigenvalues,
               "loo_rate": loo, "training_rate": training,
               "model_path": args.model_out}
        _emit(_json_text(doc), args.output)
        return 0
    lines = ["populations,%d" % model.n_populations,
             "L,%d" % model.length,
             "q,%d" % model.q,
             "eigenvalues," + ";".join(repr(v) for v in eigenvalues),
             "loo_rate,%s" % repr(float(loo)),
             "training_rate,%s" % repr(float(training))]
    _emit("\n".join(lines) + "\n", args.output)
    return 0


def _read_model(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return model_from_json(fh.read())
    except OSError as exc:
        raise ParseError("cannot read %s: %s" % (path, exc)) from exc


def _model_length(model, cfg, explicit):
    """The truncation length to use with a stored model.

    An explicitly requested L must match the model; otherwise the model's
    own length wins.
    """
    want = (model.config or {}).get("L", model.length)
    if "cepstra_length" in explicit and cfg.cepstra_length != want:
        raise DomainError("model was fit with L=%d but L=%d was requested"
                          % (want, cfg.cepstra_length))
    return int(want)


def cmd_classify(args):
    cfg, explicit = _resolve_config(args)
    model = _read_model(args.model)
    length = _model_length(model, cfg, explicit)
    data = _preprocess(read_series(args.input), cfg)
    cs = cepstra_from_replicates(data, cfg.estimator_spec(), length)
    labels = predict_labels(model, cs)
    if cfg.fmt == "json":
        doc = {"format": "labels", "version": 1,
               "labels": [{"population": int(p), "replicate": int(k),
                           "label": int(lab)}
                          for p, k, lab in zip(cs.populations, cs.indices,
                                               labels)]}
        _emit(_json_text(doc), args.output)
        return 0
    lines = ["population,replicate,label"]
    for p, k, lab in zip(cs.populations, cs.indices, labels):
        lines.append("%d,%d,%d" % (p, k, lab))
    _emit("\n".join(lines) + "\n", args.output)
    return 0


def cmd_evaluate(args):
    cfg, explicit = _resolve_config(args)
    model = _read_model(args.model)
    length = _model_length(model, cfg, explicit)
    data = _preprocess(read_series(args.test), cfg)
    cs = cepstra_from_replicates(data, cfg.estimator_spec(), length)
    cm = evaluate(model, cs)
    if cfg.fmt == "json":
        _emit(confusion_to_json(cm) + "\n", args.output)
        return 0
    text = confusion_to_csv(cm) + "overall_rate,%s\n" % repr(cm.overall_rate())
    _emit(text, args.output)
    return 0


def cmd_select_l(args):
    cfg, _ = _resolve_config(args)
    if args.l_min < 1 or args.l_max < args.l_min:
        raise UsageError("need 1 <= --l-min <= --l-max")
    train = _preprocess(read_series(args.train), cfg)
    best, table = select_L(train, cfg.estimator_spec(),
                           range(args.l_min, args.l_max + 1))
    if cfg.fmt == "json":
        doc = {"format": "l-selection", "version": 1, "selected": int(best),
               "table": [[int(length), float(rate)]
                         for length, rate in table]}
        _emit(_json_text(doc), args.output)
        return 0
    lines = ["L,rate"]
    for length, rate in table:
        lines.append("%d,%s" % (length, repr(float(rate))))
    lines.append("selected,%d" % best)
    _emit("\n".join(lines) + "\n", args.output)
    return 0


def cmd_mc(args):
    cfg, explicit = _resolve_config(args)
    scenario = scenario_from_file(args.scenario)
    overrides = {}
    for field, target in (("estimator", "estimator"), ("tapers", "tapers"),
                          ("huber_c", "huber_c"),
                          ("cepstra_length", "cepstra_length"),
                          ("seed", "seed")):
        if field in explicit:
            overrides[target] = getattr(cfg, field)
    if overrides:
        try:
            scenario = dataclasses.replace(scenario, **overrides)
        except DomainError as exc:
            raise ConfigurationError("invalid scenario override: %s" % exc)
    result = run_mc(scenario, jobs=cfg.jobs)
    fmt = cfg.fmt if "fmt" in explicit else "json"
    text = mc_result_rows(result) if fmt == "csv" \
        else mc_result_to_json(result) + "\n"
    _emit(text, args.output)
    if args.per_rep:
        with open(args.per_rep, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(mc_result_rows(result))
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="TOML file with pipeline settings")
    common.add_argument("--estimator", choices=_ESTIMATORS,
                        help="spectral estimator (default multitaper-m)")
    common.add_argument("--tapers", type=int, metavar="R",
                        help="sine tapers for multitaper kinds (default 7)")
    common.add_argument("--huber-c", type=float, dest="huber_c", metavar="C",
                        help="Huber tuning constant (default 1.345)")
    common.add_argument("--L", type=int, dest="cepstra_length", metavar="L",
                        help="number of cepstral coefficients (default 9)")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--jobs", type=int, metavar="K",
                        help="parallel workers for mc (default 1)")
    common.add_argument("--format", choices=("csv", "json"), dest="fmt",
                        help="output format (default csv; mc defaults to json)")
    common.add_argument("--preset", choices=sorted(_PRESETS),
                        help="named preprocessing recipe")
    common.add_argument("--detrend", action="store_true", default=None,
                        help="remove a linear trend from each series")
    common.add_argument("--median-filter", type=float, dest="median_filter",
                        metavar="K",
                        help="replace points beyond K sds of the median")
    common.add_argument("--truncate", type=int, metavar="N",
                        help="keep only the first N points of each series")
    common.add_argument("-o", "--output", metavar="PATH",
                        help="write the primary output here instead of stdout")

    parser = argparse.ArgumentParser(
        prog="cepdisc",
        description="Cepstral discriminant analysis of replicated time series")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="COMMAND")

    p = sub.add_parser("spectrum", parents=[common],
                       help="estimate one spectrum per replicate")
    p.add_argument("input", help="series file (wide or long CSV)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("cepstra", parents=[common],
                       help="cepstral coefficients from data or a model")
    p.add_argument("input", nargs="?",
                   help="series file (omit when using --theoretical)")
    p.add_argument("--theoretical", metavar="MODEL",
                   help="white, ar1:phi, ma1:theta, or arma11:phi,theta")
    p.add_argument("--sigma2", type=float, default=1.0,
                   help="innovation variance for --theoretical (default 1)")
    p.add_argument("--grid-n", type=int, default=256, dest="grid_n",
                   help="frequency grid size for --theoretical (default 256)")
    p.set_defaults(func=cmd_cepstra)

    p = sub.add_parser("fit", parents=[common],
                       help="fit a discriminant model to labeled series")
    p.add_argument("train", help="labeled series file")
    p.add_argument("--model-out", required=True, metavar="PATH",
                   dest="model_out", help="where to write the model JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("classify", parents=[common],
                       help="predict labels for series with a stored model")
    p.add_argument("model", help="model JSON from fit")
    p.add_argument("input", help="series file")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", parents=[common],
                       help="confusion matrix of a model on labeled series")
    p.add_argument("model", help="model JSON from fit")
    p.add_argument("test", help="labeled series file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("select-l", parents=[common],
                       help="sweep truncation lengths by leave-one-out rate")
    p.add_argument("train", help="labeled series file")
    p.add_argument("--l-min", type=int, default=1, dest="l_min")
    p.add_argument("--l-max", type=int, default=15, dest="l_max")
    p.set_defaults(func=cmd_select_l)

    p = sub.add_parser("mc", parents=[common],
                       help="run a Monte Carlo scenario file")
    p.add_argument("scenario", help="scenario TOML or JSON file")
    p.add_argument("--per-rep", metavar="PATH", dest="per_rep",
                   help="also write the per-repetition CSV here")
    p.set_defaults(func=cmd_mc)

    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return 0
        return 1 if code else 0
    try:
        return int(args.func(args) or 0)
    except UsageError as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return 1
    except ParseError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except NumericalError as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 3
    except CepdiscError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except BrokenPipeError:
        # the reader went away (e.g. piping into head); not our error
        try:
            sys.stdout.close()
        except OSError:
            pass
        return 0
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
