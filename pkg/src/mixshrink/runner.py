"""Experiment orchestration: configs, CSV ingestion, replications and reports.

Seeding
-------
Replication ``r`` of an experiment with base seed ``s`` draws two 64-bit
seeds from ``SeedSequence([s, r])``: the first drives data generation (or
subsampling), the second is the :class:`FitConfig` seed shared by every
method.  Any replication can therefore be rerun on its own.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np

from .core import Dataset, MixtureParams
from .metrics import CRITERIA, ReplicationSummary, evaluate_fit, summarize
from .sem import FitConfig, FitResult, fit
from .simulation import SimScenario, generate_sample, get_scenario

logger = logging.getLogger(__name__)

METHODS = ("ML", "RIDGE", "LT")


class DataError(Exception):
    """Problem with a user-supplied data file; ``code`` names the failure."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RealDataSpec:
    path: str
    response: str
    covariates: tuple[str, ...]
    standardize: bool = True


@dataclass(frozen=True)
class LoadedData:
    dataset: Dataset
    covariates: tuple[str, ...]
    correlations: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def p(self) -> int:
        return self.dataset.p


def load_csv(spec: RealDataSpec) -> LoadedData:
    """Read a comma-separated file with a header row into a :class:`Dataset`.

    Covariates are centered and scaled (sample standard deviation) when
    ``spec.standardize`` is set.  Collinear covariates are accepted; their
    correlation matrix is returned for inspection.
    """
    try:
        with open(spec.path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except OSError as exc:
        raise DataError("UNREADABLE_FILE", f"{spec.path}: {exc.strerror}") from exc
    if not header:
        raise DataError("MISSING_HEADER", f"{spec.path} has no header row")
    header = [h.strip() for h in header]
    for col in (spec.response, *spec.covariates):
        if col not in header:
            raise DataError("MISSING_COLUMN", f"column {col!r} not in {spec.path} (has {header})")
    wanted = [header.index(c) for c in (spec.response, *spec.covariates)]
    values = np.empty((len(rows), len(wanted)))
    for i, row in enumerate(rows):
        line = i + 2
        if len(row) != len(header):
            raise DataError("RAGGED_ROW", f"line {line} has {len(row)} fields, expected {len(header)}")
        for k, col in enumerate(wanted):
            cell = row[col].strip()
            try:
                values[i, k] = float(cell)
            except ValueError:
                raise DataError("NON_NUMERIC",
                                f"line {line}, column {header[col]!r}: {cell!r}") from None
            if not math.isfinite(values[i, k]):
                raise DataError("NON_NUMERIC", f"line {line}, column {header[col]!r}: {cell!r}")
    y = values[:, 0]
    bad = np.flatnonzero((y != 0.0) & (y != 1.0))
    if bad.size:
        raise DataError("NON_BINARY_RESPONSE",
                        f"line {bad[0] + 2}, column {spec.response!r}: {y[bad[0]]:g}")
    Z = values[:, 1:]
    n, p = Z.shape
    if n <= p + 1:
        raise DataError("TOO_FEW_ROWS", f"{n} rows for {p} covariates plus intercept")
    means = Z.mean(axis=0)
    scales = Z.std(axis=0, ddof=1)
    if spec.standardize:
        if np.any(scales == 0):
            const = [spec.covariates[k] for k in np.flatnonzero(scales == 0)]
            raise DataError("CONSTANT_COLUMN", f"cannot standardize constant columns {const}")
        Z = (Z - means) / scales
    corr = np.corrcoef(values[:, 1:], rowvar=False) if p > 1 else np.ones((1, 1))
    return LoadedData(Dataset.from_covariates(Z, y), tuple(spec.covariates),
                      np.atleast_2d(corr), means, scales)


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "simulate"
    scenario: str | None = None
    data: RealDataSpec | None = None
    components: int = 2
    methods: tuple[str, ...] = METHODS
    n_reps: int = 1
    n_workers: int = 1
    seed: int = 0
    out_dir: str = "results"
    train_size: int | None = None
    test_size: int = 50
    max_iters: int = 500
    loglik_tol: float = 1e-6
    min_partition_size: int = 2
    n_restarts: int = 9
    inner_iters: int = 25
    inner_tol: float = 1e-8
    single_newton_step: bool = False
    terminal_iterate: bool = True
    prediction_rule: str = "mixture"
    fixed_covariates: bool = False
    log_replications: bool = False
    label: str | None = None

    def __post_init__(self):
        if self.mode not in ("simulate", "fit-data"):
            raise ConfigError(f"mode must be 'simulate' or 'fit-data', got {self.mode!r}")
        methods = tuple(m.upper() for m in self.methods)
        if not methods:
            raise ConfigError("at least one method is required")
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        object.__setattr__(self, "methods", methods)
        if self.n_reps < 1:
            raise ConfigError("n_reps must be at least 1")
        if self.n_workers < 1:
            raise ConfigError("n_workers must be at least 1")
        if self.mode == "simulate" and not self.scenario:
            raise ConfigError("simulate mode needs a scenario")
        if self.mode == "fit-data" and self.data is None:
            raise ConfigError("fit-data mode needs a data file")
        if self.prediction_rule not in ("mixture", "max_component"):
            raise ConfigError(f"unknown prediction rule {self.prediction_rule!r}")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.mode == "simulate":
            return self.scenario
        return Path(self.data.path).stem

    def fit_config(self, solver: str, seed: int) -> FitConfig:
        return FitConfig(
            max_iters=self.max_iters, loglik_tol=self.loglik_tol,
            min_partition_size=self.min_partition_size, n_restarts=self.n_restarts,
            seed=seed, solver=solver, terminal_iterate=self.terminal_iterate,
            inner_iters=self.inner_iters, inner_tol=self.inner_tol,
            single_newton_step=self.single_newton_step,
        )


# -- config files ------------------------------------------------------------

_BOOL = {"true": True, "yes": True, "1": True, "on": True,
         "false": False, "no": False, "0": False, "off": False}


def _parse_value(key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            return _BOOL[raw.lower()]
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except (KeyError, ValueError):
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


_SCALAR_KINDS = {
    "components": int, "n_reps": int, "n_workers": int, "seed": int, "test_size": int,
    "max_iters": int, "loglik_tol": float, "min_partition_size": int, "n_restarts": int,
    "inner_iters": int, "inner_tol": float, "single_newton_step": bool,
    "terminal_iterate": bool, "fixed_covariates": bool, "log_replications": bool,
    "train_size": int, "mode": str, "scenario": str, "out_dir": str,
    "prediction_rule": str, "label": str,
}
_DATA_KEYS = ("data", "response", "covariates", "standardize")


def parse_config_text(text: str, base_dir: str | os.PathLike = ".") -> ExperimentConfig:
    """Parse flat ``key = value`` lines (``#`` comments) into a config.

    Keys mirror :class:`ExperimentConfig` fields; ``methods`` and
    ``covariates`` are comma-separated; ``data``, ``response``,
    ``covariates`` and ``standardize`` describe a fit-data input.  Relative
    paths resolve against ``base_dir``.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    items = dict(parser["experiment"])
    kwargs: dict = {}
    data_kw = {k: items.pop(k) for k in _DATA_KEYS if k in items}
    if "methods" in items:
        kwargs["methods"] = tuple(m.strip() for m in items.pop("methods").split(",") if m.strip())
    for key, raw in items.items():
        if key not in _SCALAR_KINDS:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[key] = _parse_value(key, raw, _SCALAR_KINDS[key])
    base = Path(base_dir)
    if "data" in data_kw:
        if "response" not in data_kw or "covariates" not in data_kw:
            raise ConfigError("a data file needs 'response' and 'covariates'")
        path = Path(data_kw["data"])
        kwargs["data"] = RealDataSpec(
            str(path if path.is_absolute() else base / path),
            data_kw["response"].strip(),
            tuple(c.strip() for c in data_kw["covariates"].split(",") if c.strip()),
            _parse_value("standardize", data_kw.get("standardize", "true"), bool),
        )
        kwargs.setdefault("mode", "fit-data")
    if "out_dir" in kwargs and not Path(kwargs["out_dir"]).is_absolute():
        kwargs["out_dir"] = str(base / kwargs["out_dir"])
    return ExperimentConfig(**kwargs)


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config_text(text, path.parent)


def expand_grid(path: str | os.PathLike) -> list[ExperimentConfig]:
    """Load every config listed (one path per line) in a grid file."""
    path = Path(path)
    configs = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            entry = Path(line)
            configs.append(load_config(entry if entry.is_absolute() else path.parent / entry))
    return configs


def scenario_config_text(scenario: SimScenario, methods=METHODS, seed: int = 0) -> str:
    """Config file body reproducing one catalog cell at full scale."""
    return "\n".join([
        f"# {scenario.name}: M={scenario.M}, n={scenario.n_train}, phi={scenario.phi}, "
        f"rho={scenario.rho}, grid={scenario.tag}",
        "mode = simulate",
        f"scenario = {scenario.name}",
        f"methods = {','.join(methods)}",
        f"n_reps = {scenario.n_reps}",
        f"seed = {seed}",
        f"out_dir = results/{scenario.name}",
        "",
    ])


# -- replications ------------------------------------------------------------


def replication_seeds(base_seed: int, rep: int) -> tuple[int, int]:
    """(data seed, fit seed) for replication ``rep``."""
    state = np.random.SeedSequence([base_seed, rep]).generate_state(2, dtype=np.uint64)
    return int(state[0]), int(state[1])


@dataclass(frozen=True)
class MethodOutcome:
    method: str
    metrics: dict
    usable: bool
    termination: str
    iterations: int
    failure: str | None = None
    fit: FitResult | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class ReplicationRecord:
    rep: int
    outcomes: tuple[MethodOutcome, ...]


def _fit_one(config: ExperimentConfig, method: str, train: Dataset, M: int, fit_seed: int,
             truth: MixtureParams | None, valid: Dataset) -> MethodOutcome:
    try:
        res = fit(train, M, config.fit_config(method, fit_seed))
    except (ValueError, np.linalg.LinAlgError) as exc:
        return MethodOutcome(method, {}, False, "error", 0, failure=f"error: {exc}")
    if not res.usable:
        return MethodOutcome(method, {}, False, res.termination.value, 0,
                             failure=res.termination.value, fit=res)
    metrics = evaluate_fit(res.params, truth, valid.X, valid.y, config.prediction_rule)
    return MethodOutcome(method, metrics, True, res.termination.value, res.iterations, fit=res)


def _simulate_replication(config: ExperimentConfig, rep: int, fixed_covariates=None):
    scenario = get_scenario(config.scenario)
    data_seed, fit_seed = replication_seeds(config.seed, rep)
    rng = np.random.default_rng(data_seed)
    train = generate_sample(scenario, scenario.n_train, rng, covariates=fixed_covariates)
    valid = generate_sample(scenario, scenario.n_valid, rng)
    outcomes = tuple(
        _fit_one(config, m, train.dataset, scenario.M, fit_seed, scenario.truth, valid.dataset)
        for m in config.methods
    )
    return ReplicationRecord(rep, outcomes)


def _subsample_replication(config: ExperimentConfig, rep: int, data: Dataset,
                           truth: MixtureParams):
    data_seed, fit_seed = replication_seeds(config.seed, rep)
    rng = np.random.default_rng(data_seed)
    order = rng.permutation(data.n)
    train_size = config.train_size or data.n - config.test_size
    train = data.subset(np.sort(order[:train_size]))
    test = data.subset(np.sort(order[train_size:train_size + config.test_size]))
    outcomes = tuple(
        _fit_one(config, m, train, truth.M, fit_seed, truth, test) for m in config.methods
    )
    return ReplicationRecord(rep, outcomes)


def reference_fit(data: Dataset, config: ExperimentConfig) -> FitResult:
    """Full-population ML fit that stands in for the true parameters."""
    res = fit(data, config.components, config.fit_config("ML", config.seed))
    if not res.usable:
        raise DataError("REFERENCE_FIT_FAILED",
                        f"ML fit on the full data stopped with {res.termination.value}")
    return res


def _fixed_covariates(config: ExperimentConfig):
    if not config.fixed_covariates:
        return None
    scenario = get_scenario(config.scenario)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2**32]))
    sample = generate_sample(scenario, scenario.n_train, rng)
    return sample.dataset.X[:, 1:]


def run_replications(config: ExperimentConfig, truth: MixtureParams | None = None,
                     data: Dataset | None = None) -> list[ReplicationRecord]:
    """All replications, returned in replication order regardless of worker count."""
    if config.mode == "simulate":
        work = partial(_simulate_replication, config, fixed_covariates=_fixed_covariates(config))
    else:
        work = partial(_subsample_replication, config, data=data, truth=truth)
    reps = range(config.n_reps)
    if config.n_workers == 1:
        return [work(r) for r in reps]
    with ProcessPoolExecutor(max_workers=config.n_workers) as pool:
        return list(pool.map(work, reps, chunksize=max(1, config.n_reps // (4 * config.n_workers))))


def summarize_records(name: str, records: list[ReplicationRecord],
                      methods: tuple[str, ...]) -> ReplicationSummary:
    criteria: dict = {}
    effective: dict[str, int] = {}
    failures: dict[str, dict[str, int]] = {}
    for m in methods:
        outs = [o for rec in records for o in rec.outcomes if o.method == m]
        used = [o for o in outs if o.usable]
        effective[m] = len(used)
        fail: dict[str, int] = {}
        for o in outs:
            if not o.usable:
                fail[o.failure] = fail.get(o.failure, 0) + 1
        failures[m] = fail
        per: dict = {}
        for crit in CRITERIA:
            if used and all(crit not in o.metrics for o in used):
                continue  # criterion not applicable, e.g. no reference parameters
            values = [o.metrics.get(crit) for o in used]
            per[crit] = summarize(values) if any(v is not None for v in values) else None
        criteria[m] = per
    return ReplicationSummary(name, criteria, len(records), effective, failures)


# -- report files ------------------------------------------------------------

SUMMARY_HEADER = ("scenario", "method", "criterion", "M", "L", "U", "n_used", "n_missing",
                  "n_reps", "n_reps_effective")
PLOT_HEADER = ("scenario", "method", "criterion", "M", "L", "U")


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def write_summary(summary: ReplicationSummary, path: Path) -> Path:
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for m in summary.methods:
            for crit, s in summary.criteria[m].items():
                if s is None:
                    w.writerow([summary.scenario, m, crit, "", "", "", 0, "",
                                summary.n_reps, summary.n_reps_effective[m]])
                else:
                    w.writerow([summary.scenario, m, crit, _num(s.median), _num(s.lower),
                                _num(s.upper), s.n_used, s.n_missing, summary.n_reps,
                                summary.n_reps_effective[m]])
    return path


def emit_plot_data(summaries: list[ReplicationSummary], path: str | os.PathLike) -> Path:
    """Long-format file with one row per (scenario, method, criterion)."""
    if not summaries:
        raise ValueError("no summaries to write")
    path = Path(path)
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_HEADER)
        for summary in summaries:
            for m in summary.methods:
                for crit, s in summary.criteria[m].items():
                    if s is None:
                        w.writerow([summary.scenario, m, crit, "", "", ""])
                    else:
                        w.writerow([summary.scenario, m, crit, _num(s.median), _num(s.lower),
                                    _num(s.upper)])
    return path


def read_plot_data(path: str | os.PathLike) -> list[dict]:
    """Parse an :func:`emit_plot_data` file; empty fields come back as None."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("M", "L", "U"):
            row[key] = float(row[key]) if row[key] != "" else None
    return rows


def write_replication_log(records: list[ReplicationRecord], path: Path) -> Path:
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("rep", "method", "usable", "termination", "iterations", *CRITERIA))
        for rec in records:
            for o in rec.outcomes:
                w.writerow([rec.rep, o.method, int(o.usable), o.termination, o.iterations,
                            *(_num(o.metrics.get(c)) for c in CRITERIA)])
    return path


def _open_out(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def _params_json(params: MixtureParams) -> dict:
    return {"pi": params.pi.tolist(), "betas": params.betas.tolist()}


@dataclass(frozen=True)
class ExperimentOutcome:
    summary: ReplicationSummary
    files: dict[str, Path]
    exit_code: int
    failed_methods: tuple[str, ...] = ()


def run_experiment(config: ExperimentConfig) -> ExperimentOutcome:
    """Run every replication and write ``summary.csv`` and ``plot_data.csv``.

    fit-data mode also writes ``reference.json`` with the full-data ML fit
    used as the truth.  Exit code 3 marks a method whose replications all failed.
    """
    out = Path(config.out_dir)
    files: dict[str, Path] = {}
    truth = data = None
    if config.mode == "fit-data":
        loaded = load_csv(config.data)
        data = loaded.dataset
        if config.train_size and config.train_size + config.test_size > data.n:
            raise DataError("TOO_FEW_ROWS", f"train {config.train_size} + test "
                            f"{config.test_size} exceeds the {data.n} available rows")
        ref = reference_fit(data, config)
        truth = ref.params
        files["reference"] = out / "reference.json"
        with _open_out(files["reference"]) as fh:
            json.dump({"components": config.components, "covariates": list(loaded.covariates),
                       "n": data.n, "correlations": loaded.correlations.tolist(),
                       "loglik": ref.final_loglik, **_params_json(truth)}, fh, indent=2)
            fh.write("\n")
    else:
        try:
            get_scenario(config.scenario)
        except KeyError:
            raise ConfigError(f"scenario {config.scenario!r} not found in the catalog") from None

    records = run_replications(config, truth, data)
    summary = summarize_records(config.name, records, config.methods)
    files["summary"] = write_summary(summary, out / "summary.csv")
    files["plot_data"] = emit_plot_data([summary], out / "plot_data.csv")
    if config.log_replications:
        files["replications"] = write_replication_log(records, out / "replications.csv")
    failed = tuple(m for m in config.methods if summary.n_reps_effective[m] == 0)
    for m in failed:
        logger.error("all %d replications failed for %s: %s", config.n_reps, m,
                     summary.failures[m])
    return ExperimentOutcome(summary, files, 3 if failed else 0, failed)


def fit_full_data(loaded: LoadedData, config: ExperimentConfig) -> dict:
    """Fit every configured method to the whole dataset; JSON-ready result."""
    result = {"n": loaded.n, "p": loaded.p, "covariates": list(loaded.covariates),
              "correlations": loaded.correlations.tolist(), "methods": {}}
    for m in config.methods:
        res = fit(loaded.dataset, config.components, config.fit_config(m, config.seed))
        result["methods"][m] = {
            **_params_json(res.params),
            "loglik": res.final_loglik,
            "iterations": res.iterations,
            "termination": res.termination.value,
            "usable": res.usable,
            "penalties": [{"lambda": lam, "d": d} for lam, d in res.penalty_report],
        }
    return result


def with_overrides(config: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in changes.items() if v is not None})
