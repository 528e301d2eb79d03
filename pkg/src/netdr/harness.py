"""Configuration-driven Monte Carlo experiment runner.

A run is described by a flat :class:`ExperimentConfig` that serializes to
an INI document, so every experiment is reproducible from a text file and
a seed. Each replication draws its own graph and primitives from disjoint
substreams of the run seed, simulates selection and outcomes once, and
runs every configured estimator on the same data. Replications execute
independently (optionally across worker processes); aggregation is single
threaded and fixed-order, so results do not depend on worker count or
scheduling.

True effect in this design is zero (outcomes do not depend on
treatments), so the mean point estimate is reported directly as bias.
"""

from __future__ import annotations

import configparser
import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .dgp import OutcomeParams, SelectionParams, draw_primitives, simulate_outcomes, simulate_selection
from .estimator import EstimatorConfig, estimate_effect
from .exposure import ExposureSpec
from .graph import generate_er, generate_rgg
from .rng import stream

_GNN_FAMILY = "gnn"
_GLM_FAMILIES = ("glm_order_1", "glm_order_2", "glm_order_3")
_Z95 = NormalDist().inv_cdf(0.975)

# substream roles within one replication
_GRAPH, _PRIMITIVES, _FIT = 0, 1, 2

CSV_COLUMNS = (
    "seed",
    "estimator",
    "tau_hat",
    "hac_se",
    "iid_se",
    "b_n",
    "treated_count",
    "trained_epochs",
    "warnings",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: design, data generating process, and estimators.

    ``estimators`` lists families; the ``gnn`` family expands to one
    estimator per entry of ``depths`` while the ``glm_order_k`` families
    ignore depth. ``bandwidth`` of -1 applies the data-driven rule.
    """

    graph_model: str = "er"  # er | rgg
    n: int = 1000
    kappa: float = 5.0
    replications: int = 500
    seed: int = 0
    workers: int = 1
    estimators: tuple = ("gnn",)
    depths: tuple = (2,)
    treat_arm: int = 1
    control_arm: int = 0
    sel_alpha: float = -0.5
    sel_beta: float = 1.5
    sel_delta: float = 1.0
    sel_gamma: float = -1.0
    out_alpha: float = 0.5
    out_beta: float = 0.8
    out_delta: float = 10.0
    out_gamma: float = -1.0
    trim_lo: float = 0.01
    trim_hi: float = 0.99
    bandwidth: int = -1
    epochs: int = 200
    learning_rate: float = 0.01
    hidden_width: int = 8
    architecture: str = "pna"
    aggregators: str = "scaled"

    def __post_init__(self):
        if self.graph_model not in ("er", "rgg"):
            raise ValueError(f"unknown graph model {self.graph_model!r}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not self.estimators:
            raise ValueError("no estimators configured")
        for name in self.estimators:
            if name != _GNN_FAMILY and name not in _GLM_FAMILIES:
                raise ValueError(f"unknown estimator {name!r}")
        if _GNN_FAMILY in self.estimators and not self.depths:
            raise ValueError("gnn estimators need at least one depth")
        for d in self.depths:
            if d not in (1, 2, 3):
                raise ValueError("depths must lie in {1, 2, 3}")
        if self.treat_arm == self.control_arm:
            raise ValueError("exposure arms must differ")

    def selection_params(self) -> SelectionParams:
        return SelectionParams(
            alpha=self.sel_alpha, beta=self.sel_beta, delta=self.sel_delta, gamma=self.sel_gamma
        )

    def outcome_params(self) -> OutcomeParams:
        return OutcomeParams(
            alpha=self.out_alpha, beta=self.out_beta, delta=self.out_delta, gamma=self.out_gamma
        )


def estimator_ids(config: ExperimentConfig) -> tuple:
    """Concrete estimator ids in fixed run order."""
    ids = []
    for name in config.estimators:
        if name == _GNN_FAMILY:
            ids.extend(f"gnn_l{d}" for d in config.depths)
        else:
            ids.append(name)
    return tuple(ids)


def _estimator_config(config: ExperimentConfig, est_id: str) -> EstimatorConfig:
    common = dict(
        trim_lo=config.trim_lo,
        trim_hi=config.trim_hi,
        bandwidth=config.bandwidth,
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        hidden_width=config.hidden_width,
        architecture=config.architecture,
        aggregators=config.aggregators,
    )
    if est_id.startswith("gnn_l"):
        return EstimatorConfig(nuisance="gnn", depth=int(est_id[5:]), **common)
    return EstimatorConfig(nuisance="glm", glm_order=int(est_id[-1]), **common)


# ---------------------------------------------------------------------------
# configuration file format


_SECTIONS = (
    ("experiment", ("graph_model", "n", "kappa", "replications", "seed", "workers", "estimators", "depths")),
    ("exposure", ("treat_arm", "control_arm")),
    ("selection", ("sel_alpha", "sel_beta", "sel_delta", "sel_gamma")),
    ("outcome", ("out_alpha", "out_beta", "out_delta", "out_gamma")),
    ("estimation", ("trim_lo", "trim_hi", "bandwidth")),
    ("training", ("epochs", "learning_rate", "hidden_width", "architecture", "aggregators")),
)

# DGP sections drop the field-name prefix in the file
_KEY_OF = {f: f.split("_", 1)[1] if f.startswith(("sel_", "out_")) else f for s, fs in _SECTIONS for f in fs}

_INT_FIELDS = {"n", "replications", "seed", "workers", "treat_arm", "control_arm", "bandwidth", "epochs", "hidden_width"}
_FLOAT_FIELDS = {"kappa", "sel_alpha", "sel_beta", "sel_delta", "sel_gamma", "out_alpha", "out_beta", "out_delta", "out_gamma", "trim_lo", "trim_hi", "learning_rate"}


def _format_value(name: str, value) -> str:
    if name == "estimators":
        return ", ".join(value)
    if name == "depths":
        return ", ".join(str(d) for d in value)
    return str(value)


def _parse_value(name: str, text: str):
    if name == "estimators":
        return tuple(part.strip() for part in text.split(",") if part.strip())
    if name == "depths":
        return tuple(int(part) for part in text.split(",") if part.strip())
    if name in _INT_FIELDS:
        return int(text)
    if name in _FLOAT_FIELDS:
        return float(text)
    return text


def config_to_ini(config: ExperimentConfig) -> str:
    """Render a config as a sectioned key-value document."""
    parser = configparser.ConfigParser()
    for section, fields in _SECTIONS:
        parser[section] = {_KEY_OF[f]: _format_value(f, getattr(config, f)) for f in fields}
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def config_from_ini(text: str) -> ExperimentConfig:
    """Parse a config document; absent keys keep their defaults."""
    parser = configparser.ConfigParser()
    parser.read_string(text)
    known = {section: {_KEY_OF[f]: f for f in fields} for section, fields in _SECTIONS}
    overrides = {}
    for section in parser.sections():
        if section not in known:
            raise ValueError(f"unknown config section {section!r}")
        for key, raw in parser[section].items():
            if key not in known[section]:
                raise ValueError(f"unknown key {key!r} in section {section!r}")
            name = known[section][key]
            overrides[name] = _parse_value(name, raw)
    return ExperimentConfig(**overrides)


# ---------------------------------------------------------------------------
# per-replication records


@dataclass(frozen=True)
class RepRecord:
    """One estimator's result on one replication.

    ``seed`` is the replication's substream index under the run seed, the
    pair that reproduces the draw.
    """

    seed: int
    estimator: str
    tau_hat: float
    hac_se: float
    iid_se: float
    b_n: int
    treated_count: int
    trained_epochs: int
    warnings: str = ""


def write_records(records, path) -> None:
    """Write per-replication results as CSV; floats round-trip exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [r.seed, r.estimator, repr(r.tau_hat), repr(r.hac_se), repr(r.iid_se),
                 r.b_n, r.treated_count, r.trained_epochs, r.warnings]
            )


def read_records(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError("unexpected record columns")
        return [
            RepRecord(
                seed=int(row["seed"]),
                estimator=row["estimator"],
                tau_hat=float(row["tau_hat"]),
                hac_se=float(row["hac_se"]),
                iid_se=float(row["iid_se"]),
                b_n=int(row["b_n"]),
                treated_count=int(row["treated_count"]),
                trained_epochs=int(row["trained_epochs"]),
                warnings=row["warnings"],
            )
            for row in reader
        ]


# ---------------------------------------------------------------------------
# running


def _run_replication(config: ExperimentConfig, rep: int):
    gen = generate_er if config.graph_model == "er" else generate_rgg
    g = gen(config.n, config.kappa, stream(config.seed, rep, _GRAPH))
    draw = draw_primitives(config.n, stream(config.seed, rep, _PRIMITIVES))
    selected = simulate_selection(g, draw.X, draw.nu, config.selection_params())
    Y = simulate_outcomes(g, draw.X, selected.D, draw.eps, config.outcome_params())
    spec_t = ExposureSpec(arm=config.treat_arm)
    spec_c = ExposureSpec(arm=config.control_arm)
    records = []
    for k, est_id in enumerate(estimator_ids(config)):
        est_cfg = _estimator_config(config, est_id)
        report = estimate_effect(
            g, draw.X, selected.D, Y, spec_t, spec_c, est_cfg, stream(config.seed, rep, _FIT, k)
        )
        records.append(
            RepRecord(
                seed=rep,
                estimator=est_id,
                tau_hat=report.tau_hat,
                hac_se=report.hac_se,
                iid_se=report.iid_se,
                b_n=report.bandwidth,
                treated_count=report.treated_count,
                trained_epochs=config.epochs if est_cfg.nuisance == "gnn" else 0,
                warnings="; ".join(report.warnings),
            )
        )
    return records


@dataclass(frozen=True)
class TableRow:
    """Aggregate of one estimator across replications.

    ``bias`` is the mean point estimate (the target effect is zero by
    construction). ``se_oracle`` is the across-replication standard
    deviation of the point estimate; its coverage column applies that
    single width to every replication's estimate.
    """

    estimator: str
    n: int
    depth: int
    bias: float
    cover_hac: float
    cover_oracle: float
    cover_iid: float
    se_hac: float
    se_oracle: float
    se_iid: float
    treated_mean: float
    replications: int

    def __post_init__(self):
        for name in ("cover_hac", "cover_oracle", "cover_iid"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} outside [0, 1]")


@dataclass(frozen=True)
class ExperimentResult:
    rows: tuple
    records: tuple
    failures: tuple


def _depth_of(est_id: str) -> int:
    return int(est_id[5:]) if est_id.startswith("gnn_l") else 0


def aggregate_records(records, n: int):
    """Fold per-replication records into one table row per estimator.

    Works from the records alone so the table is recomputable from the
    CSV; estimator order follows first appearance.
    """
    order = []
    groups = {}
    for r in records:
        if r.estimator not in groups:
            order.append(r.estimator)
            groups[r.estimator] = []
        groups[r.estimator].append(r)
    rows = []
    for est_id in order:
        grp = groups[est_id]
        taus = np.array([r.tau_hat for r in grp])
        hac = np.array([r.hac_se for r in grp])
        iid = np.array([r.iid_se for r in grp])
        se_oracle = float(np.std(taus, ddof=1)) if len(grp) > 1 else 0.0
        rows.append(
            TableRow(
                estimator=est_id,
                n=n,
                depth=_depth_of(est_id),
                bias=float(taus.mean()),
                cover_hac=float(np.mean(np.abs(taus) <= _Z95 * hac)),
                cover_oracle=float(np.mean(np.abs(taus) <= _Z95 * se_oracle)),
                cover_iid=float(np.mean(np.abs(taus) <= _Z95 * iid)),
                se_hac=float(hac.mean()),
                se_oracle=se_oracle,
                se_iid=float(iid.mean()),
                treated_mean=float(np.mean([r.treated_count for r in grp])),
                replications=len(grp),
            )
        )
    return rows


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Execute every replication and aggregate.

    Failed replications are recorded and skipped; more than one percent
    of them aborts the run. Results are identical for any worker count.
    """
    reps = range(config.replications)
    outcomes = {}
    if config.workers == 1:
        for rep in reps:
            try:
                outcomes[rep] = _run_replication(config, rep)
            except Exception as exc:  # noqa: BLE001 - isolate replication failures
                outcomes[rep] = f"replication {rep}: {exc}"
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {rep: pool.submit(_run_replication, config, rep) for rep in reps}
            for rep, fut in futures.items():
                try:
                    outcomes[rep] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    outcomes[rep] = f"replication {rep}: {exc}"

    records, failures = [], []
    for rep in reps:  # fixed-order reduction
        out = outcomes[rep]
        if isinstance(out, str):
            failures.append(out)
        else:
            records.extend(out)
    if len(failures) * 100 > config.replications:
        raise RuntimeError(
            f"{len(failures)} of {config.replications} replications failed: {failures[0]}"
        )
    rows = aggregate_records(records, config.n)
    return ExperimentResult(rows=tuple(rows), records=tuple(records), failures=tuple(failures))


# ---------------------------------------------------------------------------
# table output


_TABLE_COLUMNS = (
    "estimator", "n", "depth", "bias", "cover_hac", "cover_oracle", "cover_iid",
    "se_hac", "se_oracle", "se_iid", "treated_mean", "replications",
)
_TABLE_FLOATS = {
    "bias", "cover_hac", "cover_oracle", "cover_iid", "se_hac", "se_oracle", "se_iid", "treated_mean",
}


def emit_table(rows, fmt: str = "csv") -> str:
    """Render table rows as csv (exact, parse-back safe) or markdown."""
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(_TABLE_COLUMNS)
        for row in rows:
            writer.writerow(
                [repr(getattr(row, c)) if c in _TABLE_FLOATS else getattr(row, c) for c in _TABLE_COLUMNS]
            )
        return out.getvalue()
    if fmt == "markdown":
        lines = [
            "| " + " | ".join(_TABLE_COLUMNS) + " |",
            "|" + "|".join("---" for _ in _TABLE_COLUMNS) + "|",
        ]
        for row in rows:
            cells = [
                f"{getattr(row, c):.4f}" if c in _TABLE_FLOATS else str(getattr(row, c))
                for c in _TABLE_COLUMNS
            ]
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def parse_table(text: str):
    """Inverse of ``emit_table(fmt='csv')``."""
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for raw in reader:
        kwargs = {}
        for c in _TABLE_COLUMNS:
            if c in _TABLE_FLOATS:
                kwargs[c] = float(raw[c])
            elif c == "estimator":
                kwargs[c] = raw[c]
            else:
                kwargs[c] = int(raw[c])
        rows.append(TableRow(**kwargs))
    return rows
