"""Replication studies, convergence sweeps, and CSV reporting.

The harness turns a run configuration into repeated estimator executions with
independent per-replication seeds, aggregates means and unbiased standard
deviations per mesh size, and writes fixed-format CSV tables.  Replications
use common random numbers across mesh sizes and estimators: replication r
always derives its seed from (base seed, r), so variance differences between
rows are not masked by seed differences.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .estimators import (
    C_LIMIT_BROWNIAN,
    Contract,
    HazardLossSpec,
    Portfolio,
    call_payoff,
    constant_hazard,
    default_schedule,
    estimate_c1,
    estimate_c2,
    linear_payoff,
    nested_mc_oracle,
    put_payoff,
    reference_c_delta_brownian,
    unit_hazard,
)
from .models import GaussianModel, brownian_motion_1d, load_model_config, read_flat_config
from .paths import build_partition

logger = logging.getLogger(__name__)

ESTIMATOR_CHOICES = ("c1", "c2", "both", "oracle")

CSV_HEADER = "L,average1,average2,stddev1,stddev2"


# -- scenarios -----------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Everything an estimator call needs besides sample counts and seeds."""

    model: GaussianModel
    portfolio: Portfolio
    g: HazardLossSpec
    partition: object
    name: str = ""


def brownian_example(n=100):
    """Unit-horizon Brownian scenario: one contract paying B(1), weight 1,
    uniform grid with n steps.  The discretized value is
    reference_c_delta_brownian(n), with limit 2 / (3 sqrt(2 pi))."""
    model = brownian_motion_1d()
    portfolio = Portfolio(
        contracts=(Contract(m=1, k=1, payoff=linear_payoff([1.0]), label="identity"),),
        maturities=(1.0,),
    )
    partition = build_partition((1.0,), n=n)
    return Scenario(model=model, portfolio=portfolio, g=unit_hazard(),
                    partition=partition, name="brownian-example")


_BUILTINS = {"brownian-example": brownian_example}


def builtin_scenario(name, n=100):
    if name not in _BUILTINS:
        raise ValueError(
            f"unknown builtin scenario {name!r}; available: {sorted(_BUILTINS)}")
    return _BUILTINS[name](n=n)


def load_portfolio_config(path, model):
    """Read a portfolio and hazard weight from a flat key-value file.

    Keys:
      maturities = T1 T2 ...               strictly increasing, positive
      contract   = m k kind params...      kind: linear w1..wd | call coord K
                                                 | put coord K
      hazard     = unit | constant loss lam   (default: unit)
    """
    entries = read_flat_config(path)
    if "maturities" not in entries:
        raise ValueError(f"{path}: missing 'maturities'")
    if len(entries["maturities"]) != 1:
        raise ValueError(f"{path}: 'maturities' given more than once")
    maturities = tuple(float(tok) for tok in entries["maturities"][0])

    contracts = []
    for tokens in entries.get("contract", []):
        if len(tokens) < 3:
            raise ValueError(f"{path}: contract needs at least 'm k kind'")
        m, k, kind = int(tokens[0]), int(tokens[1]), tokens[2]
        params = [float(tok) for tok in tokens[3:]]
        if not 1 <= m <= model.n_contracts:
            raise ValueError(f"{path}: contract index m={m} out of range")
        d = model.projected_dim(m)
        if kind == "linear":
            if len(params) != d:
                raise ValueError(
                    f"{path}: linear payoff for m={m} needs {d} weights, got {len(params)}")
            payoff = linear_payoff(params)
        elif kind in ("call", "put"):
            if len(params) != 2:
                raise ValueError(f"{path}: {kind} payoff needs 'coord strike'")
            coord = int(params[0])
            if not 0 <= coord < d:
                raise ValueError(f"{path}: coordinate {coord} out of range for m={m}")
            factory = call_payoff if kind == "call" else put_payoff
            payoff = factory(coord, params[1])
        else:
            raise ValueError(f"{path}: unknown payoff kind {kind!r}")
        contracts.append(Contract(m=m, k=k, payoff=payoff, label=" ".join(tokens[2:])))

    hazard_entries = entries.get("hazard", [["unit"]])
    if len(hazard_entries) != 1:
        raise ValueError(f"{path}: 'hazard' given more than once")
    htok = hazard_entries[0]
    if htok[0] == "unit":
        g = unit_hazard()
    elif htok[0] == "constant":
        if len(htok) != 3:
            raise ValueError(f"{path}: constant hazard needs 'loss lam'")
        g = constant_hazard(float(htok[1]), float(htok[2]))
    else:
        raise ValueError(f"{path}: unknown hazard kind {htok[0]!r}")

    return Portfolio(contracts=tuple(contracts), maturities=maturities), g


# -- run configuration -----------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """One study: which scenario, which estimator, which sample sizes.

    `portfolio` is a builtin scenario name or a portfolio config path; in the
    latter case `model` must point at a model config file.
    """

    model: Optional[str] = None
    portfolio: str = "brownian-example"
    estimator: str = "c2"
    n: int = 100
    L: tuple = (100,)
    L0: int = 10000
    reps: int = 100
    delta: float = 0.5
    c0: float = 0.05
    ell0: int = 1
    seed: int = 0
    out: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "L", tuple(int(v) for v in self.L))
        if self.estimator not in ESTIMATOR_CHOICES:
            raise ValueError(f"estimator must be one of {ESTIMATOR_CHOICES}")
        if not self.L:
            raise ValueError("L list must be nonempty")
        if any(v < 1 for v in self.L) or any(
                b <= a for a, b in zip(self.L, self.L[1:])):
            raise ValueError("L list must be ascending positive integers")
        if self.n < 1 or self.L0 < 1 or self.reps < 1 or self.ell0 < 1:
            raise ValueError("n, L0, reps, ell0 must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.c0 <= 0.0:
            raise ValueError("c0 must be positive")


def resolve_scenario(config):
    """Build the Scenario a config points at (builtin name or file pair)."""
    if config.portfolio in _BUILTINS:
        if config.model is not None:
            logger.warning("builtin scenario %r ignores the model file %r",
                           config.portfolio, config.model)
        return builtin_scenario(config.portfolio, n=config.n)
    if config.model is None:
        raise ValueError("a portfolio config file requires a model config file")
    model = load_model_config(config.model)
    portfolio, g = load_portfolio_config(config.portfolio, model)
    partition = build_partition(portfolio.maturities, n=config.n)
    return Scenario(model=model, portfolio=portfolio, g=g, partition=partition,
                    name=config.portfolio)


def _schedule_kwargs(config):
    return {"delta": config.delta, "c0": config.c0, "ell0": config.ell0}


def replication_seed(base_seed, rep):
    """Seed of replication `rep`: stable, independent across reps, shared by
    every (L, estimator) cell of the study (common random numbers)."""
    return int(np.random.SeedSequence((int(base_seed), int(rep)))
               .generate_state(1, np.uint64)[0])


# -- replication studies -----------------------------------------------------------

@dataclass(frozen=True)
class ReplicationRow:
    L: int
    mean_c1: Optional[float]
    mean_c2: Optional[float]
    sd_c1: Optional[float]
    sd_c2: Optional[float]


@dataclass(frozen=True)
class ReplicationReport:
    """Aggregated study output plus the raw per-replication values.

    `values` maps (L, estimator_label) to the tuple of replication values in
    replication order; estimator_label is "c1" or "c2" (oracle runs land in
    the "c1" column, both estimate the same quantity).
    """

    rows: tuple
    values: dict
    config: dict
    wall_time: float


def _run_single(estimator, scenario, config, L, seed):
    kw = _schedule_kwargs(config)
    if estimator == "c1":
        schedule = default_schedule(scenario.model, scenario.portfolio,
                                    scenario.partition, "c1", **kw)
        return estimate_c1(scenario.model, scenario.portfolio, scenario.g,
                           scenario.partition, L, schedule=schedule, seed=seed)
    if estimator == "c2":
        schedule = default_schedule(scenario.model, scenario.portfolio,
                                    scenario.partition, "c2", **kw)
        return estimate_c2(scenario.model, scenario.portfolio, scenario.g,
                           scenario.partition, L, config.L0, schedule=schedule,
                           seed=seed)
    if estimator == "oracle":
        return nested_mc_oracle(scenario.model, scenario.portfolio, scenario.g,
                                scenario.partition, L, config.L0, seed=seed)
    raise ValueError(f"unknown estimator {estimator!r}")


def run_replication_study(config, scenario=None):
    """Run config.reps independently seeded estimations for every L.

    Replication r of every cell uses replication_seed(config.seed, r), so the
    study is deterministic given the base seed and directly comparable across
    mesh sizes.  Returns a ReplicationReport with one row per L.
    """
    if scenario is None:
        scenario = resolve_scenario(config)
    if config.estimator == "both":
        estimators = ("c1", "c2")
    else:
        estimators = (config.estimator,)

    start = time.perf_counter()
    values = {(L, est): [] for L in config.L for est in estimators}
    for r in range(config.reps):
        seed = replication_seed(config.seed, r)
        for L in config.L:
            for est in estimators:
                result = _run_single(est, scenario, config, L, seed)
                values[(L, est)].append(result.value)
        logger.info("replication %d/%d done", r + 1, config.reps)

    def stats(vals):
        arr = np.asarray(vals)
        mean = float(arr.mean())
        sd = float(arr.std(ddof=1)) if len(arr) > 1 else None
        return mean, sd

    rows = []
    for L in config.L:
        cells = {"c1": (None, None), "c2": (None, None)}
        for est in estimators:
            column = "c2" if est == "c2" else "c1"
            cells[column] = stats(values[(L, est)])
        rows.append(ReplicationRow(L=L, mean_c1=cells["c1"][0],
                                   mean_c2=cells["c2"][0],
                                   sd_c1=cells["c1"][1], sd_c2=cells["c2"][1]))

    wall = time.perf_counter() - start
    frozen = {key: tuple(vals) for key, vals in values.items()}
    return ReplicationReport(rows=tuple(rows), values=frozen,
                             config=asdict(config), wall_time=wall)


# -- convergence studies -----------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    value: float
    error: float


@dataclass(frozen=True)
class ConvergenceReport:
    """Discretization error of the Brownian example value versus grid size.

    `slope` is d log(error) / d log(1/n) from a least-squares fit, so +1
    means first-order decay.
    """

    rows: tuple
    slope: float


def run_convergence_study(ns):
    """Tabulate |reference_c_delta_brownian(n) - limit| and fit the decay rate."""
    ns = sorted(int(n) for n in ns)
    if len(ns) < 3:
        raise ValueError("need at least 3 grid sizes")
    if len(set(ns)) != len(ns) or ns[0] < 1:
        raise ValueError("grid sizes must be distinct and >= 1")
    rows = []
    for n in ns:
        value = reference_c_delta_brownian(n)
        rows.append(ConvergenceRow(n=n, value=value,
                                   error=abs(value - C_LIMIT_BROWNIAN)))
    log_inv_n = np.log(1.0 / np.array(ns, dtype=float))
    log_err = np.log([row.error for row in rows])
    slope = float(np.polyfit(log_inv_n, log_err, 1)[0])
    return ConvergenceReport(rows=tuple(rows), slope=slope)


# -- CSV output ---------------------------------------------------------------------

def _fmt(x):
    return "" if x is None else f"{x:.10f}"


def format_csv(report):
    """Replication report as CSV text: fixed header, 10 fractional digits,
    empty fields where a statistic is undefined (single replication, or an
    estimator that was not run)."""
    lines = [CSV_HEADER]
    for row in report.rows:
        lines.append(",".join([str(row.L), _fmt(row.mean_c1), _fmt(row.mean_c2),
                               _fmt(row.sd_c1), _fmt(row.sd_c2)]))
    return "\n".join(lines) + "\n"


def emit_csv(report, path):
    with open(path, "w") as fh:
        fh.write(format_csv(report))


def format_convergence_csv(report):
    lines = ["n,value,error"]
    for row in report.rows:
        lines.append(f"{row.n},{row.value:.10f},{row.error:.10f}")
    return "\n".join(lines) + "\n"


def emit_convergence_csv(report, path):
    with open(path, "w") as fh:
        fh.write(format_convergence_csv(report))


def parse_csv(text):
    """Round-trip parse of format_csv output: list of dict rows, None for
    empty fields."""
    lines = text.strip().split("\n")
    if lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected header {lines[0]!r}")
    keys = CSV_HEADER.split(",")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(keys):
            raise ValueError(f"malformed row {line!r}")
        row = {"L": int(parts[0])}
        for key, part in zip(keys[1:], parts[1:]):
            row[key] = None if part == "" else float(part)
        rows.append(row)
    return rows
