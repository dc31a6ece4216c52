"""CVA estimators over a stochastic mesh, plus analytic and nested references.

Two estimators of the default-loss integral are provided.  The exposure
estimator (c1) pushes the mesh value of the netted portfolio through the
positive part.  The indicator estimator (c2) realizes payoffs along an
independent evaluation family and uses the mesh only to decide whether the
netted time-t value is nonnegative, so any mesh error that keeps the correct
sign costs nothing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .mesh import MeshContext, mesh_apply, mesh_apply_batch
from .paths import family_seed_sequence, simulate_family, simulate_family_pooled

logger = logging.getLogger(__name__)

SQRT_TWO_PI = math.sqrt(2.0 * math.pi)

# limit of the unit-horizon Brownian example: integral of E[max(B_t,0)] dt
C_LIMIT_BROWNIAN = 2.0 / (3.0 * SQRT_TWO_PI)

_ORACLE_OUTER_BLOCK = 512


# -- portfolio ---------------------------------------------------------------

@dataclass(frozen=True)
class Contract:
    """One netted position: factor index m, maturity index k (both 1-based),
    and a discounted payoff on the projected space.

    The payoff must map an (B, d) array of projected states to (B,) values,
    row by row (no coupling across rows).  Discounting is already inside the
    payoff; nothing downstream multiplies by a discount factor.
    """

    m: int
    k: int
    payoff: Callable[[np.ndarray], np.ndarray]
    lipschitz_bound: float = 1.0
    label: str = ""


@dataclass(frozen=True)
class Portfolio:
    contracts: tuple
    maturities: tuple

    def __post_init__(self):
        maturities = tuple(float(T) for T in self.maturities)
        object.__setattr__(self, "maturities", maturities)
        object.__setattr__(self, "contracts", tuple(self.contracts))
        if not maturities or any(T <= 0 for T in maturities):
            raise ValueError("maturities must be positive")
        if any(b <= a for a, b in zip(maturities, maturities[1:])):
            raise ValueError("maturities must be strictly increasing")
        for c in self.contracts:
            if not 1 <= c.k <= len(maturities):
                raise ValueError(f"contract maturity index {c.k} out of range")

    def maturity_of(self, contract):
        return self.maturities[contract.k - 1]


def linear_payoff(weights):
    """Payoff x -> w . x on the projected space."""
    w = np.asarray(weights, dtype=float)

    def payoff(x):
        return np.einsum("...d,d->...", np.asarray(x, dtype=float), w)

    return payoff


def call_payoff(coord, strike):
    """Payoff x -> max(x[coord] - strike, 0)."""

    def payoff(x):
        return np.maximum(np.asarray(x, dtype=float)[..., coord] - strike, 0.0)

    return payoff


def put_payoff(coord, strike):
    """Payoff x -> max(strike - x[coord], 0)."""

    def payoff(x):
        return np.maximum(strike - np.asarray(x, dtype=float)[..., coord], 0.0)

    return payoff


# -- hazard / loss weight ----------------------------------------------------

@dataclass(frozen=True)
class HazardLossSpec:
    """Nonnegative weight g(t, x) turning exposure into default-loss density.

    g receives the scalar time and an (B, N) array of full states and must
    return (B,) values (a scalar is broadcast).  Purity and smoothness are
    the caller's obligation; they are not checked here.
    """

    g: Callable[[float, np.ndarray], np.ndarray]
    description: str = ""

    def evaluate(self, t, states):
        out = np.asarray(self.g(float(t), states), dtype=float)
        if out.ndim == 0:
            out = np.full(len(states), float(out))
        return out


def unit_hazard():
    """Weight g identically 1 (pure discretized positive exposure)."""
    return HazardLossSpec(g=lambda t, x: 1.0, description="unit weight")


def constant_hazard(loss, lam):
    """Constant default intensity lam with fixed loss fraction:
    g(t, x) = loss * lam * exp(-lam t)."""
    return HazardLossSpec(
        g=lambda t, x: loss * lam * math.exp(-lam * t),
        description=f"constant hazard loss={loss} lambda={lam}",
    )


# -- window width schedules --------------------------------------------------

@dataclass(frozen=True)
class EpsilonSchedule:
    """Window width eps_L = min(c0 * L^-exponent, 0.999 * eps0).

    The exponent depends on the estimator variant, the largest projected
    dimension n_tilde, a smoothness order ell0, and a rate knob delta in
    (0, 1).  Larger n_tilde or ell0 shrink the window more slowly.
    """

    delta: float
    c0: float
    ell0: int
    n_tilde: int
    variant: str
    eps0: float
    alpha: float = field(init=False)
    exponent: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.c0 <= 0.0:
            raise ValueError("c0 must be positive")
        if self.ell0 < 1 or self.n_tilde < 1:
            raise ValueError("ell0 and n_tilde must be >= 1")
        if self.eps0 <= 0.0:
            raise ValueError("eps0 must be positive")
        load = (1.0 + self.delta) * (self.n_tilde + 1) * self.ell0
        if self.variant == "c1":
            alpha = max(load / 4.0, 1.0)
            exponent = (1.0 + self.delta) / (2.0 * (1.0 + alpha))
        elif self.variant == "c2":
            alpha = max(load / 2.0, 1.0)
            exponent = (1.0 + self.delta) / (2.0 * alpha + 1.0)
        else:
            raise ValueError("variant must be 'c1' or 'c2'")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "exponent", exponent)


def default_schedule(model, portfolio, partition, variant,
                     delta=0.5, c0=0.05, ell0=1):
    n_tilde = max(model.projected_dim(c.m) for c in portfolio.contracts) \
        if portfolio.contracts else 1
    return EpsilonSchedule(delta=delta, c0=c0, ell0=ell0, n_tilde=n_tilde,
                           variant=variant, eps0=partition.eps0)


def epsilon_for(schedule, L):
    """Window width for a mesh of size L, clamped below the payoff-date gap."""
    if L < 1:
        raise ValueError("L must be >= 1")
    raw = schedule.c0 * float(L) ** (-schedule.exponent)
    cap = 0.999 * schedule.eps0
    if raw > cap:
        logger.warning(
            "window width %.6g exceeds 0.999 * eps0 = %.6g; clamping", raw, cap)
        return cap
    return raw


# -- netted portfolio value through the mesh ---------------------------------

def _alive_contracts(portfolio, partition, t_i):
    """Contracts still paying after t_i: maturity at or past the next grid date."""
    i = partition.index_of(t_i)
    if i >= partition.n:
        return []
    t_next = float(partition.times[i + 1])
    return [c for c in portfolio.contracts if portfolio.maturity_of(c) >= t_next]


def netted_mesh_values(ctx, portfolio, t_i, states):
    """Mesh value of the netted portfolio at each row of `states` (B, N)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    total = np.zeros(len(states))
    for c in _alive_contracts(portfolio, ctx.partition, t_i):
        queries = ctx.model.project_batch(states, c.m)
        total += mesh_apply_batch(ctx, c.m, c.payoff, t_i,
                                  portfolio.maturity_of(c), queries)
    return total


def netted_mesh_value(ctx, portfolio, t_i, x):
    """Scalar netted mesh value at one full state x."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for c in _alive_contracts(portfolio, ctx.partition, t_i):
        total += mesh_apply(ctx, c.m, c.payoff, t_i,
                            portfolio.maturity_of(c), ctx.model.project(x, c.m))
    return total


# -- results -----------------------------------------------------------------

@dataclass(frozen=True)
class EstimateResult:
    """Point estimate with per-path statistics and a configuration echo.

    stddev uses the (count - 1) divisor and is None when count < 2; the
    standard error of `value` is stddev / sqrt(count).
    """

    value: float
    count: int
    mean: float
    stddev: Optional[float]
    config: dict

    @property
    def standard_error(self):
        if self.stddev is None:
            return None
        return self.stddev / math.sqrt(self.count)


def _result(per_path, config):
    per_path = np.asarray(per_path, dtype=float)
    count = len(per_path)
    value = float(per_path.mean())
    sd = float(per_path.std(ddof=1)) if count > 1 else None
    return EstimateResult(value=value, count=count, mean=value, stddev=sd,
                          config=config)


def _check_portfolio_partition(portfolio, partition):
    for T in portfolio.maturities:
        if not any(partition.times[i] == T for i in partition.maturity_indices.values()):
            raise ValueError(f"portfolio maturity {T} is not a payoff date of the partition")


# -- estimators ----------------------------------------------------------------

def estimate_c1(model, portfolio, g, partition, L, schedule=None, seed=0, *,
                epsilon=None):
    """Exposure estimator: time-integrated positive part of netted mesh values.

    One evaluation family drives the outer average; the mesh nodes behind the
    conditional-value operator are redrawn independently at every grid date,
    which keeps the node-sampling noise of different dates uncorrelated and
    the replication variance near the intrinsic Monte Carlo level.

    `epsilon` overrides the scheduled window width (diagnostics only).
    """
    if L < 2:
        raise ValueError("mesh needs L >= 2")
    _check_portfolio_partition(portfolio, partition)
    if schedule is None:
        schedule = default_schedule(model, portfolio, partition, "c1")
    eps = float(epsilon) if epsilon is not None else epsilon_for(schedule, L)

    eval_family = simulate_family(model, partition, L, seed, "c1/eval")
    dts = partition.dts
    acc = np.zeros(L)
    for i in range(partition.n):
        t_i = float(partition.times[i])
        mesh_family = simulate_family_pooled(model, partition, L, seed, f"c1/mesh/{i}")
        ctx = MeshContext(mesh_family, model, eps)
        states = eval_family.states_at(i)
        vals = netted_mesh_values(ctx, portfolio, t_i, states)
        acc += dts[i] * g.evaluate(t_i, states) * np.maximum(vals, 0.0)

    return _result(acc, {
        "estimator": "c1", "L": int(L), "L0": None, "n": partition.n,
        "epsilon": eps, "seed": int(seed),
    })


def estimate_c2(model, portfolio, g, partition, L, L0, schedule=None, seed=0, *,
                epsilon=None, sign_transform=None):
    """Indicator estimator: realized payoffs gated by the netted mesh sign.

    The mesh family (size L) only decides whether the netted time-t value is
    nonnegative; payoffs are realized along an independent evaluation family
    of size L0.  `sign_transform`, if given, is applied to the netted mesh
    values before the sign test; any strictly increasing map with
    transform(0) == 0 leaves the result unchanged.
    """
    if L < 2:
        raise ValueError("mesh needs L >= 2")
    if L0 < 1:
        raise ValueError("evaluation family needs L0 >= 1")
    _check_portfolio_partition(portfolio, partition)
    if schedule is None:
        schedule = default_schedule(model, portfolio, partition, "c2")
    eps = float(epsilon) if epsilon is not None else epsilon_for(schedule, L)

    mesh_family = simulate_family(model, partition, L, seed, "c2/mesh")
    ctx = MeshContext(mesh_family, model, eps)
    eval_family = simulate_family(model, partition, L0, seed, "c2/eval")

    # realized discounted payoff of every contract at its own maturity
    realized = []
    for c in portfolio.contracts:
        idx = partition.index_of(portfolio.maturity_of(c))
        states = ctx.model.project_batch(eval_family.states_at(idx), c.m)
        realized.append(np.asarray(c.payoff(states), dtype=float))

    dts = partition.dts
    acc = np.zeros(L0)
    for i in range(partition.n):
        t_i = float(partition.times[i])
        t_next = float(partition.times[i + 1])
        alive = [j for j, c in enumerate(portfolio.contracts)
                 if portfolio.maturity_of(c) >= t_next]
        if not alive:
            continue
        states = eval_family.states_at(i)
        vals = netted_mesh_values(ctx, portfolio, t_i, states)
        if sign_transform is not None:
            vals = np.asarray(sign_transform(vals), dtype=float)
        payoff_sum = np.zeros(L0)
        for j in alive:
            payoff_sum += realized[j]
        acc += dts[i] * g.evaluate(t_i, states) * payoff_sum * (vals >= 0.0)

    return _result(acc, {
        "estimator": "c2", "L": int(L), "L0": int(L0), "n": partition.n,
        "epsilon": eps, "seed": int(seed),
    })


# -- references ----------------------------------------------------------------

def reference_c_delta_brownian(n):
    """Discretized value for the unit-horizon Brownian example on t_i = i/n:
    sum_i (1/n) E[max(B(t_i), 0)] with E[max(B(t), 0)] = sqrt(t / (2 pi))."""
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(n, dtype=float)
    return float(np.sqrt(i / n).sum() / (n * SQRT_TWO_PI))


def nested_mc_oracle(model, portfolio, g, partition, L_outer, L_inner, seed=0):
    """Brute-force reference: inner Monte Carlo for each conditional value.

    For every outer state at every grid date, the netted continuation value
    is estimated by a fresh inner sample (exact transitions jumping payoff
    date to payoff date) and the positive part is applied to the inner mean.
    """
    if L_outer < 1 or L_inner < 1:
        raise ValueError("sample counts must be >= 1")
    _check_portfolio_partition(portfolio, partition)

    outer = simulate_family(model, partition, L_outer, seed, "oracle/outer")
    rng = np.random.Generator(np.random.PCG64(family_seed_sequence(seed, "oracle/inner")))

    by_maturity = {}
    for c in portfolio.contracts:
        by_maturity.setdefault(portfolio.maturity_of(c), []).append(c)
    all_dates = sorted(by_maturity)

    dts = partition.dts
    acc = np.zeros(L_outer)
    for i in range(partition.n):
        t_i = float(partition.times[i])
        t_next = float(partition.times[i + 1])
        dates = [T for T in all_dates if T >= t_next]
        if not dates:
            continue
        states = outer.states_at(i)
        weight = dts[i] * g.evaluate(t_i, states)
        for a in range(0, L_outer, _ORACLE_OUTER_BLOCK):
            block = states[a:a + _ORACLE_OUTER_BLOCK]
            bo = len(block)
            cur = np.broadcast_to(block[:, None, :], (bo, L_inner, model.total_dim)).copy()
            netted = np.zeros((bo, L_inner))
            prev = t_i
            for T in dates:
                dt = T - prev
                z = rng.standard_normal(cur.shape)
                cur += model.drift * dt + math.sqrt(dt) * (z @ model._full_factor.T)
                prev = T
                for c in by_maturity[T]:
                    proj = model.project_batch(cur, c.m)
                    netted += c.payoff(proj.reshape(bo * L_inner, -1)).reshape(bo, L_inner)
            inner_mean = netted.mean(axis=1)
            acc[a:a + bo] += weight[a:a + bo] * np.maximum(inner_mean, 0.0)

    return _result(acc, {
        "estimator": "oracle", "L": int(L_outer), "L0": int(L_inner),
        "n": partition.n, "epsilon": None, "seed": int(seed),
    })


# -- indicator gap inequality --------------------------------------------------

def indicator_gap_bound_check(a, b, c, theta):
    """Whether c|a| |1{b>=0} - 1{a>=0}| <= c|b-a| 1{|b-a|>=theta} + c theta 1{|a|<theta}.

    Accepts scalars or broadcastable arrays; returns bool or a bool array.
    The inequality holds for all real a, b and nonnegative c, positive theta,
    so this is a property-test predicate.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0.0):
        raise ValueError("theta must be positive")
    if np.any(c < 0.0):
        raise ValueError("c must be nonnegative")
    gap = np.abs(b - a)
    lhs = c * np.abs(a) * np.abs((b >= 0.0).astype(float) - (a >= 0.0).astype(float))
    rhs = c * gap * (gap >= theta) + c * theta * (np.abs(a) < theta)
    result = lhs <= rhs
    if result.ndim == 0:
        return bool(result)
    return result
