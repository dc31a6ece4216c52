"""Stochastic mesh operator: density-ratio weights over simulated nodes.

For a query state x at grid time t and a payoff date T_k > t, the operator
averages payoff values at the family's date-T_k nodes, weighted by the ratio
of the transition density p(T_k - t, x, node) to the mixture density
q(node) = (1/L) sum_ell p(T_k - t, X_ell(t), node).  Inside the window
[T_k - eps, T_k] it short-circuits to the payoff of the query itself, and
past T_k it returns 0.

All density work happens in log space.  The weighted average only ever needs
exp(z - colmax) terms, so the Gaussian normalization constant cancels and a
single exponentiation pass per query block suffices.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .models import ProjectedState

logger = logging.getLogger(__name__)

# query rows per kernel block; keeps the density matrix inside L2-ish cache
QUERY_BLOCK = 2048


def _pairwise_half_sqdist(ua, ub, out=None):
    """0.5 * squared distances between rows of ua (A,d) and ub (B,d) -> (A,B).

    Accumulates one coordinate at a time so each output element is computed
    identically regardless of how the rows are batched.
    """
    a0 = ua[:, 0][:, None]
    b0 = ub[:, 0][None, :]
    if out is None:
        out = np.empty((ua.shape[0], ub.shape[0]))
    np.subtract(b0, a0, out=out)
    np.square(out, out=out)
    for d in range(1, ua.shape[1]):
        diff = ub[:, d][None, :] - ua[:, d][:, None]
        np.square(diff, out=diff)
        out += diff
    out *= 0.5
    return out


def _whitened_pair(model, m, dt, from_states, to_states):
    """Whitened coordinates such that half-squared distances give log-density
    exponents: log p = const(dt) - 0.5 ||u_to - u_from||^2.

    einsum instead of @ so each output row is computed the same way no matter
    how many rows are in the batch.
    """
    W_t = model.whitening(m).T / math.sqrt(dt)
    ua = np.einsum("ik,kj->ij", from_states + model.projected_drift(m) * dt, W_t)
    ub = np.einsum("ik,kj->ij", to_states, W_t)
    return ua, ub


class MeshContext:
    """Immutable bundle of one mesh family, its model, and the window width.

    Denominator data for each (t, T_k, m) triple actually used is computed
    once and cached; it depends only on the family and model, so recomputing
    yields bit-identical values.
    """

    def __init__(self, mesh_family, model, epsilon):
        epsilon = float(epsilon)
        if epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if epsilon >= mesh_family.partition.eps0:
            # tolerated for diagnostics (forces the identity window everywhere)
            logger.warning(
                "epsilon %.6g is not below the minimum payoff-date gap %.6g; "
                "every date inside the window short-circuits to the payoff",
                epsilon, mesh_family.partition.eps0)
        self.family = mesh_family
        self.model = model
        self.epsilon = epsilon
        self._denominators = {}

    @property
    def size(self):
        return self.family.size

    @property
    def partition(self):
        return self.family.partition

    def _maturity_index(self, T_k):
        for k, i in self.partition.maturity_indices.items():
            if self.partition.times[i] == T_k:
                return i
        raise ValueError(f"{T_k!r} is not a payoff date of the partition")

    def denominator_parts(self, m, t, T_k):
        """Cached (nodes, colmax, shifted column sums) for one (t, T_k, m).

        nodes: projected family states at T_k, shape (L, d).
        colmax[j]: max over ell of the log-density exponent from X_ell(t) to
        node j.  sums[j]: sum over ell of exp(exponent - colmax[j]).
        """
        key = (int(m), float(t), float(T_k))
        hit = self._denominators.get(key)
        if hit is not None:
            return hit
        i = self.partition.index_of(t)
        j = self._maturity_index(T_k)
        dt = T_k - t
        positions = self.model.project_batch(self.family.states_at(i), m)
        nodes = self.model.project_batch(self.family.states_at(j), m)
        ua, ub = _whitened_pair(self.model, m, dt, positions, nodes)
        Z = _pairwise_half_sqdist(ua, ub)
        Z *= -1.0
        colmax = Z.max(axis=0)
        np.exp(Z - colmax[None, :], out=Z)
        sums = Z.sum(axis=0)
        parts = (nodes, colmax, sums)
        self._denominators[key] = parts
        return parts


def mesh_denominator(ctx, m, t, T_k, y):
    """Mixture density (1/L) sum_ell p(T_k - t, X_ell(t) projected, y)."""
    if t >= T_k:
        raise ValueError("need t < T_k for the mixture density")
    if isinstance(y, ProjectedState):
        y = ctx.model._projected_values(y, m)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    i = ctx.partition.index_of(t)
    dt = T_k - t
    positions = ctx.model.project_batch(ctx.family.states_at(i), m)
    ua, ub = _whitened_pair(ctx.model, m, dt, positions, y)
    lp = ctx.model.log_density_constant(m, dt) - _pairwise_half_sqdist(ua, ub)[:, 0]
    top = lp.max()
    return float(math.exp(top + math.log(np.exp(lp - top).sum()) - math.log(ctx.size)))


def _apply_window_branches(ctx, f, t, T_k, queries):
    """Handle the identity window and expiry; returns None when the density
    branch applies."""
    if t > T_k:
        return np.zeros(len(queries))
    if t >= T_k - ctx.epsilon:
        return np.asarray(f(queries), dtype=float)
    return None


def mesh_apply_batch(ctx, m, f, t, T_k, queries):
    """Operator values at many query points; bit-identical to scalar calls.

    f maps an (B, d) array of projected states to (B,) payoff values.
    """
    if isinstance(queries, (list, tuple)) and queries and isinstance(queries[0], ProjectedState):
        queries = np.array([q.values for q in queries], dtype=float)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))

    short = _apply_window_branches(ctx, f, t, T_k, queries)
    if short is not None:
        return short

    nodes, colmax, sums = ctx.denominator_parts(m, t, T_k)
    node_weights = np.asarray(f(nodes), dtype=float) / sums
    ua, ub = _whitened_pair(ctx.model, m, T_k - t, queries, nodes)
    out = np.empty(len(queries))
    for a in range(0, len(queries), QUERY_BLOCK):
        Z = _pairwise_half_sqdist(ua[a:a + QUERY_BLOCK], ub)
        Z *= -1.0
        Z -= colmax[None, :]
        np.exp(Z, out=Z)
        # einsum keeps each row's reduction independent of the batch shape
        out[a:a + QUERY_BLOCK] = np.einsum("ij,j->i", Z, node_weights)
    return out


def mesh_apply(ctx, m, f, t, T_k, x):
    """Operator value at a single query point (a ProjectedState or vector)."""
    if isinstance(x, ProjectedState):
        x = ctx.model._projected_values(x, m)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return float(mesh_apply_batch(ctx, m, f, t, T_k, x)[0])
