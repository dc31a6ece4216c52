"""Gaussian factor models: exact transition laws and analytic densities.

A model state is split into a shared macro block followed by one block per
contract factor.  Pricing code only ever sees the projected pair
(macro block, block m), so every projected pair must have a positive
definite covariance for its transition density to exist.  The full state
evolves as correlated arithmetic Brownian motion with drift, which keeps
one-step sampling exact at any step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG_TWO_PI = math.log(2.0 * math.pi)


class ModelConfigError(ValueError):
    """Raised for inconsistent model parameters or config files."""


@dataclass(frozen=True)
class ProjectedState:
    """State restricted to the macro block plus contract block m (1-based)."""

    m: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


def _psd_factor(cov):
    """Lower-triangular-ish factor A with A @ A.T = cov, tolerating rank deficiency."""
    if not np.any(cov):
        return np.zeros_like(cov)
    w, v = np.linalg.eigh(cov)
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)


class GaussianModel:
    """Arithmetic Brownian factor model with exact Gaussian transitions.

    Parameters
    ----------
    macro_dim : size of the shared macro block (may be 0).
    contract_dims : per-contract block sizes, one entry per factor m=1..M.
    drift : length-N drift per unit time.
    cov : N x N covariance per unit time (includes macro/contract cross terms).
    initial_state : length-N starting point.
    allow_degenerate : accept projected blocks whose covariance is not
        positive definite (e.g. a zero-noise drift model used in tests).
        Densities are then unavailable for those blocks; sampling still works.
    """

    def __init__(self, macro_dim, contract_dims, drift, cov, initial_state,
                 allow_degenerate=False):
        self.macro_dim = int(macro_dim)
        self.contract_dims = tuple(int(d) for d in contract_dims)
        if self.macro_dim < 0:
            raise ModelConfigError("macro_dim must be >= 0")
        if not self.contract_dims or any(d < 1 for d in self.contract_dims):
            raise ModelConfigError("each contract block needs dimension >= 1")
        self.n_contracts = len(self.contract_dims)
        self.total_dim = self.macro_dim + sum(self.contract_dims)

        self.drift = np.array(drift, dtype=float).reshape(-1)
        self.cov = np.array(cov, dtype=float)
        self.initial_state = np.array(initial_state, dtype=float).reshape(-1)
        if self.drift.shape != (self.total_dim,):
            raise ModelConfigError("drift length must equal total_dim")
        if self.cov.shape != (self.total_dim, self.total_dim):
            raise ModelConfigError("cov must be total_dim x total_dim")
        if self.initial_state.shape != (self.total_dim,):
            raise ModelConfigError("initial_state length must equal total_dim")
        if not np.allclose(self.cov, self.cov.T, rtol=0.0, atol=1e-12):
            raise ModelConfigError("cov must be symmetric")

        # block index ranges; block m occupies [offsets[m-1], offsets[m])
        offsets = [self.macro_dim]
        for d in self.contract_dims:
            offsets.append(offsets[-1] + d)
        self._offsets = tuple(offsets)

        self._proj_idx = []
        self._proj_chol = []      # None marks a degenerate block
        self._proj_whiten = []
        self._proj_logdet = []
        for m in range(1, self.n_contracts + 1):
            idx = np.r_[0:self.macro_dim,
                        self._offsets[m - 1]:self._offsets[m]]
            sub = self.cov[np.ix_(idx, idx)]
            try:
                chol = np.linalg.cholesky(sub)
            except np.linalg.LinAlgError:
                if not allow_degenerate:
                    raise ModelConfigError(
                        f"projected covariance for factor {m} is not positive definite")
                chol = None
            self._proj_idx.append(idx)
            self._proj_chol.append(chol)
            if chol is None:
                self._proj_whiten.append(None)
                self._proj_logdet.append(None)
            else:
                self._proj_whiten.append(np.linalg.inv(chol))
                self._proj_logdet.append(2.0 * float(np.sum(np.log(np.diag(chol)))))

        try:
            self._full_factor = np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError:
            if not allow_degenerate:
                raise ModelConfigError("full covariance is not positive definite")
            self._full_factor = _psd_factor(self.cov)

        for arr in (self.drift, self.cov, self.initial_state):
            arr.flags.writeable = False

    # -- projections ------------------------------------------------------

    def projected_dim(self, m):
        self._check_m(m)
        return self.macro_dim + self.contract_dims[m - 1]

    def projected_indices(self, m):
        self._check_m(m)
        return self._proj_idx[m - 1]

    def project(self, state, m):
        """Restrict a full state vector to the (macro, block m) pair."""
        state = np.asarray(state, dtype=float)
        if state.shape[-1] != self.total_dim:
            raise ModelConfigError("state has wrong dimension")
        return ProjectedState(m, state[..., self.projected_indices(m)])

    def project_batch(self, states, m):
        """Rows of `states` restricted to the projected pair, as a plain array."""
        states = np.asarray(states, dtype=float)
        return states[..., self.projected_indices(m)]

    def projected_drift(self, m):
        return self.drift[self.projected_indices(m)]

    def whitening(self, m):
        """Inverse Cholesky factor W of the unit-time projected covariance.

        z = W (dx - mu dt) / sqrt(dt) is standard normal under the block-m
        transition law.  Raises for degenerate blocks.
        """
        W = self._proj_whiten[m - 1]
        if W is None:
            raise ModelConfigError(
                f"factor {m} has degenerate covariance; no density available")
        return W

    def log_density_constant(self, m, dt):
        """log of the Gaussian normalization for the block-m transition over dt."""
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        logdet = self._proj_logdet[m - 1]
        if logdet is None:
            raise ModelConfigError(
                f"factor {m} has degenerate covariance; no density available")
        d = self.projected_dim(m)
        return -0.5 * (d * (LOG_TWO_PI + math.log(dt)) + logdet)

    # -- densities ---------------------------------------------------------

    def log_transition_density(self, m, dt, frm, to):
        frm = self._projected_values(frm, m)
        to = self._projected_values(to, m)
        W = self.whitening(m)
        z = (to - frm - self.projected_drift(m) * dt) @ W.T / math.sqrt(dt)
        return self.log_density_constant(m, dt) - 0.5 * np.sum(z * z, axis=-1)

    def transition_density(self, m, dt, frm, to):
        """Density of the projected pair after time dt, evaluated at `to`.

        Computed in log space and exponentiated here at the boundary.
        """
        return np.exp(self.log_transition_density(m, dt, frm, to))

    # -- sampling ----------------------------------------------------------

    def sample_step(self, dt, state, rng, block="full"):
        """Exact one-step draw over dt from `state` (vector or row batch).

        `block` selects the full state or a single projected pair m.
        """
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        state = np.asarray(state, dtype=float)
        if block == "full":
            factor = self._full_factor
            mu = self.drift
        else:
            m = int(block)
            self._check_m(m)
            chol = self._proj_chol[m - 1]
            if chol is None:
                factor = np.zeros((self.projected_dim(m),) * 2)
            else:
                factor = chol
            mu = self.projected_drift(m)
        z = rng.standard_normal(state.shape)
        return state + mu * dt + math.sqrt(dt) * (z @ factor.T)

    # -- helpers -----------------------------------------------------------

    def _check_m(self, m):
        if not 1 <= m <= self.n_contracts:
            raise IndexError(f"contract factor index {m} out of range 1..{self.n_contracts}")

    def _projected_values(self, x, m):
        if isinstance(x, ProjectedState):
            if x.m != m:
                raise ModelConfigError(f"projected state is for factor {x.m}, not {m}")
            values = x.values
        else:
            values = np.asarray(x, dtype=float)
        if values.shape[-1] != self.projected_dim(m):
            raise ModelConfigError("projected state has wrong dimension")
        return values


def project(model, state, m):
    """Module-level alias for GaussianModel.project."""
    return model.project(state, m)


def brownian_motion_1d():
    """Standard 1-D Brownian motion started at 0 (single contract factor)."""
    return GaussianModel(macro_dim=0, contract_dims=[1], drift=[0.0],
                         cov=[[1.0]], initial_state=[0.0])


# -- flat key-value config files -------------------------------------------

def read_flat_config(path):
    """Parse `key = v1 v2 ...` lines; '#' starts a comment; repeats accumulate."""
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ModelConfigError(f"{path}:{lineno}: expected 'key = values'")
            key, _, rest = line.partition("=")
            entries.setdefault(key.strip(), []).append(rest.split())
    return entries


def _single(entries, key, path):
    if key not in entries:
        raise ModelConfigError(f"{path}: missing required key '{key}'")
    if len(entries[key]) != 1:
        raise ModelConfigError(f"{path}: key '{key}' given more than once")
    return entries[key][0]


def load_model_config(path):
    """Build a GaussianModel from a flat key-value file.

    Required keys: macro_dim, contract_dims, drift, cov (row-major),
    initial_state.  Optional: allow_degenerate (0 or 1).
    """
    entries = read_flat_config(path)
    macro_dim = int(_single(entries, "macro_dim", path)[0])
    contract_dims = [int(v) for v in _single(entries, "contract_dims", path)]
    drift = [float(v) for v in _single(entries, "drift", path)]
    cov_flat = [float(v) for v in _single(entries, "cov", path)]
    initial_state = [float(v) for v in _single(entries, "initial_state", path)]
    n = macro_dim + sum(contract_dims)
    if len(cov_flat) != n * n:
        raise ModelConfigError(f"{path}: cov needs {n * n} entries, got {len(cov_flat)}")
    allow_degenerate = False
    if "allow_degenerate" in entries:
        allow_degenerate = bool(int(_single(entries, "allow_degenerate", path)[0]))
    return GaussianModel(macro_dim, contract_dims, drift,
                         np.array(cov_flat).reshape(n, n), initial_state,
                         allow_degenerate=allow_degenerate)
