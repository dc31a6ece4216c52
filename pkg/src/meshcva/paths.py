"""Time partitions and reproducible simulation of independent path families."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .models import ModelConfigError


@dataclass(frozen=True)
class Partition:
    """Grid 0 = t_0 < ... < t_n = T containing every payoff date.

    eps0 is the smallest gap between consecutive payoff dates, counting 0 as
    a date; it bounds how wide the identity window around each date may be.
    """

    times: np.ndarray
    maturities: tuple
    maturity_indices: dict = field(repr=False)
    mesh_width: float = 0.0
    eps0: float = 0.0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        times.flags.writeable = False
        object.__setattr__(self, "times", times)

    @property
    def n(self):
        return len(self.times) - 1

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def dts(self):
        return np.diff(self.times)

    def index_of(self, t):
        """Exact grid index of t; raises if t is not a grid point."""
        i = int(np.searchsorted(self.times, t))
        if i >= len(self.times) or self.times[i] != t:
            raise ValueError(f"time {t!r} is not on the partition grid")
        return i


def build_partition(maturities, n=None, spacing=None):
    """Uniform grid over [0, max maturity] refined so each maturity is a grid point.

    Exactly one of `n` (number of uniform steps) or `spacing` (target step
    width) must be given.  Uniform points landing within floating-point noise
    of a maturity are snapped onto the exact maturity value.
    """
    maturities = tuple(float(T) for T in maturities)
    if not maturities:
        raise ValueError("need at least one maturity")
    if any(T <= 0.0 for T in maturities):
        raise ValueError("maturities must be positive")
    if any(b <= a for a, b in zip(maturities, maturities[1:])):
        raise ValueError("maturities must be strictly increasing")
    if (n is None) == (spacing is None):
        raise ValueError("give exactly one of n or spacing")

    horizon = maturities[-1]
    if n is not None:
        if n < 1:
            raise ValueError("n must be >= 1")
        base = np.linspace(0.0, horizon, int(n) + 1)
        step = horizon / n
    else:
        if spacing <= 0.0:
            raise ValueError("spacing must be positive")
        steps = max(1, int(np.ceil(horizon / spacing)))
        base = np.linspace(0.0, horizon, steps + 1)
        step = horizon / steps

    # snap near-coincident grid points onto the maturity, then insert the rest
    tol = 1e-9 * max(1.0, horizon)
    times = list(base)
    for T in maturities:
        j = int(np.argmin(np.abs(base - T)))
        if abs(base[j] - T) <= tol:
            times[j] = T
        else:
            times.append(T)
    times = np.array(sorted(set(times)), dtype=float)

    maturity_indices = {}
    for k, T in enumerate(maturities, start=1):
        i = int(np.searchsorted(times, T))
        assert times[i] == T
        maturity_indices[k] = i

    gaps = np.diff(np.concatenate([[0.0], np.asarray(maturities)]))
    return Partition(
        times=times,
        maturities=maturities,
        maturity_indices=maturity_indices,
        mesh_width=float(np.max(np.diff(times))),
        eps0=float(np.min(gaps)),
    )


@dataclass(frozen=True)
class PathFamily:
    """L paths sampled on a partition: array of shape (L, n+1, state dim)."""

    paths: np.ndarray
    partition: Partition
    seed: int
    family_tag: str

    def __post_init__(self):
        self.paths.flags.writeable = False

    @property
    def size(self):
        return self.paths.shape[0]

    def states_at(self, i):
        """All path states at grid index i, shape (L, dim)."""
        return self.paths[:, i, :]


def _tag_entropy(tag):
    """Stable 64-bit entropy word for a family tag."""
    digest = hashlib.blake2b(str(tag).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def family_seed_sequence(seed, tag):
    return np.random.SeedSequence((int(seed), _tag_entropy(tag)))


def simulate_family(model, partition, L, seed, tag):
    """Simulate L independent paths on the grid by exact chained transitions.

    Path ell draws from its own substream derived from (seed, tag, ell), so
    enlarging L leaves the first paths unchanged.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    n_steps = partition.n
    dts = partition.dts
    children = family_seed_sequence(seed, tag).spawn(int(L))
    dim = model.total_dim
    factor_t = model._full_factor.T
    drift_part = np.outer(dts, model.drift)
    sqrt_dts = np.sqrt(dts)[:, None]

    paths = np.empty((int(L), n_steps + 1, dim))
    paths[:, 0, :] = model.initial_state
    for ell, child in enumerate(children):
        gen = np.random.Generator(np.random.PCG64(child))
        z = gen.standard_normal((n_steps, dim))
        increments = drift_part + sqrt_dts * (z @ factor_t)
        np.cumsum(increments, axis=0, out=increments)
        paths[ell, 1:, :] = model.initial_state + increments
    return PathFamily(paths=paths, partition=partition, seed=int(seed),
                      family_tag=str(tag))


def simulate_family_pooled(model, partition, L, seed, tag):
    """Faster single-stream variant: path ell is row ell of one pooled draw.

    Row blocks of the pooled stream are still independent across ell and the
    first rows do not change when L grows, but per-path substreams are not
    separately derivable.  Used where many short-lived families are needed.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    n_steps = partition.n
    dts = partition.dts
    gen = np.random.Generator(np.random.PCG64(family_seed_sequence(seed, tag)))
    dim = model.total_dim

    z = gen.standard_normal((int(L), n_steps, dim))
    increments = z @ model._full_factor.T
    increments *= np.sqrt(dts)[None, :, None]
    increments += np.outer(dts, model.drift)[None, :, :]
    np.cumsum(increments, axis=1, out=increments)

    paths = np.empty((int(L), n_steps + 1, dim))
    paths[:, 0, :] = model.initial_state
    paths[:, 1:, :] = model.initial_state + increments
    return PathFamily(paths=paths, partition=partition, seed=int(seed),
                      family_tag=str(tag))


# -- debugging dump / reload -------------------------------------------------

def dump_paths(family, path):
    """Write a family as CSV rows `ell,i,dim,value` with loss-free floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# seed={family.seed} tag={family.family_tag}\n")
        fh.write("# times=" + " ".join(f"{t:.17g}" for t in family.partition.times) + "\n")
        fh.write("ell,i,dim,value\n")
        L, n_plus_1, dim = family.paths.shape
        for ell in range(L):
            for i in range(n_plus_1):
                for d in range(dim):
                    fh.write(f"{ell},{i},{d},{family.paths[ell, i, d]:.17g}\n")


def load_paths(path):
    """Read a dump_paths file back into (paths array, times array)."""
    times = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if line.startswith("# times="):
                times = np.array([float(v) for v in line[len("# times="):].split()])
                continue
            if not line or line.startswith("#") or line.startswith("ell,"):
                continue
            ell, i, d, value = line.split(",")
            rows.append((int(ell), int(i), int(d), float(value)))
    if not rows:
        raise ModelConfigError(f"{path}: no path rows found")
    L = max(r[0] for r in rows) + 1
    n_plus_1 = max(r[1] for r in rows) + 1
    dim = max(r[2] for r in rows) + 1
    paths = np.empty((L, n_plus_1, dim))
    for ell, i, d, value in rows:
        paths[ell, i, d] = value
    return paths, times
