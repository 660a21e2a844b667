"""Domain lattices, multi-indexing and the CP-with-Hadamard head model.

A head tensor stores one linear head of width ``q`` per domain of a
``d_1 x ... x d_M`` grid. Under the rank-K model every head is

    w_t = sum_k  prod_m  alpha[k, m][t_m]        (products are elementwise)

so each coordinate slice of the tensor has CP rank at most ``K``. The
factor vectors are shared across coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class GridIndexError(IndexError):
    """Raised for out-of-range flat or multi indices."""


@dataclass(frozen=True)
class DomainGrid:
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 1 or any(d < 1 for d in dims):
            raise ValueError(f"grid dims must be a non-empty list of positive ints, got {self.dims!r}")
        object.__setattr__(self, "dims", dims)

    @property
    def M(self) -> int:
        return len(self.dims)

    @property
    def D(self) -> int:
        return math.prod(self.dims)

    def all_indices(self) -> list[tuple[int, ...]]:
        return [multi_index(self, t) for t in range(self.D)]

    def index_array(self) -> np.ndarray:
        """(D, M) integer array; row t is the multi-index of flat index t."""
        return np.array(np.unravel_index(np.arange(self.D), self.dims)).T.reshape(self.D, self.M)


MultiIndex = tuple  # tuple of M non-negative ints


def flat_index(grid: DomainGrid, idx: Sequence[int]) -> int:
    """Row-major flat index (last mode varies fastest)."""
    if len(idx) != grid.M:
        raise GridIndexError(f"multi-index {tuple(idx)} has length {len(idx)}, grid has M={grid.M}")
    t = 0
    for i, d in zip(idx, grid.dims):
        i = int(i)
        if not 0 <= i < d:
            raise GridIndexError(f"multi-index {tuple(idx)} out of bounds for dims {grid.dims}")
        t = t * d + i
    return t


def multi_index(grid: DomainGrid, t: int) -> tuple[int, ...]:
    t = int(t)
    if not 0 <= t < grid.D:
        raise GridIndexError(f"flat index {t} out of range [0, {grid.D})")
    out = []
    for d in reversed(grid.dims):
        t, r = divmod(t, d)
        out.append(r)
    return tuple(reversed(out))


@dataclass(frozen=True)
class CPFactors:
    """Rank-K factors. ``modes[m]`` has shape (K, d_m, q); row ``modes[m][k, l]``
    is the factor vector of rank term k at level l of mode m."""

    grid: DomainGrid
    modes: tuple[np.ndarray, ...]

    def __post_init__(self):
        modes = tuple(np.asarray(a, dtype=np.float64) for a in self.modes)
        if len(modes) != self.grid.M:
            raise ValueError(f"expected {self.grid.M} mode factors, got {len(modes)}")
        K, _, q = modes[0].shape
        for m, a in enumerate(modes):
            if a.shape != (K, self.grid.dims[m], q):
                raise ValueError(f"mode {m} factor has shape {a.shape}, expected {(K, self.grid.dims[m], q)}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"mode {m} factor has non-finite entries")
        object.__setattr__(self, "modes", modes)

    @property
    def K(self) -> int:
        return self.modes[0].shape[0]

    @property
    def q(self) -> int:
        return self.modes[0].shape[2]

    def factor(self, k: int, m: int) -> np.ndarray:
        """The d_m x q matrix for rank term k, mode m."""
        return self.modes[m][k]

    @classmethod
    def random(cls, grid: DomainGrid, K: int, q: int, rng: np.random.Generator, low=-1.0, high=1.0) -> "CPFactors":
        return cls(grid, tuple(rng.uniform(low, high, size=(K, d, q)) for d in grid.dims))


@dataclass(frozen=True)
class HeadTensor:
    grid: DomainGrid
    values: np.ndarray  # (D, q)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != self.grid.D:
            raise ValueError(f"head tensor must have shape (D={self.grid.D}, q), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("head tensor has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def q(self) -> int:
        return self.values.shape[1]

    def coordinate_slice(self, j: int) -> np.ndarray:
        return self.values[:, j].reshape(self.grid.dims)

    def head(self, idx) -> np.ndarray:
        t = idx if isinstance(idx, (int, np.integer)) else flat_index(self.grid, idx)
        return self.values[t]


def cp_reconstruct_head(factors: CPFactors, idx: Sequence[int]) -> np.ndarray:
    flat_index(factors.grid, idx)  # bounds check
    prod = np.ones((factors.K, factors.q))
    for m, level in enumerate(idx):
        prod = prod * factors.modes[m][:, level, :]
    return prod.sum(axis=0)


def cp_materialize(factors: CPFactors) -> HeadTensor:
    K, q = factors.K, factors.q
    acc = np.ones((K, 1, q))
    for a in factors.modes:
        # (K, n, 1, q) * (K, 1, d_m, q): appending a mode on the right keeps row-major order
        acc = (acc[:, :, None, :] * a[:, None, :, :]).reshape(K, -1, q)
    return HeadTensor(factors.grid, acc.sum(axis=0))


def additive_to_cp(shared: np.ndarray, per_mode: Sequence[np.ndarray]) -> CPFactors:
    """Rank-(M+1) factors for heads ``u + sum_m beta_m[t_m]``.

    Term m < M carries ``beta_m`` on mode m and ones elsewhere; the last term
    carries ``u`` (repeated over the levels of mode 0) and ones elsewhere.
    """
    u = np.asarray(shared, dtype=np.float64)
    betas = [np.asarray(b, dtype=np.float64) for b in per_mode]
    q = u.shape[0]
    if u.ndim != 1:
        raise ValueError("shared vector must be 1-d")
    for m, b in enumerate(betas):
        if b.ndim != 2 or b.shape[1] != q:
            raise ValueError(f"per-mode matrix {m} has shape {b.shape}, expected (d_{m}, {q})")
    grid = DomainGrid(tuple(b.shape[0] for b in betas))
    M = grid.M
    modes = [np.ones((M + 1, d, q)) for d in grid.dims]
    for m, b in enumerate(betas):
        modes[m][m] = b
    modes[0][M] = np.broadcast_to(u, (grid.dims[0], q))
    return CPFactors(grid, tuple(modes))


def pdim_bound(K: int, d: int, M: int) -> float:
    """Pseudo-dimension bound K*d*M^2*ln(8*e*d) for rank-K tensors of shape d^M."""
    for name, v in (("K", K), ("d", d), ("M", M)):
        if v < 1:
            raise ValueError(f"{name} must be >= 1, got {v}")
    return K * d * M**2 * math.log(8 * math.e * d)
