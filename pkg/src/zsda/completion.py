"""Observation masks and rank-K completion of partially observed head tensors.

The solver fits a single set of CP factors (shared across the ``q``
coordinates) to the observed rows by alternating least squares on the
squared residual. Restarts are ranked by the mean absolute residual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor_core import CPFactors, DomainGrid, HeadTensor, cp_materialize, multi_index, pdim_bound


class UnsupportedDesignError(ValueError):
    pass


@dataclass(frozen=True)
class ObservationMask:
    grid: DomainGrid
    seen: tuple[int, ...]

    def __post_init__(self):
        seen = tuple(int(t) for t in self.seen)
        if len(seen) < 1:
            raise ValueError("mask must contain at least one domain")
        if len(set(seen)) != len(seen):
            raise ValueError("mask indices must be distinct")
        if any(not 0 <= t < self.grid.D for t in seen):
            raise ValueError(f"mask indices must lie in [0, {self.grid.D})")
        object.__setattr__(self, "seen", seen)

    @property
    def T(self) -> int:
        return len(self.seen)

    @property
    def unseen(self) -> tuple[int, ...]:
        s = set(self.seen)
        return tuple(t for t in range(self.grid.D) if t not in s)

    def contains(self, t: int) -> bool:
        return t in self.seen

    def observed_levels(self) -> list[set[int]]:
        levels = [set() for _ in range(self.grid.M)]
        for t in self.seen:
            for m, l in enumerate(multi_index(self.grid, t)):
                levels[m].add(l)
        return levels

    def fully_identified(self) -> bool:
        return all(len(lv) == d for lv, d in zip(self.observed_levels(), self.grid.dims))


def sample_mask(grid: DomainGrid, T: int, seed) -> ObservationMask:
    """T domains drawn uniformly without replacement, returned in increasing order."""
    if not 1 <= T <= grid.D:
        raise ValueError(f"T must satisfy 1 <= T <= D={grid.D}, got {T}")
    rng = np.random.default_rng(seed)
    return ObservationMask(grid, tuple(sorted(rng.choice(grid.D, size=T, replace=False).tolist())))


def diagonal_mask(grid: DomainGrid) -> ObservationMask:
    if grid.M != 2 or grid.dims[0] != grid.dims[1]:
        raise UnsupportedDesignError(f"diagonal design needs a square 2-mode grid, got dims {grid.dims}")
    d = grid.dims[0]
    return ObservationMask(grid, tuple(i * d + i for i in range(d)))


@dataclass(frozen=True)
class CompletionConfig:
    K: int = 1
    max_sweeps: int = 500
    tol: float = 1e-9
    restarts: int = 5
    init_scale: float | None = None  # None: (RMS of observed entries) ** (1/M)
    ridge: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        errs = []
        if self.K < 1:
            errs.append("K must be >= 1")
        if self.tol <= 0:
            errs.append("tol must be > 0")
        if self.restarts < 1:
            errs.append("restarts must be >= 1")
        if self.ridge < 0:
            errs.append("ridge must be >= 0")
        if self.max_sweeps < 0:
            errs.append("max_sweeps must be >= 0")
        if errs:
            raise ValueError("; ".join(errs))


@dataclass
class CompletionResult:
    factors: CPFactors
    objective_l1: float
    objective_l2: float
    sweeps_used: int
    converged: bool
    fully_identified: bool
    overparameterized: bool
    history: list[float] = field(default_factory=list)  # L2 objective per sweep, restart with lowest total L1
    restart_l1: list[float] = field(default_factory=list)  # one entry per restart actually run

    def materialize(self) -> HeadTensor:
        return cp_materialize(self.factors)


def _observed_rows(observed, mask: ObservationMask) -> np.ndarray:
    if isinstance(observed, HeadTensor):
        Y = observed.values[list(mask.seen)]
    else:
        Y = np.asarray(observed, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape[0] != mask.T:
            raise ValueError(f"observed has {Y.shape[0]} rows, mask has T={mask.T}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("observed head tensor contains non-finite values")
    return Y


def _predict(modes, idx):
    prod = modes[0][:, idx[:, 0], :]
    for m in range(1, len(modes)):
        prod = prod * modes[m][:, idx[:, m], :]
    return prod.sum(axis=0)  # (T, q)


def _als(Y, idx, dims, K, cfg: CompletionConfig, rng, scale):
    T, q = Y.shape
    M = len(dims)
    modes = [rng.normal(scale=scale, size=(K, d, q)) for d in dims]
    onehots = [np.eye(d)[idx[:, m]].T for m, d in enumerate(dims)]  # (d_m, T) level indicators
    eye = np.eye(K)

    def objective():
        return float(np.mean((_predict(modes, idx) - Y) ** 2))

    prev = objective()
    floor = cfg.tol**2 * float(np.mean(Y**2))  # relative residual below tol
    history = []
    converged = False
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        before = [a.copy() for a in modes]
        for m in range(M):
            # P[t, j, k]: product of all other modes' factors at observation t
            P = np.ones((T, q, K))
            for mm in range(M):
                if mm != m:
                    P = P * modes[mm][:, idx[:, mm], :].transpose(1, 2, 0)
            outer = (P[..., :, None] * P[..., None, :]).reshape(T, -1)
            G = (onehots[m] @ outer).reshape(dims[m], q, K, K) + cfg.ridge * eye
            b = (onehots[m] @ (P * Y[..., None]).reshape(T, -1)).reshape(dims[m], q, K)
            modes[m] = np.linalg.solve(G, b[..., None])[..., 0].transpose(2, 0, 1).copy()
        cur = objective()
        if sweeps > 2:
            # extrapolate along the sweep direction; kept only if it lowers the objective
            step = sweeps ** (1.0 / 3.0)
            after = modes
            modes = [b + step * (a - b) for a, b in zip(after, before)]
            trial = objective()
            if trial < cur:
                cur = trial
            else:
                modes = after
        history.append(cur)
        if cur <= floor or abs(prev - cur) <= cfg.tol * max(prev, 1e-300):
            converged = True
            break
        prev = cur
    return modes, history, sweeps, converged


def complete(observed, mask: ObservationMask, cfg: CompletionConfig) -> CompletionResult:
    Y = _observed_rows(observed, mask)
    grid = mask.grid
    dims = grid.dims
    idx = np.array([multi_index(grid, t) for t in mask.seen], dtype=np.intp).reshape(mask.T, grid.M)
    q = Y.shape[1]
    rms = float(np.sqrt(np.mean(Y**2)))
    scale = cfg.init_scale if cfg.init_scale is not None else (rms if rms > 0 else 1.0) ** (1.0 / grid.M)

    # The squared objective decouples over coordinates (each column has its own
    # factor entries), so restarts are selected column by column; this also
    # minimizes the summed L1 objective.
    rng = np.random.default_rng(cfg.seed)
    best_col_l1 = np.full(q, np.inf)
    modes = [np.zeros((cfg.K, d, q)) for d in dims]
    col_conv = np.zeros(q, dtype=bool)
    col_sweeps = np.zeros(q, dtype=int)
    restart_l1 = []
    col_scale = np.abs(Y).mean(axis=0)
    history, best_total = [], np.inf
    for r in range(cfg.restarts):
        r_modes, r_hist, sweeps, converged = _als(Y, idx, dims, cfg.K, cfg, rng, scale)
        col_l1 = np.abs(_predict(r_modes, idx) - Y).sum(axis=0) / mask.T
        restart_l1.append(float(col_l1.sum()))
        take = col_l1 < best_col_l1  # strict: lowest restart index wins ties
        if take.any():
            for m in range(grid.M):
                modes[m][:, :, take] = r_modes[m][:, :, take]
            best_col_l1[take] = col_l1[take]
            col_conv[take] = converged
            col_sweeps[take] = sweeps
        if restart_l1[-1] < best_total:
            best_total, history = restart_l1[-1], r_hist
        if np.all(best_col_l1 <= cfg.tol * col_scale):
            break  # every column already fits its observations exactly
    resid = _predict(modes, idx) - Y
    l1 = float(np.abs(resid).sum() / mask.T)
    l2 = float(np.mean(resid**2))
    sweeps, converged = int(col_sweeps.max()), bool(col_conv.all())
    # free parameters per coordinate after removing the (K * (M-1)) scale gauge
    n_free = cfg.K * (sum(dims) - grid.M + 1)
    return CompletionResult(
        factors=CPFactors(grid, tuple(modes)),
        objective_l1=l1,
        objective_l2=l2,
        sweeps_used=sweeps,
        converged=converged,
        fully_identified=mask.fully_identified(),
        overparameterized=n_free > mask.T,
        history=history,
        restart_l1=restart_l1,
    )


def completion_generalization_term(K: int, d_max: int, M: int, q: int, T: int, delta: float) -> float:
    """q * sqrt((pdim_bound(K, d_max, M) + ln(q / delta)) / T)."""
    if q < 1 or T < 1:
        raise ValueError("q and T must be >= 1")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return q * math.sqrt((pdim_bound(K, d_max, M) + math.log(q / delta)) / T)
