"""Training: joint ERM with free heads, the two-stage ERM -> completion procedure,
end-to-end training of structured head banks, and the pooled baseline."""
from __future__ import annotations

import csv
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .completion import CompletionConfig, CompletionResult, ObservationMask, complete
from .datagen import DomainDataset
from .model import (ArchConfig, Batch, FactorizedHeads, HeadBank, LossSpec, RegularizerSpec, RepresentationNet,
                    init_bank, loss_and_grads, param_dict, per_sample_loss, predict_logits)

log = logging.getLogger(__name__)

END_TO_END_VARIANTS = ("factorized", "additive", "shared_only", "descriptor")
REGULARIZED = ("factorized", "additive")


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    max_iters: int = 2000
    es_window: int = 50
    es_threshold: float = 0.05
    lam: float = 0.05
    seed: int = 0
    batching: str = "uniform"  # or "round_robin"
    K: int = 2  # rank of the factorized bank
    holdout_every: int = 50

    def __post_init__(self):
        errs = []
        if self.optimizer not in ("adam", "sgd"):
            errs.append(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if self.lr <= 0:
            errs.append("lr must be > 0")
        if self.batch_size < 1:
            errs.append("batch_size must be >= 1")
        if self.max_iters < 0:
            errs.append("max_iters must be >= 0")
        if self.es_window < 1:
            errs.append("es_window must be >= 1")
        if self.lam < 0:
            errs.append("lam must be >= 0")
        if self.batching not in ("uniform", "round_robin"):
            errs.append("batching must be uniform or round_robin")
        if self.K < 1:
            errs.append("K must be >= 1")
        if errs:
            raise ValueError("; ".join(errs))


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1.0 - b1**self.t, 1.0 - b2**self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, lr=1e-3):
        self.lr = lr

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] -= self.lr * g


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    return SGD(cfg.lr)


def early_stop_index(curve, window: int, threshold: float) -> int | None:
    """First iteration count i >= window with mean(curve[i-window:i]) < threshold."""
    c = np.asarray(curve, dtype=np.float64)
    if len(c) < window:
        return None
    means = np.convolve(c, np.ones(window) / window, mode="valid")
    hits = np.flatnonzero(means < threshold)
    return int(hits[0]) + window if hits.size else None


def default_loss(ds: DomainDataset) -> LossSpec:
    if ds.C == 1:
        return LossSpec("squared", 1)
    if ds.C == 2:
        return LossSpec("logistic", 1)
    return LossSpec("softmax_cross_entropy", ds.C)


@dataclass
class TrainedModel:
    net: RepresentationNet
    bank: HeadBank
    mask: ObservationMask
    loss: LossSpec
    mode: str
    curve: list[float] = field(default_factory=list)
    holdout_curve: list[tuple[int, float]] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0
    stopped_at: int | None = None
    stage2: dict | None = None  # two-stage only

    def logits(self, domains, X):
        return predict_logits(self.net, self.bank, np.asarray(domains), X)


def _rngs(seed: int):
    ss = np.random.SeedSequence(int(seed))
    net_ss, bank_ss, batch_ss = ss.spawn(3)
    return np.random.default_rng(net_ss), np.random.default_rng(bank_ss), np.random.default_rng(batch_ss)


def _seen_data(ds: DomainDataset, mask: ObservationMask) -> DomainDataset:
    extra = [t for t in ds.domains() if not mask.contains(t)]
    if extra:
        warnings.warn(f"ignoring data from {len(extra)} unmasked domain(s)", RuntimeWarning, stacklevel=3)
    missing = [t for t in mask.seen if ds.count(t) == 0]
    if missing:
        raise ValueError(f"masked domains without data: {missing}")
    return ds.restrict(mask.seen)


class _Sampler:
    def __init__(self, batch: Batch, cfg: TrainConfig, rng):
        self.batch, self.cfg, self.rng = batch, cfg, rng
        self.by_domain = [np.flatnonzero(batch.domains == t) for t in np.unique(batch.domains)]

    def __call__(self) -> Batch:
        b, cfg = self.batch, self.cfg
        if cfg.batching == "uniform":
            idx = self.rng.integers(0, len(b), size=cfg.batch_size)
        else:
            per = max(1, cfg.batch_size // len(self.by_domain))
            idx = np.concatenate([rows[self.rng.integers(0, len(rows), size=per)] for rows in self.by_domain])
        return Batch(b.domains[idx], b.X[idx], b.y[idx])


def _mean_loss(net, bank, batch: Batch, spec: LossSpec) -> float:
    Z = predict_logits(net, bank, batch.domains, batch.X)
    return float(per_sample_loss(Z, batch.y, spec)[0].mean())


def _optimize(net, bank, data: Batch, spec: LossSpec, lam: float, cfg: TrainConfig, batch_rng,
              holdout: Batch | None = None, freeze=()):
    params = param_dict(net, bank)
    opt = make_optimizer(cfg)
    sample = _Sampler(data, cfg, batch_rng)
    reg = RegularizerSpec(lam)
    curve, hcurve = [], []
    stopped = None
    for it in range(1, cfg.max_iters + 1):
        try:
            loss, grads = loss_and_grads(net, bank, sample(), spec, reg)
        except FloatingPointError as e:
            raise DivergenceError(f"diverged at iteration {it}: {e}") from None
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite training loss at iteration {it}")
        for k in freeze:
            grads.pop(k, None)
        opt.step(params, grads)
        curve.append(loss)
        if holdout is not None and len(holdout) and (it % cfg.holdout_every == 0 or it == cfg.max_iters):
            hcurve.append((it, _mean_loss(net, bank, holdout, spec)))
        if it >= cfg.es_window and np.mean(curve[-cfg.es_window:]) < cfg.es_threshold:
            stopped = it
            break
    return curve, hcurve, stopped


def train_erm(ds: DomainDataset, mask: ObservationMask, arch: ArchConfig, cfg: TrainConfig, *,
              loss: LossSpec | None = None, holdout: DomainDataset | None = None) -> TrainedModel:
    """Joint ERM of the representation and one free head per seen domain."""
    t0 = time.perf_counter()
    spec = loss or default_loss(ds)
    seen = _seen_data(ds, mask)
    net_rng, bank_rng, batch_rng = _rngs(cfg.seed)
    net = arch.build(ds.r, net_rng)
    bank = init_bank("free", ds.grid, arch.p, spec.C, bank_rng, seen=mask.seen)
    hb = holdout.batch(mask.seen) if holdout is not None else None
    curve, hcurve, stopped = _optimize(net, bank, seen.batch(), spec, 0.0, cfg, batch_rng, hb)
    return TrainedModel(net, bank, mask, spec, "erm", curve, hcurve, {"train": asdict(cfg), "arch": asdict(arch)},
                        time.perf_counter() - t0, stopped)


def two_stage(ds: DomainDataset, mask: ObservationMask, arch: ArchConfig, cfg: TrainConfig,
              ccfg: CompletionConfig, *, loss: LossSpec | None = None,
              holdout: DomainDataset | None = None) -> TrainedModel:
    """ERM on the seen domains, rank-K completion of the learned heads, then
    factorized heads for every domain."""
    t0 = time.perf_counter()
    erm = train_erm(ds, mask, arch, cfg, loss=loss, holdout=holdout)
    seen_heads = np.stack([erm.bank.head_vector(t) for t in mask.seen])
    res: CompletionResult = complete(seen_heads, mask, ccfg)
    bank = FactorizedHeads.from_factors(res.factors, erm.bank.p, erm.bank.C)
    completed_seen = np.stack([bank.head_vector(t) for t in mask.seen])
    stage2 = {
        "residual_l1": res.objective_l1,
        "residual_l2": res.objective_l2,
        "fully_identified": res.fully_identified,
        "overparameterized": res.overparameterized,
        "converged": res.converged,
        "sweeps": res.sweeps_used,
        "K": ccfg.K,
        "seen_heads": seen_heads,
        "completed_seen": completed_seen,
    }
    if not res.fully_identified:
        log.warning("mask leaves some factor level unobserved; those heads are ridge-determined")
    config = dict(erm.config, completion=asdict(ccfg))
    return TrainedModel(erm.net, bank, mask, erm.loss, "two_stage", erm.curve, erm.holdout_curve, config,
                        time.perf_counter() - t0, erm.stopped_at, stage2)


def train_end_to_end(ds: DomainDataset, mask: ObservationMask, arch: ArchConfig, variant: str, cfg: TrainConfig, *,
                     loss: LossSpec | None = None, holdout: DomainDataset | None = None,
                     init_net: RepresentationNet | None = None, init_bank_: HeadBank | None = None,
                     freeze=(), mode: str | None = None) -> TrainedModel:
    """Optimize the representation and a structured head bank directly on the seen data."""
    if variant not in END_TO_END_VARIANTS:
        raise ValueError(f"variant must be one of {END_TO_END_VARIANTS}, got {variant!r}")
    t0 = time.perf_counter()
    spec = loss or default_loss(ds)
    seen = _seen_data(ds, mask)
    net_rng, bank_rng, batch_rng = _rngs(cfg.seed)
    net = init_net.copy() if init_net is not None else arch.build(ds.r, net_rng)
    bank = init_bank_.copy() if init_bank_ is not None else init_bank(variant, ds.grid, arch.p, spec.C, bank_rng, K=cfg.K)
    if bank.variant != variant:
        raise ValueError(f"initial bank is {bank.variant}, expected {variant}")
    lam = cfg.lam if variant in REGULARIZED else 0.0
    hb = holdout.batch(mask.seen) if holdout is not None else None
    curve, hcurve, stopped = _optimize(net, bank, seen.batch(), spec, lam, cfg, batch_rng, hb, freeze)
    return TrainedModel(net, bank, mask, spec, mode or f"end_to_end:{variant}", curve, hcurve,
                        {"train": asdict(cfg), "arch": asdict(arch), "variant": variant},
                        time.perf_counter() - t0, stopped)


def train_pooled_baseline(ds: DomainDataset, mask: ObservationMask, arch: ArchConfig, cfg: TrainConfig, *,
                          loss: LossSpec | None = None, holdout: DomainDataset | None = None) -> TrainedModel:
    """One shared head over the pooled seen-domain data."""
    return train_end_to_end(ds, mask, arch, "shared_only", cfg, loss=loss, holdout=holdout, mode="pooled")


def write_curve_csv(path, model: TrainedModel) -> None:
    held = dict(model.holdout_curve)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss", "holdout_loss"])
        for i, v in enumerate(model.curve, start=1):
            w.writerow([i, repr(float(v)), repr(float(held[i])) if i in held else ""])
