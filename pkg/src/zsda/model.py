"""Shared representation network, per-domain head banks, losses and exact gradients.

Everything is float64 numpy with hand-written reverse mode. A prediction for
domain ``t`` is ``phi(x) @ H_t`` where ``H_t`` is the ``p x C`` head the bank
materializes for ``t``; a head is stored flattened as a vector of width
``q = p * C`` (row-major) wherever factors are involved.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .tensor_core import CPFactors, DomainGrid, HeadTensor, additive_to_cp, cp_materialize, flat_index

VARIANTS = ("free", "factorized", "additive", "shared_only", "descriptor")


class UnseenDomainError(KeyError):
    """A free head bank was asked for a domain it never trained on."""


def _relu(z):
    return np.maximum(z, 0.0)


ACTIVATIONS = {
    "relu": (_relu, lambda z, a: (z > 0).astype(z.dtype)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
}


@dataclass
class RepresentationNet:
    weights: list[np.ndarray]  # layer l maps (n, widths[l]) -> (n, widths[l+1])
    biases: list[np.ndarray]
    activations: tuple[str, ...]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must have one entry per layer")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if l > 0 and W.shape[0] != self.weights[l - 1].shape[1]:
                raise ValueError(f"layer {l} input width {W.shape[0]} does not chain")
            if b.shape != (W.shape[1],):
                raise ValueError(f"layer {l} bias shape {b.shape} != ({W.shape[1]},)")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @classmethod
    def init(cls, widths: Sequence[int], activations: Sequence[str], rng: np.random.Generator) -> "RepresentationNet":
        """Gaussian weights scaled by 1/sqrt(fan-in), zero biases."""
        widths = list(widths)
        if len(activations) != len(widths) - 1:
            raise ValueError("need one activation per layer")
        Ws = [rng.normal(size=(a, b)) / np.sqrt(a) for a, b in zip(widths[:-1], widths[1:])]
        bs = [np.zeros(b) for b in widths[1:]]
        return cls(Ws, bs, tuple(activations))

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def r(self) -> int:
        return self.weights[0].shape[0]

    @property
    def p(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{l}"] = W
            out[f"b{l}"] = b
        return out

    def forward(self, X: np.ndarray):
        a = np.asarray(X, dtype=np.float64)
        cache = [a]
        for W, b, act in zip(self.weights, self.biases, self.activations):
            z = a @ W + b
            a = ACTIVATIONS[act][0](z)
            cache.append((z, a))
        return a, cache

    def __call__(self, X):
        return self.forward(X)[0]

    def backward(self, cache, dphi: np.ndarray) -> dict[str, np.ndarray]:
        grads = {}
        da = dphi
        for l in reversed(range(len(self.weights))):
            z, a = cache[l + 1]
            a_in = cache[0] if l == 0 else cache[l][1]
            dz = da * ACTIVATIONS[self.activations[l]][1](z, a)
            grads[f"W{l}"] = a_in.T @ dz
            grads[f"b{l}"] = dz.sum(axis=0)
            da = dz @ self.weights[l].T
        return grads

    def copy(self) -> "RepresentationNet":
        return RepresentationNet([W.copy() for W in self.weights], [b.copy() for b in self.biases], self.activations)


class HeadBank:
    """Base class. Subclasses hold their trainable arrays in ``params()``."""

    variant: str = ""

    def __init__(self, grid: DomainGrid, p: int, C: int):
        self.grid = grid
        self.p = p
        self.C = C

    @property
    def q(self) -> int:
        return self.p * self.C

    def params(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def head_vector(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def head(self, t) -> np.ndarray:
        if not isinstance(t, (int, np.integer)):
            t = flat_index(self.grid, t)
        return self.head_vector(int(t)).reshape(self.p, self.C)

    def supports(self, t: int) -> bool:
        return True

    def backward(self, dheads: dict[int, np.ndarray]) -> dict[str, np.ndarray]:
        """Map per-domain head gradients (p x C) to parameter gradients."""
        raise NotImplementedError

    def classifier_vectors(self) -> list[str]:
        """Names of params whose rows (as width-q vectors) the mean-pull regularizer acts on."""
        return []

    def materialize(self) -> HeadTensor:
        return HeadTensor(self.grid, np.stack([self.head_vector(t) for t in range(self.grid.D)]))

    def copy(self) -> "HeadBank":
        raise NotImplementedError

    def meta(self) -> dict:
        return {}


class FreeHeads(HeadBank):
    variant = "free"

    def __init__(self, grid, p, C, heads: dict[int, np.ndarray]):
        super().__init__(grid, p, C)
        self.heads = {int(t): np.asarray(h, dtype=np.float64).reshape(p, C) for t, h in sorted(heads.items())}

    @classmethod
    def init(cls, grid, p, C, seen: Iterable[int], rng, scale=None):
        scale = 1.0 / np.sqrt(p) if scale is None else scale
        return cls(grid, p, C, {t: rng.normal(scale=scale, size=(p, C)) for t in seen})

    def params(self):
        return {f"W{t}": h for t, h in self.heads.items()}

    def supports(self, t):
        return t in self.heads

    def head_vector(self, t):
        if t not in self.heads:
            raise UnseenDomainError(f"no head for unseen domain {t}")
        return self.heads[t].ravel()

    def backward(self, dheads):
        g = {f"W{t}": np.zeros_like(h) for t, h in self.heads.items()}
        for t, dh in dheads.items():
            g[f"W{t}"] += dh
        return g

    def materialize(self):
        raise UnseenDomainError("free head bank has no heads for unseen domains")

    def copy(self):
        return FreeHeads(self.grid, self.p, self.C, {t: h.copy() for t, h in self.heads.items()})

    def meta(self):
        return {"seen": list(self.heads)}


class SharedHead(HeadBank):
    variant = "shared_only"

    def __init__(self, grid, p, C, W: np.ndarray):
        super().__init__(grid, p, C)
        self.W = np.asarray(W, dtype=np.float64).reshape(p, C)

    @classmethod
    def init(cls, grid, p, C, rng, scale=None):
        scale = 1.0 / np.sqrt(p) if scale is None else scale
        return cls(grid, p, C, rng.normal(scale=scale, size=(p, C)))

    def params(self):
        return {"W": self.W}

    def head_vector(self, t):
        return self.W.ravel()

    def backward(self, dheads):
        g = np.zeros_like(self.W)
        for dh in dheads.values():
            g += dh
        return {"W": g}

    def copy(self):
        return SharedHead(self.grid, self.p, self.C, self.W.copy())


class FactorizedHeads(HeadBank):
    variant = "factorized"

    def __init__(self, grid, p, C, modes: Sequence[np.ndarray]):
        super().__init__(grid, p, C)
        self.modes = [np.asarray(a, dtype=np.float64) for a in modes]
        CPFactors(grid, tuple(self.modes))  # shape validation
        if self.modes[0].shape[2] != p * C:
            raise ValueError(f"factor width {self.modes[0].shape[2]} != p*C = {p * C}")

    @classmethod
    def init(cls, grid, p, C, K, rng, scale=None):
        # each head is a sum of K products of M factors; aim for entries of size ~1/sqrt(p)
        target = 1.0 / np.sqrt(p * K)
        scale = target ** (1.0 / grid.M) if scale is None else scale
        return cls(grid, p, C, [rng.normal(scale=scale, size=(K, d, p * C)) for d in grid.dims])

    @classmethod
    def from_factors(cls, factors: CPFactors, p: int, C: int):
        return cls(factors.grid, p, C, [a.copy() for a in factors.modes])

    @property
    def K(self):
        return self.modes[0].shape[0]

    def factors(self) -> CPFactors:
        return CPFactors(self.grid, tuple(a.copy() for a in self.modes))

    def params(self):
        return {f"alpha{m}": a for m, a in enumerate(self.modes)}

    def _levels(self, t):
        out = []
        for d in reversed(self.grid.dims):
            t, r = divmod(t, d)
            out.append(r)
        return out[::-1]

    def head_vector(self, t):
        prod = np.ones((self.K, self.q))
        for m, l in enumerate(self._levels(t)):
            prod = prod * self.modes[m][:, l, :]
        return prod.sum(axis=0)

    def backward(self, dheads):
        g = [np.zeros_like(a) for a in self.modes]
        for t, dh in dheads.items():
            lv = self._levels(t)
            rows = [self.modes[m][:, l, :] for m, l in enumerate(lv)]
            dv = dh.ravel()
            for m, l in enumerate(lv):
                others = np.ones((self.K, self.q))
                for mm, row in enumerate(rows):
                    if mm != m:
                        others = others * row
                g[m][:, l, :] += others * dv
        return {f"alpha{m}": gm for m, gm in enumerate(g)}

    def classifier_vectors(self):
        return [f"alpha{m}" for m in range(self.grid.M)]

    def materialize(self):
        return cp_materialize(CPFactors(self.grid, tuple(self.modes)))

    def copy(self):
        return FactorizedHeads(self.grid, self.p, self.C, [a.copy() for a in self.modes])


class AdditiveHeads(HeadBank):
    """Head at (t_1, ..., t_M) is ``u + sum_m beta_m[t_m]``."""

    variant = "additive"

    def __init__(self, grid, p, C, u: np.ndarray, betas: Sequence[np.ndarray]):
        super().__init__(grid, p, C)
        self.u = np.asarray(u, dtype=np.float64).ravel()
        self.betas = [np.asarray(b, dtype=np.float64) for b in betas]
        if self.u.shape != (p * C,):
            raise ValueError(f"shared head has shape {self.u.shape}, expected ({p * C},)")
        for m, (b, d) in enumerate(zip(self.betas, grid.dims)):
            if b.shape != (d, p * C):
                raise ValueError(f"beta{m} has shape {b.shape}, expected {(d, p * C)}")

    @classmethod
    def init(cls, grid, p, C, rng, scale=None, offsets_scale=0.0):
        """Random shared head; per-mode offsets start at ``offsets_scale`` noise (zero by default)."""
        scale = 1.0 / np.sqrt(p) if scale is None else scale
        u = rng.normal(scale=scale, size=p * C)
        betas = [rng.normal(scale=offsets_scale, size=(d, p * C)) if offsets_scale else np.zeros((d, p * C)) for d in grid.dims]
        return cls(grid, p, C, u, betas)

    def params(self):
        out = {"u": self.u}
        for m, b in enumerate(self.betas):
            out[f"beta{m}"] = b
        return out

    def head_vector(self, t):
        v = self.u.copy()
        for d, b in zip(reversed(self.grid.dims), reversed(self.betas)):
            t, l = divmod(t, d)
            v += b[l]
        return v

    def backward(self, dheads):
        gu = np.zeros_like(self.u)
        gb = [np.zeros_like(b) for b in self.betas]
        for t, dh in dheads.items():
            dv = dh.ravel()
            gu += dv
            for m, d in zip(reversed(range(self.grid.M)), reversed(self.grid.dims)):
                t, l = divmod(t, d)
                gb[m][l] += dv
        out = {"u": gu}
        for m, g in enumerate(gb):
            out[f"beta{m}"] = g
        return out

    def classifier_vectors(self):
        return ["u"] + [f"beta{m}" for m in range(self.grid.M)]

    def to_cp(self) -> CPFactors:
        return additive_to_cp(self.u, self.betas)

    def copy(self):
        return AdditiveHeads(self.grid, self.p, self.C, self.u.copy(), [b.copy() for b in self.betas])


class DescriptorHeads(HeadBank):
    """Head = ReLU(coef @ desc_t) @ basis, desc_t the concatenated one-hot level encoding.

    There are 1 + sum(d_m) basis heads, mirroring the u / per-level offsets of
    the additive bank.
    """

    variant = "descriptor"

    def __init__(self, grid, p, C, coef: np.ndarray, basis: np.ndarray):
        super().__init__(grid, p, C)
        self.coef = np.asarray(coef, dtype=np.float64)
        self.basis = np.asarray(basis, dtype=np.float64)
        nd = sum(grid.dims)
        if self.coef.shape != (1 + nd, nd) or self.basis.shape != (1 + nd, p * C):
            raise ValueError("descriptor bank shapes inconsistent with grid")

    @classmethod
    def init(cls, grid, p, C, rng, scale=None, jitter=0.1):
        """Coefficients start near the additive layout: basis 0 gets 1/M from every
        mode, basis 1+l gets weight 1 from descriptor slot l."""
        nd = sum(grid.dims)
        scale = 1.0 / np.sqrt(p) if scale is None else scale
        coef = np.zeros((1 + nd, nd))
        coef[0, :] = 1.0 / grid.M
        coef[1:, :] = np.eye(nd)
        coef += rng.uniform(0, jitter, size=coef.shape)
        basis = np.zeros((1 + nd, p * C))
        basis[0] = rng.normal(scale=scale, size=p * C)
        basis[1:] = rng.normal(scale=scale * jitter, size=(nd, p * C))
        return cls(grid, p, C, coef, basis)

    def descriptor(self, t: int) -> np.ndarray:
        desc = np.zeros(sum(self.grid.dims))
        offset = sum(self.grid.dims)
        for d in reversed(self.grid.dims):
            t, l = divmod(t, d)
            offset -= d
            desc[offset + l] = 1.0
        return desc

    def params(self):
        return {"coef": self.coef, "basis": self.basis}

    def head_vector(self, t):
        return _relu(self.coef @ self.descriptor(t)) @ self.basis

    def backward(self, dheads):
        gc = np.zeros_like(self.coef)
        gb = np.zeros_like(self.basis)
        for t, dh in dheads.items():
            dv = dh.ravel()
            desc = self.descriptor(t)
            z = self.coef @ desc
            c = _relu(z)
            gb += np.outer(c, dv)
            dz = (self.basis @ dv) * (z > 0)
            gc += np.outer(dz, desc)
        return {"coef": gc, "basis": gb}

    def copy(self):
        return DescriptorHeads(self.grid, self.p, self.C, self.coef.copy(), self.basis.copy())


def init_bank(variant: str, grid: DomainGrid, p: int, C: int, rng, *, K: int = 2, seen: Iterable[int] = ()) -> HeadBank:
    if variant == "free":
        return FreeHeads.init(grid, p, C, seen, rng)
    if variant == "factorized":
        return FactorizedHeads.init(grid, p, C, K, rng)
    if variant == "additive":
        return AdditiveHeads.init(grid, p, C, rng)
    if variant == "shared_only":
        return SharedHead.init(grid, p, C, rng)
    if variant == "descriptor":
        return DescriptorHeads.init(grid, p, C, rng)
    raise ValueError(f"unknown head variant {variant!r}; expected one of {VARIANTS}")


# ---------------------------------------------------------------- losses

LOSS_KINDS = ("squared", "logistic", "softmax_cross_entropy")


@dataclass(frozen=True)
class LossSpec:
    kind: str
    C: int = 1

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "softmax_cross_entropy" and self.C < 2:
            raise ValueError("softmax cross-entropy needs C >= 2")
        if self.kind != "softmax_cross_entropy" and self.C != 1:
            raise ValueError(f"{self.kind} loss needs C = 1")


@dataclass(frozen=True)
class RegularizerSpec:
    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("regularization weight must be >= 0")


def per_sample_loss(Z: np.ndarray, y: np.ndarray, spec: LossSpec):
    """Per-sample losses and d(loss)/dZ for logits Z of shape (n, C)."""
    if spec.kind == "squared":
        r = Z[:, 0] - y
        return 0.5 * r * r, r[:, None]
    if spec.kind == "logistic":
        z = Z[:, 0]
        loss = np.logaddexp(0.0, z) - y * z
        sig = np.exp(-np.logaddexp(0.0, -z))
        return loss, (sig - y)[:, None]
    yi = y.astype(np.intp)
    lse = np.logaddexp.reduce(Z, axis=1)
    loss = lse - Z[np.arange(len(yi)), yi]
    P = np.exp(Z - lse[:, None])
    P[np.arange(len(yi)), yi] -= 1.0
    return loss, P


@dataclass
class Batch:
    domains: np.ndarray  # (n,) flat domain indices
    X: np.ndarray  # (n, r)
    y: np.ndarray  # (n,)

    def __len__(self):
        return len(self.domains)

    @classmethod
    def from_samples(cls, grid: DomainGrid, samples: Sequence[tuple]) -> "Batch":
        doms = [d if isinstance(d, (int, np.integer)) else flat_index(grid, d) for d, _, _ in samples]
        return cls(np.array(doms, dtype=np.intp), np.array([x for _, x, _ in samples], dtype=np.float64),
                   np.array([y for _, _, y in samples], dtype=np.float64))


def predict_logits(net: RepresentationNet, bank: HeadBank, domains: np.ndarray, X: np.ndarray) -> np.ndarray:
    phi = net(X)
    Z = np.empty((len(domains), bank.C))
    for t in np.unique(domains):
        sel = domains == t
        Z[sel] = phi[sel] @ bank.head(int(t))
    return Z


def forward(net: RepresentationNet, bank: HeadBank, domain, x: np.ndarray) -> np.ndarray:
    """C logits for a single input at one domain."""
    t = domain if isinstance(domain, (int, np.integer)) else flat_index(bank.grid, domain)
    return net(np.asarray(x, dtype=np.float64)[None, :])[0] @ bank.head(int(t))


def regularizer(bank: HeadBank, lam: float):
    """Mean-pull penalty (lam / N) * sum_i ||v_i - mean||^2 over the bank's classifier vectors."""
    names = bank.classifier_vectors()
    params = bank.params()
    if lam == 0 or not names:
        return 0.0, {n: np.zeros_like(params[n]) for n in names}
    V = np.concatenate([params[n].reshape(-1, bank.q) for n in names])
    N = V.shape[0]
    dev = V - V.mean(axis=0)
    value = lam / N * float(np.sum(dev * dev))
    dV = 2.0 * lam / N * dev  # the mean's own dependence sums to zero
    grads, i = {}, 0
    for n in names:
        size = params[n].size // bank.q
        grads[n] = dV[i:i + size].reshape(params[n].shape)
        i += size
    return value, grads


def param_dict(net: RepresentationNet, bank: HeadBank) -> dict[str, np.ndarray]:
    out = {f"net.{k}": v for k, v in net.params().items()}
    out.update({f"bank.{k}": v for k, v in bank.params().items()})
    return out


def loss_and_grads(net: RepresentationNet, bank: HeadBank, batch: Batch, spec: LossSpec,
                   reg: RegularizerSpec = RegularizerSpec()):
    """Mean per-sample loss plus the regularizer, and gradients keyed like ``param_dict``."""
    if not isinstance(batch, Batch):
        batch = Batch.from_samples(bank.grid, batch)
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    Z = np.empty((n, bank.C))
    groups = {}
    with np.errstate(invalid="ignore", over="ignore"):  # reported below by sample index
        phi, cache = net.forward(batch.X)
        for t in np.unique(batch.domains):
            sel = np.flatnonzero(batch.domains == t)
            H = bank.head(int(t))
            groups[int(t)] = (sel, H)
            Z[sel] = phi[sel] @ H
    bad = np.flatnonzero(~np.all(np.isfinite(Z), axis=1))
    if bad.size:
        raise FloatingPointError(f"non-finite logits at sample {int(bad[0])}")
    losses, dZ = per_sample_loss(Z, batch.y, spec)
    dZ = dZ / n
    dphi = np.empty_like(phi)
    dheads = {}
    for t, (sel, H) in groups.items():
        dphi[sel] = dZ[sel] @ H.T
        dheads[t] = phi[sel].T @ dZ[sel]
    grads = {f"net.{k}": v for k, v in net.backward(cache, dphi).items()}
    bank_grads = bank.backward(dheads)
    rv, rg = regularizer(bank, reg.lam)
    for k, g in rg.items():
        bank_grads[k] = bank_grads[k] + g
    grads.update({f"bank.{k}": v for k, v in bank_grads.items()})
    return float(losses.mean()) + rv, grads


# ---------------------------------------------------------------- norms / bound constants

def head_norms(bank: HeadBank) -> np.ndarray:
    """Frobenius norm of every domain's head; NaN where the bank has no head."""
    return np.array([np.linalg.norm(bank.head_vector(t)) if bank.supports(t) else np.nan for t in range(bank.grid.D)])


def representation_norm_bound(net: RepresentationNet, X: np.ndarray) -> float:
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("need at least one point")
    return float(np.max(np.linalg.norm(net(X), axis=1)))


@dataclass(frozen=True)
class BoundParams:
    B: float = 1.0
    L_lip: float = 1.0
    W: float = 1.0
    D_X: float = 1.0
    lambda_sc: float = 1.0
    nu: float = 1.0
    eps: float = 0.0
    delta: float = 0.05
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        errs = [f"{k} must be > 0" for k in ("B", "L_lip", "W", "D_X", "lambda_sc", "nu") if getattr(self, k) <= 0]
        if not 0 < self.delta < 1:
            errs.append("delta must lie in (0, 1)")
        if self.nu > 1:
            errs.append("nu must be <= 1")
        if self.eps < 0:
            errs.append("eps must be >= 0")
        if errs:
            raise ValueError("; ".join(errs))


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(path, net: RepresentationNet, bank: HeadBank, extra: dict | None = None):
    """npz container: a JSON ``header`` entry plus one array per parameter."""
    header = {
        "version": CHECKPOINT_VERSION,
        "dims": list(bank.grid.dims),
        "variant": bank.variant,
        "p": bank.p,
        "C": bank.C,
        "activations": list(net.activations),
        "n_layers": len(net.weights),
        "bank_meta": bank.meta(),
        "shapes": {k: list(v.shape) for k, v in param_dict(net, bank).items()},
        "extra": extra or {},
    }
    arrays = dict(param_dict(net, bank))
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        arr = {k: z[k] for k in z.files if k != "header"}
    grid = DomainGrid(tuple(header["dims"]))
    L = header["n_layers"]
    net = RepresentationNet([arr[f"net.W{l}"] for l in range(L)], [arr[f"net.b{l}"] for l in range(L)],
                            tuple(header["activations"]))
    p, C, v = header["p"], header["C"], header["variant"]
    b = {k[5:]: a for k, a in arr.items() if k.startswith("bank.")}
    if v == "free":
        bank = FreeHeads(grid, p, C, {int(k[1:]): a for k, a in b.items()})
    elif v == "shared_only":
        bank = SharedHead(grid, p, C, b["W"])
    elif v == "factorized":
        bank = FactorizedHeads(grid, p, C, [b[f"alpha{m}"] for m in range(grid.M)])
    elif v == "additive":
        bank = AdditiveHeads(grid, p, C, b["u"], [b[f"beta{m}"] for m in range(grid.M)])
    elif v == "descriptor":
        bank = DescriptorHeads(grid, p, C, b["coef"], b["basis"])
    else:
        raise ValueError(f"unknown variant {v!r} in checkpoint")
    return net, bank, header


@dataclass(frozen=True)
class ArchConfig:
    """Representation architecture r -> hidden... -> p."""

    hidden: tuple[int, ...] = (64,)
    p: int = 16
    activation: str = "relu"
    out_activation: str = "relu"

    def widths(self, r: int) -> list[int]:
        return [r, *self.hidden, self.p]

    def activations(self) -> tuple[str, ...]:
        return (self.activation,) * len(self.hidden) + (self.out_activation,)

    def build(self, r: int, rng) -> RepresentationNet:
        return RepresentationNet.init(self.widths(r), self.activations(), rng)
