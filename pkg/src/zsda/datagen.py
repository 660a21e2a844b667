"""Synthetic multiway data: planted realizable models, a rotation x translation
raster/point-set analog, and the line-oriented dataset file format."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .model import ArchConfig, Batch, FactorizedHeads, RepresentationNet, predict_logits
from .tensor_core import CPFactors, DomainGrid, HeadTensor, additive_to_cp, cp_materialize, flat_index

LINKS = ("logistic", "softmax", "gaussian")
DEFAULT_ROTATIONS = (-30.0, -15.0, 0.0, 15.0, 30.0)
DEFAULT_TRANSLATIONS = ((-3, 0), (0, -3), (0, 0), (0, 3), (3, 0))
DATASET_VERSION = 1


def domain_rng(master_seed: int, t: int, stream: int = 0) -> np.random.Generator:
    """Per-domain generator derived from (master seed, flat index, stream)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(t), int(stream)]))


@dataclass
class PlantedModel:
    net: RepresentationNet
    factors: CPFactors
    link: str
    C: int
    sigma: float = 0.0
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> DomainGrid:
        return self.factors.grid

    @property
    def p(self) -> int:
        return self.net.p

    def bank(self) -> FactorizedHeads:
        return FactorizedHeads.from_factors(self.factors, self.p, self.C)

    def heads(self) -> HeadTensor:
        return cp_materialize(self.factors)

    def loss_kind(self) -> str:
        return {"logistic": "logistic", "softmax": "softmax_cross_entropy", "gaussian": "squared"}[self.link]

    def logits(self, domains, X) -> np.ndarray:
        return predict_logits(self.net, self.bank(), np.asarray(domains), X)


def plant_model(grid: DomainGrid, r: int, p: int, C: int, K: int, link: str, seed: int, *,
                arch: ArchConfig | None = None, sigma: float = 0.0, head_scale: float = 1.0,
                structure: str = "cp", offset_scale: float = 0.5) -> PlantedModel:
    """Random ground truth: Gaussian 1/sqrt(fan-in) representation, uniform(-1, 1)
    rank-K factors rescaled so the heads' RMS norm equals ``head_scale``.

    ``structure="additive"`` plants heads ``u + sum_m beta_m[t_m]`` instead (u and
    the offsets uniform, offsets scaled by ``offset_scale``); K is then M + 1.
    """
    if structure not in ("cp", "additive"):
        raise ValueError(f"unknown head structure {structure!r}")
    if link not in LINKS:
        raise ValueError(f"unknown link {link!r}")
    if link == "softmax" and C < 2:
        raise ValueError("softmax link needs C >= 2")
    if link != "softmax" and C != 1:
        raise ValueError(f"{link} link needs C = 1")
    if min(r, p, C, K) < 1:
        raise ValueError("shape arguments must be positive")
    arch = arch or ArchConfig(hidden=(), p=p, out_activation="tanh")
    if arch.p != p:
        raise ValueError("arch.p must equal p")
    rng = np.random.default_rng(seed)
    net = arch.build(r, rng)
    if structure == "cp":
        factors = CPFactors.random(grid, K, p * C, rng)
    else:
        u = rng.uniform(-1, 1, size=p * C)
        factors = additive_to_cp(u, [offset_scale * rng.uniform(-1, 1, size=(d, p * C)) for d in grid.dims])
        K = factors.K
    H = cp_materialize(factors).values
    rms = math.sqrt(float(np.mean(np.sum(H * H, axis=1))))
    modes = list(factors.modes)
    modes[0] = modes[0] * (head_scale / rms)
    factors = CPFactors(grid, tuple(modes))
    return PlantedModel(net, factors, link, C, sigma, seed,
                        {"r": r, "p": p, "K": K, "head_scale": head_scale, "structure": structure,
                         "offset_scale": offset_scale if structure == "additive" else None})


def sample_domain_data(model: PlantedModel, domain, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """n iid (x, y) pairs; x ~ N(0, I_r) for every domain, y from the link."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t = domain if isinstance(domain, (int, np.integer)) else flat_index(model.grid, domain)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    X = rng.standard_normal((n, model.net.r))
    Z = model.logits(np.full(n, t), X)
    if model.link == "gaussian":
        y = Z[:, 0] + (model.sigma * rng.standard_normal(n) if model.sigma > 0 else 0.0)
    elif model.link == "logistic":
        prob = 1.0 / (1.0 + np.exp(-Z[:, 0]))
        y = (rng.random(n) < prob).astype(np.float64)
    else:
        P = np.exp(Z - np.logaddexp.reduce(Z, axis=1)[:, None])
        u = rng.random(n)[:, None]
        y = np.minimum((np.cumsum(P, axis=1) < u).sum(axis=1), model.C - 1).astype(np.float64)
    return X, y


@dataclass
class DomainDataset:
    grid: DomainGrid
    data: dict[int, tuple[np.ndarray, np.ndarray]]  # flat index -> (X (n_t, r), y (n_t,))
    C: int
    n: int
    x_shape: tuple[int, ...]
    provenance: dict = field(default_factory=dict)
    partial: bool = False

    @property
    def r(self) -> int:
        return int(np.prod(self.x_shape))

    def domains(self) -> list[int]:
        return sorted(self.data)

    def count(self, t: int) -> int:
        return len(self.data[t][1]) if t in self.data else 0

    def batch(self, domains=None) -> Batch:
        doms = self.domains() if domains is None else [t for t in domains if t in self.data]
        if not doms:
            return Batch(np.zeros(0, dtype=np.intp), np.zeros((0, self.r)), np.zeros(0))
        return Batch(np.concatenate([np.full(self.count(t), t, dtype=np.intp) for t in doms]),
                     np.concatenate([self.data[t][0] for t in doms]),
                     np.concatenate([self.data[t][1] for t in doms]))

    def restrict(self, domains) -> "DomainDataset":
        keep = set(int(t) for t in domains)
        return DomainDataset(self.grid, {t: v for t, v in self.data.items() if t in keep}, self.C, self.n,
                             self.x_shape, dict(self.provenance), self.partial)

    def __eq__(self, other):
        if not isinstance(other, DomainDataset):
            return NotImplemented
        if (self.grid, self.C, self.n, tuple(self.x_shape), self.partial) != (
                other.grid, other.C, other.n, tuple(other.x_shape), other.partial):
            return False
        if self.provenance != other.provenance or self.domains() != other.domains():
            return False
        return all(np.array_equal(self.data[t][0], other.data[t][0]) and np.array_equal(self.data[t][1], other.data[t][1])
                   for t in self.data)


def planted_dataset(model: PlantedModel, n: int, seed: int, domains=None, stream: int = 0) -> DomainDataset:
    doms = range(model.grid.D) if domains is None else domains
    data = {int(t): sample_domain_data(model, int(t), n, domain_rng(seed, t, stream)) for t in doms}
    C = {"logistic": 2, "softmax": model.C, "gaussian": 1}[model.link]  # label classes; 1 = real-valued
    prov = {"generator": "planted", "link": model.link, "sigma": model.sigma, "model_seed": model.seed,
            "data_seed": seed, "stream": stream, **model.meta}
    return DomainDataset(model.grid, data, C, n, (model.net.r,), prov)


# ---------------------------------------------------------------- rotation x translation analog

def prototype_rasters(C: int, size: int, rng: np.random.Generator, blobs: int = 4) -> np.ndarray:
    """C smooth class prototypes: sums of anisotropic Gaussian blobs kept off the border."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c0 = (size - 1) / 2
    out = np.zeros((C, size, size))
    for c in range(C):
        for _ in range(blobs):
            cy, cx = rng.uniform(c0 - size / 4, c0 + size / 4, size=2)
            sy, sx = rng.uniform(size / 12, size / 6, size=2)
            out[c] += np.exp(-((yy - cy) ** 2 / (2 * sy**2) + (xx - cx) ** 2 / (2 * sx**2)))
        out[c] /= out[c].max()
    return out


def rotate_translate_raster(img: np.ndarray, angle_deg: float, offset) -> np.ndarray:
    """Rotate about the image centre, then shift by (row, col) pixels; bilinear, zero fill."""
    th = math.radians(angle_deg)
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    centre = (np.array(img.shape) - 1) / 2.0
    off = np.asarray(offset, dtype=np.float64)
    # output o = R (i - c) + c + off  =>  input i = R^T (o - c - off) + c
    inv = rot.T
    return ndimage.affine_transform(img, inv, offset=centre - inv @ (centre + off), order=1, mode="constant", cval=0.0)


def rotate_translate_points(points: np.ndarray, angle_deg: float, offset) -> np.ndarray:
    th = math.radians(angle_deg)
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    return points @ rot.T + np.asarray(offset, dtype=np.float64)


def grid_transform_dataset(base=None, rotations=DEFAULT_ROTATIONS, translations=DEFAULT_TRANSLATIONS, n: int = 100,
                           seed: int = 0, *, C: int = 5, size: int = 16, noise: float = 0.05, variation: float = 0.3,
                           kind: str = "raster", stream: int = 0) -> DomainDataset:
    """Domain (i, j) applies ``rotations[i]`` then ``translations[j]`` to class samples.

    ``base`` may be None (synthetic prototypes), an array of class prototypes of
    shape (C, H, W) for rasters or (C, P, 2) for point sets, or a pair
    ``(images, labels)`` of externally supplied rasters to sample from.
    """
    rotations, translations = list(rotations), list(translations)
    if not rotations or not translations:
        raise ValueError("rotation and translation lists must be non-empty")
    proto_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBA5E]))
    pool = None
    if base is None:
        base = prototype_rasters(C, size, proto_rng) if kind == "raster" else proto_rng.uniform(-1, 1, size=(C, 8, 2))
    elif isinstance(base, tuple):
        pool = (np.asarray(base[0], dtype=np.float64), np.asarray(base[1]).astype(np.intp))
        kind = "raster"
        C = int(pool[1].max()) + 1
    else:
        base = np.asarray(base, dtype=np.float64)
        kind = "points" if base.ndim == 3 and base.shape[2] == 2 and kind == "points" else "raster"
        C = base.shape[0]
    if C < 2:
        raise ValueError("need at least 2 classes")
    shape = pool[0].shape[1:] if pool is not None else base.shape[1:]
    grid = DomainGrid((len(rotations), len(translations)))
    clipped = False
    if kind == "raster":
        lim = np.array(shape) - 1
        clean = []
        for off in translations:
            c = np.clip(np.asarray(off, dtype=np.float64), -lim, lim)
            clipped |= bool(np.any(c != np.asarray(off)))
            clean.append(tuple(c.tolist()))
        translations = clean
        if clipped:
            warnings.warn("translation exceeds raster bounds; clipped", RuntimeWarning, stacklevel=2)

    data = {}
    for t in range(grid.D):
        i, j = divmod(t, len(translations))
        rng = domain_rng(seed, t, stream)
        labels = rng.integers(0, C, size=n)
        X = np.empty((n, int(np.prod(shape))))
        for s in range(n):
            if pool is not None:
                choices = np.flatnonzero(pool[1] == labels[s])
                src = pool[0][choices[rng.integers(len(choices))]]
            elif kind == "raster":
                src = base[labels[s]] * rng.uniform(1 - variation, 1 + variation)
                src = src + variation * ndimage.gaussian_filter(rng.standard_normal(shape), 1.5) * 3
            else:
                src = base[labels[s]] + variation * 0.2 * rng.standard_normal(shape)
            if kind == "raster":
                out = rotate_translate_raster(src, rotations[i], translations[j])
            else:
                out = rotate_translate_points(src, rotations[i], translations[j])
            X[s] = out.ravel() + (noise * rng.standard_normal(out.size) if noise > 0 else 0.0)
        data[t] = (X, labels.astype(np.float64))
    prov = {"generator": "grid_transform", "kind": kind, "rotations": rotations,
            "translations": [list(o) for o in translations], "seed": seed, "stream": stream, "noise": noise,
            "variation": variation, "clipped": clipped}
    return DomainDataset(grid, data, C, n, tuple(int(s) for s in shape), prov)


# ---------------------------------------------------------------- file IO

class DatasetFormatError(ValueError):
    pass


class DatasetVersionError(DatasetFormatError):
    pass



def write_dataset(path, ds: DomainDataset) -> None:
    header = {"version": DATASET_VERSION, "dims": list(ds.grid.dims), "x_shape": list(ds.x_shape),
              "C": ds.C, "n": ds.n, "partial": ds.partial, "provenance": ds.provenance}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for t in ds.domains():
            X, y = ds.data[t]
            for x, lab in zip(X, y):
                rec = {"t": t, "x": x.tolist(), "y": int(lab) if ds.C >= 2 else float(lab)}
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_dataset(path) -> DomainDataset:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError(f"{path}: line 1: empty file, expected header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{path}: line 1: malformed header ({e.msg})") from None
    if not isinstance(header, dict) or "version" not in header:
        raise DatasetFormatError(f"{path}: line 1: header object with a version field expected")
    if header["version"] != DATASET_VERSION:
        raise DatasetVersionError(f"{path}: unsupported dataset version {header['version']!r}")
    try:
        grid = DomainGrid(tuple(header["dims"]))
        x_shape = tuple(header.get("x_shape") or ([header["r"]] if "r" in header else header["raster_shape"]))
        C, n = int(header["C"]), int(header["n"])
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetFormatError(f"{path}: line 1: bad header field ({e})") from None
    r = int(np.prod(x_shape))
    xs, ys = {}, {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            t, x, y = int(rec["t"]), rec["x"], rec["y"]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise DatasetFormatError(f"{path}: line {lineno}: malformed sample record") from None
        if not 0 <= t < grid.D or len(x) != r:
            raise DatasetFormatError(f"{path}: line {lineno}: domain or feature length out of range")
        xs.setdefault(t, []).append(x)
        ys.setdefault(t, []).append(y)
    data = {t: (np.array(xs[t], dtype=np.float64).reshape(-1, r), np.array(ys[t], dtype=np.float64)) for t in sorted(xs)}
    return DomainDataset(grid, data, C, n, x_shape, header.get("provenance", {}), bool(header.get("partial", False)))


# ---------------------------------------------------------------- head-tensor files

HEADS_VERSION = 1


def write_heads(path, grid: DomainGrid, rows: dict[int, np.ndarray], provenance: dict | None = None) -> None:
    """Header line ``{version, kind, dims, q, provenance}`` then one ``{t, w}`` line per stored domain."""
    rows = {int(t): np.asarray(w, dtype=np.float64).ravel() for t, w in rows.items()}
    widths = {len(w) for w in rows.values()}
    if len(widths) > 1:
        raise ValueError("all head vectors must have the same width")
    header = {"version": HEADS_VERSION, "kind": "head-tensor", "dims": list(grid.dims),
              "q": widths.pop() if widths else 0, "provenance": provenance or {}}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for t in sorted(rows):
            fh.write(json.dumps({"t": t, "w": rows[t].tolist()}, separators=(",", ":")) + "\n")


def read_heads(path) -> tuple[DomainGrid, dict[int, np.ndarray], dict]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    try:
        header = json.loads(lines[0]) if lines else None
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{path}: line 1: malformed header ({e.msg})") from None
    if not isinstance(header, dict) or header.get("kind") != "head-tensor":
        raise DatasetFormatError(f"{path}: line 1: head-tensor header expected")
    if header.get("version") != HEADS_VERSION:
        raise DatasetVersionError(f"{path}: unsupported head-tensor version {header.get('version')!r}")
    grid = DomainGrid(tuple(header["dims"]))
    q = int(header["q"])
    rows = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            t, w = int(rec["t"]), np.asarray(rec["w"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise DatasetFormatError(f"{path}: line {lineno}: malformed head record") from None
        if not 0 <= t < grid.D or w.shape != (q,) or t in rows:
            raise DatasetFormatError(f"{path}: line {lineno}: domain out of range, duplicated, or wrong width")
        rows[t] = w
    return grid, rows, header.get("provenance", {})
