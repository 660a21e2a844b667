"""Per-domain evaluation, excess risk against a planted oracle, Manhattan-distance
analysis, sweeps over T and lambda, bound diagnostics and report files."""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .completion import CompletionConfig, ObservationMask, completion_generalization_term, diagonal_mask, sample_mask
from .datagen import DomainDataset, PlantedModel, grid_transform_dataset, plant_model, planted_dataset
from .model import ArchConfig, BoundParams, LossSpec, UnseenDomainError, head_norms, per_sample_loss, representation_norm_bound
from .pipeline import TrainConfig, TrainedModel, train_end_to_end, train_erm, train_pooled_baseline, two_stage
from .tensor_core import DomainGrid, multi_index

REPORT_VERSION = 1
DEFAULT_LAMBDAS = (0.005, 0.01, 0.03, 0.05, 0.1, 0.5, 1.0)
DOMAIN_CSV_COLUMNS = ("flat_index", "multi_index", "seen", "n_test", "accuracy_or_loss", "min_manhattan", "mean_manhattan")
NOMINAL_CAVEAT = ("Manhattan distances use raw level indices; they are meaningful only for ordinal factors, "
                  "not for nominal ones.")


@dataclass
class DomainMetrics:
    flat_index: int
    multi_index: tuple
    seen: bool
    n_test: int
    value: float  # accuracy for classification, mean loss for regression
    metric: str
    min_manhattan: float
    mean_manhattan: float

    def csv_row(self):
        return [self.flat_index, "-".join(str(i) for i in self.multi_index), int(self.seen), self.n_test,
                repr(float(self.value)), repr(float(self.min_manhattan)), repr(float(self.mean_manhattan))]


def manhattan_to_mask(grid: DomainGrid, mask: ObservationMask) -> tuple[np.ndarray, np.ndarray]:
    """(min, mean) Manhattan distance from every domain to the seen set; 0 for seen domains."""
    idx = grid.index_array()
    seen = idx[list(mask.seen)]
    dist = np.abs(idx[:, None, :] - seen[None, :, :]).sum(axis=2)
    dmin, dmean = dist.min(axis=1).astype(float), dist.mean(axis=1)
    s = list(mask.seen)
    dmin[s] = 0.0
    dmean[s] = 0.0
    return dmin, dmean


def predictions_correct(Z: np.ndarray, y: np.ndarray, spec: LossSpec) -> np.ndarray:
    """Top-1 correctness; ties go to the lowest class index."""
    if spec.kind == "logistic":
        return (Z[:, 0] > 0) == (y > 0.5)
    return np.argmax(Z, axis=1) == y.astype(np.intp)


def evaluate(model: TrainedModel, test: DomainDataset) -> list[DomainMetrics]:
    grid = test.grid
    spec = model.loss
    dmin, dmean = manhattan_to_mask(grid, model.mask)
    rows = []
    for t in test.domains():
        if not model.bank.supports(t):
            raise UnseenDomainError(f"model has no head for domain {t} {multi_index(grid, t)}")
        X, y = test.data[t]
        Z = model.logits(np.full(len(y), t), X)
        if spec.kind == "squared":
            value, metric = float(per_sample_loss(Z, y, spec)[0].mean()), "loss"
        else:
            value, metric = float(predictions_correct(Z, y, spec).mean()), "accuracy"
        rows.append(DomainMetrics(t, multi_index(grid, t), model.mask.contains(t), len(y), value, metric,
                                  float(dmin[t]), float(dmean[t])))
    return rows


def split_means(rows: list[DomainMetrics]) -> dict:
    seen = [r.value for r in rows if r.seen]
    unseen = [r.value for r in rows if not r.seen]
    return {"mean_seen": float(np.mean(seen)) if seen else None,
            "mean_unseen": float(np.mean(unseen)) if unseen else None,
            "n_seen": len(seen), "n_unseen": len(unseen)}


def excess_risk(model: TrainedModel, oracle: PlantedModel, test: DomainDataset) -> dict:
    """Paired Monte-Carlo estimate of E[loss(model) - loss(oracle)] per domain and averaged over all D."""
    if oracle is None:
        raise NotImplementedError("excess risk needs a planted oracle; unsupported on real data")
    grid = test.grid
    spec = model.loss
    per = {}
    for t in test.domains():
        X, y = test.data[t]
        dom = np.full(len(y), t)
        diff = per_sample_loss(model.logits(dom, X), y, spec)[0] - per_sample_loss(oracle.logits(dom, X), y, spec)[0]
        se = float(diff.std(ddof=1) / math.sqrt(len(diff))) if len(diff) > 1 else float("nan")
        per[t] = {"estimate": float(diff.mean()), "se": se, "n": len(diff)}
    est = np.array([per[t]["estimate"] for t in sorted(per)])
    ses = np.array([per[t]["se"] for t in sorted(per)])
    out = {"per_domain": per, "average": float(est.mean()), "average_se": float(np.sqrt(np.sum(ses**2)) / len(ses)),
           "covers_all_domains": len(per) == grid.D}
    true_heads = oracle.heads().values
    seen = list(model.mask.seen)
    if model.stage2 is not None:
        learned = model.stage2["seen_heads"]
    else:
        learned = np.stack([model.bank.head_vector(t) for t in seen])
    out["head_recovery_error"] = float(np.mean(np.linalg.norm(learned - true_heads[seen], axis=1)))
    return out


def distance_analysis(rows: list[DomainMetrics]) -> dict:
    """Spearman correlation of unseen-domain metric with min / mean Manhattan distance."""
    un = [r for r in rows if not r.seen]
    if len(un) < 3:
        raise ValueError("distance analysis needs at least 3 unseen domains")
    v = np.array([r.value for r in un])
    out = {"n": len(un), "caveat": NOMINAL_CAVEAT}
    for key, col in (("spearman_min", [r.min_manhattan for r in un]), ("spearman_mean", [r.mean_manhattan for r in un])):
        col = np.asarray(col)
        if np.all(col == col[0]) or np.all(v == v[0]):
            out[key] = None
        else:
            out[key] = float(stats.spearmanr(v, col).statistic)
    return out


# ---------------------------------------------------------------- bound diagnostic

UNESTIMATED_TERM = "O~((C(W)/n + C(Phi)/(n*T))^(1/4))"


def auto_bound_params(model: TrainedModel, X: np.ndarray, **overrides) -> BoundParams:
    """Fill W and D_X from the trained model; L from the loss (1 for logistic, sqrt(2) for softmax)."""
    norms = head_norms(model.bank)
    vals = {"W": float(np.nanmax(norms)), "D_X": representation_norm_bound(model.net, X)}
    lip = {"logistic": 1.0, "softmax_cross_entropy": math.sqrt(2.0)}.get(model.loss.kind)
    prov = {"W": "max materialized head norm", "D_X": "max representation norm over supplied points"}
    if lip is not None:
        vals["L_lip"] = lip
        prov["L_lip"] = f"Lipschitz constant of the {model.loss.kind} loss in the logits"
    vals.update(overrides)
    for k in overrides:
        prov[k] = "user supplied"
    return BoundParams(**vals, provenance=prov)


def bound_diagnostic(params: BoundParams, run: TrainedModel | dict, measured_excess_risk: float | None = None) -> dict:
    """The two computable pieces of the zero-shot excess-risk bound for a two-stage run."""
    if isinstance(run, TrainedModel):
        if run.stage2 is None:
            raise NotImplementedError("bound diagnostic needs stage-2 residuals; end-to-end runs have none")
        rec = {"residual_l1": run.stage2["residual_l1"], "K": run.stage2["K"], "dims": list(run.mask.grid.dims),
               "q": run.bank.q, "T": run.mask.T}
    else:
        rec = run
        if "residual_l1" not in rec:
            raise NotImplementedError("run record has no stage-2 residual")
    scale = params.L_lip * params.D_X * params.W
    dims = rec["dims"]
    gen = completion_generalization_term(rec["K"], max(dims), len(dims), rec["q"], rec["T"], params.delta)
    out = {
        "scale_LDW": scale,
        "term_residual": scale * rec["residual_l1"],
        "term_completion": scale * gen,
        "completion_generalization_term": gen,
        "unestimated": UNESTIMATED_TERM,
        "params": {k: v for k, v in asdict(params).items()},
    }
    out["computable_total"] = out["term_residual"] + out["term_completion"]
    if measured_excess_risk is not None:
        out["measured_excess_risk"] = measured_excess_risk
        out["computable_total_exceeds_measurement"] = bool(out["computable_total"] >= measured_excess_risk)
    return out


# ---------------------------------------------------------------- designs and runs

@dataclass(frozen=True)
class PlantedDesign:
    dims: tuple[int, ...] = (2, 3, 3, 2)
    r: int = 16
    p: int = 8
    C: int = 1
    K: int = 2
    link: str = "logistic"
    sigma: float = 0.0
    head_scale: float = 1.0
    n_train: int = 500
    n_test: int = 2000  # fresh held-out draws per domain for accuracy and excess risk
    planted_arch: ArchConfig = ArchConfig(hidden=(), p=8, out_activation="tanh")
    structure: str = "cp"
    offset_scale: float = 0.5

    def make(self, seed: int):
        grid = DomainGrid(self.dims)
        oracle = plant_model(grid, self.r, self.p, self.C, self.K, self.link, seed, arch=self.planted_arch,
                             sigma=self.sigma, head_scale=self.head_scale, structure=self.structure,
                             offset_scale=self.offset_scale)
        train = planted_dataset(oracle, self.n_train, seed, stream=0)
        test = planted_dataset(oracle, self.n_test, seed, stream=1)
        return train, test, oracle


@dataclass(frozen=True)
class GridTransformDesign:
    rotations: tuple = (-30.0, -15.0, 0.0, 15.0, 30.0)
    translations: tuple = ((-3, 0), (0, -3), (0, 0), (0, 3), (3, 0))
    C: int = 5
    size: int = 16
    n_train: int = 200
    n_test: int = 200
    noise: float = 0.05
    variation: float = 0.3

    @property
    def dims(self):
        return (len(self.rotations), len(self.translations))

    def make(self, seed: int):
        kw = dict(C=self.C, size=self.size, noise=self.noise, variation=self.variation)
        train = grid_transform_dataset(None, self.rotations, self.translations, self.n_train, seed, stream=0, **kw)
        test = grid_transform_dataset(None, self.rotations, self.translations, self.n_test, seed, stream=1, **kw)
        return train, test, None


TRAINERS = ("two_stage", "factorized", "additive", "shared_only", "descriptor", "pooled")


def make_mask(grid: DomainGrid, design: str | int, seed: int) -> ObservationMask:
    if design == "diagonal":
        return diagonal_mask(grid)
    return sample_mask(grid, int(design), np.random.SeedSequence([int(seed), 0x3A5C]))


def train_with(trainer: str, train: DomainDataset, mask, arch: ArchConfig, cfg: TrainConfig,
               ccfg: CompletionConfig | None = None) -> TrainedModel:
    train = train.restrict(mask.seen)  # the trainers would drop unseen domains anyway
    if trainer == "two_stage":
        return two_stage(train, mask, arch, cfg, ccfg or CompletionConfig(K=cfg.K))
    if trainer == "pooled":
        return train_pooled_baseline(train, mask, arch, cfg)
    if trainer == "erm":
        return train_erm(train, mask, arch, cfg)
    return train_end_to_end(train, mask, arch, trainer, cfg)


@dataclass(frozen=True)
class RunSpec:
    design: PlantedDesign | GridTransformDesign
    trainer: str
    mask_design: str | int  # "diagonal" or T
    seed: int
    arch: ArchConfig
    train: TrainConfig
    completion: CompletionConfig | None = None
    sweep_key: str = ""
    sweep_value: float | None = None


def run_one(spec: RunSpec) -> dict:
    """Generate, train, evaluate. Returns plain records (no model objects)."""
    t0 = time.perf_counter()
    train, test, oracle = spec.design.make(spec.seed)
    mask = make_mask(train.grid, spec.mask_design, spec.seed)
    cfg = TrainConfig(**{**asdict(spec.train), "seed": spec.seed})
    model = train_with(spec.trainer, train, mask, spec.arch, cfg, spec.completion)
    rows = evaluate(model, test)
    summary = {"sweep_key": spec.sweep_key, "sweep_value": spec.sweep_value, "seed": spec.seed,
               "trainer": spec.trainer, "T": mask.T, "iterations": len(model.curve),
               "final_loss": float(np.mean(model.curve[-cfg.es_window:])) if model.curve else None,
               **split_means(rows)}
    if model.stage2 is not None:
        summary["residual_l1"] = model.stage2["residual_l1"]
        summary["fully_identified"] = model.stage2["fully_identified"]
    if oracle is not None:
        er = excess_risk(model, oracle, test)
        summary["excess_risk"] = er["average"]
        summary["excess_risk_se"] = er["average_se"]
    domain_rows = [{"sweep_value": spec.sweep_value, "seed": spec.seed, **asdict(r),
                    "multi_index": list(r.multi_index)} for r in rows]
    return {"summary": summary, "domains": domain_rows, "wall_time": time.perf_counter() - t0}


def _run_all(specs: list[RunSpec], workers: int = 1) -> list[dict]:
    if workers <= 1:
        return [run_one(s) for s in specs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(run_one, specs))  # map keeps submission order


def aggregate(values) -> dict:
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    if v.size == 0:
        return {"mean": None, "std": None, "n": 0}
    return {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0, "n": int(v.size)}


@dataclass
class ExperimentReport:
    config: dict
    runs: list[dict] = field(default_factory=list)  # one summary row per (sweep value, seed)
    domains: list[dict] = field(default_factory=list)  # per-run per-domain rows
    curve: list[dict] = field(default_factory=list)  # aggregates per sweep value
    bound: dict | None = None
    analysis: dict = field(default_factory=dict)
    wall_times: list[float] = field(default_factory=list)  # not written to the report file

    def __eq__(self, other):
        return isinstance(other, ExperimentReport) and all(
            getattr(self, k) == getattr(other, k) for k in ("config", "runs", "domains", "curve", "bound", "analysis"))


def _build_report(config: dict, results: list[dict], key: str) -> ExperimentReport:
    runs = [r["summary"] for r in results]
    domains = sorted((d for r in results for d in r["domains"]),
                     key=lambda d: (d["sweep_value"] if d["sweep_value"] is not None else 0, d["flat_index"], d["seed"]))
    curve = []
    for v in sorted({r["sweep_value"] for r in runs}, key=lambda x: (x is None, x)):
        sel = [r for r in runs if r["sweep_value"] == v]
        unseen = [r["mean_unseen"] for r in sel]
        point = {key: v, "unseen": aggregate(unseen), "seen": aggregate([r["mean_seen"] for r in sel]),
                 "applicable": any(u is not None for u in unseen)}
        curve.append(point)
    # normalize through JSON so the in-memory report equals what load_report returns
    config, runs, domains, curve = (json.loads(_dump(x)) for x in (config, runs, domains, curve))
    return ExperimentReport(config, runs, domains, curve, wall_times=[r["wall_time"] for r in results])


def _design_config(design) -> dict:
    d = asdict(design)
    d["kind"] = "planted" if isinstance(design, PlantedDesign) else "grid_transform"
    return d


def sweep_T(design, T_values, seeds, trainer: str = "two_stage", arch: ArchConfig | None = None,
            train: TrainConfig | None = None, completion: CompletionConfig | None = None,
            workers: int = 1) -> ExperimentReport:
    grid_D = math.prod(design.dims)
    if any(not 1 <= int(T) <= grid_D for T in T_values):
        raise ValueError(f"T values must lie in [1, {grid_D}]")
    arch = arch or ArchConfig()
    train = train or TrainConfig()
    specs = [RunSpec(design, trainer, int(T), int(s), arch, train, completion, "T", int(T))
             for T in T_values for s in seeds]
    results = _run_all(specs, workers)
    config = {"sweep": "T", "values": [int(t) for t in T_values], "seeds": [int(s) for s in seeds], "trainer": trainer,
              "design": _design_config(design), "arch": asdict(arch), "train": asdict(train),
              "completion": asdict(completion) if completion else None}
    rep = _build_report(config, results, "T")
    pts = [(c["T"], c["unseen"]["mean"]) for c in rep.curve if c["applicable"]]
    if len(pts) >= 3:
        rep.analysis["trend_spearman"] = float(stats.spearmanr([p[0] for p in pts], [p[1] for p in pts]).statistic)
    return rep


def sweep_lambda(design, lambdas=DEFAULT_LAMBDAS, seeds=(0, 1, 2), trainer: str = "additive",
                 mask_design: str | int = "diagonal", arch: ArchConfig | None = None,
                 train: TrainConfig | None = None, workers: int = 1) -> ExperimentReport:
    if any(l < 0 for l in lambdas):
        raise ValueError("lambda values must be >= 0")
    arch = arch or ArchConfig()
    train = train or TrainConfig()
    specs = [RunSpec(design, trainer, mask_design, int(s), arch, TrainConfig(**{**asdict(train), "lam": float(l)}),
                     None, "lambda", float(l)) for l in lambdas for s in seeds]
    results = _run_all(specs, workers)
    config = {"sweep": "lambda", "values": [float(l) for l in lambdas], "seeds": [int(s) for s in seeds],
              "trainer": trainer, "mask": mask_design, "design": _design_config(design), "arch": asdict(arch),
              "train": asdict(train)}
    rep = _build_report(config, results, "lambda")
    means = [c["unseen"]["mean"] for c in rep.curve if c["unseen"]["mean"] is not None]
    if means:
        rep.analysis["unseen_range"] = float(max(means) - min(means))
    return rep


def compare_trainers(design, trainers, seeds, mask_design: str | int = "diagonal", arch: ArchConfig | None = None,
                     train: TrainConfig | None = None, workers: int = 1,
                     completion: CompletionConfig | None = None) -> ExperimentReport:
    """Several trainers on identical data and masks; sweep value is the trainer's position in ``trainers``."""
    arch = arch or ArchConfig()
    train = train or TrainConfig()
    specs = [RunSpec(design, tr, mask_design, int(s), arch, train, completion, "trainer", i)
             for i, tr in enumerate(trainers) for s in seeds]
    results = _run_all(specs, workers)
    config = {"sweep": "trainer", "values": list(trainers), "seeds": [int(s) for s in seeds], "mask": mask_design,
              "design": _design_config(design), "arch": asdict(arch), "train": asdict(train),
              "completion": asdict(completion) if completion else None}
    return _build_report(config, results, "trainer")


def recompute_curve(report: ExperimentReport, key: str) -> list[dict]:
    """Aggregates rebuilt from the retained per-run rows."""
    return _build_report(report.config, [{"summary": r, "domains": [], "wall_time": 0.0} for r in report.runs],
                         key).curve


def cell_table(report: ExperimentReport, sweep_value=None, include_seen: bool = False) -> list[list[str]]:
    """2-mode grid table: rows = mode-0 levels, columns = mode-1 levels, cells 'mean(std)' over seeds."""
    dims = report.config["design"].get("dims") or [len(report.config["design"]["rotations"]),
                                                    len(report.config["design"]["translations"])]
    if len(dims) != 2:
        raise ValueError("cell table needs a 2-mode grid")
    table = [["" for _ in range(dims[1])] for _ in range(dims[0])]
    for t in range(dims[0] * dims[1]):
        sel = [d for d in report.domains if d["flat_index"] == t and d["sweep_value"] == sweep_value]
        if not sel or (not include_seen and all(d["seen"] for d in sel)):
            continue
        vals = [d["value"] for d in sel if include_seen or not d["seen"]]
        a = aggregate(vals)
        table[t // dims[1]][t % dims[1]] = f"{a['mean']:.3f}({a['std']:.3f})"
    return table


# ---------------------------------------------------------------- report files

class ReportFormatError(ValueError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)


def _default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def emit_report(report: ExperimentReport, path) -> None:
    """Header line (version, config), then one section-tagged JSON line per record."""
    lines = [_dump({"version": REPORT_VERSION, "kind": "zsda-report", "config": report.config})]
    lines += [_dump({"section": "run", **r}) for r in report.runs]
    lines += [_dump({"section": "domain", **d}) for d in report.domains]
    lines += [_dump({"section": "curve", **c}) for c in report.curve]
    if report.bound is not None:
        lines.append(_dump({"section": "bound", **report.bound}))
    if report.analysis:
        lines.append(_dump({"section": "analysis", **report.analysis}))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_report(path) -> ExperimentReport:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ReportFormatError(f"{path}: line 1: empty report")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ReportFormatError(f"{path}: line 1: {e.msg}") from None
    if header.get("version") != REPORT_VERSION:
        raise ReportFormatError(f"{path}: line 1: unsupported report version {header.get('version')!r}")
    rep = ExperimentReport(header.get("config", {}))
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            section = rec.pop("section")
        except (json.JSONDecodeError, KeyError, AttributeError):
            raise ReportFormatError(f"{path}: line {lineno}: malformed record") from None
        if section == "run":
            rep.runs.append(rec)
        elif section == "domain":
            rep.domains.append(rec)
        elif section == "curve":
            rep.curve.append(rec)
        elif section == "bound":
            rep.bound = rec
        elif section == "analysis":
            rep.analysis = rec
        else:
            raise ReportFormatError(f"{path}: line {lineno}: unknown section {section!r}")
    return rep


def write_domain_csv(rows: list[DomainMetrics], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DOMAIN_CSV_COLUMNS)
        for r in sorted(rows, key=lambda r: r.flat_index):
            w.writerow(r.csv_row())


def write_curve_csv(report: ExperimentReport, key: str, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([key, "unseen_mean", "unseen_std", "seen_mean", "seen_std", "n_runs", "applicable"])
        for c in report.curve:
            u, s = c["unseen"], c["seen"]
            w.writerow([c[key], _fmt(u["mean"]), _fmt(u["std"]), _fmt(s["mean"]), _fmt(s["std"]), s["n"],
                        int(c["applicable"])])


def write_table_csv(table: list[list[str]], row_labels, col_labels, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([""] + [str(c) for c in col_labels])
        for lab, row in zip(row_labels, table):
            w.writerow([str(lab)] + row)


def _fmt(x):
    return "" if x is None else repr(float(x))
