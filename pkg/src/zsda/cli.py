"""Command-line entry point: generate, train, complete, evaluate, sweep.

Every subcommand resolves a YAML config (a file path or a bundled preset name),
applies ``--set`` overrides, validates the result, echoes it to stdout and to
``<subcommand>.config.yaml`` in the output directory, and only then starts work.
Failures print one JSON line ``{"error": <category>, "message": ...}`` to stderr.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import sys
import time
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from .completion import CompletionConfig, ObservationMask, complete
from .datagen import (DatasetFormatError, PlantedModel, read_dataset, read_heads, write_dataset, write_heads)
from .evalharness import (GridTransformDesign, PlantedDesign, ReportFormatError, ExperimentReport, auto_bound_params,
                          bound_diagnostic, cell_table, compare_trainers, distance_analysis, emit_report, evaluate,
                          excess_risk, make_mask, split_means, sweep_lambda, sweep_T, write_curve_csv,
                          write_domain_csv, write_table_csv)
from .model import ArchConfig, BoundParams, LossSpec, UnseenDomainError, load_checkpoint, save_checkpoint
from .pipeline import TrainConfig, TrainedModel, train_end_to_end, train_erm, train_pooled_baseline, two_stage
from .pipeline import write_curve_csv as write_training_curve
from .tensor_core import DomainGrid

MODES = ("two-stage", "erm", "end-to-end", "pooled")
VARIANTS = ("factorized", "additive", "shared_only", "descriptor")

DEFAULTS = {
    "seed": 0,
    "data": {
        "kind": "planted",
        "dims": [3, 3],
        "r": 8,
        "p": 4,
        "C": 1,
        "K": 2,
        "link": "logistic",
        "sigma": 0.0,
        "head_scale": 1.0,
        "planted_hidden": [],
        "planted_activation": "relu",
        "planted_out_activation": "relu",
        "structure": "cp",
        "offset_scale": 0.5,
        "n_train": 200,
        "n_test": 500,
        "rotations": [-30.0, -15.0, 0.0, 15.0, 30.0],
        "translations": [[-3, 0], [0, -3], [0, 0], [0, 3], [3, 0]],
        "classes": 5,
        "size": 16,
        "noise": 0.05,
        "variation": 0.3,
    },
    "mask": {"design": "random", "T": 6},
    "arch": {"hidden": [], "p": 4, "activation": "relu", "out_activation": "relu"},
    "train": {"mode": "two-stage", "variant": "factorized",
              **{k: v for k, v in asdict(TrainConfig()).items() if k != "seed"}},
    "completion": {**{k: v for k, v in asdict(CompletionConfig(K=2)).items() if k != "seed"}},
    "sweep": {"vary": "T", "values": [5, 10, 15, 20], "n_seeds": 3},
    "bound": {"B": 1.0, "lambda_sc": 1.0, "nu": 1.0, "eps": 0.0, "delta": 0.05},
}
NULLABLE = {("completion", "init_scale")}

EXIT = {"config-not-found": 2, "config-invalid": 2, "input-not-found": 3, "input-invalid": 3,
        "output-exists": 4, "unsupported": 5, "runtime-error": 1}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


# ---------------------------------------------------------------- config

def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("zsda.presets").iterdir() if p.name.endswith(".yaml"))


def load_config_source(ref: str | None) -> dict:
    if ref is None:
        return {}
    path = Path(ref)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    elif ref in preset_names():
        text = resources.files("zsda.presets").joinpath(f"{ref}.yaml").read_text(encoding="utf-8")
    else:
        raise CliError("config-not-found", f"no config file or preset named {ref!r}")
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise CliError("config-invalid", f"{ref}: YAML parse error: {e}") from None
    if not isinstance(data, dict):
        raise CliError("config-invalid", f"{ref}: top level must be a mapping")
    return data


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise CliError("config-invalid", f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            value = raw
        node = cfg
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise CliError("config-invalid", f"--set {key}: {p} is not a section")
        node[parts[-1]] = value
    return cfg


def _check(path, value, default, errs):
    name = ".".join(path)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            errs.append(f"{name}: expected a section")
            return default
        out = {}
        for k in value:
            if k not in default:
                errs.append(f"{'.'.join(path + (k,))}: unknown key")
        for k, d in default.items():
            out[k] = _check(path + (k,), value[k], d, errs) if k in value else copy.deepcopy(d)
        return out
    if value is None:
        if tuple(path) in NULLABLE:
            return None
        errs.append(f"{name}: must not be null")
        return default
    if default is None or isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errs.append(f"{name}: expected a number, got {value!r}")
            return default
        return float(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            errs.append(f"{name}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            errs.append(f"{name}: expected an integer, got {value!r}")
            return default
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            errs.append(f"{name}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            errs.append(f"{name}: expected a list, got {value!r}")
            return default
        return value
    return value


def _int_list(name, v, errs, lo=None):
    if not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        errs.append(f"{name}: expected a list of integers")
    elif lo is not None and any(x < lo for x in v):
        errs.append(f"{name}: entries must be >= {lo}")


def resolve_config(raw: dict) -> dict:
    """Merge onto defaults and validate; every violation is reported together."""
    errs: list[str] = []
    cfg = _check((), raw, DEFAULTS, errs)
    d, m, a, t, s = cfg["data"], cfg["mask"], cfg["arch"], cfg["train"], cfg["sweep"]
    if d["kind"] not in ("planted", "grid_transform"):
        errs.append("data.kind: must be planted or grid_transform")
    _int_list("data.dims", d["dims"], errs, 1)
    _int_list("data.planted_hidden", d["planted_hidden"], errs, 1)
    _int_list("arch.hidden", a["hidden"], errs, 1)
    for k in ("r", "p", "C", "K", "n_train", "n_test", "classes", "size"):
        if isinstance(d[k], int) and d[k] < 1:
            errs.append(f"data.{k}: must be >= 1")
    if d["link"] not in ("logistic", "softmax", "gaussian"):
        errs.append("data.link: must be logistic, softmax or gaussian")
    if not all(isinstance(o, list) and len(o) == 2 for o in d["translations"]):
        errs.append("data.translations: expected a list of [row, col] pairs")
    if d["structure"] not in ("cp", "additive"):
        errs.append("data.structure: must be cp or additive")
    if m["design"] not in ("random", "diagonal", "all"):
        errs.append("mask.design: must be random, diagonal or all")
    if t["mode"] not in MODES:
        errs.append(f"train.mode: must be one of {', '.join(MODES)}")
    if t["variant"] not in VARIANTS:
        errs.append(f"train.variant: must be one of {', '.join(VARIANTS)}")
    if s["vary"] not in ("T", "lambda", "trainer"):
        errs.append("sweep.vary: must be T, lambda or trainer")
    if isinstance(s["n_seeds"], int) and s["n_seeds"] < 1:
        errs.append("sweep.n_seeds: must be >= 1")
    if not errs:
        dims = d["dims"] if d["kind"] == "planted" else [len(d["rotations"]), len(d["translations"])]
        D = math.prod(dims)
        if m["design"] == "random" and not 1 <= m["T"] <= D:
            errs.append(f"mask.T: must lie in [1, {D}] for a grid of {D} domains")
        if m["design"] == "diagonal" and (len(dims) != 2 or dims[0] != dims[1]):
            errs.append("mask.design: diagonal needs a square 2-mode grid")
        if d["kind"] == "planted" and d["link"] != "softmax" and d["C"] != 1:
            errs.append(f"data.C: the {d['link']} link needs C = 1")
        if s["vary"] == "T" and not all(isinstance(v, int) and 1 <= v <= D for v in s["values"]):
            errs.append(f"sweep.values: T values must be integers in [1, {D}]")
        if s["vary"] == "lambda" and not all(isinstance(v, (int, float)) and v >= 0 for v in s["values"]):
            errs.append("sweep.values: lambda values must be numbers >= 0")
        if s["vary"] == "trainer" and not all(v in ("two-stage", "pooled", *VARIANTS) for v in s["values"]):
            errs.append("sweep.values: trainers must be two-stage, pooled or a bank variant")
    for label, build in (("train", lambda: train_config(cfg)), ("completion", lambda: completion_config(cfg)),
                         ("arch", lambda: arch_config(cfg)),
                         ("bound", lambda: BoundParams(**cfg["bound"]))):
        try:
            build()
        except (ValueError, TypeError) as e:
            errs.extend(f"{label}: {msg}" for msg in str(e).split("; "))
    if errs:
        raise CliError("config-invalid", " | ".join(errs))
    return cfg


def train_config(cfg, seed=None) -> TrainConfig:
    t = {k: v for k, v in cfg["train"].items() if k not in ("mode", "variant")}
    return TrainConfig(**t, seed=cfg["seed"] if seed is None else seed)


def completion_config(cfg, seed=None) -> CompletionConfig:
    return CompletionConfig(**cfg["completion"], seed=cfg["seed"] if seed is None else seed)


def arch_config(cfg) -> ArchConfig:
    a = cfg["arch"]
    return ArchConfig(hidden=tuple(a["hidden"]), p=a["p"], activation=a["activation"], out_activation=a["out_activation"])


def design(cfg):
    d = cfg["data"]
    if d["kind"] == "planted":
        parch = ArchConfig(hidden=tuple(d["planted_hidden"]), p=d["p"], activation=d["planted_activation"],
                           out_activation=d["planted_out_activation"])
        return PlantedDesign(dims=tuple(d["dims"]), r=d["r"], p=d["p"], C=d["C"], K=d["K"], link=d["link"],
                             sigma=d["sigma"], head_scale=d["head_scale"], n_train=d["n_train"], n_test=d["n_test"],
                             planted_arch=parch, structure=d["structure"], offset_scale=d["offset_scale"])
    return GridTransformDesign(rotations=tuple(float(x) for x in d["rotations"]),
                               translations=tuple(tuple(o) for o in d["translations"]), C=d["classes"],
                               size=d["size"], n_train=d["n_train"], n_test=d["n_test"], noise=d["noise"],
                               variation=d["variation"])


def mask_design(cfg, grid: DomainGrid):
    m = cfg["mask"]
    return {"random": m["T"], "diagonal": "diagonal", "all": grid.D}[m["design"]]


TRAINER_OF = {"two-stage": "two_stage", "pooled": "pooled", "erm": "erm"}


def trainer_name(mode: str, variant: str) -> str:
    return variant if mode == "end-to-end" else TRAINER_OF[mode]


# ---------------------------------------------------------------- output helpers

class Outputs:
    """Write-once files under one run directory."""

    def __init__(self, root: Path):
        self.root = root
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.root / name
        if p.exists():
            raise CliError("output-exists", f"{p} already exists; outputs are write-once per run directory")
        return p


def echo_config(out: Outputs, command: str, cfg: dict) -> None:
    text = yaml.safe_dump({"command": command, **cfg}, sort_keys=True)
    dest = out.path(f"{command}.config.yaml")
    sys.stdout.write(text)
    sys.stdout.flush()
    dest.write_text(text, encoding="utf-8")


def write_walltime(out: Outputs, command: str, seconds, extra=None) -> None:
    rec = {"command": command, "wall_time_s": seconds, **(extra or {})}
    out.path(f"{command}.walltime.json").write_text(json.dumps(rec, indent=1) + "\n", encoding="utf-8")


def _input(path: Path, what: str) -> Path:
    if not path.is_file():
        raise CliError("input-not-found", f"{what} not found at {path}")
    return path


# ---------------------------------------------------------------- subcommands

def cmd_generate(cfg, args, out: Outputs):
    des = design(cfg)
    train, test, oracle = des.make(cfg["seed"])
    write_dataset(out.path("train.jsonl"), train)
    write_dataset(out.path("test.jsonl"), test)
    written = ["train.jsonl", "test.jsonl"]
    if oracle is not None:
        save_checkpoint(out.path("oracle.npz"), oracle.net, oracle.bank(),
                        extra={"link": oracle.link, "C": oracle.C, "sigma": oracle.sigma, "seed": oracle.seed})
        H = oracle.heads().values
        write_heads(out.path("heads.jsonl"), oracle.grid, {t: H[t] for t in range(oracle.grid.D)},
                    {"source": "planted", "K": cfg["data"]["K"], "seed": cfg["seed"]})
        written += ["oracle.npz", "heads.jsonl"]
    return {"written": written}


def _load_train(args, out):
    data_dir = Path(args.data) if args.data else out.root
    try:
        return read_dataset(_input(data_dir / "train.jsonl", "training data"))
    except DatasetFormatError as e:
        raise CliError("input-invalid", str(e)) from None


def cmd_train(cfg, args, out: Outputs):
    ds = _load_train(args, out)
    mode, variant = cfg["train"]["mode"], cfg["train"]["variant"]
    grid = ds.grid
    d = mask_design(cfg, grid)
    mask = make_mask(grid, d, cfg["seed"]) if d != grid.D else ObservationMask(grid, tuple(range(grid.D)))
    arch, tcfg = arch_config(cfg), train_config(cfg)
    ds = ds.restrict(mask.seen)
    if mode == "two-stage":
        model = two_stage(ds, mask, arch, tcfg, completion_config(cfg))
    elif mode == "erm":
        model = train_erm(ds, mask, arch, tcfg)
    elif mode == "pooled":
        model = train_pooled_baseline(ds, mask, arch, tcfg)
    else:
        model = train_end_to_end(ds, mask, arch, variant, tcfg)
    extra = {"mask": list(mask.seen), "loss": {"kind": model.loss.kind, "C": model.loss.C}, "mode": model.mode,
             "stopped_at": model.stopped_at, "iterations": len(model.curve)}
    if model.stage2 is not None:
        s2 = model.stage2
        extra["stage2"] = {k: s2[k] for k in ("residual_l1", "residual_l2", "fully_identified", "overparameterized",
                                               "converged", "sweeps", "K")}
        extra["stage2"]["seen_heads"] = np.asarray(s2["seen_heads"]).tolist()
    save_checkpoint(out.path("model.npz"), model.net, model.bank, extra=extra)
    write_training_curve(out.path("curve.csv"), model)
    summary = {"mode": model.mode, "T": mask.T, "iterations": len(model.curve),
               "final_loss": float(np.mean(model.curve[-tcfg.es_window:])) if model.curve else None}
    if model.stage2 is not None:
        summary["residual_l1"] = model.stage2["residual_l1"]
        summary["fully_identified"] = model.stage2["fully_identified"]
    return summary


def cmd_complete(cfg, args, out: Outputs):
    src = Path(args.heads) if args.heads else (Path(args.data) if args.data else out.root) / "heads.jsonl"
    try:
        grid, rows, prov = read_heads(_input(src, "head-tensor file"))
    except DatasetFormatError as e:
        raise CliError("input-invalid", str(e)) from None
    if not rows:
        raise CliError("input-invalid", f"{src}: no head rows")
    full = len(rows) == grid.D
    if full:
        d = mask_design(cfg, grid)
        mask = make_mask(grid, d, cfg["seed"]) if d != grid.D else ObservationMask(grid, tuple(range(grid.D)))
    else:
        mask = ObservationMask(grid, tuple(sorted(rows)))
    Y = np.stack([rows[t] for t in mask.seen])
    res = complete(Y, mask, completion_config(cfg))
    H = res.materialize().values
    write_heads(out.path("completed_heads.jsonl"), grid, {t: H[t] for t in range(grid.D)},
                {"source": str(src), "mask": list(mask.seen), "K": res.factors.K})
    summary = {"T": mask.T, "objective_l1": res.objective_l1, "objective_l2": res.objective_l2,
               "converged": res.converged, "sweeps": res.sweeps_used, "fully_identified": res.fully_identified,
               "overparameterized": res.overparameterized}
    if full:
        truth = np.stack([rows[t] for t in range(grid.D)])
        nrm = np.linalg.norm(truth)
        summary["relative_error"] = float(np.linalg.norm(H - truth) / nrm) if nrm > 0 else float(np.linalg.norm(H))
    out.path("completion.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def _model_from_checkpoint(path: Path) -> TrainedModel:
    try:
        net, bank, header = load_checkpoint(_input(path, "model checkpoint"))
    except (ValueError, KeyError, OSError) as e:
        raise CliError("input-invalid", f"{path}: {e}") from None
    ex = header["extra"]
    loss = LossSpec(ex["loss"]["kind"], ex["loss"]["C"])
    model = TrainedModel(net, bank, ObservationMask(bank.grid, tuple(ex["mask"])), loss, ex.get("mode", ""))
    if "stage2" in ex:
        s2 = dict(ex["stage2"])
        s2["seen_heads"] = np.asarray(s2["seen_heads"], dtype=np.float64)
        model.stage2 = s2
    return model


def cmd_evaluate(cfg, args, out: Outputs):
    data_dir = Path(args.data) if args.data else out.root
    model = _model_from_checkpoint(Path(args.model) if args.model else out.root / "model.npz")
    try:
        test = read_dataset(_input(data_dir / "test.jsonl", "test data"))
    except DatasetFormatError as e:
        raise CliError("input-invalid", str(e)) from None
    if test.grid != model.bank.grid:
        raise CliError("input-invalid", f"test grid {test.grid.dims} does not match model grid {model.bank.grid.dims}")
    try:
        rows = evaluate(model, test)
    except UnseenDomainError as e:
        raise CliError("unsupported", str(e).strip("'\"")) from None
    summary = {"mode": model.mode, "T": model.mask.T, **split_means(rows)}
    oracle_path = data_dir / "oracle.npz"
    er = None
    if oracle_path.is_file():
        onet, obank, oh = load_checkpoint(oracle_path)
        oracle = PlantedModel(onet, obank.factors(), oh["extra"]["link"], oh["extra"]["C"], oh["extra"]["sigma"],
                              oh["extra"]["seed"])
        er = excess_risk(model, oracle, test)
        summary["excess_risk"] = er["average"]
        summary["excess_risk_se"] = er["average_se"]
        summary["head_recovery_error"] = er["head_recovery_error"]
    analysis = {}
    if sum(not r.seen for r in rows) >= 3:
        analysis = distance_analysis(rows)
    bound = None
    if model.stage2 is not None:
        b = cfg["bound"]
        params = auto_bound_params(model, test.batch().X, **{k: b[k] for k in ("B", "lambda_sc", "nu", "eps", "delta")})
        bound = bound_diagnostic(params, {"residual_l1": model.stage2["residual_l1"], "K": model.stage2["K"],
                                          "dims": list(model.mask.grid.dims), "q": model.bank.q, "T": model.mask.T},
                                 measured_excess_risk=er["average"] if er else None)
    domain_rows = [{"sweep_value": None, "seed": cfg["seed"], **asdict(r), "multi_index": list(r.multi_index)}
                   for r in rows]
    rep = ExperimentReport(json.loads(json.dumps({"evaluate": cfg, "model": model.mode})), [summary], domain_rows,
                           [], bound, analysis)
    emit_report(rep, out.path("eval_report.jsonl"))
    write_domain_csv(rows, out.path("domains.csv"))
    if len(test.grid.dims) == 2:
        table = cell_table(ExperimentReport({"design": {"dims": list(test.grid.dims)}}, domains=domain_rows),
                           include_seen=True)
        write_table_csv(table, range(test.grid.dims[0]), range(test.grid.dims[1]), out.path("cells.csv"))
    return summary


def cmd_sweep(cfg, args, out: Outputs):
    s = cfg["sweep"]
    des = design(cfg)
    grid = DomainGrid(tuple(des.dims))
    seeds = [cfg["seed"] + i for i in range(s["n_seeds"])]
    arch, tcfg = arch_config(cfg), train_config(cfg)
    trainer = trainer_name(cfg["train"]["mode"], cfg["train"]["variant"])
    workers = max(1, args.threads or 1)
    if s["vary"] == "T":
        rep = sweep_T(des, s["values"], seeds, trainer, arch, tcfg, completion_config(cfg), workers=workers)
    elif s["vary"] == "lambda":
        rep = sweep_lambda(des, [float(v) for v in s["values"]], seeds, trainer, mask_design(cfg, grid), arch, tcfg,
                           workers=workers)
    else:
        names = [TRAINER_OF.get(v, v) for v in s["values"]]
        rep = compare_trainers(des, names, seeds, mask_design(cfg, grid), arch, tcfg, workers=workers,
                               completion=completion_config(cfg))
    key = {"T": "T", "lambda": "lambda", "trainer": "trainer"}[s["vary"]]
    emit_report(rep, out.path("sweep_report.jsonl"))
    write_curve_csv(rep, key, out.path("sweep_curve.csv"))
    if len(grid.dims) == 2:
        for i, c in enumerate(rep.curve):
            table = cell_table(rep, c[key])
            write_table_csv(table, range(grid.dims[0]), range(grid.dims[1]), out.path(f"cells_{i}.csv"))
    write_walltime(out, "sweep.runs", rep.wall_times)
    return {"curve": rep.curve, "analysis": rep.analysis}


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "complete": cmd_complete, "evaluate": cmd_evaluate,
            "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zsda", description="Zero-shot domain adaptation over a multiway domain grid.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML file or bundled preset name")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted override, repeatable")
        p.add_argument("--out", default="runs/latest", help="output directory")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, help="worker processes for sweeps; BLAS stays single-threaded")
        p.add_argument("--data", help="directory with train/test/oracle files (default: --out)")
        if name == "train":
            p.add_argument("--mode", choices=MODES)
            p.add_argument("--variant", choices=VARIANTS)
        if name == "sweep":
            p.add_argument("--vary", choices=("T", "lambda", "trainer"))
            p.add_argument("--values", help="comma-separated sweep values")
            p.add_argument("--mode", choices=MODES)
            p.add_argument("--variant", choices=VARIANTS)
        if name == "complete":
            p.add_argument("--heads", help="head-tensor file (default: <data>/heads.jsonl)")
        if name == "evaluate":
            p.add_argument("--model", help="checkpoint (default: <out>/model.npz)")
    return ap


def _flag_overrides(args) -> list[str]:
    extra = []
    if args.seed is not None:
        extra.append(f"seed={args.seed}")
    if getattr(args, "mode", None):
        extra.append(f"train.mode={args.mode}")
    if getattr(args, "variant", None):
        extra.append(f"train.variant={args.variant}")
    if getattr(args, "vary", None):
        extra.append(f"sweep.vary={args.vary}")
    if getattr(args, "values", None):
        extra.append(f"sweep.values=[{args.values}]")
    return extra


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_config_source(args.config)
        cfg = resolve_config(apply_overrides(raw, args.set + _flag_overrides(args)))
        out = Outputs(Path(args.out))
        echo_config(out, args.command, cfg)
        t0 = time.perf_counter()
        with threadpool_limits(limits=1):
            summary = COMMANDS[args.command](cfg, args, out)
        write_walltime(out, args.command, time.perf_counter() - t0)
        sys.stdout.write(json.dumps({"ok": args.command, "summary": summary}, default=str) + "\n")
        return 0
    except CliError as e:
        sys.stderr.write(json.dumps({"error": e.category, "message": str(e)}) + "\n")
        return EXIT[e.category]
    except (ReportFormatError, DatasetFormatError) as e:
        sys.stderr.write(json.dumps({"error": "input-invalid", "message": str(e)}) + "\n")
        return EXIT["input-invalid"]
    except Exception as e:  # noqa: BLE001 - last-resort category for the caller
        sys.stderr.write(json.dumps({"error": "runtime-error", "message": f"{type(e).__name__}: {e}"}) + "\n")
        return EXIT["runtime-error"]


def main() -> None:
    sys.exit(run())
