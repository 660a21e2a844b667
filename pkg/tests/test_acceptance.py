"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The experiment criteria run the real CLI on the bundled presets, so the
commands here are the ones a user would type. Run with ``pytest -s`` to see
the lines as they happen; they are also repeated in the terminal summary.
"""
import subprocess
import sys
import time
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest

from zsda.completion import CompletionConfig, ObservationMask, complete, completion_generalization_term, sample_mask
from zsda.evalharness import DomainMetrics, PlantedDesign, bound_diagnostic, distance_analysis, excess_risk, load_report
from zsda.model import (
    VARIANTS, AdditiveHeads, ArchConfig, Batch, BoundParams, LossSpec, RegularizerSpec, init_bank, loss_and_grads,
    param_dict,
)
from zsda.pipeline import TrainedModel
from zsda.tensor_core import CPFactors, DomainGrid, cp_materialize, multi_index, pdim_bound

pytestmark = pytest.mark.acceptance


def zsda(*args):
    t0 = time.perf_counter()
    r = subprocess.run([sys.executable, "-m", "zsda", *args], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr[-2000:]
    return time.perf_counter() - t0


def sweep(preset, out: Path, *extra):
    secs = zsda("sweep", "--config", preset, "--out", str(out), *extra)
    return load_report(out / "sweep_report.jsonl"), secs


# ---------------------------------------------------------------- 1

def loop_entry(f: CPFactors, idx):
    out = np.zeros(f.q)
    for j in range(f.q):
        for k in range(f.K):
            prod = 1.0
            for m, level in enumerate(idx):
                prod *= f.modes[m][k, level, j]
            out[j] += prod
    return out


def test_criterion_1_cp_oracle(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        M = int(rng.integers(1, 5))
        g = DomainGrid(tuple(int(d) for d in rng.integers(1, 6, size=M)))
        f = CPFactors.random(g, int(rng.integers(1, 4)), int(rng.integers(1, 9)), rng)
        H = cp_materialize(f).values
        for t in range(g.D):
            ref = loop_entry(f, multi_index(g, t))
            scale = max(np.max(np.abs(ref)), 1e-300)
            worst = max(worst, float(np.max(np.abs(H[t] - ref)) / scale))
    secs = time.perf_counter() - t0
    ok = worst <= 1e-12 and secs < 5
    assert verdict(1, ok, f"max relative error {worst:.2e} over 100 factor sets, {secs:.2f} s")


# ---------------------------------------------------------------- 2

def fd_worst(net, bank, batch, spec, reg, h=1e-5):
    _, grads = loss_and_grads(net, bank, batch, spec, reg)
    worst = 0.0
    for name, arr in param_dict(net, bank).items():
        for i in np.ndindex(arr.shape):
            old = arr[i]
            arr[i] = old + h
            lp, _ = loss_and_grads(net, bank, batch, spec, reg)
            arr[i] = old - h
            lm, _ = loss_and_grads(net, bank, batch, spec, reg)
            arr[i] = old
            num, ana = (lp - lm) / (2 * h), grads[name][i]
            if max(abs(num), abs(ana)) > 1e-8:
                worst = max(worst, abs(num - ana) / max(abs(num), abs(ana)))
    return worst


def test_criterion_2_gradients(verdict):
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    for variant in VARIANTS:
        for kind, C in (("squared", 1), ("logistic", 1), ("softmax_cross_entropy", 3)):
            spec = LossSpec(kind, C)
            for seed in range(10):
                rng = np.random.default_rng(1000 + seed)
                grid = DomainGrid((2, 3) if seed % 2 else (2, 2, 2))
                net = ArchConfig(hidden=(5,), p=3, activation="tanh" if seed % 3 else "relu",
                                 out_activation="tanh").build(4, rng)
                for b in net.biases:
                    b += rng.normal(scale=0.1, size=b.shape)
                seen = list(range(0, grid.D, 2))
                bank = (AdditiveHeads.init(grid, 3, C, rng, offsets_scale=0.3) if variant == "additive"
                        else init_bank(variant, grid, 3, C, rng, K=2, seen=seen))
                doms = rng.choice(seen, size=12)
                X = rng.normal(size=(12, 4))
                y = (rng.normal(size=12) if kind == "squared" else
                     rng.integers(0, max(C, 2), size=12).astype(float))
                worst = max(worst, fd_worst(net, bank, Batch(doms, X, y), spec, RegularizerSpec(0.3)))
                checked += 1
    secs = time.perf_counter() - t0
    ok = worst <= 1e-4 and secs < 60
    assert verdict(2, ok, f"{checked} configurations ({len(VARIANTS)} variants x 3 losses x 10), "
                          f"worst relative error {worst:.2e}, {secs:.1f} s")


# ---------------------------------------------------------------- 3

def test_criterion_3_completion_recovery(verdict):
    g = DomainGrid((4, 4, 4))
    errs, times = [], []
    for seed in range(10):
        H = cp_materialize(CPFactors.random(g, 2, 1, np.random.default_rng(seed)))
        mask = sample_mask(g, 40, seed)
        t0 = time.perf_counter()
        res = complete(H.values[list(mask.seen)], mask, CompletionConfig(K=2, seed=seed, restarts=10, max_sweeps=2000))
        times.append(time.perf_counter() - t0)
        errs.append(float(np.linalg.norm(res.materialize().values - H.values) / np.linalg.norm(H.values)))
    good = sum(e <= 1e-3 for e in errs)
    ok = good >= 9 and max(times) < 10
    assert verdict(3, ok, f"{good}/10 seeds at relative error <= 1e-3 (errors {', '.join(f'{e:.1e}' for e in errs)}), "
                          f"slowest run {max(times):.2f} s")


# ---------------------------------------------------------------- 4

def test_criterion_4_two_stage_extrapolation(tmp_path, verdict):
    rep, secs = sweep("fiber", tmp_path / "c4", "--vary", "T", "--values", "16")
    c = rep.curve[0]
    seen, unseen = c["seen"]["mean"], c["unseen"]["mean"]
    gap = 100 * (seen - unseen)
    ok = abs(gap) <= 5 and c["unseen"]["n"] == 5 and secs < 300
    assert verdict(4, ok, f"mean seen {seen:.4f}, mean unseen {unseen:.4f}, gap {gap:.2f} points "
                          f"over {c['unseen']['n']} seeds, {secs:.0f} s")


# ---------------------------------------------------------------- 5

def test_criterion_5_T_trend(tmp_path, verdict):
    rep, secs = sweep("fiber", tmp_path / "c5")
    pts = [(c["T"], c["unseen"]["mean"]) for c in rep.curve]
    rho = rep.analysis["trend_spearman"]
    ok = [p[0] for p in pts] == [4, 8, 12, 16, 20] and rho >= 0.8 and secs < 1200
    assert verdict(5, ok, "unseen by T " + ", ".join(f"{T}:{u:.4f}" for T, u in pts)
                          + f"; Spearman {rho:.3f}, {secs:.0f} s")


# ---------------------------------------------------------------- 6

def cell_means(rep, trainer_pos):
    acc, dist = defaultdict(list), {}
    for d in rep.domains:
        if d["sweep_value"] == trainer_pos and not d["seen"]:
            acc[d["flat_index"]].append(d["value"])
            dist[d["flat_index"]] = d["min_manhattan"]
    return {t: float(np.mean(v)) for t, v in acc.items()}, dist


def test_criterion_6_grid_transform_structure(tmp_path, verdict):
    rep, secs = sweep("grid_transform", tmp_path / "c6")
    specific, dist = cell_means(rep, 0)
    pooled, _ = cell_means(rep, 1)
    mean_s, mean_p = rep.curve[0]["unseen"]["mean"], rep.curve[1]["unseen"]["mean"]
    frac = float(np.mean([specific[t] > pooled[t] for t in specific]))
    rows = [DomainMetrics(t, (), False, 0, specific[t], "accuracy", dist[t], 0.0) for t in sorted(specific)]
    rho = distance_analysis(rows)["spearman_min"]
    a = mean_s >= mean_p - 0.005 and frac >= 0.6
    b = rho is not None and rho <= -0.5
    ok = a and b and secs < 1800 and rep.curve[0]["unseen"]["n"] == 10
    assert verdict(6, ok, f"(a) additive unseen {mean_s:.4f} vs pooled {mean_p:.4f}, higher on {100 * frac:.0f}% "
                          f"of {len(specific)} cells; (b) Spearman with min distance {rho:.3f}; {secs:.0f} s")


# ---------------------------------------------------------------- 7

def test_criterion_7_lambda_insensitivity(tmp_path, verdict):
    rep, secs = sweep("planted_5x5", tmp_path / "c7")
    means = [c["unseen"]["mean"] for c in rep.curve]
    spread = 100 * (max(means) - min(means))
    ok = len(means) == 7 and spread <= 5 and secs < 1800
    assert verdict(7, ok, "unseen by lambda " + ", ".join(f"{c['lambda']}:{c['unseen']['mean']:.4f}" for c in rep.curve)
                          + f"; range {spread:.2f} points, {secs:.0f} s")


# ---------------------------------------------------------------- 8

def test_criterion_8_formula_diagnostics(verdict):
    cases = [
        (pdim_bound(1, 1, 1), 3.0794415416798357),  # ln(8e)
        (pdim_bound(2, 4, 3), 321.53298500158036),  # 2*4*9*ln(32e)
        (pdim_bound(2, 3, 4), 401.09316771340275),  # 2*3*16*ln(24e)
        (completion_generalization_term(2, 4, 3, 1, 40, 0.05), 2.8483711015031656),
        (completion_generalization_term(2, 3, 4, 4, 16, 0.1), 20.119195987104373),
    ]
    worst = max(abs(got - want) / want for got, want in cases)
    params = BoundParams(L_lip=1.5, D_X=2.0, W=3.0)
    out = bound_diagnostic(params, {"residual_l1": 0.25, "K": 2, "dims": [4, 4, 4], "q": 1, "T": 40})
    composed = out["term_completion"] == 1.5 * 2.0 * 3.0 * completion_generalization_term(2, 4, 3, 1, 40, 0.05)
    ok = worst <= 1e-12 and composed
    assert verdict(8, ok, f"worst relative error {worst:.1e} on {len(cases)} hand-evaluated points; "
                          f"bound term equals the composition exactly: {composed}")


# ---------------------------------------------------------------- 9

@pytest.mark.parametrize("preset", ["planted_5x5"])
def test_criterion_9_bit_identical_rerun(tmp_path, preset, verdict):
    a, _ = sweep(preset, tmp_path / "a")
    b, _ = sweep(preset, tmp_path / "b")
    same = (tmp_path / "a" / "sweep_report.jsonl").read_bytes() == (tmp_path / "b" / "sweep_report.jsonl").read_bytes()
    cfg_same = (tmp_path / "a" / "sweep.config.yaml").read_bytes() == (tmp_path / "b" / "sweep.config.yaml").read_bytes()
    assert verdict(9, same and cfg_same, f"rerun of 'zsda sweep --config {preset}' gives bit-identical report: {same}")


# ---------------------------------------------------------------- 10

def test_criterion_10_oracle_excess_risk(verdict):
    des = PlantedDesign(dims=(2, 3, 3, 2), r=16, p=8, K=2, n_train=10, n_test=2000)
    worst = 0.0
    ok = True
    for seed in range(3):
        _, test, oracle = des.make(seed)
        model = TrainedModel(oracle.net, oracle.bank(), ObservationMask(oracle.grid, tuple(range(oracle.grid.D))),
                             LossSpec("logistic"), "oracle")
        er = excess_risk(model, oracle, test)
        ok &= er["covers_all_domains"]
        for rec in er["per_domain"].values():
            ok &= abs(rec["estimate"]) <= 2 * rec["se"]
            worst = max(worst, abs(rec["estimate"]))
    assert verdict(10, bool(ok), f"largest per-domain |excess risk| {worst:.1e} across 3 seeds x 36 domains, "
                                 f"all within 2 standard errors")
