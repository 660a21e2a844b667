"""Additive heads against the pooled baseline on the 5x5 rotation x translation grid, diagonal mask."""
from collections import defaultdict

import numpy as np
from _common import fmt, parser, run_sweep

from zsda.evalharness import DomainMetrics, distance_analysis

if __name__ == "__main__":
    args = parser("grid_transform", "runs/grid_transform").parse_args()
    rep = run_sweep(args)
    names = rep.config["values"]
    cells = defaultdict(lambda: defaultdict(list))
    dist = {}
    for d in rep.domains:
        cells[d["sweep_value"]][d["flat_index"]].append(d["value"])
        dist[d["flat_index"]] = d["min_manhattan"]
    print()
    for i, c in enumerate(rep.curve):
        print(f"{names[i]:<10} seen {fmt(c['seen'])}  unseen {fmt(c['unseen'])}")
    print("\nunseen cell means (rows: rotation, columns: translation), first trainer / second trainer")
    for r in range(5):
        row = []
        for col in range(5):
            t = 5 * r + col
            row.append("   diag    " if r == col else
                       f"{np.mean(cells[0][t]):.3f}/{np.mean(cells[1][t]):.3f}")
        print("  ".join(row))
    un = [t for t in cells[0] if dist[t] > 0]
    print(f"\nfirst trainer higher on {np.mean([np.mean(cells[0][t]) > np.mean(cells[1][t]) for t in un]):.0%} of unseen cells")
    rows = [DomainMetrics(t, (), False, 0, float(np.mean(cells[0][t])), "accuracy", dist[t], 0.0) for t in un]
    print(f"Spearman(unseen accuracy, min distance) = {distance_analysis(rows)['spearman_min']}")
