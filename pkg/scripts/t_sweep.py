"""Unseen-domain accuracy as the number of observed domains T grows (planted 2x3x3x2 grid)."""
from _common import fmt, parser, run_sweep

if __name__ == "__main__":
    args = parser("fiber", "runs/t_sweep").parse_args()
    rep = run_sweep(args)
    print("\nT     seen                      unseen")
    for c in rep.curve:
        print(f"{c['T']:<5} {fmt(c['seen'])}  {fmt(c['unseen'])}")
    print(f"Spearman(T, unseen) = {rep.analysis.get('trend_spearman')}")
