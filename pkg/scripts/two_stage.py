"""Two-stage training at T=16 on the planted 2x3x3x2 grid: seen versus unseen accuracy."""
from _common import fmt, parser, run_sweep

if __name__ == "__main__":
    args = parser("fiber", "runs/two_stage").parse_args()
    rep = run_sweep(args, "--vary", "T", "--values", "16")
    c = rep.curve[0]
    print(f"\nseen   {fmt(c['seen'])}\nunseen {fmt(c['unseen'])}")
    print(f"gap    {100 * (c['seen']['mean'] - c['unseen']['mean']):.2f} points")
    for r in rep.runs:
        print(f"seed {r['seed']}: residual_l1={r.get('residual_l1'):.4f} excess_risk={r.get('excess_risk'):.4f}")
