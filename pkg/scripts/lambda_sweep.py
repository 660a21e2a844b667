"""Sensitivity of unseen-domain accuracy to the regularization weight lambda (planted 5x5, diagonal mask)."""
from _common import fmt, parser, run_sweep

if __name__ == "__main__":
    args = parser("planted_5x5", "runs/lambda_sweep").parse_args()
    rep = run_sweep(args)
    print("\nlambda  seen                      unseen")
    for c in rep.curve:
        print(f"{c['lambda']:<7} {fmt(c['seen'])}  {fmt(c['unseen'])}")
    print(f"range of unseen means = {rep.analysis.get('unseen_range')}")
