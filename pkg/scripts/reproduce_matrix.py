"""Class-to-class quasipotentials for the quartic examples, exact and by minimum action.

    python scripts/reproduce_matrix.py --system example41 [--n 300] [--skip-numeric]
"""
import argparse
import time

from qplab.action import analytic_matrix, numeric_matrix
from qplab.models import build_system
from qplab.wgraph import lambda_value, minimizing_set, w_values


def show(title, g):
    print(title)
    print("      " + "".join(f"{l:>12}" for l in g.labels))
    for lab, row in zip(g.labels, g.V):
        print(f"{lab:>6}" + "".join(f"{float(v):12.6f}" for v in row))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--system", default="example41", choices=["example41", "example42"])
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--skip-numeric", action="store_true")
    args = ap.parse_args()
    sys = build_system(args.system)

    exact = analytic_matrix(sys)
    show("exact (2 dU along direct transitions, min-plus closed):", exact)
    print("W =", [str(w) for w in w_values(exact)])
    nu, L0 = minimizing_set(exact)
    print(f"nu = {nu}, L0 = {L0}, Lambda = {lambda_value(exact)}")

    if args.skip_numeric:
        return
    t0 = time.perf_counter()
    num, direct = numeric_matrix(sys, n=args.n)
    show(f"\nnumeric (n={args.n}, {time.perf_counter() - t0:.0f}s):", num)
    worst = 0.0
    for i, row in enumerate(exact.V):
        for j, v in enumerate(row):
            if v > 0:
                worst = max(worst, abs(float(num.V[i][j]) / float(v) - 1))
    print(f"largest relative deviation on nonzero entries: {worst:.2%}")
    for (i, j), rec in sorted(direct.items()):
        print(f"  {num.labels[i]}->{num.labels[j]}: {rec}")


if __name__ == "__main__":
    main()
