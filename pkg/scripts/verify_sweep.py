"""Run every default hypothesis check on every built-in model and print the reports."""
import argparse
import json

from qplab.verify import run_default_sweep

ap = argparse.ArgumentParser()
ap.add_argument("--samples", type=int, default=4096)
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--json", help="also write all reports to this file")
args = ap.parse_args()

out = run_default_sweep(samples=args.samples, seed=args.seed)
for name, reps in out.items():
    print(name)
    for r in reps:
        print("   ", r)
n_bad = sum(not r.passed for reps in out.values() for r in reps)
print(f"{n_bad} failing checks")
if args.json:
    with open(args.json, "w") as fh:
        json.dump({k: [r.to_dict() for r in v] for k, v in out.items()}, fh, indent=2)
