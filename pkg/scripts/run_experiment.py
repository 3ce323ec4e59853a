"""Run the 10-fold protocol on default synthetic data and write the per-fold
report plus fold-1 load curves.

    python scripts/run_experiment.py --out results/ [--seed 0] [--search-budget 8]
"""

import argparse
import time
from pathlib import Path

from evbehave.experiment import REFERENCE_ACCURACY, ExperimentConfig, run_experiment
from evbehave.synth import default_archetypes, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--search-budget", type=int, default=0)
    args = ap.parse_args()

    data = generate(default_archetypes(), seed=args.seed)
    cfg = ExperimentConfig(folds=args.folds, seed=args.seed, search_budget=args.search_budget)
    start = time.perf_counter()
    rep = run_experiment(data, cfg)
    elapsed = time.perf_counter() - start

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(rep.to_csv())
    (out / "report.json").write_text(rep.to_json())
    (out / "curves.csv").write_text(rep.curves_csv())

    print(f"{'fold':>4} {'train':>7} {'test':>7} {'mape':>7} {'agree':>7}")
    for r in rep.folds:
        print(f"{r.fold:>4} {r.train_acc:7.3f} {r.test_acc:7.3f} {r.mape:7.3f} {r.agreement_mape:7.4f}")
    m = rep.means
    print(f"mean {m['train_acc']:7.3f} {m['test_acc']:7.3f} {m['mape']:7.3f} {m['agreement_mape']:7.4f}")
    print(f"reference accuracy on real data: {REFERENCE_ACCURACY}")
    print(f"{elapsed:.1f} s, outputs in {out}/")


if __name__ == "__main__":
    main()
