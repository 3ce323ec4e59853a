"""K-means cost against k on default synthetic data, with the elbow marked.

    python scripts/cost_curve.py [--k-max 10] [--out cost_curve.csv]
"""

import argparse

from evbehave import kmeans
from evbehave.features import build_matrix
from evbehave.synth import default_archetypes, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k-max", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    fm = build_matrix(generate(default_archetypes(), seed=args.seed).dataset)
    curve = kmeans.choose_k(fm, range(1, args.k_max + 1), kmeans.KmeansConfig(seed=args.seed))
    drops = {k: (prev - c) / prev for (_, prev), (k, c) in zip(curve, curve[1:]) if prev > 0}
    elbow = max(drops, key=drops.get)
    for k, c in curve:
        print(f"k={k:<3d} cost={c:10.3f}{'  <- largest relative drop' if k == elbow else ''}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(kmeans.cost_curve_csv(curve))


if __name__ == "__main__":
    main()
