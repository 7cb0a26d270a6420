"""Monte Carlo checks of the basis-mismatch probability and nested-binomial variance.

    python scripts/mixture_statistics.py --draws 100000
"""

import argparse
import math

from mmid.metrics import (
    mismatch_probability_bounds,
    nested_binomial_variance,
    simulate_mismatch_probability,
    simulate_nested_binomial,
)
from mmid.rng import substream


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--draws", type=int, default=100_000)
    ap.add_argument("--n-samples", type=int, default=10, help="low-fidelity ensemble size N_S")
    ap.add_argument("--S", type=int, default=20, help="prediction ensemble size")
    args = ap.parse_args()

    print("basis-mismatch probability")
    for w in ((0.5, 0.5), (0.7, 0.3), (0.9, 0.1)):
        for r in (1, 2, 4, 8):
            lo, hi = mismatch_probability_bounds(w, r)
            p = simulate_mismatch_probability(w, r, args.draws, substream(args.seed, "mismatch", r, str(w)))
            sd = math.sqrt(p * (1 - p) / args.draws)
            inside = lo - 3 * sd <= p <= hi + 3 * sd
            print(f"  w={w} r={r}: simulated {p:.4f}, band [{lo:.4f}, {hi:.4f}] {'ok' if inside else 'OUTSIDE'}")

    print("nested-binomial mixture estimate")
    for pi in (0.1, 0.3, 0.5):
        x = simulate_nested_binomial(pi, args.n_samples, args.S, args.draws, substream(args.seed, "nested", str(pi)))
        v = nested_binomial_variance(pi, args.n_samples, args.S)
        print(f"  pi={pi}: mean {x.mean():.4f}, variance {x.var():.5f} (predicted {v:.5f})")


if __name__ == "__main__":
    main()
