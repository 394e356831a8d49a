"""GP-UCB on a synthetic quadratic over a 5^4 grid: rounds needed to hit the maximum."""

import argparse

import numpy as np

from splitq.adaptive import CandidateGrid, GPState, optimize

LEVELS = [0.0, 0.25, 0.5, 0.75, 1.0]


def rounds_to_hit(history):
    for h in history:
        if h.best_value == 0.0:
            return h.round
    return None


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--rounds", type=int, default=25)
    parser.add_argument("--lengthscales", type=float, nargs="+", default=[0.3, 0.5, 0.7, 1.0])
    parser.add_argument("--beta", type=float, default=4.0)
    args = parser.parse_args()

    grid = CandidateGrid.from_lists([LEVELS] * 4)
    print(f"{'lengthscale':>12}{'hit rate':>10}{'median rounds':>15}")
    for ls in args.lengthscales:
        hits = []
        for seed in range(args.trials):
            target = np.random.default_rng(seed).choice(LEVELS, size=4)
            history = optimize(lambda phi: -float(np.sum((np.asarray(phi) - target) ** 2)), grid, args.rounds,
                               GPState(kernel_lengthscale=ls, noise_variance=1e-6), beta=args.beta)
            hits.append(rounds_to_hit(history))
        found = [h for h in hits if h is not None]
        median = f"{np.median(found):.0f}" if found else "-"
        print(f"{ls:>12g}{len(found) / args.trials:>10.0%}{median:>15}")


if __name__ == "__main__":
    main()
