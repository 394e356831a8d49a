"""Recover the generating preset from greedy trajectories.

Runs on the three-armed risky path, where standard, PD and bvFTD each settle on
a different arm.  With ``--two-arms`` the moderate arm is removed; there only
two distinct behaviours exist, so one pair of presets is always confused.
"""

import argparse
from collections import Counter

import numpy as np

from splitq.core import LearningConfig
from splitq.envs import make_risky_path
from splitq.profiles import PRESETS
from splitq.recovery import fit_profile, seeded_expert

LABELS = ["standard", "PD", "bvFTD"]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=21)
    parser.add_argument("--two-arms", action="store_true")
    parser.add_argument("--seeds-per-candidate", type=int, default=1)
    args = parser.parse_args()

    mid = {} if args.two_arms else {"mid_len": 3, "mid_penalty_prob": 0.1}

    def make_env(seq):
        env = make_risky_path(10, 2, 0.5, 2.0, 10.0, **mid)
        env.rng = np.random.default_rng(seq)
        return env

    cfg = LearningConfig(alpha=0.1, gamma=0.95, epsilon=1.0, epsilon_final=0.0, episodes=800,
                         max_steps_per_episode=100)
    candidates = [PRESETS[x] for x in LABELS]
    confusion = Counter()
    for trial in range(args.trials):
        truth = LABELS[trial % 3]
        expert = seeded_expert(make_env, PRESETS[truth], cfg, 5, 1000 + trial)
        result = fit_profile(expert, make_env, candidates, cfg, 0.95, args.seeds_per_candidate,
                             n_trajectories=5, base_seed=5000 + 10 * trial)
        confusion[truth, result.best.label] += 1
    correct = sum(n for (t, g), n in confusion.items() if t == g)
    print(f"recovered {correct}/{args.trials}")
    print(f"{'true/guess':<12}" + "".join(f"{g:>10}" for g in LABELS))
    for t in LABELS:
        print(f"{t:<12}" + "".join(f"{confusion[t, g]:>10}" for g in LABELS))


if __name__ == "__main__":
    main()
