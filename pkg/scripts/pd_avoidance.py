"""Safe-branch rate per preset on the two-armed risky path.

    python scripts/pd_avoidance.py --seeds 30
"""

import argparse

import numpy as np

from splitq.core import LearningConfig
from splitq.envs import SAFE, make_risky_path
from splitq.profiles import PRESETS
from splitq.recovery import seeded_expert


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=30)
    parser.add_argument("--episodes", type=int, default=300)
    parser.add_argument("--safe-len", type=int, default=8)
    parser.add_argument("--risky-len", type=int, default=2)
    args = parser.parse_args()

    def make_env(seq):
        env = make_risky_path(args.safe_len, args.risky_len, 0.5, 2.0, 10.0)
        env.rng = np.random.default_rng(seq)
        return env

    cfg = LearningConfig(alpha=0.1, gamma=0.95, epsilon=1.0, epsilon_final=0.0, episodes=args.episodes,
                         max_steps_per_episode=60)
    probe = make_env(0)
    print(f"{'profile':<10}safe branch")
    for label, preset in PRESETS.items():
        safe = [probe.branch_of(seeded_expert(make_env, preset, cfg, 1, s)[0]) == SAFE for s in range(args.seeds)]
        print(f"{label:<10}{np.mean(safe):6.0%}")


if __name__ == "__main__":
    main()
