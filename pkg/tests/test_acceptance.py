"""End-to-end acceptance checks, each under a wall-clock budget."""

import json

import numpy as np
import pytest

from oracles import classical_q_learning, dense_gp_posterior
from splitq.adaptive import CandidateGrid, GPState, optimize, posterior
from splitq.core import LearningConfig, SplitQAgent, SplitQTable, train, update_streams
from splitq.envs import SAFE, make_chain, make_grid_pacman, make_risky_path, value_iteration
from splitq.harness import runs
from splitq.harness.cli import main
from splitq.profiles import PRESETS, BiasProfile
from splitq.recovery import seeded_expert

pytestmark = pytest.mark.acceptance

STANDARD = PRESETS["standard"]


def test_classical_reduction(criterion):
    with criterion(1, "standard profile reproduces classical Q-learning", 5.0) as c:
        cfg = LearningConfig(alpha=0.3, gamma=0.9, epsilon=0.5, epsilon_final=0.05, episodes=300,
                             max_steps_per_episode=60)
        worst = 0.0
        for name, make_env in [("chain5", lambda: make_chain(5)),
                               ("pacman", lambda: make_grid_pacman(4, 4, 1.0, 10.0, [(1, 1), (2, 1)]))]:
            Q, actions = classical_q_learning(make_env(), cfg, np.random.default_rng(11))
            agent = SplitQAgent.fresh(make_env(), STANDARD)
            records = train(agent, make_env(), cfg, np.random.default_rng(11))
            assert [a for r in records for _, a, _ in r.trajectory] == actions, name
            worst = max(worst, float(np.max(np.abs(agent.table.q_pos + agent.table.q_neg - Q))))
        c.detail = f"max value gap {worst:.1e}"
        assert worst <= 1e-12


def test_sign_invariants(criterion):
    with criterion(2, "q_pos >= 0 and q_neg <= 0 when phi1, phi3 >= alpha", 5.0) as c:
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            alpha = rng.uniform(0.01, 1.0)
            profile = BiasProfile("p", rng.uniform(alpha, 2.0), rng.uniform(0, 100),
                                  rng.uniform(alpha, 2.0), rng.uniform(0, 100))
            cfg = LearningConfig(alpha=alpha, gamma=rng.uniform(0, 0.99))
            table = SplitQTable(5, 3)
            for _ in range(20):
                update_streams(table, profile, cfg, int(rng.integers(5)), int(rng.integers(3)),
                               float(rng.normal(0, 5)), int(rng.integers(5)), bool(rng.random() < 0.2))
            assert np.all(table.q_pos >= 0) and np.all(table.q_neg <= 0)
        c.detail = "1000 sequences of 20 updates"


def test_convergence_on_chain(criterion):
    with criterion(3, "greedy policy matches value iteration on chain n=5", 10.0) as c:
        env = make_chain(5)
        _, policy = value_iteration(env.model, 0.9)
        live = ~env.model.terminal
        cfg = LearningConfig(alpha=0.5, gamma=0.9, epsilon=1.0, epsilon_final=0.0, episodes=500,
                             max_steps_per_episode=100)
        matches = 0
        for seed in range(20):
            agent = SplitQAgent.fresh(env, STANDARD)
            train(agent, env, cfg, np.random.default_rng(seed))
            matches += np.array_equal(agent.greedy_policy()[live], policy[live])
        c.detail = f"{matches}/20 seeds"
        assert matches == 20


def test_pd_avoids_risk(criterion):
    with criterion(4, "PD takes the safe branch more often than standard", 60.0) as c:
        cfg = LearningConfig(alpha=0.1, gamma=0.95, epsilon=1.0, epsilon_final=0.0, episodes=300,
                             max_steps_per_episode=60)

        def make_env(seq):
            env = make_risky_path(8, 2, 0.5, 2.0, 10.0)
            env.rng = np.random.default_rng(seq)
            return env

        probe = make_env(0)
        rates = {}
        for label in ("PD", "standard"):
            safe = [probe.branch_of(seeded_expert(make_env, PRESETS[label], cfg, 1, seed)[0]) == SAFE
                    for seed in range(30)]
            rates[label] = float(np.mean(safe))
        margin = rates["PD"] - rates["standard"]
        c.detail = f"safe rate PD {rates['PD']:.0%}, standard {rates['standard']:.0%}"
        assert margin >= 0.10


def test_positive_only_sweep(criterion, tmp_path):
    with criterion(5, "3x3 sweep, positive-only runs never log a negative total", 120.0) as c:
        config = {
            "schema_version": 1,
            "environment": {"family": "grid_pacman",
                            "params": {"width": 4, "height": 4, "ghost_cells": [[1, 1], [2, 2]], "horizon": 60}},
            "profiles": ["standard", "PD", "bvFTD"],
            "learning": {"alpha": 0.1, "gamma": 0.95, "epsilon": 0.1, "episodes": 300,
                         "max_steps_per_episode": 60, "seed": 1},
            "repetitions": 3,
            "variants": [{"name": "normal"},
                         {"name": "positive_only", "transform": {"neg_scale": 0.0}},
                         {"name": "negative_only", "transform": {"pos_scale": 0.0}}],
        }
        path = tmp_path / "sweep.json"
        path.write_text(json.dumps(config))
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(path), "--out", str(out)]) == 0
        matrix = (out / "matrix.csv").read_text().splitlines()
        assert len(matrix) == 4 and all(len(row.split(",")) == 4 for row in matrix)
        files = sorted((out / "positive_only" / "metrics").glob("*.csv"))
        assert len(files) == 9
        rows = [r for f in files for r in runs.read_metrics_csv(f)]
        assert all(r["total_neg"] == 0.0 for r in rows)
        c.detail = f"{len(rows)} positive-only episodes checked"


def test_gp_matches_dense_oracle(criterion):
    with criterion(6, "GP posterior matches a dense direct solve to 1e-8", 5.0) as c:
        rng = np.random.default_rng(6)
        worst = 0.0
        for _ in range(50):
            n = int(rng.integers(1, 51))
            ls, var, noise = rng.uniform(0.3, 2.0), rng.uniform(0.5, 3.0), rng.uniform(1e-2, 1e-1)
            X = rng.uniform(0, 1, size=(n, 4))
            y = rng.normal(size=n)
            gp = GPState(kernel_lengthscale=ls, kernel_variance=var, noise_variance=noise)
            for x, v in zip(X, y):
                gp.observe(x, v)
            Xq = rng.uniform(0, 1, size=(20, 4))
            mean, std = posterior(gp, Xq)
            ref_mean, ref_std = dense_gp_posterior(X, y, Xq, ls, var, noise)
            worst = max(worst, float(np.max(np.abs(mean - ref_mean))), float(np.max(np.abs(std - ref_std))))
        c.detail = f"max deviation {worst:.1e}"
        assert worst <= 1e-8


def test_gp_ucb_finds_maximum(criterion):
    with criterion(7, "GP-UCB finds the unique maximum of a 5^4 grid within 25 rounds", 10.0) as c:
        levels = [0.0, 0.25, 0.5, 0.75, 1.0]
        grid = CandidateGrid.from_lists([levels] * 4)
        hits = 0
        for seed in range(50):
            target = np.random.default_rng(seed).choice(levels, size=4)
            history = optimize(lambda phi: -float(np.sum((np.asarray(phi) - target) ** 2)), grid, 25,
                               GPState(kernel_lengthscale=0.7, noise_variance=1e-6), beta=4.0)
            hits += history[-1].best_value == 0.0
        c.detail = f"{hits}/50 trials"
        assert hits >= 48


def test_self_recovery_through_cli(criterion, tmp_path):
    with criterion(8, "true preset recovered among standard, PD, bvFTD", 120.0) as c:
        config = {
            "schema_version": 1,
            "environment": {"family": "risky_path",
                            "params": {"safe_len": 10, "risky_len": 2, "risky_penalty_prob": 0.5, "penalty": 2.0,
                                       "goal_reward": 10.0, "mid_len": 3, "mid_penalty_prob": 0.1}},
            "learning": {"alpha": 0.1, "gamma": 0.95, "epsilon": 1.0, "epsilon_final": 0.0, "episodes": 800,
                         "max_steps_per_episode": 100},
            "recover": {"candidates": ["standard", "PD", "bvFTD"], "seeds_per_candidate": 1, "n_trajectories": 5},
        }
        path = tmp_path / "recover.json"
        path.write_text(json.dumps(config))
        labels = ["standard", "PD", "bvFTD"]
        correct = 0
        for trial in range(20):
            truth = labels[trial % 3]
            traj = tmp_path / f"expert{trial}.csv"
            out = tmp_path / f"rec{trial}"
            assert main(["expert", "--config", str(path), "--profile", truth, "-n", "5",
                         "--output", str(traj), "--seed", str(1000 + trial)]) == 0
            assert main(["recover", "--config", str(path), "--out", str(out),
                         "--seed", str(5000 + 10 * trial), str(traj)]) == 0
            best = (out / "recovery.csv").read_text().splitlines()[1].split(",")[1]
            correct += best == truth
        c.detail = f"{correct}/20 trials"
        assert correct >= 16


def test_train_reproducible(criterion, tmp_path):
    with criterion(9, "train rerun writes byte-identical metric CSVs", 30.0) as c:
        config = {
            "schema_version": 1,
            "environment": {"family": "grid_pacman", "params": {"width": 3, "height": 3, "ghost_cells": [[1, 1]]}},
            "profiles": ["standard", "PD", "AD"],
            "learning": {"alpha": 0.2, "gamma": 0.9, "epsilon": 0.2, "episodes": 100,
                         "max_steps_per_episode": 40, "seed": 42},
            "repetitions": 2,
        }
        path = tmp_path / "train.json"
        path.write_text(json.dumps(config))
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            assert main(["train", "--config", str(path), "--out", str(out)]) == 0
        names = sorted(p.name for p in (outs[0] / "metrics").glob("*.csv"))
        assert len(names) == 6
        for name in names + ["../aggregate.csv"]:
            assert (outs[0] / "metrics" / name).read_bytes() == (outs[1] / "metrics" / name).read_bytes()
        c.detail = f"{len(names)} metric files identical"
