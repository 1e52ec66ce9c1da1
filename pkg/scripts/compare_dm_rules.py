"""Exactness and mixing of the three acceptance rules for DM weights.

For each rule: the stationarity residual of its exact kernel on random
5-state spaces, then escape time from [-6, -6] and MSE from uniform starts on
the sensor benchmark.

    python scripts/compare_dm_rules.py [--spaces 20] [--runs 30]
"""

import argparse

import numpy as np

from mtm.experiments import CONF1, CONF2, ExperimentConfig, run_experiment
from mtm.oracle import check_detailed_balance, check_stationarity, exact_imtm_kernel, random_pmf, random_space
from mtm.weights import DM_MIXTURE, WeightSpec

RULES = ("generic", "embedded", "replace-one")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--spaces", type=int, default=20)
    parser.add_argument("--runs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    print(f"{'rule':>12} {'max l1 residual':>16} {'max DB violation':>17} {'tau* Conf1 s=1.25':>18} {'MSE Conf2 s=1.3':>16}")
    for rule in RULES:
        rng = np.random.default_rng(args.seed)
        resid = viol = 0.0
        for _ in range(args.spaces):
            space = random_space(5, rng)
            qs = [random_pmf(5, rng), random_pmf(5, rng)]
            k = exact_imtm_kernel(space, qs, WeightSpec(DM_MIXTURE), dm_rule=rule)
            resid = max(resid, check_stationarity(k, space.target_pmf).l1_residual)
            viol = max(viol, check_detailed_balance(k, space.target_pmf).max_violation)
        tau = run_experiment(ExperimentConfig(("imtm-dm",), (1.25,), (2,), args.runs, 4000,
                                              proposal_means=CONF1, dm_rule=rule)).cells[0]
        mse = run_experiment(ExperimentConfig(("imtm-dm",), (1.3,), (2,), args.runs, 4000, x0="uniform",
                                              proposal_means=CONF2, dm_rule=rule)).cells[0]
        print(f"{rule:>12} {resid:16.2e} {viol:17.2e} {tau.mean_tau:18.1f} {mse.mse:16.4f}")


if __name__ == "__main__":
    main()
